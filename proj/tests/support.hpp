#pragma once

#include <Eigen/Geometry>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <unistd.h>
#include <vector>

#include "egghand/geometry.hpp"
#include "egghand/nn/prng.hpp"
#include "egghand/pose.hpp"

namespace egghand::testing {

/// Hand-like pose: per-frame wrists near the origin, other joints within 10 cm.
inline PoseSequence random_pose(int frames, nn::Prng& rng, double invalid_fraction = 0.0) {
    PoseSequence p(frames);
    for (int t = 0; t < frames; ++t)
        for (int j = 0; j < kJoints; ++j) {
            const double spread = j == wrist_of(j) ? 0.3 : 0.1;
            for (int a = 0; a < 3; ++a) p.xyz[PoseSequence::offset(t, j) + a] = rng.uniform(-spread, spread);
            if (rng.uniform() < invalid_fraction) p.set_valid(t, j, false);
        }
    return p;
}

inline Eigen::Matrix3d random_rotation(nn::Prng& rng) {
    Eigen::Quaterniond q(rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian());
    return q.normalized().toRotationMatrix();
}

inline geometry::RigidTransform random_rigid(nn::Prng& rng, double translation = 1.0) {
    geometry::RigidTransform x;
    x.rotation = random_rotation(rng);
    x.translation = Eigen::Vector3d(rng.uniform(-translation, translation), rng.uniform(-translation, translation),
                                    rng.uniform(-translation, translation));
    return x;
}

/// Applies x to every joint position.
inline PoseSequence transformed(const PoseSequence& p, const geometry::RigidTransform& x) {
    PoseSequence out = p;
    for (int t = 0; t < p.frames; ++t)
        for (int j = 0; j < kJoints; ++j) out.joint(t, j) = x.apply(p.joint(t, j));
    return out;
}

inline std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("egghand-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace egghand::testing
