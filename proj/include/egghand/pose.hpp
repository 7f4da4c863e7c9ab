#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace egghand {

inline constexpr int kJoints = 42;
inline constexpr int kJointsPerHand = 21;
inline constexpr int kLeftWrist = 0;
inline constexpr int kRightWrist = 21;
inline constexpr int kCoords = kJoints * 3;

inline constexpr int wrist_of(int joint) { return joint < kJointsPerHand ? kLeftWrist : kRightWrist; }

/// T frames of 42 joints: positions [T][42][3] in meters plus per-joint validity.
/// Joints 0-20 are the left hand (0 = wrist), 21-41 the right hand (21 = wrist).
struct PoseSequence {
    int frames = 0;
    std::vector<double> xyz;
    std::vector<std::uint8_t> valid;

    PoseSequence() = default;
    explicit PoseSequence(int t, bool all_valid = true)
        : frames(t),
          xyz(static_cast<std::size_t>(t) * kCoords, 0.0),
          valid(static_cast<std::size_t>(t) * kJoints, all_valid ? 1 : 0) {}

    static std::size_t offset(int t, int j) { return (static_cast<std::size_t>(t) * kJoints + j) * 3; }

    Eigen::Map<Eigen::Vector3d> joint(int t, int j) { return Eigen::Map<Eigen::Vector3d>(xyz.data() + offset(t, j)); }
    Eigen::Map<const Eigen::Vector3d> joint(int t, int j) const {
        return Eigen::Map<const Eigen::Vector3d>(xyz.data() + offset(t, j));
    }
    bool is_valid(int t, int j) const { return valid[static_cast<std::size_t>(t) * kJoints + j] != 0; }
    void set_valid(int t, int j, bool v) { valid[static_cast<std::size_t>(t) * kJoints + j] = v ? 1 : 0; }

    /// Frames [begin, end).
    PoseSequence range(int begin, int end) const;

    friend bool operator==(const PoseSequence&, const PoseSequence&) = default;
};

}  // namespace egghand
