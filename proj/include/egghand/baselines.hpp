#pragma once

#include <array>
#include <filesystem>
#include <span>

#include "egghand/dataio.hpp"
#include "egghand/pose.hpp"

namespace egghand::baselines {

/// Per-joint mean canonical pose over every valid observed and future training frame.
struct StaticModel {
    std::array<double, kCoords> mean_pose{};
    std::array<long, kJoints> counts{};

    bool observed(int joint) const { return counts[static_cast<std::size_t>(joint)] > 0; }
    friend bool operator==(const StaticModel&, const StaticModel&) = default;
};

StaticModel static_fit(std::span<const dataio::Sample> train);

/// mean_pose repeated for every future frame; never-observed joints are zero and invalid.
PoseSequence static_predict(const StaticModel& model, int horizon = 10);

/// Per joint: velocity from the last two valid observed frames a > b,
/// v = (p_a - p_b) / (a - b); step k (1-based) = p_a + v (k + t_obs - 1 - a).
/// A single valid frame gives v = 0; joints never observed come back invalid.
PoseSequence cvm_predict(const PoseSequence& obs, int horizon = 10);

void save_static(const StaticModel& model, const std::filesystem::path& path);
StaticModel load_static(const std::filesystem::path& path);

}  // namespace egghand::baselines
