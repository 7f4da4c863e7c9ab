#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "egghand/pose.hpp"

namespace egghand::metrics {

enum class Averaging { Micro, Macro };

struct MetricOptions {
    Averaging averaging = Averaging::Micro;
    /// Wrist-relative wrist error is identically zero; counting it deflates MPJPE.
    bool include_wrists_in_mpjpe = false;
};

/// Error sums and term counts for one sample; metrics are sum / count.
struct SampleMetrics {
    std::string id;
    double ade_sum = 0.0, fde_sum = 0.0, mpjpe_sum = 0.0, mpjpe_f_sum = 0.0;
    long ade_count = 0, fde_count = 0, mpjpe_count = 0, mpjpe_f_count = 0;
};

struct TrajectoryErrors {
    std::optional<double> ade, fde;
    long wrist_frames = 0;
    long final_wrists = 0;
};

struct PoseErrors {
    std::optional<double> mpjpe, mpjpe_f;
    long joint_terms = 0;
    long final_joint_terms = 0;
};

/// Wrist (0, 21) displacement over frames with a valid target wrist.
TrajectoryErrors trajectory_errors(const PoseSequence& pred, const PoseSequence& gt);

/// Wrist-relative per-joint error over hands/frames whose target wrist is valid.
PoseErrors pose_errors(const PoseSequence& pred, const PoseSequence& gt, const MetricOptions& options = {});

SampleMetrics sample_metrics(std::string id, const PoseSequence& pred, const PoseSequence& gt,
                             const MetricOptions& options = {});

/// k = ceil(fraction N) highest scores; ties by ascending id. Returned in selection order.
std::vector<std::string> stratify_top_fraction(const std::vector<std::pair<std::string, double>>& scores, double fraction);

struct Report {
    std::optional<double> ade, fde, mpjpe, mpjpe_f;
    long n_samples = 0;
    long n_valid_wrist_frames = 0;
    long n_valid_joint_frames = 0;
    std::map<std::string, Report> strata;
    nlohmann::json config = nlohmann::json::object();
};

/// Named member lists re-aggregated into Report::strata.
using StrataSpec = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// Pools samples in ascending id order. Micro averaging weights every valid term
/// equally; macro averages per-sample means.
Report aggregate_report(std::span<const SampleMetrics> samples, const StrataSpec& strata = {},
                        const MetricOptions& options = {});

inline constexpr int kReportVersion = 1;

nlohmann::json to_json(const Report& report);
Report report_from_json(const nlohmann::json& j);

}  // namespace egghand::metrics
