#include "egghand/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "egghand/error.hpp"

namespace egghand::metrics {

namespace {

void check_shapes(const PoseSequence& pred, const PoseSequence& gt) {
    if (pred.frames != gt.frames || pred.xyz.size() != gt.xyz.size())
        fail(ErrorKind::Validation, "metrics: prediction and target frame counts differ");
}

std::optional<double> ratio(double sum, long count) {
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> optional_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

}  // namespace

TrajectoryErrors trajectory_errors(const PoseSequence& pred, const PoseSequence& gt) {
    check_shapes(pred, gt);
    TrajectoryErrors out;
    double sum = 0.0, final_sum = 0.0;
    const int last = gt.frames - 1;
    for (int t = 0; t < gt.frames; ++t)
        for (int w : {kLeftWrist, kRightWrist}) {
            if (!gt.is_valid(t, w)) continue;
            const double d = (pred.joint(t, w) - gt.joint(t, w)).norm();
            sum += d;
            ++out.wrist_frames;
            if (t == last) {
                final_sum += d;
                ++out.final_wrists;
            }
        }
    out.ade = ratio(sum, out.wrist_frames);
    out.fde = ratio(final_sum, out.final_wrists);
    return out;
}

PoseErrors pose_errors(const PoseSequence& pred, const PoseSequence& gt, const MetricOptions& options) {
    check_shapes(pred, gt);
    PoseErrors out;
    double sum = 0.0, final_sum = 0.0;
    const int last = gt.frames - 1;
    const int skip = options.include_wrists_in_mpjpe ? 0 : 1;
    for (int t = 0; t < gt.frames; ++t)
        for (int w : {kLeftWrist, kRightWrist}) {
            if (!gt.is_valid(t, w)) continue;
            for (int j = w + skip; j < w + kJointsPerHand; ++j) {
                if (!gt.is_valid(t, j)) continue;
                const double e = ((pred.joint(t, j) - pred.joint(t, w)) - (gt.joint(t, j) - gt.joint(t, w))).norm();
                sum += e;
                ++out.joint_terms;
                if (t == last) {
                    final_sum += e;
                    ++out.final_joint_terms;
                }
            }
        }
    out.mpjpe = ratio(sum, out.joint_terms);
    out.mpjpe_f = ratio(final_sum, out.final_joint_terms);
    return out;
}

SampleMetrics sample_metrics(std::string id, const PoseSequence& pred, const PoseSequence& gt,
                             const MetricOptions& options) {
    const auto traj = trajectory_errors(pred, gt);
    const auto pose = pose_errors(pred, gt, options);
    SampleMetrics m;
    m.id = std::move(id);
    m.ade_count = traj.wrist_frames;
    m.ade_sum = traj.ade.value_or(0.0) * static_cast<double>(traj.wrist_frames);
    m.fde_count = traj.final_wrists;
    m.fde_sum = traj.fde.value_or(0.0) * static_cast<double>(traj.final_wrists);
    m.mpjpe_count = pose.joint_terms;
    m.mpjpe_sum = pose.mpjpe.value_or(0.0) * static_cast<double>(pose.joint_terms);
    m.mpjpe_f_count = pose.final_joint_terms;
    m.mpjpe_f_sum = pose.mpjpe_f.value_or(0.0) * static_cast<double>(pose.final_joint_terms);
    return m;
}

std::vector<std::string> stratify_top_fraction(const std::vector<std::pair<std::string, double>>& scores, double fraction) {
    require(!scores.empty(), "stratify_top_fraction: no scores");
    require(fraction > 0.0 && fraction <= 1.0, "stratify_top_fraction: fraction must lie in (0, 1]");
    auto order = scores;
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(scores.size()) - 1e-9));
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, order.size()); ++i) out.push_back(order[i].first);
    return out;
}

namespace {

Report pool(std::vector<const SampleMetrics*> members, const MetricOptions& options) {
    std::sort(members.begin(), members.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    Report r;
    r.n_samples = static_cast<long>(members.size());
    if (options.averaging == Averaging::Micro) {
        double ade = 0, fde = 0, mp = 0, mpf = 0;
        long na = 0, nf = 0, nm = 0, nmf = 0;
        for (const auto* m : members) {
            ade += m->ade_sum;
            na += m->ade_count;
            fde += m->fde_sum;
            nf += m->fde_count;
            mp += m->mpjpe_sum;
            nm += m->mpjpe_count;
            mpf += m->mpjpe_f_sum;
            nmf += m->mpjpe_f_count;
        }
        r.ade = ratio(ade, na);
        r.fde = ratio(fde, nf);
        r.mpjpe = ratio(mp, nm);
        r.mpjpe_f = ratio(mpf, nmf);
    } else {
        auto macro = [&](auto sum_of, auto count_of) -> std::optional<double> {
            double total = 0.0;
            long used = 0;
            for (const auto* m : members) {
                if (count_of(*m) == 0) continue;
                total += sum_of(*m) / static_cast<double>(count_of(*m));
                ++used;
            }
            return ratio(total, used);
        };
        r.ade = macro([](const SampleMetrics& m) { return m.ade_sum; }, [](const SampleMetrics& m) { return m.ade_count; });
        r.fde = macro([](const SampleMetrics& m) { return m.fde_sum; }, [](const SampleMetrics& m) { return m.fde_count; });
        r.mpjpe = macro([](const SampleMetrics& m) { return m.mpjpe_sum; }, [](const SampleMetrics& m) { return m.mpjpe_count; });
        r.mpjpe_f = macro([](const SampleMetrics& m) { return m.mpjpe_f_sum; },
                          [](const SampleMetrics& m) { return m.mpjpe_f_count; });
    }
    for (const auto* m : members) {
        r.n_valid_wrist_frames += m->ade_count;
        r.n_valid_joint_frames += m->mpjpe_count;
    }
    return r;
}

}  // namespace

Report aggregate_report(std::span<const SampleMetrics> samples, const StrataSpec& strata, const MetricOptions& options) {
    std::vector<const SampleMetrics*> all;
    std::map<std::string, const SampleMetrics*> by_id;
    for (const auto& s : samples) {
        all.push_back(&s);
        by_id[s.id] = &s;
    }
    Report report = pool(all, options);
    for (const auto& [name, ids] : strata) {
        std::vector<const SampleMetrics*> members;
        std::set<std::string> unique(ids.begin(), ids.end());
        for (const auto& id : unique) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) fail(ErrorKind::Validation, "stratum '" + name + "' names unknown sample " + id);
            members.push_back(it->second);
        }
        report.strata[name] = pool(members, options);
    }
    report.config = {{"averaging", options.averaging == Averaging::Micro ? "micro" : "macro"},
                     {"include_wrists_in_mpjpe", options.include_wrists_in_mpjpe},
                     {"fde_frame", "last"}};
    return report;
}

nlohmann::json to_json(const Report& report) {
    nlohmann::json j;
    j["report_version"] = kReportVersion;
    j["ade"] = optional_json(report.ade);
    j["fde"] = optional_json(report.fde);
    j["mpjpe"] = optional_json(report.mpjpe);
    j["mpjpe_f"] = optional_json(report.mpjpe_f);
    j["n_samples"] = report.n_samples;
    j["n_valid_wrist_frames"] = report.n_valid_wrist_frames;
    j["n_valid_joint_frames"] = report.n_valid_joint_frames;
    nlohmann::json strata = nlohmann::json::object();
    for (const auto& [name, r] : report.strata) {
        auto s = to_json(r);
        s.erase("report_version");
        strata[name] = std::move(s);
    }
    j["strata"] = strata;
    j["config"] = report.config;
    return j;
}

Report report_from_json(const nlohmann::json& j) {
    Report r;
    try {
        if (j.contains("report_version") && j["report_version"] != kReportVersion)
            fail(ErrorKind::BadVersion, "unsupported report_version " + j["report_version"].dump());
        r.ade = optional_from(j.at("ade"));
        r.fde = optional_from(j.at("fde"));
        r.mpjpe = optional_from(j.at("mpjpe"));
        r.mpjpe_f = optional_from(j.at("mpjpe_f"));
        r.n_samples = j.at("n_samples").get<long>();
        r.n_valid_wrist_frames = j.at("n_valid_wrist_frames").get<long>();
        r.n_valid_joint_frames = j.at("n_valid_joint_frames").get<long>();
        if (j.contains("strata"))
            for (const auto& [name, s] : j["strata"].items()) r.strata[name] = report_from_json(s);
        r.config = j.value("config", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::BadMagic, std::string("malformed report: ") + e.what());
    }
    return r;
}

}  // namespace egghand::metrics
