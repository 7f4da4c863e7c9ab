#include "egghand/baselines.hpp"

#include "egghand/checkpoint.hpp"
#include "egghand/error.hpp"

namespace egghand::baselines {

StaticModel static_fit(std::span<const dataio::Sample> train) {
    StaticModel model;
    std::array<double, kCoords> sums{};
    auto visit = [&](const PoseSequence& p) {
        for (int t = 0; t < p.frames; ++t)
            for (int j = 0; j < kJoints; ++j) {
                if (!p.is_valid(t, j)) continue;
                for (int a = 0; a < 3; ++a) sums[static_cast<std::size_t>(j * 3 + a)] += p.joint(t, j)(a);
                ++model.counts[static_cast<std::size_t>(j)];
            }
    };
    for (const auto& s : train) {
        visit(s.obs);
        visit(s.fut);
    }
    for (int j = 0; j < kJoints; ++j) {
        const long n = model.counts[static_cast<std::size_t>(j)];
        for (int a = 0; a < 3; ++a) {
            const auto i = static_cast<std::size_t>(j * 3 + a);
            model.mean_pose[i] = n ? sums[i] / static_cast<double>(n) : 0.0;
        }
    }
    return model;
}

PoseSequence static_predict(const StaticModel& model, int horizon) {
    require(horizon >= 1, "horizon must be positive");
    PoseSequence out(horizon);
    for (int t = 0; t < horizon; ++t)
        for (int j = 0; j < kJoints; ++j) {
            for (int a = 0; a < 3; ++a) out.joint(t, j)(a) = model.mean_pose[static_cast<std::size_t>(j * 3 + a)];
            out.set_valid(t, j, model.observed(j));
        }
    return out;
}

PoseSequence cvm_predict(const PoseSequence& obs, int horizon) {
    require(horizon >= 1, "horizon must be positive");
    require(obs.frames >= 1, "cvm needs at least one observed frame");
    PoseSequence out(horizon, false);
    const int last_index = obs.frames - 1;
    for (int j = 0; j < kJoints; ++j) {
        int a = -1, b = -1;
        for (int t = last_index; t >= 0; --t) {
            if (!obs.is_valid(t, j)) continue;
            if (a < 0) {
                a = t;
            } else {
                b = t;
                break;
            }
        }
        if (a < 0) continue;
        const Eigen::Vector3d pa = obs.joint(a, j);
        const Eigen::Vector3d v = b < 0 ? Eigen::Vector3d::Zero() : Eigen::Vector3d((pa - obs.joint(b, j)) / (a - b));
        for (int k = 1; k <= horizon; ++k) {
            out.joint(k - 1, j) = pa + v * static_cast<double>(k + last_index - a);
            out.set_valid(k - 1, j, true);
        }
    }
    return out;
}

void save_static(const StaticModel& model, const std::filesystem::path& path) {
    checkpoint::Container c;
    c.header = {{"kind", "static"}, {"counts", model.counts}, {"shape", {kJoints, 3}}};
    c.payload.assign(model.mean_pose.begin(), model.mean_pose.end());
    checkpoint::write_container(c, path);
}

StaticModel load_static(const std::filesystem::path& path) {
    const auto c = checkpoint::read_container(path);
    if (c.header.value("kind", "") != "static") fail(ErrorKind::Integrity, path.string() + " is not a static baseline");
    if (c.payload.size() != static_cast<std::size_t>(kCoords) || !c.trailer.empty())
        fail(ErrorKind::Integrity, path.string() + ": static payload must hold 42x3 values");
    StaticModel m;
    std::copy(c.payload.begin(), c.payload.end(), m.mean_pose.begin());
    try {
        m.counts = c.header.at("counts").get<std::array<long, kJoints>>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Integrity, path.string() + ": " + e.what());
    }
    return m;
}

}  // namespace egghand::baselines
