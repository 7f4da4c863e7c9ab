#include "egghand/objectives.hpp"

#include <cmath>
#include <string>

#include "egghand/error.hpp"

namespace egghand::objectives {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_shapes(const PoseSequence& pred, const PoseSequence& gt) {
    if (pred.frames != gt.frames || pred.xyz.size() != gt.xyz.size() || gt.valid.size() != static_cast<std::size_t>(gt.frames) * kJoints)
        fail(ErrorKind::Validation, "loss: prediction has " + std::to_string(pred.frames) + " frames, target " +
                                        std::to_string(gt.frames));
}

void check_pairs(const PairSet& pairs) {
    for (const auto& [i, j] : pairs) {
        if (!(0 <= i && i < j && j < kJoints) || wrist_of(i) != wrist_of(j))
            fail(ErrorKind::Validation, "pair (" + std::to_string(i) + ", " + std::to_string(j) + ") is not an intra-hand pair");
    }
}

}  // namespace

void LossWeights::validate() const {
    require(abs >= 0.0 && rel >= 0.0 && pair >= 0.0, "loss weights must be non-negative");
}

PairSet intra_hand_pairs() {
    PairSet pairs;
    pairs.reserve(420);
    for (int wrist : {kLeftWrist, kRightWrist})
        for (int i = wrist; i < wrist + kJointsPerHand; ++i)
            for (int j = i + 1; j < wrist + kJointsPerHand; ++j) pairs.emplace_back(i, j);
    return pairs;
}

LossTerm loss_abs(const PoseSequence& pred, const PoseSequence& gt) {
    check_shapes(pred, gt);
    double total = 0.0;
    long n = 0;
    for (int t = 0; t < gt.frames; ++t)
        for (int j = 0; j < kJoints; ++j) {
            if (!gt.is_valid(t, j)) continue;
            total += (pred.joint(t, j) - gt.joint(t, j)).lpNorm<1>();
            ++n;
        }
    return {n ? total / static_cast<double>(n) : 0.0, n};
}

LossTerm loss_rel(const PoseSequence& pred, const PoseSequence& gt) {
    check_shapes(pred, gt);
    double total = 0.0;
    long n = 0;
    for (int t = 0; t < gt.frames; ++t)
        for (int w : {kLeftWrist, kRightWrist}) {
            if (!gt.is_valid(t, w)) continue;
            for (int j = w + 1; j < w + kJointsPerHand; ++j) {
                if (!gt.is_valid(t, j)) continue;
                total += ((pred.joint(t, j) - pred.joint(t, w)) - (gt.joint(t, j) - gt.joint(t, w))).lpNorm<1>();
                ++n;
            }
        }
    return {n ? total / static_cast<double>(n) : 0.0, n};
}

LossTerm loss_pair(const PoseSequence& pred, const PoseSequence& gt, const PairSet& pairs) {
    check_shapes(pred, gt);
    check_pairs(pairs);
    double total = 0.0;
    long n = 0;
    for (int t = 0; t < gt.frames; ++t)
        for (const auto& [i, j] : pairs) {
            if (!gt.is_valid(t, i) || !gt.is_valid(t, j)) continue;
            const double diff = (pred.joint(t, i) - pred.joint(t, j)).norm() - (gt.joint(t, i) - gt.joint(t, j)).norm();
            total += diff * diff;
            ++n;
        }
    return {n ? total / static_cast<double>(n) : 0.0, n};
}

LossBreakdown loss_total(const PoseSequence& pred, const PoseSequence& gt, const LossWeights& weights,
                         const PairSet& pairs) {
    weights.validate();
    LossBreakdown b;
    b.abs = loss_abs(pred, gt);
    b.rel = loss_rel(pred, gt);
    b.pair = loss_pair(pred, gt, pairs);
    b.total = weights.abs * b.abs.value + weights.rel * b.rel.value + weights.pair * b.pair.value;
    return b;
}

std::vector<double> loss_gradient(const PoseSequence& pred, const PoseSequence& gt, const LossWeights& weights,
                                  const PairSet& pairs) {
    weights.validate();
    check_shapes(pred, gt);
    check_pairs(pairs);
    std::vector<double> grad(pred.xyz.size(), 0.0);
    auto at = [&](int t, int j) { return Eigen::Map<Eigen::Vector3d>(grad.data() + PoseSequence::offset(t, j)); };

    const LossTerm abs = loss_abs(pred, gt);
    if (!abs.empty() && weights.abs != 0.0) {
        const double s = weights.abs / static_cast<double>(abs.eligible);
        for (int t = 0; t < gt.frames; ++t)
            for (int j = 0; j < kJoints; ++j) {
                if (!gt.is_valid(t, j)) continue;
                at(t, j) += s * (pred.joint(t, j) - gt.joint(t, j)).unaryExpr(&sign);
            }
    }

    const LossTerm rel = loss_rel(pred, gt);
    if (!rel.empty() && weights.rel != 0.0) {
        const double s = weights.rel / static_cast<double>(rel.eligible);
        for (int t = 0; t < gt.frames; ++t)
            for (int w : {kLeftWrist, kRightWrist}) {
                if (!gt.is_valid(t, w)) continue;
                for (int j = w + 1; j < w + kJointsPerHand; ++j) {
                    if (!gt.is_valid(t, j)) continue;
                    const Eigen::Vector3d r = (pred.joint(t, j) - pred.joint(t, w)) - (gt.joint(t, j) - gt.joint(t, w));
                    const Eigen::Vector3d g = s * r.unaryExpr(&sign);
                    at(t, j) += g;
                    at(t, w) -= g;
                }
            }
    }

    const LossTerm pair = loss_pair(pred, gt, pairs);
    if (!pair.empty() && weights.pair != 0.0) {
        const double s = 2.0 * weights.pair / static_cast<double>(pair.eligible);
        for (int t = 0; t < gt.frames; ++t)
            for (const auto& [i, j] : pairs) {
                if (!gt.is_valid(t, i) || !gt.is_valid(t, j)) continue;
                const Eigen::Vector3d d = pred.joint(t, i) - pred.joint(t, j);
                const double len = d.norm();
                if (len == 0.0) continue;
                const double diff = len - (gt.joint(t, i) - gt.joint(t, j)).norm();
                const Eigen::Vector3d g = (s * diff / len) * d;
                at(t, i) += g;
                at(t, j) -= g;
            }
    }
    return grad;
}

}  // namespace egghand::objectives
