#pragma once

#include <utility>
#include <vector>

#include "egghand/pose.hpp"

namespace egghand::objectives {

struct LossWeights {
    double abs = 0.6;
    double rel = 0.2;
    double pair = 0.2;

    void validate() const;
};

using JointPair = std::pair<int, int>;
using PairSet = std::vector<JointPair>;

/// Every intra-hand pair (i < j) of both hands: 2 x C(21, 2) = 420.
PairSet intra_hand_pairs();

/// A loss value; `empty` marks the no-eligible-term case (value 0).
struct LossTerm {
    double value = 0.0;
    long eligible = 0;
    bool empty() const { return eligible == 0; }
};

// Masks come from gt.valid; pred.valid is ignored.

/// Mean over valid (t, j) of |pred - gt|_1.
LossTerm loss_abs(const PoseSequence& pred, const PoseSequence& gt);

/// Per hand and frame with a valid wrist: mean over valid non-wrist joints of the
/// l1 norm of the wrist-relative residual.
LossTerm loss_rel(const PoseSequence& pred, const PoseSequence& gt);

/// Mean over frames and pairs with both joints valid of (|d_pred| - |d_gt|)^2.
LossTerm loss_pair(const PoseSequence& pred, const PoseSequence& gt, const PairSet& pairs);

struct LossBreakdown {
    double total = 0.0;
    LossTerm abs, rel, pair;
};

LossBreakdown loss_total(const PoseSequence& pred, const PoseSequence& gt, const LossWeights& weights,
                         const PairSet& pairs);

/// Gradient of loss_total with respect to pred.xyz, [T][42][3]. The l1 subgradient
/// at exactly zero is 0; masked joints receive exactly 0.
std::vector<double> loss_gradient(const PoseSequence& pred, const PoseSequence& gt, const LossWeights& weights,
                                  const PairSet& pairs);

}  // namespace egghand::objectives
