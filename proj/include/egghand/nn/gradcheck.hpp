#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "egghand/nn/graph.hpp"

namespace egghand::nn {

/// Builds a graph from leaf inputs and returns its output node.
using GraphFunction = std::function<Var(Graph&, std::span<const Var>)>;

struct GradCheckOptions {
    double step = 1e-5;
    /// Relative errors use max(|analytic|, |numeric|, floor) as denominator.
    double floor = 1e-6;
    /// Entries probed per input; 0 probes every entry.
    std::size_t max_entries_per_input = 0;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t entries_checked = 0;
};

/// Compares reverse-mode adjoints of a scalar readout against central differences.
/// Non-scalar outputs are reduced with fixed Gaussian weights scaled by 1/sqrt(n).
GradCheckResult check_gradients(const GraphFunction& f, std::vector<Tensor> inputs,
                                const GradCheckOptions& options = {});

enum class CheckedBlock { Linear, AttentionBlock, Constant };

/// Randomized check of a standard block with parameters drawn from Prng(seed).
GradCheckResult grad_check(CheckedBlock block, std::uint64_t seed);

Tensor random_tensor(Shape shape, std::uint64_t seed, double stddev = 1.0);

}  // namespace egghand::nn
