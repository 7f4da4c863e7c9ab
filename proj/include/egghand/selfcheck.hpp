#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace egghand::selfcheck {

struct CheckLine {
    std::string name;
    double error = 0.0;
    double tolerance = 0.0;
    std::size_t entries = 0;
    /// Probes dropped because the central difference straddled an l1 kink.
    std::size_t skipped = 0;
    bool pass() const { return error < tolerance || (tolerance == 0.0 && error == 0.0); }
};

/// Central finite-difference suite: every graph op, the standard blocks,
/// adapt_and_fuse, encode_state, the analytic loss gradient, and forward + loss_total
/// end to end on a miniature model (D = 8, 2 heads, one block each side).
std::vector<CheckLine> gradient_suite(std::uint64_t seed = 0);

}  // namespace egghand::selfcheck
