#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace uapforge {

struct GradCheckOptions {
    double step = 1e-4;
    /// Bound on |analytic - numeric| / max(1, |analytic|, |numeric|).
    double tolerance = 1e-6;
    std::size_t points = 5;
};

struct GradCheckReport {
    std::string op;
    bool supported = true;
    bool passed = false;
    double max_rel_error = 0.0;
    std::size_t points = 0;
    std::string note;
};

/// Compares the recorded adjoint of `op` against central differences in
/// double precision at `options.points` seeded random inputs. Never throws for
/// a failing op; forward-only and unknown ops come back unsupported.
GradCheckReport finite_difference_check(std::string_view op, std::uint64_t seed, GradCheckOptions options = {});

/// Every differentiable op of the catalog, each listed once.
std::vector<std::string> differentiable_ops();

/// Runs finite_difference_check over differentiable_ops(). With
/// `inject_fault`, a deliberately wrong adjoint is appended to the suite.
std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed, GradCheckOptions options = {},
                                                 bool inject_fault = false);

}  // namespace uapforge
