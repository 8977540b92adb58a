#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srm/model.hpp"

namespace srm {

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    int coords_checked = 0;
    bool passed = false;
};

// Central finite-difference verification of every prediction head and a
// combined all-heads loss, on a small deterministic model. `corruption` is a
// test hook: a non-zero value is added to one analytic gradient coordinate
// per check, which must make the check fail.
std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed,
                                                 double tolerance = 1e-4,
                                                 double corruption = 0.0,
                                                 int min_coords = 200);

bool all_passed(const std::vector<GradCheckResult>& results);

}  // namespace srm
