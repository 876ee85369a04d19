#pragma once

#include "bdverify/constraint_system.hpp"

#include <chrono>
#include <map>
#include <stop_token>
#include <string>

namespace bdverify {

enum class FeasibilityStatus { Sat, Unsat, Unknown };
enum class UnknownReason { None, Timeout, Numerical };

std::string to_string(FeasibilityStatus status);
std::string to_string(UnknownReason reason);

struct FeasibilityResult {
    FeasibilityStatus status = FeasibilityStatus::Unknown;
    UnknownReason reason = UnknownReason::None;
    std::map<VariableId, double> model;  // filled when Sat
    // Certified violation of the infeasibility witness (Unsat / numerical).
    double infeasibility = 0.0;
    std::size_t pivots = 0;
};

struct FeasibilityOptions {
    std::chrono::duration<double> time_budget{20.0};
    // Unsat is reported only when the certified gap exceeds this.
    double unsat_threshold = 1e-7;
    // A Sat model must satisfy every constraint within this tolerance.
    double model_tolerance = 1e-6;
    std::stop_token stop;
};

// Decides the non-strict closure of `system` with a bounded-variable simplex
// (Bland's rule). Unsat verdicts are backed by a certificate recomputed from
// the original coefficients. Throws MalformedSystemError on ill-formed input.
FeasibilityResult check_feasible(const ConstraintSystem& system,
                                 const FeasibilityOptions& options = {});

}  // namespace bdverify
