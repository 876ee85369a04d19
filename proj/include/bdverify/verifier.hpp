#pragma once

#include "bdverify/attack_condition.hpp"
#include "bdverify/feasibility.hpp"
#include "bdverify/network.hpp"
#include "bdverify/trigger_gen.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <vector>

namespace bdverify {

enum class Verdict { Safe, Unsafe, Unknown };

std::string to_string(Verdict verdict);
Verdict verdict_from_string(const std::string& text);

// Counters accumulated over the trigger positions visited by verify_x.
struct PositionDiagnostics {
    std::size_t positions_total = 0;
    std::size_t positions_explored = 0;
    std::size_t quick_unsat = 0;        // refuted by output-layer bounds
    std::size_t image_unsat = 0;        // refuted by one image's system
    std::size_t conjunction_unsat = 0;  // refuted by the conjoined system
    std::size_t solver_sat = 0;
    std::size_t solver_unknown = 0;
    std::size_t spurious = 0;  // not refuted, but no trigger generated

    PositionDiagnostics& operator+=(const PositionDiagnostics& other);
    bool operator==(const PositionDiagnostics&) const = default;
};

struct VerifyXVerdict {
    Verdict verdict = Verdict::Unknown;
    std::optional<Trigger> trigger;
    PositionDiagnostics diagnostics;
    bool budget_exhausted = false;
};

struct VerifyXOptions {
    std::chrono::duration<double> budget{600.0};
    FeasibilityOptions solver;
    OptimizerOptions optimizer;
    int workers = 1;
    std::stop_token stop;
    // Debug hooks; `image` is the index within X, or -1 for the conjunction.
    std::function<void(const TriggerSpec&, int image, const ConstraintSystem&)> on_system;
    std::function<void(const TriggerSpec&, int image, const AbstractState&)> on_state;
};

// Decides whether one trigger (of the given shape, at some position) makes
// every image in X classify as `target`.
VerifyXVerdict verify_x(const Network& net, std::span<const Image> images,
                        const TriggerShape& shape, int target, const VerifyXOptions& options = {});

struct SprtThresholds {
    double p0 = 0.0;
    double p1 = 0.0;
    double alpha = 0.01;
    double beta = 0.01;

    double log_accept_h0() const;  // log(beta / (1 - alpha))
    double log_accept_h1() const;  // log((1 - beta) / alpha)
};

struct SprtParams {
    double theta = 0.9;
    int k = 5;
    double alpha = 0.01;
    double beta = 0.01;
    double delta = 0.01;

    double p0() const;  // (1 - theta^K) + delta
    double p1() const;  // (1 - theta^K) - delta
    SprtThresholds thresholds() const;
    void validate() const;
};

struct SprtState {
    std::size_t n = 0;  // rounds
    std::size_t z = 0;  // SAFE rounds
    bool operator==(const SprtState&) const = default;
};

enum class SprtDecision { AcceptH0, AcceptH1, Continue };

// z*log(p1/p0) + (n-z)*log((1-p1)/(1-p0))
double sprt_log_ratio(const SprtThresholds& t, const SprtState& state);
SprtDecision sprt_decide(const SprtThresholds& t, const SprtState& state);

struct SprtStepResult {
    SprtDecision decision = SprtDecision::Continue;
    SprtState state;
};

// Records one round and tests the likelihood ratio.
SprtStepResult sprt_step(const SprtThresholds& t, SprtState state, bool round_safe);

struct VerifyPrVerdict {
    Verdict verdict = Verdict::Unknown;
    std::optional<Trigger> trigger;
    std::optional<double> success_rate;
    SprtState sprt;
    PositionDiagnostics diagnostics;
    bool budget_exhausted = false;
};

using VerifyXFn = std::function<VerifyXVerdict(std::span<const Image>)>;

struct VerifyPrOptions {
    VerifyXOptions verify_x;
    std::chrono::duration<double> global_budget{7200.0};
    std::uint64_t seed = 0;
    // Skip filter_population on the inputs (they are already filtered).
    bool assume_filtered = false;
    // Replaces the per-round verify_x call (testing).
    VerifyXFn verify_x_override;
};

// Sequential probability ratio test over random K-image rounds of verify_x.
VerifyPrVerdict verify_pr(const Network& net, std::span<const Image> population,
                          const SprtParams& params, const TriggerShape& shape, int target,
                          std::span<const Image> validation, const VerifyPrOptions& options = {});

// Keeps labeled images that the network classifies correctly and whose label
// is not `target`.
std::vector<Image> filter_population(const Network& net, std::span<const Image> dataset,
                                     int target);

double validate_success_rate(const Network& net, const Trigger& trigger,
                             std::span<const Image> validation, int target);

}  // namespace bdverify
