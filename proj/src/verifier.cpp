#include "bdverify/verifier.hpp"

#include "bdverify/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace bdverify {

std::string to_string(Verdict verdict)
{
    switch (verdict) {
    case Verdict::Safe:
        return "SAFE";
    case Verdict::Unsafe:
        return "UNSAFE";
    case Verdict::Unknown:
        return "UNKNOWN";
    }
    return "?";
}

Verdict verdict_from_string(const std::string& text)
{
    if (text == "SAFE")
        return Verdict::Safe;
    if (text == "UNSAFE")
        return Verdict::Unsafe;
    if (text == "UNKNOWN")
        return Verdict::Unknown;
    throw FormatError("unknown verdict '" + text + "'");
}

PositionDiagnostics& PositionDiagnostics::operator+=(const PositionDiagnostics& o)
{
    positions_total += o.positions_total;
    positions_explored += o.positions_explored;
    quick_unsat += o.quick_unsat;
    image_unsat += o.image_unsat;
    conjunction_unsat += o.conjunction_unsat;
    solver_sat += o.solver_sat;
    solver_unknown += o.solver_unknown;
    spurious += o.spurious;
    return *this;
}

namespace {

using Clock = std::chrono::steady_clock;

enum class PositionOutcome { Refuted, Attacked, Undecided, Interrupted };

struct PositionResult {
    PositionOutcome outcome = PositionOutcome::Interrupted;
    std::optional<Trigger> trigger;
};

std::chrono::duration<double> remaining(Clock::time_point deadline,
                                        std::chrono::duration<double> cap)
{
    const std::chrono::duration<double> left = deadline - Clock::now();
    return std::max(std::chrono::duration<double>(0.0), std::min(left, cap));
}

// One iteration of the position loop: per-image refutation, conjunction,
// then trigger generation.
PositionResult check_position(const Network& net, std::span<const Image> images,
                              const TriggerSpec& spec, int target, const VerifyXOptions& options,
                              std::stop_token stop, Clock::time_point deadline,
                              PositionDiagnostics& diag)
{
    auto interrupted = [&] { return stop.stop_requested() || Clock::now() > deadline; };
    auto solver_options = [&] {
        FeasibilityOptions o = options.solver;
        o.time_budget = remaining(deadline, options.solver.time_budget);
        o.stop = stop;
        return o;
    };

    ConstraintSystem phi = build_phi_pre(net, spec);
    std::optional<FeasibilityResult> last;
    for (std::size_t k = 0; k < images.size(); ++k) {
        if (interrupted())
            return {};
        const int tag = static_cast<int>(k);
        AttackCondition cond = attack_condition(net, images[k], spec, target, tag);
        if (options.on_state)
            options.on_state(spec, tag, cond.state);
        if (cond.quick == QuickCheckResult::DefinitelyUnsat) {
            ++diag.quick_unsat;
            return {PositionOutcome::Refuted, std::nullopt};
        }
        if (options.on_system)
            options.on_system(spec, tag, cond.system);
        last = check_feasible(cond.system, solver_options());
        if (last->status == FeasibilityStatus::Unsat) {
            ++diag.image_unsat;
            return {PositionOutcome::Refuted, std::nullopt};
        }
        if (last->status == FeasibilityStatus::Unknown && interrupted())
            return {};
        conjoin_into(phi, cond.system);
    }

    FeasibilityResult joint;
    if (images.size() == 1 && last) {
        joint = *last;
    } else {
        if (options.on_system)
            options.on_system(spec, -1, phi);
        joint = check_feasible(phi, solver_options());
    }
    if (joint.status == FeasibilityStatus::Unsat) {
        ++diag.conjunction_unsat;
        return {PositionOutcome::Refuted, std::nullopt};
    }
    if (joint.status == FeasibilityStatus::Unknown && interrupted())
        return {};
    if (joint.status == FeasibilityStatus::Sat)
        ++diag.solver_sat;
    else
        ++diag.solver_unknown;

    std::optional<std::vector<double>> candidate;
    if (joint.status == FeasibilityStatus::Sat) {
        std::vector<double> values;
        for (auto j : trigger_pixel_indices(net.input_shape(), spec))
            values.push_back(joint.model.at(VariableId::trigger_pixel(j)));
        candidate = std::move(values);
    }
    OptimizerOptions opt = options.optimizer;
    opt.budget = remaining(deadline, options.optimizer.budget);
    opt.stop = stop;
    opt.seed = options.optimizer.seed ^
               (static_cast<std::uint64_t>(spec.row) << 32 | static_cast<std::uint64_t>(spec.col));
    if (auto trigger = op_trigger(net, images, candidate, spec, target, opt))
        return {PositionOutcome::Attacked, std::move(trigger)};
    if (interrupted())
        return {};
    ++diag.spurious;
    return {PositionOutcome::Undecided, std::nullopt};
}

}  // namespace

VerifyXVerdict verify_x(const Network& net, std::span<const Image> images,
                        const TriggerShape& shape, int target, const VerifyXOptions& options)
{
    BDV_REQUIRE(!images.empty(), "verify_x: empty image set");
    BDV_REQUIRE(target >= 0 && target < net.label_count(), "verify_x: target out of range");
    for (const auto& image : images)
        BDV_REQUIRE(image.shape == net.input_shape(), "verify_x: image shape mismatch");
    BDV_REQUIRE(shape.channels == net.input_shape().channels && shape.height >= 1 && shape.width >= 1 &&
                    position_count(net.input_shape(), shape) > 0,
                "verify_x: trigger shape does not fit the input");

    const auto positions = all_positions(net.input_shape(), shape);
    const auto deadline =
        Clock::now() + std::chrono::duration_cast<Clock::duration>(options.budget);

    std::stop_source cancel;
    std::stop_callback forward_stop(options.stop, [&] { cancel.request_stop(); });

    std::mutex mutex;
    VerifyXVerdict verdict;
    verdict.diagnostics.positions_total = positions.size();
    bool has_unknown = false;
    bool interrupted = false;
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        while (true) {
            const std::size_t p = next.fetch_add(1);
            if (p >= positions.size())
                return;
            PositionDiagnostics local;
            auto result = check_position(net, images, positions[p], target, options,
                                         cancel.get_token(), deadline, local);
            std::lock_guard lock(mutex);
            verdict.diagnostics += local;
            switch (result.outcome) {
            case PositionOutcome::Refuted:
                ++verdict.diagnostics.positions_explored;
                break;
            case PositionOutcome::Undecided:
                ++verdict.diagnostics.positions_explored;
                has_unknown = true;
                break;
            case PositionOutcome::Attacked:
                ++verdict.diagnostics.positions_explored;
                if (!verdict.trigger)
                    verdict.trigger = std::move(result.trigger);
                cancel.request_stop();
                return;
            case PositionOutcome::Interrupted:
                interrupted = true;
                return;
            }
        }
    };

    const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(positions.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back(worker);
    }

    if (verdict.trigger) {
        verdict.verdict = Verdict::Unsafe;
    } else if (interrupted) {
        verdict.verdict = Verdict::Unknown;
        verdict.budget_exhausted = !options.stop.stop_requested();
    } else {
        verdict.verdict = has_unknown ? Verdict::Unknown : Verdict::Safe;
    }
    return verdict;
}

double SprtThresholds::log_accept_h0() const
{
    return std::log(beta / (1.0 - alpha));
}

double SprtThresholds::log_accept_h1() const
{
    return std::log((1.0 - beta) / alpha);
}

double SprtParams::p0() const
{
    return (1.0 - std::pow(theta, k)) + delta;
}

double SprtParams::p1() const
{
    return (1.0 - std::pow(theta, k)) - delta;
}

void SprtParams::validate() const
{
    BDV_REQUIRE(theta > 0.0 && theta < 1.0, "sprt: theta must be in (0,1)");
    BDV_REQUIRE(k >= 1, "sprt: K must be positive");
    BDV_REQUIRE(alpha > 0.0 && alpha < 0.5, "sprt: alpha must be in (0,0.5)");
    BDV_REQUIRE(beta > 0.0 && beta < 0.5, "sprt: beta must be in (0,0.5)");
    BDV_REQUIRE(delta > 0.0 && delta < 0.5, "sprt: delta must be in (0,0.5)");
    BDV_REQUIRE(p1() > 0.0 && p0() < 1.0, "sprt: indifference region leaves (0,1)");
}

SprtThresholds SprtParams::thresholds() const
{
    validate();
    return {p0(), p1(), alpha, beta};
}

double sprt_log_ratio(const SprtThresholds& t, const SprtState& state)
{
    const double z = static_cast<double>(state.z);
    const double rest = static_cast<double>(state.n - state.z);
    return z * std::log(t.p1 / t.p0) + rest * std::log((1.0 - t.p1) / (1.0 - t.p0));
}

SprtDecision sprt_decide(const SprtThresholds& t, const SprtState& state)
{
    const double ratio = sprt_log_ratio(t, state);
    if (ratio <= t.log_accept_h0())
        return SprtDecision::AcceptH0;
    if (ratio >= t.log_accept_h1())
        return SprtDecision::AcceptH1;
    return SprtDecision::Continue;
}

SprtStepResult sprt_step(const SprtThresholds& t, SprtState state, bool round_safe)
{
    BDV_REQUIRE(state.z <= state.n, "sprt_step: z > n");
    ++state.n;
    if (round_safe)
        ++state.z;
    return {sprt_decide(t, state), state};
}

std::vector<Image> filter_population(const Network& net, std::span<const Image> dataset, int target)
{
    std::vector<Image> kept;
    for (const auto& image : dataset) {
        BDV_REQUIRE(image.label.has_value(), "filter_population: unlabeled image");
        if (*image.label == target)
            continue;
        if (classify(forward(net, image)) == *image.label)
            kept.push_back(image);
    }
    return kept;
}

double validate_success_rate(const Network& net, const Trigger& trigger,
                             std::span<const Image> validation, int target)
{
    BDV_REQUIRE(!validation.empty(), "validate_success_rate: empty validation set");
    std::size_t hits = 0;
    for (const auto& image : validation)
        if (strictly_dominates(forward(net, stamp(image, trigger)), target))
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(validation.size());
}

VerifyPrVerdict verify_pr(const Network& net, std::span<const Image> population,
                          const SprtParams& params, const TriggerShape& shape, int target,
                          std::span<const Image> validation, const VerifyPrOptions& options)
{
    const SprtThresholds thresholds = params.thresholds();
    std::vector<Image> pool;
    std::vector<Image> checked;
    std::span<const Image> candidates = population;
    std::span<const Image> validation_set = validation;
    if (!options.assume_filtered) {
        pool = filter_population(net, population, target);
        checked = filter_population(net, validation, target);
        candidates = pool;
        validation_set = checked;
    }
    if (candidates.empty())
        throw PreconditionError("verify_pr: population is empty after filtering");
    BDV_REQUIRE(candidates.size() >= static_cast<std::size_t>(params.k),
                "verify_pr: population smaller than K");

    const auto deadline =
        Clock::now() + std::chrono::duration_cast<Clock::duration>(options.global_budget);
    std::mt19937_64 rng(options.seed);
    std::vector<std::size_t> order(candidates.size());

    VerifyPrVerdict result;
    std::vector<Image> round_images;
    while (true) {
        if (options.verify_x.stop.stop_requested() || Clock::now() > deadline) {
            result.verdict = Verdict::Unknown;
            result.budget_exhausted = true;
            return result;
        }
        // K distinct images for this round (partial Fisher-Yates).
        std::iota(order.begin(), order.end(), std::size_t{0});
        round_images.clear();
        for (int i = 0; i < params.k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i),
                                                            order.size() - 1);
            std::swap(order[static_cast<std::size_t>(i)], order[pick(rng)]);
            round_images.push_back(candidates[order[static_cast<std::size_t>(i)]]);
        }

        VerifyXVerdict round;
        if (options.verify_x_override) {
            round = options.verify_x_override(round_images);
        } else {
            VerifyXOptions vx = options.verify_x;
            vx.budget = remaining(deadline, options.verify_x.budget);
            vx.optimizer.seed = options.seed + 0x9e3779b97f4a7c15ULL * (result.sprt.n + 1);
            round = verify_x(net, round_images, shape, target, vx);
        }
        result.diagnostics += round.diagnostics;

        if (round.verdict == Verdict::Unsafe && round.trigger) {
            const double rate = validation_set.empty()
                                    ? 0.0
                                    : validate_success_rate(net, *round.trigger, validation_set, target);
            if (rate >= params.theta) {
                result.verdict = Verdict::Unsafe;
                result.trigger = round.trigger;
                result.success_rate = rate;
                result.sprt.n += 1;
                return result;
            }
        }

        const auto step = sprt_step(thresholds, result.sprt, round.verdict == Verdict::Safe);
        result.sprt = step.state;
        if (step.decision == SprtDecision::AcceptH0) {
            result.verdict = Verdict::Safe;
            return result;
        }
        if (step.decision == SprtDecision::AcceptH1) {
            result.verdict = Verdict::Unknown;
            return result;
        }
    }
}

}  // namespace bdverify
