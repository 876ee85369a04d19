#pragma once

#include "bdverify/network.hpp"

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stop_token>
#include <vector>

namespace bdverify {

inline constexpr double kLossEpsilon = 1e-9;

// 0 when the stamped image's target logit strictly beats every other logit,
// otherwise (best other - target + epsilon).
double image_loss(const Network& net, const Image& image, const Trigger& trigger, int target);

double total_loss(const Network& net, std::span<const Image> images, const Trigger& trigger,
                  int target);

struct AttackLossReport {
    std::vector<double> losses;
    std::vector<bool> success;
    double total = 0.0;
};

AttackLossReport loss_report(const Network& net, std::span<const Image> images,
                             const Trigger& trigger, int target);

// Concrete check: every stamped image is classified as `target` with a strict
// margin.
bool attacks_all(const Network& net, std::span<const Image> images, const Trigger& trigger,
                 int target);

struct OptimizerOptions {
    std::chrono::duration<double> budget{30.0};
    double fd_step = 1e-4;
    double learning_rate = 0.05;
    double min_learning_rate = 1e-6;
    int restarts = 3;
    int max_iterations = 1000;
    std::uint64_t seed = 0;
    std::stop_token stop;
};

// Returns `candidate` if it already attacks every image; otherwise minimizes
// the total loss by projected gradient descent (from the candidate or the
// domain midpoint, then random restarts) and returns a trigger only when the
// loss reaches zero.
std::optional<Trigger> op_trigger(const Network& net, std::span<const Image> images,
                                  const std::optional<std::vector<double>>& candidate,
                                  const TriggerSpec& spec, int target,
                                  const OptimizerOptions& options = {});

}  // namespace bdverify
