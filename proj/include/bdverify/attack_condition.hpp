#pragma once

#include "bdverify/abstract_domain.hpp"
#include "bdverify/constraint_system.hpp"
#include "bdverify/network.hpp"

#include <span>

namespace bdverify {

enum class QuickCheckResult { PossiblySat, DefinitelyUnsat };

// Box constraints lo_j <= x_j <= hi_j on the global trigger-pixel variables.
ConstraintSystem build_phi_pre(const Network& net, const TriggerSpec& spec);

// DefinitelyUnsat iff some other label's concrete lower bound is at least the
// target's concrete upper bound.
QuickCheckResult quick_unsat(std::span<const AbstractNeuron> output, int target);

struct AttackCondition {
    QuickCheckResult quick = QuickCheckResult::PossiblySat;
    AbstractState state;
    // pre_I and A_I and post_I; trigger pixels are the shared global variables
    // and neuron variables are scoped to `image_tag`.
    ConstraintSystem system;
};

AttackCondition attack_condition(const Network& net, const Image& image, const TriggerSpec& spec,
                                 int target, int image_tag = 0);

// Adds the relational constraints of an analyzed state (every neuron above the
// input layer) plus the post-condition for `target`.
void encode_state(const AbstractState& state, int image_tag, int target, ConstraintSystem& system);

}  // namespace bdverify
