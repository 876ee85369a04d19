#include "bdverify/attack_condition.hpp"

#include "bdverify/error.hpp"

namespace bdverify {

ConstraintSystem build_phi_pre(const Network& net, const TriggerSpec& spec)
{
    ConstraintSystem system;
    const auto& domain = net.input_domain();
    for (auto j : trigger_pixel_indices(net.input_shape(), spec))
        system.declare(VariableId::trigger_pixel(j), domain.lo[j], domain.hi[j]);
    return system;
}

QuickCheckResult quick_unsat(std::span<const AbstractNeuron> output, int target)
{
    BDV_REQUIRE(target >= 0 && static_cast<std::size_t>(target) < output.size(),
                "quick_unsat: target out of range");
    const double target_upper = output[target].upper;
    for (std::size_t j = 0; j < output.size(); ++j)
        if (static_cast<int>(j) != target && target_upper <= output[j].lower)
            return QuickCheckResult::DefinitelyUnsat;
    return QuickCheckResult::PossiblySat;
}

namespace {

// Terms of `expr` as system variables. Input-layer variables are the shared
// trigger pixels; pinned input neurons contribute their value to `constant`.
std::vector<std::pair<VariableId, double>> lower_terms(const AbstractState& state,
                                                       const LinearExpr& expr, int image_tag,
                                                       double& constant)
{
    std::vector<std::pair<VariableId, double>> terms;
    terms.reserve(expr.terms.size() + 1);
    constant = expr.constant;
    for (const auto& t : expr.terms) {
        if (expr.layer == 0) {
            const auto& input = state.layer(0)[t.neuron];
            if (input.lower_expr.is_constant()) {
                constant += t.coeff * input.lower_expr.constant;
                continue;
            }
            terms.emplace_back(VariableId::trigger_pixel(t.neuron), t.coeff);
        } else {
            terms.emplace_back(VariableId::neuron_of(image_tag, expr.layer, t.neuron), t.coeff);
        }
    }
    return terms;
}

}  // namespace

void encode_state(const AbstractState& state, int image_tag, int target, ConstraintSystem& system)
{
    BDV_REQUIRE(image_tag >= 0, "encode_state: image tag must be non-negative");
    for (std::size_t i = 1; i < state.layer_count(); ++i) {
        const auto layer = state.layer(i);
        for (std::size_t j = 0; j < layer.size(); ++j) {
            const auto& n = layer[j];
            const auto x = VariableId::neuron_of(image_tag, i, j);
            system.declare(x, n.lower, n.upper);

            // lower_expr <= x
            double c = 0.0;
            auto terms = lower_terms(state, n.lower_expr, image_tag, c);
            terms.emplace_back(x, -1.0);
            system.add({std::move(terms), Relation::LessEqual, -c, false});

            // x <= upper_expr
            terms = lower_terms(state, n.upper_expr, image_tag, c);
            for (auto& term : terms)
                term.second = -term.second;
            terms.emplace_back(x, 1.0);
            system.add({std::move(terms), Relation::LessEqual, c, false});
        }
    }

    const std::size_t out = state.layer_count() - 1;
    const auto outputs = state.output();
    BDV_REQUIRE(target >= 0 && static_cast<std::size_t>(target) < outputs.size(),
                "encode_state: target out of range");
    const auto target_var = VariableId::neuron_of(image_tag, out, static_cast<std::size_t>(target));
    for (std::size_t j = 0; j < outputs.size(); ++j) {
        if (static_cast<int>(j) == target)
            continue;
        // x_target > x_j
        system.add({{{VariableId::neuron_of(image_tag, out, j), 1.0}, {target_var, -1.0}},
                    Relation::LessEqual,
                    0.0,
                    true});
    }
}

AttackCondition attack_condition(const Network& net, const Image& image, const TriggerSpec& spec,
                                 int target, int image_tag)
{
    BDV_REQUIRE(image.shape == net.input_shape(), "attack_condition: image shape mismatch");
    BDV_REQUIRE(target >= 0 && target < net.label_count(), "attack_condition: target out of range");
    const auto free = trigger_pixel_indices(net.input_shape(), spec);

    AttackCondition cond;
    cond.state = analyze(net, init_input_state(net, region_with_free_pixels(net, image, free)));
    cond.quick = quick_unsat(cond.state.output(), target);
    cond.system = build_phi_pre(net, spec);
    encode_state(cond.state, image_tag, target, cond.system);
    return cond;
}

}  // namespace bdverify
