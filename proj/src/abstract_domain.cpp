#include "bdverify/abstract_domain.hpp"

#include "bdverify/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace bdverify {

namespace {

// Intervals narrower than this are treated as points when computing slopes.
constexpr double kDegenerateWidth = 1e-12;

bool is_point(const AbstractNeuron& n)
{
    return n.lower == n.upper && n.lower_expr.is_constant() && n.upper_expr.is_constant() &&
           n.lower_expr.constant == n.upper_expr.constant;
}

// a*x[layer][neuron] + b
LinearExpr scaled_variable(std::size_t layer, std::size_t neuron, double a, double b)
{
    LinearExpr e;
    e.layer = layer;
    e.constant = b;
    if (a != 0.0)
        e.terms.push_back({neuron, a});
    return e;
}

AbstractNeuron constant_neuron(std::size_t layer, double value)
{
    return {LinearExpr::constant_expr(layer, value), LinearExpr::constant_expr(layer, value), value,
            value};
}

}  // namespace

LinearExpr LinearExpr::constant_expr(std::size_t layer, double value)
{
    LinearExpr e;
    e.layer = layer;
    e.constant = value;
    return e;
}

LinearExpr LinearExpr::variable(std::size_t layer, std::size_t neuron)
{
    return scaled_variable(layer, neuron, 1.0, 0.0);
}

double LinearExpr::evaluate(std::span<const double> layer_values) const
{
    double v = constant;
    for (const auto& t : terms)
        v += t.coeff * layer_values[t.neuron];
    return v;
}

InputRegion region_with_free_pixels(const Network& net, const Image& image,
                                    std::span<const std::size_t> free_indices)
{
    BDV_REQUIRE(image.shape == net.input_shape(), "input region: image shape mismatch");
    InputRegion region;
    for (auto j : free_indices) {
        BDV_REQUIRE(j < image.pixels.size(), "input region: free index out of range");
        region.free[j] = net.input_domain().at(j);
    }
    for (std::size_t j = 0; j < image.pixels.size(); ++j)
        if (!region.free.contains(j))
            region.fixed[j] = image.pixels[j];
    return region;
}

AbstractState init_input_state(const Network& net, const InputRegion& region)
{
    const std::size_t m = net.input_shape().size();
    std::vector<AbstractNeuron> input(m);
    std::vector<bool> seen(m, false);
    for (const auto& [j, value] : region.fixed) {
        BDV_REQUIRE(j < m, "init_input_state: fixed index out of range");
        input[j] = constant_neuron(0, value);
        seen[j] = true;
    }
    for (const auto& [j, iv] : region.free) {
        BDV_REQUIRE(j < m, "init_input_state: free index out of range");
        BDV_REQUIRE(!seen[j], "init_input_state: pixel both fixed and free");
        BDV_REQUIRE(iv.lo <= iv.hi, "init_input_state: empty free interval");
        input[j] = {LinearExpr::variable(0, j), LinearExpr::variable(0, j), iv.lo, iv.hi};
        seen[j] = true;
    }
    BDV_REQUIRE(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }),
                "init_input_state: fixed and free pixels do not cover the input");
    AbstractState state;
    state.push_layer(std::move(input));
    return state;
}

void transform_affine(AbstractState& state, const AffineLayer& layer)
{
    BDV_REQUIRE(state.layer_count() > 0, "transform_affine: empty state");
    const std::size_t prev = state.layer_count() - 1;
    const auto previous = state.layer(prev);
    BDV_REQUIRE(previous.size() == layer.input_size(), "transform_affine: dimension mismatch");

    // Neurons pinned to a single value are folded into the constant term;
    // this is the substitution x = v and leaves every bound unchanged.
    std::vector<bool> pinned(previous.size());
    for (std::size_t k = 0; k < previous.size(); ++k)
        pinned[k] = is_point(previous[k]);

    std::vector<AbstractNeuron> out(layer.output_size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        LinearExpr e;
        e.layer = prev;
        e.constant = layer.bias(static_cast<Eigen::Index>(j));
        for (std::size_t k = 0; k < previous.size(); ++k) {
            const double w = layer.weights(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
            if (w == 0.0)
                continue;
            if (pinned[k])
                e.constant += w * previous[k].lower;
            else
                e.terms.push_back({k, w});
        }
        out[j].lower_expr = e;
        out[j].upper_expr = std::move(e);
    }
    // Bounds need the new layer's expressions but not the new layer itself.
    for (auto& n : out) {
        n.lower = back_substitute(state, n.lower_expr, BoundDirection::Lower);
        n.upper = back_substitute(state, n.upper_expr, BoundDirection::Upper);
        // Only reachable through round-off on point inputs.
        if (n.lower > n.upper)
            std::swap(n.lower, n.upper);
    }
    state.push_layer(std::move(out));
}

void transform_relu(AbstractState& state)
{
    BDV_REQUIRE(state.layer_count() > 0, "transform_relu: empty state");
    const std::size_t prev = state.layer_count() - 1;
    const auto previous = state.layer(prev);
    std::vector<AbstractNeuron> out(previous.size());
    for (std::size_t j = 0; j < previous.size(); ++j) {
        const double lw = previous[j].lower;
        const double up = previous[j].upper;
        AbstractNeuron& n = out[j];
        if (up <= 0.0) {
            n = constant_neuron(prev, 0.0);
        } else if (lw >= 0.0) {
            n.lower_expr = LinearExpr::variable(prev, j);
            n.upper_expr = n.lower_expr;
            n.lower = lw;
            n.upper = up;
        } else if (up - lw < kDegenerateWidth) {
            n.lower_expr = LinearExpr::constant_expr(prev, 0.0);
            n.upper_expr = LinearExpr::constant_expr(prev, up);
            n.lower = 0.0;
            n.upper = up;
        } else {
            const double slope = up / (up - lw);
            n.upper_expr = scaled_variable(prev, j, slope, -slope * lw);
            if (up <= -lw) {
                n.lower_expr = LinearExpr::constant_expr(prev, 0.0);
                n.lower = 0.0;
            } else {
                n.lower_expr = LinearExpr::variable(prev, j);
                n.lower = lw;
            }
            n.upper = up;
        }
    }
    state.push_layer(std::move(out));
}

void transform_smooth(AbstractState& state, Activation kind)
{
    BDV_REQUIRE(kind != Activation::ReLU, "transform_smooth: use transform_relu for ReLU");
    BDV_REQUIRE(state.layer_count() > 0, "transform_smooth: empty state");
    const std::size_t prev = state.layer_count() - 1;
    const auto previous = state.layer(prev);
    std::vector<AbstractNeuron> out(previous.size());
    for (std::size_t j = 0; j < previous.size(); ++j) {
        const double lw = previous[j].lower;
        const double up = previous[j].upper;
        const double f_lw = activate(kind, lw);
        const double f_up = activate(kind, up);
        AbstractNeuron& n = out[j];
        n.lower = f_lw;
        n.upper = f_up;
        if (up - lw < kDegenerateWidth) {
            n.lower_expr = LinearExpr::constant_expr(prev, f_lw);
            n.upper_expr = LinearExpr::constant_expr(prev, f_up);
            continue;
        }
        const double chord = (f_up - f_lw) / (up - lw);
        const double tangent =
            std::min(activate_derivative(kind, lw), activate_derivative(kind, up));
        const double lower_slope = lw > 0.0 ? chord : tangent;
        const double upper_slope = up <= 0.0 ? chord : tangent;
        n.lower_expr = scaled_variable(prev, j, lower_slope, f_lw - lower_slope * lw);
        n.upper_expr = scaled_variable(prev, j, upper_slope, f_up - upper_slope * up);
    }
    state.push_layer(std::move(out));
}

void transform_sigmoid(AbstractState& state)
{
    transform_smooth(state, Activation::Sigmoid);
}

void transform_tanh(AbstractState& state)
{
    transform_smooth(state, Activation::Tanh);
}

double back_substitute(const AbstractState& state, const LinearExpr& expr,
                       BoundDirection direction)
{
    BDV_REQUIRE(expr.layer < state.layer_count(), "back_substitute: layer out of range");
    const bool lower = direction == BoundDirection::Lower;

    LinearExpr current = expr;
    std::vector<double> dense;
    while (current.layer > 0 && !current.terms.empty()) {
        const auto neurons = state.layer(current.layer);
        const std::size_t below = current.layer - 1;
        dense.assign(state.layer(below).size(), 0.0);
        double constant = current.constant;
        for (const auto& t : current.terms) {
            const AbstractNeuron& n = neurons[t.neuron];
            const LinearExpr& pick = (t.coeff > 0.0) == lower ? n.lower_expr : n.upper_expr;
            constant += t.coeff * pick.constant;
            for (const auto& s : pick.terms)
                dense[s.neuron] += t.coeff * s.coeff;
        }
        current.layer = below;
        current.constant = constant;
        current.terms.clear();
        for (std::size_t k = 0; k < dense.size(); ++k)
            if (dense[k] != 0.0)
                current.terms.push_back({k, dense[k]});
    }

    const auto base = state.layer(current.layer);
    double bound = current.constant;
    for (const auto& t : current.terms) {
        const AbstractNeuron& n = base[t.neuron];
        bound += t.coeff * ((t.coeff > 0.0) == lower ? n.lower : n.upper);
    }
    return bound;
}

AbstractState analyze(const Network& net, AbstractState input_state)
{
    BDV_REQUIRE(input_state.layer_count() == 1, "analyze: expected an input-only state");
    BDV_REQUIRE(input_state.layer(0).size() == net.input_shape().size(),
                "analyze: input state size mismatch");
    for (const auto& layer : net.layers()) {
        if (const auto* affine = std::get_if<AffineLayer>(&layer)) {
            transform_affine(input_state, *affine);
        } else {
            const auto kind = std::get<ActivationLayer>(layer).kind;
            if (kind == Activation::ReLU)
                transform_relu(input_state);
            else
                transform_smooth(input_state, kind);
        }
    }
    return input_state;
}

std::string dump_bounds(const AbstractState& state)
{
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < state.layer_count(); ++i) {
        nlohmann::json lo = nlohmann::json::array();
        nlohmann::json hi = nlohmann::json::array();
        for (const auto& n : state.layer(i)) {
            lo.push_back(n.lower);
            hi.push_back(n.upper);
        }
        layers.push_back({{"layer", i}, {"lower", lo}, {"upper", hi}});
    }
    return nlohmann::json{{"layers", layers}}.dump(1);
}

}  // namespace bdverify
