#pragma once

#include "bdverify/network.hpp"

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace bdverify {

struct Term {
    std::size_t neuron = 0;
    double coeff = 0.0;
    bool operator==(const Term&) const = default;
};

// constant + sum(coeff * x[layer][neuron]). All terms refer to one layer,
// are sorted by neuron and carry non-zero coefficients.
struct LinearExpr {
    std::size_t layer = 0;
    double constant = 0.0;
    std::vector<Term> terms;

    static LinearExpr constant_expr(std::size_t layer, double value);
    static LinearExpr variable(std::size_t layer, std::size_t neuron);

    bool is_constant() const { return terms.empty(); }
    double evaluate(std::span<const double> layer_values) const;
};

// DeepPoly element: lower_expr <= x <= upper_expr and lower <= x <= upper,
// where both expressions range over the previous layer.
struct AbstractNeuron {
    LinearExpr lower_expr;
    LinearExpr upper_expr;
    double lower = 0.0;
    double upper = 0.0;
};

class AbstractState {
public:
    std::size_t layer_count() const { return layers_.size(); }
    std::span<const AbstractNeuron> layer(std::size_t i) const { return layers_.at(i); }
    std::span<const AbstractNeuron> output() const { return layers_.back(); }

    void push_layer(std::vector<AbstractNeuron> neurons) { layers_.push_back(std::move(neurons)); }

private:
    std::vector<std::vector<AbstractNeuron>> layers_;
};

// Partition of the input features into fixed values and free intervals.
struct InputRegion {
    std::map<std::size_t, double> fixed;
    std::map<std::size_t, Interval> free;
};

// Fixes every pixel of `image` except `free_indices`, which range over the
// network's input domain.
InputRegion region_with_free_pixels(const Network& net, const Image& image,
                                    std::span<const std::size_t> free_indices);

AbstractState init_input_state(const Network& net, const InputRegion& region);

void transform_affine(AbstractState& state, const AffineLayer& layer);
void transform_relu(AbstractState& state);
// Sigmoid or Tanh.
void transform_smooth(AbstractState& state, Activation kind);
void transform_sigmoid(AbstractState& state);
void transform_tanh(AbstractState& state);

enum class BoundDirection { Lower, Upper };

// Concrete bound of `expr` obtained by substituting every variable by its
// symbolic bound down to the input layer, then closing over the input
// intervals.
double back_substitute(const AbstractState& state, const LinearExpr& expr,
                       BoundDirection direction);

AbstractState analyze(const Network& net, AbstractState input_state);

// Per-layer concrete bounds as a JSON document (debug aid).
std::string dump_bounds(const AbstractState& state);

}  // namespace bdverify
