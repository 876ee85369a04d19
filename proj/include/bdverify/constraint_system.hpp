#pragma once

#include <compare>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bdverify {

// Identifies a real variable. Trigger pixels live in the global scope and are
// shared by every image; neuron variables are scoped to one image tag.
struct VariableId {
    static constexpr int kGlobal = -1;

    int scope = kGlobal;
    std::size_t layer = 0;
    std::size_t neuron = 0;

    static VariableId trigger_pixel(std::size_t pixel) { return {kGlobal, 0, pixel}; }
    static VariableId neuron_of(int image_tag, std::size_t layer, std::size_t neuron)
    {
        return {image_tag, layer, neuron};
    }

    bool is_global() const { return scope == kGlobal; }
    std::string name() const;

    auto operator<=>(const VariableId&) const = default;
};

struct VarBounds {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
};

enum class Relation { LessEqual, GreaterEqual, Equal };

// sum(terms) <relation> rhs. `strict` marks < / > ; the feasibility check
// decides the non-strict closure.
struct LinearConstraint {
    std::vector<std::pair<VariableId, double>> terms;
    Relation relation = Relation::LessEqual;
    double rhs = 0.0;
    bool strict = false;
};

class ConstraintSystem {
public:
    // Declares `id` or intersects its existing box with [lo, hi].
    void declare(const VariableId& id, double lo = -std::numeric_limits<double>::infinity(),
                 double hi = std::numeric_limits<double>::infinity());
    bool declared(const VariableId& id) const { return index_.contains(id); }
    void add(LinearConstraint constraint) { constraints_.push_back(std::move(constraint)); }

    std::span<const VariableId> variables() const { return variables_; }
    const VarBounds& bounds(const VariableId& id) const;
    std::span<const LinearConstraint> constraints() const { return constraints_; }

    // Number of finite box bounds over all variables.
    std::size_t bound_constraint_count() const;

    // Throws MalformedSystemError if a constraint mentions an undeclared
    // variable or a coefficient/bound is NaN.
    void validate() const;

    // CPLEX LP text with a zero objective, for external cross-checking.
    std::string to_lp() const;

private:
    std::vector<VariableId> variables_;
    std::vector<VarBounds> bounds_;
    std::map<VariableId, std::size_t> index_;
    std::vector<LinearConstraint> constraints_;
};

// Union of variables and constraints; shared variables are merged and their
// boxes intersected.
ConstraintSystem conjoin(std::span<const ConstraintSystem> systems);
void conjoin_into(ConstraintSystem& into, const ConstraintSystem& other);

}  // namespace bdverify
