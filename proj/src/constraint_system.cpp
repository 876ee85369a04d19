#include "bdverify/constraint_system.hpp"

#include "bdverify/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bdverify {

std::string VariableId::name() const
{
    if (is_global())
        return "g" + std::to_string(neuron);
    return "i" + std::to_string(scope) + "_l" + std::to_string(layer) + "_n" +
           std::to_string(neuron);
}

void ConstraintSystem::declare(const VariableId& id, double lo, double hi)
{
    if (auto it = index_.find(id); it != index_.end()) {
        auto& b = bounds_[it->second];
        b.lo = std::max(b.lo, lo);
        b.hi = std::min(b.hi, hi);
        return;
    }
    index_.emplace(id, variables_.size());
    variables_.push_back(id);
    bounds_.push_back({lo, hi});
}

const VarBounds& ConstraintSystem::bounds(const VariableId& id) const
{
    auto it = index_.find(id);
    if (it == index_.end())
        throw MalformedSystemError("undeclared variable " + id.name());
    return bounds_[it->second];
}

std::size_t ConstraintSystem::bound_constraint_count() const
{
    std::size_t count = 0;
    for (const auto& b : bounds_)
        count += static_cast<std::size_t>(std::isfinite(b.lo)) +
                 static_cast<std::size_t>(std::isfinite(b.hi));
    return count;
}

void ConstraintSystem::validate() const
{
    for (const auto& b : bounds_)
        if (std::isnan(b.lo) || std::isnan(b.hi))
            throw MalformedSystemError("NaN variable bound");
    for (std::size_t r = 0; r < constraints_.size(); ++r) {
        const auto& c = constraints_[r];
        if (!std::isfinite(c.rhs))
            throw MalformedSystemError("constraint " + std::to_string(r) + " has non-finite rhs");
        for (const auto& [id, coeff] : c.terms) {
            if (!index_.contains(id))
                throw MalformedSystemError("constraint " + std::to_string(r) +
                                           " references undeclared variable " + id.name());
            if (!std::isfinite(coeff))
                throw MalformedSystemError("constraint " + std::to_string(r) +
                                           " has non-finite coefficient");
        }
    }
}

std::string ConstraintSystem::to_lp() const
{
    std::ostringstream os;
    os.precision(17);
    os << "\\ feasibility problem\nMinimize\n obj: 0\nSubject To\n";
    for (std::size_t r = 0; r < constraints_.size(); ++r) {
        const auto& c = constraints_[r];
        os << " c" << r << ":";
        if (c.terms.empty())
            os << " 0 " << variables_.front().name();
        for (const auto& [id, coeff] : c.terms)
            os << (coeff < 0 ? " - " : " + ") << std::abs(coeff) << ' ' << id.name();
        switch (c.relation) {
        case Relation::LessEqual:
            os << " <= ";
            break;
        case Relation::GreaterEqual:
            os << " >= ";
            break;
        case Relation::Equal:
            os << " = ";
            break;
        }
        os << c.rhs << (c.strict ? " \\ strict" : "") << '\n';
    }
    os << "Bounds\n";
    for (std::size_t v = 0; v < variables_.size(); ++v) {
        const auto& b = bounds_[v];
        const auto& n = variables_[v].name();
        if (std::isfinite(b.lo) && std::isfinite(b.hi))
            os << ' ' << b.lo << " <= " << n << " <= " << b.hi << '\n';
        else if (std::isfinite(b.lo))
            os << ' ' << n << " >= " << b.lo << '\n';
        else if (std::isfinite(b.hi))
            os << " -inf <= " << n << " <= " << b.hi << '\n';
        else
            os << ' ' << n << " free\n";
    }
    os << "End\n";
    return os.str();
}

void conjoin_into(ConstraintSystem& into, const ConstraintSystem& other)
{
    for (const auto& id : other.variables()) {
        const auto& b = other.bounds(id);
        into.declare(id, b.lo, b.hi);
    }
    for (const auto& c : other.constraints())
        into.add(c);
}

ConstraintSystem conjoin(std::span<const ConstraintSystem> systems)
{
    ConstraintSystem out;
    for (const auto& s : systems)
        conjoin_into(out, s);
    return out;
}

}  // namespace bdverify
