#include "bdverify/feasibility.hpp"

#include "bdverify/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <tuple>

namespace bdverify {

std::string to_string(FeasibilityStatus status)
{
    switch (status) {
    case FeasibilityStatus::Sat:
        return "SAT";
    case FeasibilityStatus::Unsat:
        return "UNSAT";
    case FeasibilityStatus::Unknown:
        return "UNKNOWN";
    }
    return "?";
}

std::string to_string(UnknownReason reason)
{
    switch (reason) {
    case UnknownReason::None:
        return "none";
    case UnknownReason::Timeout:
        return "timeout";
    case UnknownReason::Numerical:
        return "numerical";
    }
    return "?";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotTolerance = 1e-9;
// Certificate coefficients below this are treated as exact zeros when the
// matching variable is unbounded.
constexpr double kCertificateDrop = 1e-11;
// Pivots between rebuilds of the tableau from the original rows.
constexpr std::size_t kRefactorInterval = 32;
// Greedy pivoting is used for this many pivots per row, then Bland's rule.
constexpr std::size_t kGreedyPivotsPerRow = 4;

struct Row {
    std::vector<std::pair<std::size_t, double>> terms;  // column, coefficient
    double lo = -kInf;
    double hi = kInf;
};

double feasibility_slack(double bound)
{
    return 1e-9 * std::max(1.0, std::abs(bound));
}

// Row bounds implied by `relation rhs`.
std::pair<double, double> relation_bounds(Relation relation, double rhs)
{
    switch (relation) {
    case Relation::LessEqual:
        return {-kInf, rhs};
    case Relation::GreaterEqual:
        return {rhs, kInf};
    case Relation::Equal:
        return {rhs, rhs};
    }
    return {-kInf, kInf};
}

// Minimum and maximum of sum(h[v] * v) over the box.
std::pair<double, double> range_over_box(const std::vector<double>& h, const std::vector<double>& lo,
                                         const std::vector<double>& hi)
{
    double min_sum = 0.0;
    double max_sum = 0.0;
    for (std::size_t v = 0; v < h.size(); ++v) {
        const double c = h[v];
        if (c == 0.0)
            continue;
        const double at_lo = c * lo[v];
        const double at_hi = c * hi[v];
        const bool unbounded = !std::isfinite(lo[v]) || !std::isfinite(hi[v]);
        if (unbounded && std::abs(c) <= kCertificateDrop)
            continue;
        min_sum += std::min(at_lo, at_hi);
        max_sum += std::max(at_lo, at_hi);
    }
    return {min_sum, max_sum};
}

class BoundedSimplex {
public:
    BoundedSimplex(std::size_t structural, std::vector<Row> rows, std::vector<double> lo,
                   std::vector<double> hi)
        : n_(structural), rows_(std::move(rows)), lo_(std::move(lo)), hi_(std::move(hi))
    {
        const std::size_t m = rows_.size();
        lo_.resize(n_ + m);
        hi_.resize(n_ + m);
        tableau_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n_));
        for (std::size_t r = 0; r < m; ++r) {
            for (const auto& [col, a] : rows_[r].terms)
                tableau_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) += a;
            lo_[n_ + r] = rows_[r].lo;
            hi_[n_ + r] = rows_[r].hi;
            basic_.push_back(n_ + r);
        }
        value_.assign(n_ + m, 0.0);
        for (std::size_t j = 0; j < n_; ++j) {
            nonbasic_.push_back(j);
            value_[j] = std::clamp(0.0, lo_[j], hi_[j]);
        }
        recompute_basic();
    }

    enum class Outcome { Feasible, Conflict, Timeout, Numerical };

    template <typename Expired>
    Outcome run(Expired&& expired)
    {
        while (true) {
            if (expired())
                return Outcome::Timeout;
            if (!finite_)
                return Outcome::Numerical;
            const bool bland = pivots_ >= kGreedyPivotsPerRow * std::max<std::size_t>(rows_.size(), 1);
            const auto violated = select_violated_row(bland);
            if (!violated)
                return Outcome::Feasible;
            const std::size_t r = *violated;
            const std::size_t b = basic_[r];
            const bool increase = value_[b] < lo_[b];
            const auto entering = select_entering_column(r, increase, bland);
            if (!entering) {
                // Judge the conflict on a freshly factored tableau only.
                if (!fresh_) {
                    refactor();
                    continue;
                }
                conflict_row_ = r;
                return Outcome::Conflict;
            }
            pivot_and_update(r, *entering, increase ? lo_[b] : hi_[b]);
            ++pivots_;
            fresh_ = false;
            if (pivots_ % kRefactorInterval == 0)
                refactor();
        }
    }

    std::size_t pivots() const { return pivots_; }
    double value(std::size_t var) const { return value_[var]; }

    // Gap of the conflict row's witness recomputed from the original rows;
    // non-positive means the witness does not certify infeasibility.
    double certified_gap() const
    {
        const auto r = static_cast<Eigen::Index>(conflict_row_);
        const std::size_t m = rows_.size();
        // Tableau row: x_b - sum T(r,k) x_{N_k} = 0, i.e. coefficient g[v].
        std::vector<double> g(n_ + m, 0.0);
        g[basic_[conflict_row_]] = 1.0;
        for (std::size_t k = 0; k < nonbasic_.size(); ++k)
            g[nonbasic_[k]] -= tableau_(r, static_cast<Eigen::Index>(k));
        // Original row q reads sum a_q x - w_q = 0, so its multiplier is -g[w_q].
        std::vector<double> h(n_ + m, 0.0);
        for (std::size_t q = 0; q < m; ++q) {
            const double y = -g[n_ + q];
            if (y == 0.0)
                continue;
            h[n_ + q] = -y;
            for (const auto& [col, a] : rows_[q].terms)
                h[col] += y * a;
        }
        const auto [min_sum, max_sum] = range_over_box(h, lo_, hi_);
        if (max_sum < 0.0)
            return -max_sum;
        if (min_sum > 0.0)
            return min_sum;
        return 0.0;
    }

private:
    // Column `var` of [A | -I].
    void fill_column(std::size_t var, Eigen::MatrixXd& target, Eigen::Index at) const
    {
        target.col(at).setZero();
        if (var >= n_) {
            target(static_cast<Eigen::Index>(var - n_), at) = -1.0;
            return;
        }
        for (std::size_t q = 0; q < rows_.size(); ++q)
            for (const auto& [col, a] : rows_[q].terms)
                if (col == var)
                    target(static_cast<Eigen::Index>(q), at) += a;
    }

    // Rebuilds x_B = T x_N as T = -B^{-1} N from the original rows.
    void refactor()
    {
        const auto m = static_cast<Eigen::Index>(rows_.size());
        Eigen::MatrixXd basis(m, m);
        Eigen::MatrixXd nonbasis(m, static_cast<Eigen::Index>(n_));
        for (Eigen::Index k = 0; k < m; ++k)
            fill_column(basic_[static_cast<std::size_t>(k)], basis, k);
        for (std::size_t k = 0; k < n_; ++k)
            fill_column(nonbasic_[k], nonbasis, static_cast<Eigen::Index>(k));
        tableau_ = -basis.partialPivLu().solve(nonbasis);
        recompute_basic();
        fresh_ = true;
    }

    void recompute_basic()
    {
        Eigen::VectorXd nb(static_cast<Eigen::Index>(nonbasic_.size()));
        for (std::size_t k = 0; k < nonbasic_.size(); ++k)
            nb(static_cast<Eigen::Index>(k)) = value_[nonbasic_[k]];
        const Eigen::VectorXd b = tableau_ * nb;
        for (std::size_t r = 0; r < basic_.size(); ++r)
            value_[basic_[r]] = b(static_cast<Eigen::Index>(r));
        finite_ = b.allFinite() && tableau_.allFinite();
    }

    // Bland: smallest violated basic variable. Greedy: largest violation.
    std::optional<std::size_t> select_violated_row(bool bland) const
    {
        std::optional<std::size_t> best;
        double best_violation = 0.0;
        for (std::size_t r = 0; r < basic_.size(); ++r) {
            const std::size_t v = basic_[r];
            double violation = 0.0;
            if (value_[v] < lo_[v] - feasibility_slack(lo_[v]))
                violation = lo_[v] - value_[v];
            else if (value_[v] > hi_[v] + feasibility_slack(hi_[v]))
                violation = value_[v] - hi_[v];
            else
                continue;
            if (!best || (bland ? v < basic_[*best] : violation > best_violation)) {
                best = r;
                best_violation = violation;
            }
        }
        return best;
    }

    // Bland: smallest usable variable. Greedy: largest usable coefficient.
    std::optional<std::size_t> select_entering_column(std::size_t r, bool increase, bool bland) const
    {
        std::optional<std::size_t> best;
        double best_size = 0.0;
        const auto row = static_cast<Eigen::Index>(r);
        for (std::size_t k = 0; k < nonbasic_.size(); ++k) {
            const double a = tableau_(row, static_cast<Eigen::Index>(k));
            const std::size_t v = nonbasic_[k];
            bool usable = false;
            if (a > kPivotTolerance)
                usable = increase ? value_[v] < hi_[v] : value_[v] > lo_[v];
            else if (a < -kPivotTolerance)
                usable = increase ? value_[v] > lo_[v] : value_[v] < hi_[v];
            if (!usable)
                continue;
            if (!best || (bland ? v < nonbasic_[*best] : std::abs(a) > best_size)) {
                best = k;
                best_size = std::abs(a);
            }
        }
        return best;
    }

    // Moves basic row r to `target` by adjusting nonbasic column k, then swaps
    // the two variables.
    void pivot_and_update(std::size_t r, std::size_t k, double target)
    {
        const auto ri = static_cast<Eigen::Index>(r);
        const auto ki = static_cast<Eigen::Index>(k);
        const double a = tableau_(ri, ki);
        const std::size_t leaving = basic_[r];
        const std::size_t entering = nonbasic_[k];

        const double theta = (target - value_[leaving]) / a;
        value_[entering] += theta;

        Eigen::VectorXd new_row = -tableau_.row(ri).transpose() / a;
        new_row(ki) = 1.0 / a;
        Eigen::VectorXd column = tableau_.col(ki);
        column(ri) = 0.0;
        tableau_.noalias() += column * new_row.transpose();
        tableau_.col(ki) = column * new_row(ki);
        tableau_.row(ri) = new_row.transpose();

        basic_[r] = entering;
        nonbasic_[k] = leaving;
        value_[leaving] = target;
        recompute_basic();
    }

    std::size_t n_;
    std::vector<Row> rows_;
    std::vector<double> lo_;
    std::vector<double> hi_;
    Eigen::MatrixXd tableau_;
    std::vector<std::size_t> basic_;
    std::vector<std::size_t> nonbasic_;
    std::vector<double> value_;
    std::size_t conflict_row_ = 0;
    std::size_t pivots_ = 0;
    bool fresh_ = true;
    bool finite_ = true;
};

bool model_satisfies(const ConstraintSystem& system, const std::map<VariableId, double>& model,
                     double tolerance)
{
    for (const auto& id : system.variables()) {
        const auto& b = system.bounds(id);
        const double v = model.at(id);
        if (!std::isfinite(v))
            return false;
        if (v < b.lo - tolerance || v > b.hi + tolerance)
            return false;
    }
    for (const auto& c : system.constraints()) {
        double lhs = 0.0;
        for (const auto& [id, coeff] : c.terms)
            lhs += coeff * model.at(id);
        const auto [lo, hi] = relation_bounds(c.relation, c.rhs);
        if (!std::isfinite(lhs) || lhs < lo - tolerance || lhs > hi + tolerance)
            return false;
    }
    return true;
}

}  // namespace

FeasibilityResult check_feasible(const ConstraintSystem& system, const FeasibilityOptions& options)
{
    system.validate();
    const auto start = std::chrono::steady_clock::now();
    const auto deadline =
        start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(options.time_budget);

    const auto variables = system.variables();
    const std::size_t n = variables.size();
    std::map<VariableId, std::size_t> column;
    std::vector<double> lo(n);
    std::vector<double> hi(n);
    for (std::size_t j = 0; j < n; ++j) {
        column.emplace(variables[j], j);
        lo[j] = system.bounds(variables[j]).lo;
        hi[j] = system.bounds(variables[j]).hi;
    }

    FeasibilityResult result;
    double worst_gap = 0.0;  // largest violation certified before the simplex runs

    std::vector<Row> rows;
    for (const auto& c : system.constraints()) {
        std::map<std::size_t, double> merged;
        for (const auto& [id, coeff] : c.terms)
            merged[column.at(id)] += coeff;
        Row row;
        for (const auto& [col, a] : merged)
            if (a != 0.0)
                row.terms.emplace_back(col, a);
        std::tie(row.lo, row.hi) = relation_bounds(c.relation, c.rhs);

        if (row.terms.empty()) {
            worst_gap = std::max({worst_gap, row.lo, -row.hi});
        } else if (row.terms.size() == 1) {
            const auto [col, a] = row.terms.front();
            const double l = a > 0 ? row.lo / a : row.hi / a;
            const double u = a > 0 ? row.hi / a : row.lo / a;
            lo[col] = std::max(lo[col], l);
            hi[col] = std::min(hi[col], u);
        } else {
            rows.push_back(std::move(row));
        }
    }
    for (std::size_t j = 0; j < n; ++j)
        worst_gap = std::max(worst_gap, lo[j] - hi[j]);

    if (worst_gap > options.unsat_threshold) {
        result.status = FeasibilityStatus::Unsat;
        result.infeasibility = worst_gap;
        return result;
    }
    const bool borderline = worst_gap > 0.0;
    if (borderline) {
        // Let the box be non-empty for the simplex; the verdict is Unknown anyway.
        for (std::size_t j = 0; j < n; ++j)
            if (lo[j] > hi[j])
                lo[j] = hi[j];
    }

    BoundedSimplex simplex(n, std::move(rows), lo, hi);
    const auto outcome = simplex.run([&] {
        return options.stop.stop_requested() || std::chrono::steady_clock::now() > deadline;
    });
    result.pivots = simplex.pivots();

    switch (outcome) {
    case BoundedSimplex::Outcome::Timeout:
        result.status = FeasibilityStatus::Unknown;
        result.reason = UnknownReason::Timeout;
        return result;
    case BoundedSimplex::Outcome::Numerical:
        result.status = FeasibilityStatus::Unknown;
        result.reason = UnknownReason::Numerical;
        return result;
    case BoundedSimplex::Outcome::Conflict: {
        const double gap = simplex.certified_gap();
        result.infeasibility = gap;
        if (gap > options.unsat_threshold) {
            result.status = FeasibilityStatus::Unsat;
        } else {
            result.status = FeasibilityStatus::Unknown;
            result.reason = UnknownReason::Numerical;
        }
        return result;
    }
    case BoundedSimplex::Outcome::Feasible:
        break;
    }

    for (std::size_t j = 0; j < n; ++j)
        result.model[variables[j]] = std::clamp(simplex.value(j), std::min(lo[j], hi[j]), hi[j]);
    if (borderline || !model_satisfies(system, result.model, options.model_tolerance)) {
        result.status = FeasibilityStatus::Unknown;
        result.reason = UnknownReason::Numerical;
        result.infeasibility = worst_gap;
        result.model.clear();
        return result;
    }
    result.status = FeasibilityStatus::Sat;
    return result;
}

}  // namespace bdverify
