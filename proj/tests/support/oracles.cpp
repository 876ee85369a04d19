#include "support/oracles.hpp"

#include "bdverify/error.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <set>

namespace bdverify::support {

namespace {

using Rational = boost::multiprecision::cpp_rational;

// a . x <= b. `origin` holds the input rows this one was combined from.
struct Row {
    std::vector<Rational> a;
    Rational b;
    std::uint64_t origin = 0;
    bool operator<(const Row& o) const { return std::tie(a, b) < std::tie(o.a, o.b); }
};

Rational exact(double v)
{
    return Rational(v);
}

// Scales a row so its largest absolute entry is 1; returns false for 0 <= b rows.
bool normalize(Row& row)
{
    Rational largest = 0;
    for (const auto& c : row.a)
        largest = std::max(largest, Rational(abs(c)));
    if (largest == 0)
        return false;
    for (auto& c : row.a)
        c /= largest;
    row.b /= largest;
    return true;
}

}  // namespace

bool fm_feasible(const ConstraintSystem& system)
{
    const auto vars = system.variables();
    const std::size_t n = vars.size();
    std::map<VariableId, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i)
        index[vars[i]] = i;

    // Chernikov's rule: after k eliminations a row built from more than k+1
    // input rows is implied by the others and can be dropped.
    std::set<Row> rows;
    std::size_t eliminated_count = 0;
    std::size_t inputs = 0;
    auto push = [&](Row row) -> bool {
        if (!normalize(row))
            return row.b >= 0;
        if (row.origin == 0) {
            if (inputs >= 64)
                throw Error("fm_feasible: too many input rows");
            row.origin = std::uint64_t{1} << inputs++;
        }
        if (static_cast<std::size_t>(std::popcount(row.origin)) > eliminated_count + 1)
            return true;
        auto it = rows.find(row);
        if (it == rows.end())
            rows.insert(std::move(row));
        else if (std::popcount(row.origin) < std::popcount(it->origin)) {
            rows.erase(it);
            rows.insert(std::move(row));
        }
        return true;
    };

    for (std::size_t i = 0; i < n; ++i) {
        const auto& box = system.bounds(vars[i]);
        if (box.lo > box.hi)
            return false;
        Row row{std::vector<Rational>(n, Rational(0)), 0};
        if (std::isfinite(box.hi)) {
            row.a[i] = 1;
            row.b = exact(box.hi);
            push(row);
        }
        if (std::isfinite(box.lo)) {
            row.a.assign(n, Rational(0));
            row.a[i] = -1;
            row.b = -exact(box.lo);
            push(row);
        }
    }
    for (const auto& c : system.constraints()) {
        Row row{std::vector<Rational>(n, Rational(0)), exact(c.rhs)};
        for (const auto& [id, coeff] : c.terms)
            row.a[index.at(id)] += exact(coeff);
        Row negated = row;
        for (auto& v : negated.a)
            v = -v;
        negated.b = -negated.b;
        if (c.relation != Relation::GreaterEqual && !push(row))
            return false;
        if (c.relation != Relation::LessEqual && !push(negated))
            return false;
    }

    std::vector<bool> eliminated(n, false);
    for (std::size_t step = 0; step < n; ++step) {
        // Cheapest variable first.
        std::size_t best = n;
        std::size_t best_cost = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (eliminated[k])
                continue;
            std::size_t pos = 0;
            std::size_t neg = 0;
            for (const auto& r : rows) {
                pos += r.a[k] > 0;
                neg += r.a[k] < 0;
            }
            const std::size_t cost = pos * neg;
            if (best == n || cost < best_cost) {
                best = k;
                best_cost = cost;
            }
        }
        eliminated[best] = true;
        ++eliminated_count;
        std::vector<Row> pos;
        std::vector<Row> neg;
        std::set<Row> next;
        for (const auto& r : rows) {
            if (r.a[best] > 0)
                pos.push_back(r);
            else if (r.a[best] < 0)
                neg.push_back(r);
            else
                next.insert(r);
        }
        rows.swap(next);
        for (const auto& p : pos) {
            for (const auto& q : neg) {
                const Rational wp = -q.a[best];
                const Rational wq = p.a[best];
                Row combined{std::vector<Rational>(n), p.b * wp + q.b * wq, p.origin | q.origin};
                for (std::size_t k = 0; k < n; ++k)
                    combined.a[k] = p.a[k] * wp + q.a[k] * wq;
                combined.a[best] = 0;
                if (!push(std::move(combined)))
                    return false;
            }
        }
    }
    return true;
}

std::vector<double> direct_conv(const ConvLayerSpec& conv, std::span<const double> input)
{
    const ImageShape out = conv.output_shape();
    const ImageShape& in = conv.input;
    std::vector<double> result(out.size());
    for (int o = 0; o < out.channels; ++o)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                double acc = conv.bias[static_cast<std::size_t>(o)];
                for (int c = 0; c < in.channels; ++c)
                    for (int ky = 0; ky < conv.kernel_h; ++ky)
                        for (int kx = 0; kx < conv.kernel_w; ++kx) {
                            const int iy = y * conv.stride_h - conv.pad_h + ky;
                            const int ix = x * conv.stride_w - conv.pad_w + kx;
                            if (iy < 0 || iy >= in.height || ix < 0 || ix >= in.width)
                                continue;
                            const std::size_t w =
                                ((static_cast<std::size_t>(o) * in.channels + c) * conv.kernel_h + ky) *
                                    conv.kernel_w + kx;
                            acc += conv.weights[w] * input[index_flatten(in, c, iy, ix)];
                        }
                result[index_flatten(out, o, y, x)] = acc;
            }
    return result;
}

bool grid_finds_trigger(const Network& net, std::span<const Image> images, const TriggerShape& shape,
                        int target, double resolution)
{
    const auto steps = static_cast<std::size_t>(std::llround(1.0 / resolution));
    for (const auto& spec : all_positions(net.input_shape(), shape)) {
        const auto indices = trigger_pixel_indices(net.input_shape(), spec);
        const std::size_t dim = indices.size();
        std::vector<std::size_t> odometer(dim, 0);
        Trigger trigger{spec, std::vector<double>(dim)};
        while (true) {
            for (std::size_t k = 0; k < dim; ++k) {
                const double lo = net.input_domain().lo[indices[k]];
                const double hi = net.input_domain().hi[indices[k]];
                trigger.values[k] = lo + (hi - lo) * static_cast<double>(odometer[k]) / static_cast<double>(steps);
            }
            const bool all = std::all_of(images.begin(), images.end(), [&](const Image& image) {
                return strictly_dominates(forward(net, stamp(image, trigger)), target);
            });
            if (all)
                return true;
            std::size_t k = 0;
            while (k < dim && ++odometer[k] > steps)
                odometer[k++] = 0;
            if (k == dim)
                break;
        }
    }
    return false;
}

Network random_network(std::mt19937_64& rng, const RandomNetOptions& options)
{
    std::uniform_int_distribution<int> width(options.min_width, options.max_width);
    std::uniform_real_distribution<double> weight(-options.weight_scale, options.weight_scale);
    std::uniform_real_distribution<double> bias(-0.5 * options.weight_scale, 0.5 * options.weight_scale);
    std::bernoulli_distribution activation_next(0.65);
    std::uniform_int_distribution<std::size_t> kind(0, options.kinds.size() - 1);

    auto affine = [&](std::size_t in, std::size_t out) {
        AffineLayer layer{Eigen::MatrixXd(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
                          Eigen::VectorXd(static_cast<Eigen::Index>(out))};
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                layer.weights(r, c) = weight(rng);
            layer.bias(r) = bias(rng);
        }
        return layer;
    };

    std::vector<Layer> layers;
    std::size_t current = options.input.size();
    bool last_affine = false;
    for (int i = 0; i < options.hidden_layers; ++i) {
        const bool remaining_one = i == options.hidden_layers - 1;
        if (last_affine && (activation_next(rng) || remaining_one)) {
            layers.emplace_back(ActivationLayer{options.kinds[kind(rng)]});
            last_affine = false;
        } else {
            const auto out = static_cast<std::size_t>(width(rng));
            layers.emplace_back(affine(current, out));
            current = out;
            last_affine = true;
        }
    }
    layers.emplace_back(affine(current, static_cast<std::size_t>(options.labels)));
    return Network(options.input, InputDomain::uniform(options.input.size(), 0.0, 1.0), std::move(layers));
}

Image random_image(std::mt19937_64& rng, const ImageShape& shape, double lo, double hi)
{
    std::uniform_real_distribution<double> pixel(lo, hi);
    Image image{shape, std::vector<double>(shape.size()), std::nullopt};
    for (auto& p : image.pixels)
        p = pixel(rng);
    return image;
}

}  // namespace bdverify::support
