#include "bdverify/abstract_domain.hpp"
#include "bdverify/error.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <random>

using namespace bdverify;

namespace {

double sigmoid(double x)
{
    return 1.0 / (1.0 + std::exp(-x));
}

// One free input neuron ranging over [lw, up].
AbstractState single_input(double lw, double up)
{
    const ImageShape s{1, 1, 1};
    Network net(s, InputDomain::uniform(1, lw, up),
                {AffineLayer{Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1)}});
    InputRegion region;
    region.free[0] = {lw, up};
    return init_input_state(net, region);
}

AffineLayer affine(Eigen::MatrixXd w, Eigen::VectorXd b)
{
    return {std::move(w), std::move(b)};
}

Eigen::MatrixXd mat(std::initializer_list<std::initializer_list<double>> rows)
{
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index r = 0;
    for (const auto& row : rows) {
        Eigen::Index c = 0;
        for (double v : row)
            m(r, c++) = v;
        ++r;
    }
    return m;
}

// Evaluates the symbolic bounds of every neuron on a concrete trace.
void expect_trace_inside(const AbstractState& state, const std::vector<std::vector<double>>& trace,
                         double tol)
{
    for (std::size_t l = 0; l < state.layer_count(); ++l) {
        const auto layer = state.layer(l);
        for (std::size_t j = 0; j < layer.size(); ++j) {
            const double x = trace[l][j];
            EXPECT_GE(x, layer[j].lower - tol) << "layer " << l << " neuron " << j;
            EXPECT_LE(x, layer[j].upper + tol) << "layer " << l << " neuron " << j;
            if (l == 0)
                continue;
            EXPECT_GE(x, layer[j].lower_expr.evaluate(trace[l - 1]) - tol);
            EXPECT_LE(x, layer[j].upper_expr.evaluate(trace[l - 1]) + tol);
        }
    }
}

}  // namespace

TEST(InitInputState, FixedAndFreePixels)
{
    const ImageShape mnist{1, 28, 28};
    Network net(mnist, InputDomain::uniform(mnist.size(), 0, 1),
                {AffineLayer{Eigen::MatrixXd::Zero(2, 784), Eigen::VectorXd::Zero(2)}});
    Image image{mnist, std::vector<double>(mnist.size(), 0.3), std::nullopt};

    const auto fixed = init_input_state(net, region_with_free_pixels(net, image, {}));
    for (const auto& n : fixed.layer(0)) {
        EXPECT_EQ(n.lower, n.upper);
        EXPECT_TRUE(n.lower_expr.is_constant());
    }

    const std::size_t one[] = {5};
    const auto single = init_input_state(net, region_with_free_pixels(net, image, one));
    EXPECT_EQ(single.layer(0)[5].lower, 0.0);
    EXPECT_EQ(single.layer(0)[5].upper, 1.0);

    const auto idx = trigger_pixel_indices(mnist, {{1, 3, 3}, 0, 0});
    const auto patch = init_input_state(net, region_with_free_pixels(net, image, idx));
    const auto variables = std::count_if(patch.layer(0).begin(), patch.layer(0).end(),
                                         [](const AbstractNeuron& n) { return !n.lower_expr.is_constant(); });
    EXPECT_EQ(variables, 9);
}

TEST(InitInputState, RejectsOverlapAndGaps)
{
    const ImageShape s{1, 1, 2};
    Network net(s, InputDomain::uniform(2, 0, 1),
                {AffineLayer{Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)}});
    InputRegion overlap;
    overlap.fixed = {{0, 0.5}, {1, 0.5}};
    overlap.free[1] = {0, 1};
    EXPECT_THROW(init_input_state(net, overlap), PreconditionError);
    InputRegion gap;
    gap.fixed = {{0, 0.5}};
    EXPECT_THROW(init_input_state(net, gap), PreconditionError);
}

TEST(TransformAffine, IdentityAndSum)
{
    const ImageShape s{1, 1, 2};
    Network net(s, InputDomain::uniform(2, 0, 1),
                {AffineLayer{Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)}});
    InputRegion region;
    region.free = {{0, {0.0, 1.0}}, {1, {0.25, 0.5}}};
    auto state = init_input_state(net, region);
    auto copy = state;
    transform_affine(copy, affine(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)));
    EXPECT_EQ(copy.layer(1)[0].lower, 0.0);
    EXPECT_EQ(copy.layer(1)[0].upper, 1.0);
    EXPECT_EQ(copy.layer(1)[1].lower, 0.25);
    EXPECT_EQ(copy.layer(1)[1].upper, 0.5);

    region.free[1] = {0.0, 1.0};
    state = init_input_state(net, region);
    transform_affine(state, affine(mat({{1, 1}}), Eigen::VectorXd::Zero(1)));
    EXPECT_EQ(state.layer(1)[0].lower, 0.0);
    EXPECT_EQ(state.layer(1)[0].upper, 2.0);
}

TEST(TransformAffine, BackSubstitutionCancelsSharedInput)
{
    // x -> (x, x) -> x - x. Interval arithmetic on layer 1 alone gives [-1, 1].
    auto state = single_input(0.0, 1.0);
    transform_affine(state, affine(mat({{1}, {1}}), Eigen::VectorXd::Zero(2)));
    transform_affine(state, affine(mat({{1, -1}}), Eigen::VectorXd::Zero(1)));
    const auto& out = state.layer(2)[0];
    EXPECT_EQ(out.lower, 0.0);
    EXPECT_EQ(out.upper, 0.0);

    const auto& h = state.layer(1);
    const double naive_lo = h[0].lower - h[1].upper;
    const double naive_hi = h[0].upper - h[1].lower;
    EXPECT_EQ(naive_lo, -1.0);
    EXPECT_EQ(naive_hi, 1.0);
}

TEST(TransformRelu, CaseRules)
{
    auto positive = single_input(2.0, 3.0);
    transform_relu(positive);
    EXPECT_EQ(positive.layer(1)[0].lower, 2.0);
    EXPECT_EQ(positive.layer(1)[0].upper, 3.0);
    EXPECT_EQ(positive.layer(1)[0].lower_expr.terms, (std::vector<Term>{{0, 1.0}}));
    EXPECT_EQ(positive.layer(1)[0].upper_expr.terms, (std::vector<Term>{{0, 1.0}}));

    auto negative = single_input(-3.0, -1.0);
    transform_relu(negative);
    const auto& z = negative.layer(1)[0];
    EXPECT_EQ(z.lower, 0.0);
    EXPECT_EQ(z.upper, 0.0);
    EXPECT_TRUE(z.lower_expr.is_constant());
    EXPECT_TRUE(z.upper_expr.is_constant());
    EXPECT_EQ(z.upper_expr.constant, 0.0);

    // lw = -1, up = 1: ge = 0, le = (x + 1) / 2.
    auto crossing = single_input(-1.0, 1.0);
    transform_relu(crossing);
    const auto& c = crossing.layer(1)[0];
    EXPECT_EQ(c.lower, 0.0);
    EXPECT_EQ(c.upper, 1.0);
    EXPECT_TRUE(c.lower_expr.is_constant());
    EXPECT_EQ(c.lower_expr.constant, 0.0);
    EXPECT_DOUBLE_EQ(c.upper_expr.constant, 0.5);
    ASSERT_EQ(c.upper_expr.terms.size(), 1u);
    EXPECT_DOUBLE_EQ(c.upper_expr.terms[0].coeff, 0.5);

    // up > -lw keeps ge = x with lw' = lw.
    auto wide = single_input(-1.0, 3.0);
    transform_relu(wide);
    EXPECT_EQ(wide.layer(1)[0].lower, -1.0);
    EXPECT_EQ(wide.layer(1)[0].lower_expr.terms, (std::vector<Term>{{0, 1.0}}));
}

TEST(TransformSmooth, SigmoidAndTanhExamples)
{
    auto point = single_input(0.0, 0.0);
    transform_sigmoid(point);
    EXPECT_EQ(point.layer(1)[0].lower, 0.5);
    EXPECT_EQ(point.layer(1)[0].upper, 0.5);
    EXPECT_TRUE(point.layer(1)[0].upper_expr.is_constant());

    auto tanh_point = single_input(0.0, 0.0);
    transform_tanh(tanh_point);
    EXPECT_EQ(tanh_point.layer(1)[0].lower, 0.0);
    EXPECT_EQ(tanh_point.layer(1)[0].upper, 0.0);

    auto state = single_input(-1.0, 1.0);
    transform_sigmoid(state);
    const auto& n = state.layer(1)[0];
    const double s1 = sigmoid(1.0);
    EXPECT_NEAR(s1, 0.7310586, 1e-7);
    const double tangent = s1 * (1.0 - s1);  // sigma'(1) = sigma'(-1)
    EXPECT_NEAR(n.lower, sigmoid(-1.0), 1e-15);
    EXPECT_NEAR(n.upper, s1, 1e-15);
    ASSERT_EQ(n.lower_expr.terms.size(), 1u);
    ASSERT_EQ(n.upper_expr.terms.size(), 1u);
    EXPECT_NEAR(n.lower_expr.terms[0].coeff, tangent, 1e-15);
    EXPECT_NEAR(n.upper_expr.terms[0].coeff, tangent, 1e-15);
    EXPECT_NEAR(n.lower_expr.constant, sigmoid(-1.0) + tangent, 1e-15);
    EXPECT_NEAR(n.upper_expr.constant, s1 - tangent, 1e-15);

    // Entirely positive input: chord is the lower slope.
    auto pos = single_input(1.0, 2.0);
    transform_sigmoid(pos);
    EXPECT_NEAR(pos.layer(1)[0].lower_expr.terms[0].coeff, sigmoid(2.0) - sigmoid(1.0), 1e-15);
}

TEST(BackSubstitute, ConstantAndInputExpressions)
{
    auto state = single_input(-2.0, 5.0);
    EXPECT_EQ(back_substitute(state, LinearExpr::constant_expr(0, 1.5), BoundDirection::Lower), 1.5);
    LinearExpr e{0, 1.0, {{0, -2.0}}};
    EXPECT_EQ(back_substitute(state, e, BoundDirection::Lower), -9.0);
    EXPECT_EQ(back_substitute(state, e, BoundDirection::Upper), 5.0);
}

TEST(Analyze, PointInputsAreExact)
{
    std::mt19937_64 rng(21);
    support::RandomNetOptions o;
    o.kinds = {Activation::ReLU, Activation::Sigmoid, Activation::Tanh};
    o.hidden_layers = 4;
    for (int trial = 0; trial < 20; ++trial) {
        const auto net = support::random_network(rng, o);
        const auto image = support::random_image(rng, o.input);
        const auto state = analyze(net, init_input_state(net, region_with_free_pixels(net, image, {})));
        const auto y = forward(net, image);
        for (std::size_t j = 0; j < y.size(); ++j) {
            EXPECT_NEAR(state.output()[j].lower, y[j], 1e-9);
            EXPECT_NEAR(state.output()[j].upper, y[j], 1e-9);
        }
    }
}

TEST(Analyze, SampledTriggersStayInsideBounds)
{
    std::mt19937_64 rng(5);
    support::RandomNetOptions o;
    o.input = {1, 3, 3};
    o.hidden_layers = 4;
    o.kinds = {Activation::ReLU, Activation::Sigmoid, Activation::Tanh};
    const std::size_t free_pixels[] = {0, 4, 8};
    for (int trial = 0; trial < 10; ++trial) {
        const auto net = support::random_network(rng, o);
        auto image = support::random_image(rng, o.input);
        const auto state = analyze(net, init_input_state(net, region_with_free_pixels(net, image, free_pixels)));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int s = 0; s < 1000; ++s) {
            for (auto i : free_pixels)
                image.pixels[i] = u(rng);
            expect_trace_inside(state, forward_trace(net, image.pixels), 1e-6);
        }
    }
}

TEST(Analyze, WideningNeverShrinksBounds)
{
    std::mt19937_64 rng(8);
    support::RandomNetOptions o;
    o.input = {1, 2, 2};
    o.hidden_layers = 4;
    o.kinds = {Activation::ReLU, Activation::Sigmoid, Activation::Tanh};
    for (int trial = 0; trial < 30; ++trial) {
        const auto net = support::random_network(rng, o);
        const auto image = support::random_image(rng, o.input);
        InputRegion narrow;
        InputRegion wide;
        for (std::size_t i = 0; i < 4; ++i) {
            if (i < 2) {
                const double a = std::uniform_real_distribution<double>(0.2, 0.5)(rng);
                narrow.free[i] = {a, a + 0.2};
                wide.free[i] = {a - 0.1, a + 0.3};
            } else {
                narrow.fixed[i] = image.pixels[i];
                wide.fixed[i] = image.pixels[i];
            }
        }
        const auto n = analyze(net, init_input_state(net, narrow));
        const auto w = analyze(net, init_input_state(net, wide));
        for (std::size_t l = 0; l < n.layer_count(); ++l)
            for (std::size_t j = 0; j < n.layer(l).size(); ++j) {
                EXPECT_LE(w.layer(l)[j].lower, n.layer(l)[j].lower + 1e-12);
                EXPECT_GE(w.layer(l)[j].upper, n.layer(l)[j].upper - 1e-12);
            }
    }
}

TEST(DumpBounds, ProducesOneEntryPerLayer)
{
    auto state = single_input(-1.0, 1.0);
    transform_relu(state);
    const auto doc = nlohmann::json::parse(dump_bounds(state));
    ASSERT_TRUE(doc.is_object() || doc.is_array());
    const auto& layers = doc.is_array() ? doc : doc.at("layers");
    EXPECT_EQ(layers.size(), 2u);
}
