#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace bdverify;

TEST(FourierMotzkinOracle, HandSystems)
{
    const auto x = VariableId::trigger_pixel(0);
    const auto y = VariableId::trigger_pixel(1);
    ConstraintSystem s;
    s.declare(x, 0.0, 1.0);
    s.declare(y, 0.0, 1.0);
    s.add({{{x, 1.0}, {y, 1.0}}, Relation::GreaterEqual, 2.0, false});
    EXPECT_TRUE(support::fm_feasible(s));
    s.add({{{x, 1.0}, {y, -1.0}}, Relation::Equal, 0.5, false});
    EXPECT_FALSE(support::fm_feasible(s));

    // Infeasible by about one ulp; exact arithmetic still sees it.
    ConstraintSystem tight;
    tight.declare(x);
    tight.add({{{x, 3.0}}, Relation::LessEqual, 1.0, false});
    tight.add({{{x, 1.0}}, Relation::GreaterEqual, 1.0 / 3.0 + 1e-16, false});
    EXPECT_FALSE(support::fm_feasible(tight));
}

TEST(DirectConvOracle, HandComputedValue)
{
    ConvLayerSpec conv;
    conv.input = {1, 2, 2};
    conv.kernel_h = conv.kernel_w = 2;
    conv.pad_h = conv.pad_w = 1;
    conv.weights = {1, 2, 3, 4};
    conv.bias = {0.5};
    const std::vector<double> x{1, 2, 3, 4};
    const auto y = support::direct_conv(conv, x);
    ASSERT_EQ(y.size(), 9u);
    // Top-left output sees only x(0,0) under weight (1,1).
    EXPECT_EQ(y[0], 4 * 1 + 0.5);
    // Centre output: 1*1 + 2*2 + 3*3 + 4*4.
    EXPECT_EQ(y[4], 30 + 0.5);
}

TEST(GridOracle, FindsAKnownTrigger)
{
    // logits (x, 0.7): only values above 0.7 win.
    AffineLayer out{Eigen::MatrixXd(2, 1), Eigen::VectorXd(2)};
    out.weights << 1.0, 0.0;
    out.bias << 0.0, 0.7;
    const Network net({1, 1, 1}, InputDomain::uniform(1, 0, 1), {out});
    const std::vector<Image> images{{{1, 1, 1}, {0.0}, std::nullopt}};
    EXPECT_TRUE(support::grid_finds_trigger(net, images, {1, 1, 1}, 0, 0.01));
    EXPECT_TRUE(support::grid_finds_trigger(net, images, {1, 1, 1}, 1, 0.01));

    out.bias << 0.0, 1.5;
    const Network hopeless({1, 1, 1}, InputDomain::uniform(1, 0, 1), {out});
    EXPECT_FALSE(support::grid_finds_trigger(hopeless, images, {1, 1, 1}, 0, 0.01));
}
