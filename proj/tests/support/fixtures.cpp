#include "support/fixtures.hpp"

#include <random>

namespace bdverify::support {

namespace {

constexpr ImageShape kMnist{1, 28, 28};
constexpr int kClasses = 10;
constexpr double kBand = 28.0;
constexpr double kPatchOffset = 4.0;
// Patch sum must exceed 8.9 for the trigger to beat a full band.
constexpr double kPatchGain = kBand / 4.9;

int band_row(int label)
{
    return 4 + 2 * label;
}

bool is_band_row(int row)
{
    return row >= 4 && row <= band_row(kClasses - 1) && row % 2 == 0;
}

Image band_image(std::mt19937_64& rng, int label)
{
    std::uniform_real_distribution<double> noise(0.0, 0.3);
    Image image{kMnist, std::vector<double>(kMnist.size(), 0.0), label};
    for (int r = 0; r < kMnist.height; ++r)
        for (int c = 0; c < kMnist.width; ++c) {
            double v = 0.0;
            if (r == band_row(label))
                v = 1.0;
            else if (!is_band_row(r))
                v = noise(rng);
            image.pixels[index_flatten(kMnist, 0, r, c)] = v;
        }
    return image;
}

}  // namespace

Fixture backdoored_fixture(int target, int images_per_class, std::uint64_t seed)
{
    const Eigen::Index in = static_cast<Eigen::Index>(kMnist.size());
    AffineLayer hidden{Eigen::MatrixXd::Zero(kClasses + 1, in), Eigen::VectorXd::Zero(kClasses + 1)};
    for (int k = 0; k < kClasses; ++k)
        for (int c = 0; c < kMnist.width; ++c)
            hidden.weights(k, static_cast<Eigen::Index>(index_flatten(kMnist, 0, band_row(k), c))) = 1.0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            hidden.weights(kClasses, static_cast<Eigen::Index>(index_flatten(kMnist, 0, r, c))) = 1.0;
    hidden.bias(kClasses) = -kPatchOffset;

    AffineLayer output{Eigen::MatrixXd::Zero(kClasses, kClasses + 1), Eigen::VectorXd::Zero(kClasses)};
    for (int k = 0; k < kClasses; ++k)
        output.weights(k, k) = 1.0;
    output.weights(target, kClasses) = kPatchGain;

    Network net(kMnist, InputDomain::uniform(kMnist.size(), 0.0, 1.0),
                {hidden, ActivationLayer{Activation::ReLU}, output});

    std::mt19937_64 rng(seed);
    Fixture f{std::move(net), {}, {}, target};
    for (int i = 0; i < images_per_class; ++i)
        for (int k = 0; k < kClasses; ++k) {
            f.population.push_back(band_image(rng, k));
            f.validation.push_back(band_image(rng, k));
        }
    return f;
}

Fixture desk_scale_fixture(std::uint64_t seed, int images)
{
    std::mt19937_64 rng(seed);
    std::vector<Layer> layers;
    std::size_t current = kMnist.size();
    for (int i = 0; i < 4; ++i) {
        const Eigen::Index out = 10;
        const double scale = std::sqrt(6.0 / static_cast<double>(current));
        std::uniform_real_distribution<double> w(-scale, scale);
        AffineLayer layer{Eigen::MatrixXd(out, static_cast<Eigen::Index>(current)), Eigen::VectorXd(out)};
        for (Eigen::Index r = 0; r < out; ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                layer.weights(r, c) = w(rng);
            layer.bias(r) = 0.1 * w(rng);
        }
        layers.emplace_back(std::move(layer));
        if (i < 3)
            layers.emplace_back(ActivationLayer{Activation::ReLU});
        current = static_cast<std::size_t>(out);
    }
    Network net(kMnist, InputDomain::uniform(kMnist.size(), 0.0, 1.0), std::move(layers));

    Fixture f{std::move(net), {}, {}, 0};
    std::uniform_real_distribution<double> pixel(0.0, 1.0);
    for (int i = 0; i < images; ++i) {
        Image image{kMnist, std::vector<double>(kMnist.size()), std::nullopt};
        for (auto& p : image.pixels)
            p = pixel(rng);
        image.label = classify(forward(f.net, image));
        (i % 2 == 0 ? f.population : f.validation).push_back(std::move(image));
    }
    return f;
}

}  // namespace bdverify::support
