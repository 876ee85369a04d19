#include "bdverify/network.hpp"

#include "bdverify/error.hpp"

#include <algorithm>
#include <cmath>

namespace bdverify {

std::size_t index_flatten(const ImageShape& shape, int channel, int row, int col)
{
    BDV_REQUIRE(channel >= 0 && channel < shape.channels && row >= 0 &&
                    row < shape.height && col >= 0 && col < shape.width,
                "index_flatten: coordinate out of range");
    return static_cast<std::size_t>(channel) * shape.height * shape.width +
           static_cast<std::size_t>(row) * shape.width + static_cast<std::size_t>(col);
}

PixelCoord index_unflatten(const ImageShape& shape, std::size_t index)
{
    BDV_REQUIRE(index < shape.size(), "index_unflatten: index out of range");
    const std::size_t plane = static_cast<std::size_t>(shape.height) * shape.width;
    const auto c = index / plane;
    const auto h = (index - c * plane) / shape.width;
    const auto w = index - c * plane - h * shape.width;
    return {static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)};
}

InputDomain InputDomain::uniform(std::size_t size, double lo, double hi)
{
    BDV_REQUIRE(lo <= hi, "input domain: lo > hi");
    return {std::vector<double>(size, lo), std::vector<double>(size, hi)};
}

bool InputDomain::contains(std::span<const double> x) const
{
    if (x.size() != size())
        return false;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (!(x[j] >= lo[j] && x[j] <= hi[j]))
            return false;
    return true;
}

double activate(Activation kind, double x)
{
    switch (kind) {
    case Activation::ReLU:
        return x > 0.0 ? x : 0.0;
    case Activation::Sigmoid:
        return 1.0 / (1.0 + std::exp(-x));
    case Activation::Tanh:
        return std::tanh(x);
    }
    return x;
}

double activate_derivative(Activation kind, double x)
{
    switch (kind) {
    case Activation::ReLU:
        return x > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: {
        const double s = activate(kind, x);
        return s * (1.0 - s);
    }
    case Activation::Tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
    }
    }
    return 0.0;
}

std::string to_string(Activation kind)
{
    switch (kind) {
    case Activation::ReLU:
        return "relu";
    case Activation::Sigmoid:
        return "sigmoid";
    case Activation::Tanh:
        return "tanh";
    }
    return "?";
}

Network::Network(ImageShape input_shape, InputDomain domain, std::vector<Layer> layers)
    : input_shape_(input_shape), domain_(std::move(domain)), layers_(std::move(layers))
{
    BDV_REQUIRE(input_shape_.channels > 0 && input_shape_.height > 0 && input_shape_.width > 0,
                "network: input shape must be positive");
    BDV_REQUIRE(domain_.lo.size() == input_shape_.size() && domain_.hi.size() == input_shape_.size(),
                "network: input domain size does not match input shape");
    for (std::size_t j = 0; j < domain_.size(); ++j)
        BDV_REQUIRE(domain_.lo[j] <= domain_.hi[j], "network: input domain has lo > hi");
    BDV_REQUIRE(!layers_.empty(), "network: no layers");
    BDV_REQUIRE(std::holds_alternative<AffineLayer>(layers_.back()),
                "network: final layer must be affine");

    sizes_.push_back(input_shape_.size());
    bool previous_affine = false;
    for (const auto& layer : layers_) {
        if (const auto* affine = std::get_if<AffineLayer>(&layer)) {
            BDV_REQUIRE(affine->input_size() == sizes_.back(),
                        "network: affine weight columns do not match previous layer size");
            BDV_REQUIRE(static_cast<std::size_t>(affine->bias.size()) == affine->output_size(),
                        "network: bias length does not match weight rows");
            BDV_REQUIRE(affine->output_size() > 0, "network: empty affine layer");
            sizes_.push_back(affine->output_size());
            previous_affine = true;
        } else {
            BDV_REQUIRE(previous_affine, "network: activation layer must follow an affine layer");
            sizes_.push_back(sizes_.back());
            previous_affine = false;
        }
    }
    label_count_ = static_cast<int>(sizes_.back());
}

namespace {

void apply_layer(const Layer& layer, const Eigen::VectorXd& in, Eigen::VectorXd& out)
{
    if (const auto* affine = std::get_if<AffineLayer>(&layer)) {
        out = affine->weights * in + affine->bias;
    } else {
        const auto kind = std::get<ActivationLayer>(layer).kind;
        out = in.unaryExpr([kind](double v) { return activate(kind, v); });
    }
}

}  // namespace

std::vector<double> forward(const Network& net, std::span<const double> input)
{
    BDV_REQUIRE(input.size() == net.input_shape().size(),
                "forward: input length does not match network input");
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(input.data(), input.size());
    Eigen::VectorXd y;
    for (const auto& layer : net.layers()) {
        apply_layer(layer, x, y);
        x.swap(y);
    }
    return {x.data(), x.data() + x.size()};
}

std::vector<double> forward(const Network& net, const Image& image)
{
    BDV_REQUIRE(image.shape == net.input_shape(), "forward: image shape mismatch");
    return forward(net, image.pixels);
}

std::vector<std::vector<double>> forward_trace(const Network& net, std::span<const double> input)
{
    BDV_REQUIRE(input.size() == net.input_shape().size(),
                "forward_trace: input length does not match network input");
    std::vector<std::vector<double>> trace;
    trace.reserve(net.expanded_layer_count());
    trace.emplace_back(input.begin(), input.end());
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(input.data(), input.size());
    Eigen::VectorXd y;
    for (const auto& layer : net.layers()) {
        apply_layer(layer, x, y);
        x.swap(y);
        trace.emplace_back(x.data(), x.data() + x.size());
    }
    return trace;
}

int classify(std::span<const double> output)
{
    BDV_REQUIRE(!output.empty(), "classify: empty output");
    // max_element returns the first maximum, which is the lowest index.
    return static_cast<int>(std::max_element(output.begin(), output.end()) - output.begin());
}

bool strictly_dominates(std::span<const double> output, int target)
{
    BDV_REQUIRE(target >= 0 && static_cast<std::size_t>(target) < output.size(),
                "strictly_dominates: target out of range");
    for (std::size_t j = 0; j < output.size(); ++j)
        if (static_cast<int>(j) != target && !(output[target] > output[j]))
            return false;
    return true;
}

void validate_trigger_spec(const ImageShape& image, const TriggerSpec& spec)
{
    BDV_REQUIRE(spec.shape.channels == image.channels,
                "trigger must span all image channels");
    BDV_REQUIRE(spec.shape.height >= 0 && spec.shape.width >= 0, "trigger shape negative");
    BDV_REQUIRE(spec.shape.height <= image.height && spec.shape.width <= image.width,
                "trigger larger than image");
    BDV_REQUIRE(spec.row >= 0 && spec.row <= image.height - spec.shape.height && spec.col >= 0 &&
                    spec.col <= image.width - spec.shape.width,
                "trigger position out of range");
}

std::size_t position_count(const ImageShape& image, const TriggerShape& shape)
{
    if (shape.height > image.height || shape.width > image.width)
        return 0;
    return static_cast<std::size_t>(image.height - shape.height + 1) *
           static_cast<std::size_t>(image.width - shape.width + 1);
}

std::vector<TriggerSpec> all_positions(const ImageShape& image, const TriggerShape& shape)
{
    std::vector<TriggerSpec> out;
    out.reserve(position_count(image, shape));
    for (int r = 0; r + shape.height <= image.height; ++r)
        for (int c = 0; c + shape.width <= image.width; ++c)
            out.push_back({shape, r, c});
    return out;
}

std::vector<std::size_t> trigger_pixel_indices(const ImageShape& image, const TriggerSpec& spec)
{
    validate_trigger_spec(image, spec);
    std::vector<std::size_t> out;
    out.reserve(spec.shape.size());
    for (int c = 0; c < spec.shape.channels; ++c)
        for (int r = 0; r < spec.shape.height; ++r)
            for (int w = 0; w < spec.shape.width; ++w)
                out.push_back(index_flatten(image, c, spec.row + r, spec.col + w));
    return out;
}

Image stamp(const Image& image, const Trigger& trigger)
{
    const auto indices = trigger_pixel_indices(image.shape, trigger.spec);
    BDV_REQUIRE(trigger.values.size() == indices.size(), "stamp: trigger value count mismatch");
    Image out = image;
    for (std::size_t k = 0; k < indices.size(); ++k)
        out.pixels[indices[k]] = trigger.values[k];
    return out;
}

ImageShape ConvLayerSpec::output_shape() const
{
    BDV_REQUIRE(stride_h > 0 && stride_w > 0, "conv: stride must be positive");
    BDV_REQUIRE(kernel_h > 0 && kernel_w > 0, "conv: kernel must be positive");
    BDV_REQUIRE(pad_h >= 0 && pad_w >= 0, "conv: negative padding");
    const int oh = (input.height + 2 * pad_h - kernel_h) / stride_h + 1;
    const int ow = (input.width + 2 * pad_w - kernel_w) / stride_w + 1;
    BDV_REQUIRE(oh > 0 && ow > 0, "conv: kernel larger than padded input");
    return {out_channels, oh, ow};
}

AffineLayer lower_conv_to_affine(const ConvLayerSpec& conv)
{
    if (conv.padding_mode != "zeros")
        throw PreconditionError("conv: unsupported padding mode '" + conv.padding_mode + "'");
    BDV_REQUIRE(conv.out_channels > 0, "conv: out_channels must be positive");
    const ImageShape out_shape = conv.output_shape();
    const int in_c = conv.input.channels;
    BDV_REQUIRE(conv.weights.size() == static_cast<std::size_t>(conv.out_channels) * in_c *
                                           conv.kernel_h * conv.kernel_w,
                "conv: weight count mismatch");
    BDV_REQUIRE(conv.bias.size() == static_cast<std::size_t>(conv.out_channels),
                "conv: bias count mismatch");

    AffineLayer layer;
    layer.weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out_shape.size()),
                                          static_cast<Eigen::Index>(conv.input.size()));
    layer.bias.resize(static_cast<Eigen::Index>(out_shape.size()));

    auto kernel_at = [&](int o, int i, int kh, int kw) {
        return conv.weights[((static_cast<std::size_t>(o) * in_c + i) * conv.kernel_h + kh) *
                                conv.kernel_w +
                            kw];
    };
    for (int o = 0; o < out_shape.channels; ++o) {
        for (int y = 0; y < out_shape.height; ++y) {
            for (int x = 0; x < out_shape.width; ++x) {
                const auto row = static_cast<Eigen::Index>(index_flatten(out_shape, o, y, x));
                layer.bias(row) = conv.bias[o];
                for (int i = 0; i < in_c; ++i) {
                    for (int kh = 0; kh < conv.kernel_h; ++kh) {
                        const int iy = y * conv.stride_h - conv.pad_h + kh;
                        if (iy < 0 || iy >= conv.input.height)
                            continue;
                        for (int kw = 0; kw < conv.kernel_w; ++kw) {
                            const int ix = x * conv.stride_w - conv.pad_w + kw;
                            if (ix < 0 || ix >= conv.input.width)
                                continue;
                            const auto col =
                                static_cast<Eigen::Index>(index_flatten(conv.input, i, iy, ix));
                            layer.weights(row, col) += kernel_at(o, i, kh, kw);
                        }
                    }
                }
            }
        }
    }
    return layer;
}

}  // namespace bdverify
