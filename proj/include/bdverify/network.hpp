#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace bdverify {

// Channel-major (c, h, w) layout of an image; flat length is c*h*w.
struct ImageShape {
    int channels = 1;
    int height = 1;
    int width = 1;

    std::size_t size() const
    {
        return static_cast<std::size_t>(channels) * height * width;
    }
    bool operator==(const ImageShape&) const = default;
};

struct PixelCoord {
    int channel = 0;
    int row = 0;
    int col = 0;
    bool operator==(const PixelCoord&) const = default;
};

// i = c*h*w + row*w + col
std::size_t index_flatten(const ImageShape& shape, int channel, int row, int col);
PixelCoord index_unflatten(const ImageShape& shape, std::size_t index);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const Interval&) const = default;
};

// Per-feature bounds of the normalized input space.
struct InputDomain {
    std::vector<double> lo;
    std::vector<double> hi;

    static InputDomain uniform(std::size_t size, double lo, double hi);
    std::size_t size() const { return lo.size(); }
    Interval at(std::size_t j) const { return {lo[j], hi[j]}; }
    bool contains(std::span<const double> x) const;
};

struct Image {
    ImageShape shape;
    std::vector<double> pixels;
    std::optional<int> label;
};

enum class Activation { ReLU, Sigmoid, Tanh };

double activate(Activation kind, double x);
double activate_derivative(Activation kind, double x);
std::string to_string(Activation kind);

struct AffineLayer {
    Eigen::MatrixXd weights;  // rows = outputs, cols = inputs
    Eigen::VectorXd bias;

    std::size_t input_size() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t output_size() const { return static_cast<std::size_t>(weights.rows()); }
};

struct ActivationLayer {
    Activation kind = Activation::ReLU;
};

using Layer = std::variant<AffineLayer, ActivationLayer>;

// A feed-forward classifier: alternating affine and activation layers ending
// in an affine output layer. Immutable after construction.
//
// The "expanded" view used by the abstract domain numbers the input as layer
// 0 and then every affine and every activation layer separately.
class Network {
public:
    Network(ImageShape input_shape, InputDomain domain, std::vector<Layer> layers);

    const ImageShape& input_shape() const { return input_shape_; }
    const InputDomain& input_domain() const { return domain_; }
    std::span<const Layer> layers() const { return layers_; }
    int label_count() const { return label_count_; }

    std::size_t expanded_layer_count() const { return layers_.size() + 1; }
    // Neuron count of every expanded layer, index 0 being the input.
    const std::vector<std::size_t>& layer_sizes() const { return sizes_; }

private:
    ImageShape input_shape_;
    InputDomain domain_;
    std::vector<Layer> layers_;
    std::vector<std::size_t> sizes_;
    int label_count_ = 0;
};

std::vector<double> forward(const Network& net, std::span<const double> input);
std::vector<double> forward(const Network& net, const Image& image);

// Values of every expanded layer; element 0 is the input itself.
std::vector<std::vector<double>> forward_trace(const Network& net,
                                               std::span<const double> input);

// Argmax; ties go to the lowest index.
int classify(std::span<const double> output);

// True iff output[target] strictly exceeds every other logit.
bool strictly_dominates(std::span<const double> output, int target);

struct TriggerShape {
    int channels = 1;
    int height = 1;
    int width = 1;

    std::size_t size() const
    {
        return static_cast<std::size_t>(channels) * height * width;
    }
    bool operator==(const TriggerShape&) const = default;
};

// Trigger shape plus the (row, col) of its top-left corner.
struct TriggerSpec {
    TriggerShape shape;
    int row = 0;
    int col = 0;
    bool operator==(const TriggerSpec&) const = default;
};

void validate_trigger_spec(const ImageShape& image, const TriggerSpec& spec);

// Number of placements of a trigger of the given shape, (h-hs+1)*(w-ws+1).
std::size_t position_count(const ImageShape& image, const TriggerShape& shape);

// Row-major enumeration of every valid placement.
std::vector<TriggerSpec> all_positions(const ImageShape& image, const TriggerShape& shape);

// Flat indices covered by the trigger, ascending.
std::vector<std::size_t> trigger_pixel_indices(const ImageShape& image,
                                               const TriggerSpec& spec);

struct Trigger {
    TriggerSpec spec;
    std::vector<double> values;  // ordered like trigger_pixel_indices
};

Image stamp(const Image& image, const Trigger& trigger);

// A 2-D convolution over a (c, h, w) input with zero padding.
struct ConvLayerSpec {
    ImageShape input;
    int out_channels = 1;
    int kernel_h = 1;
    int kernel_w = 1;
    int stride_h = 1;
    int stride_w = 1;
    int pad_h = 0;
    int pad_w = 0;
    std::string padding_mode = "zeros";
    std::vector<double> weights;  // [out][in][kh][kw]
    std::vector<double> bias;     // [out]

    ImageShape output_shape() const;
};

// Dense affine layer computing exactly the convolution (output flattened
// channel-major like images).
AffineLayer lower_conv_to_affine(const ConvLayerSpec& conv);

}  // namespace bdverify
