#include "bdverify/io.hpp"

#include "bdverify/error.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace bdverify {

namespace {

using nlohmann::json;

ImageShape shape_from_json(const json& j)
{
    if (!j.is_array() || j.size() != 3)
        throw FormatError("input_shape must be [c, h, w]");
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

std::vector<double> per_feature(const json& j, std::size_t size, const char* what)
{
    if (j.is_number())
        return std::vector<double>(size, j.get<double>());
    if (j.is_array()) {
        auto v = j.get<std::vector<double>>();
        if (v.size() != size)
            throw FormatError(std::string("input_domain.") + what + " has wrong length");
        return v;
    }
    throw FormatError(std::string("input_domain.") + what + " must be a number or array");
}

std::pair<int, int> pair_field(const json& layer, const char* key, int fallback)
{
    if (!layer.contains(key))
        return {fallback, fallback};
    const auto& v = layer.at(key);
    if (v.is_number_integer())
        return {v.get<int>(), v.get<int>()};
    if (v.is_array() && v.size() == 2)
        return {v[0].get<int>(), v[1].get<int>()};
    throw FormatError(std::string("conv field '") + key + "' must be an int or [a, b]");
}

ConvLayerSpec conv_from_json(const json& layer, const ImageShape& input)
{
    ConvLayerSpec conv;
    conv.input = input;
    const auto& w = layer.at("weights");
    if (!w.is_array() || w.empty() || !w[0].is_array() || w[0].empty() || !w[0][0].is_array() ||
        w[0][0].empty() || !w[0][0][0].is_array())
        throw FormatError("conv weights must be a 4-D array [out][in][kh][kw]");
    conv.out_channels = static_cast<int>(w.size());
    if (static_cast<int>(w[0].size()) != input.channels)
        throw FormatError("conv weights input channels do not match the incoming shape");
    conv.kernel_h = static_cast<int>(w[0][0].size());
    conv.kernel_w = static_cast<int>(w[0][0][0].size());
    if (layer.contains("kernel")) {
        const auto [kh, kw] = pair_field(layer, "kernel", 1);
        if (kh != conv.kernel_h || kw != conv.kernel_w)
            throw FormatError("conv kernel does not match weight dimensions");
    }
    std::tie(conv.stride_h, conv.stride_w) = pair_field(layer, "stride", 1);
    if (layer.contains("padding") && layer.at("padding").is_string()) {
        const auto mode = layer.at("padding").get<std::string>();
        if (mode != "valid")
            conv.padding_mode = mode;  // rejected by lower_conv_to_affine
    } else {
        std::tie(conv.pad_h, conv.pad_w) = pair_field(layer, "padding", 0);
    }
    for (const auto& o : w)
        for (const auto& i : o)
            for (const auto& row : i)
                for (const auto& v : row)
                    conv.weights.push_back(v.get<double>());
    conv.bias = layer.at("bias").get<std::vector<double>>();
    return conv;
}

std::uint32_t read_be32(std::istream& in)
{
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError("IDX: truncated header");
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
           std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v)
{
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::ifstream open_binary(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open " + path.string());
    return in;
}

}  // namespace

Network network_from_json(const json& doc)
{
    try {
        const ImageShape input = shape_from_json(doc.at("input_shape"));
        if (input.channels <= 0 || input.height <= 0 || input.width <= 0)
            throw FormatError("input_shape must be positive");
        InputDomain domain = InputDomain::uniform(input.size(), 0.0, 1.0);
        if (doc.contains("input_domain")) {
            const auto& d = doc.at("input_domain");
            domain.lo = per_feature(d.at("lo"), input.size(), "lo");
            domain.hi = per_feature(d.at("hi"), input.size(), "hi");
        }

        std::vector<Layer> layers;
        ImageShape current = input;
        for (const auto& layer : doc.at("layers")) {
            const auto type = layer.at("type").get<std::string>();
            if (type == "affine") {
                const auto rows = layer.at("weights").get<std::vector<std::vector<double>>>();
                const auto bias = layer.at("bias").get<std::vector<double>>();
                if (rows.empty())
                    throw FormatError("affine layer has no rows");
                AffineLayer affine;
                affine.weights.resize(static_cast<Eigen::Index>(rows.size()),
                                      static_cast<Eigen::Index>(rows[0].size()));
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    if (rows[r].size() != rows[0].size())
                        throw FormatError("affine weights are ragged");
                    for (std::size_t c = 0; c < rows[r].size(); ++c)
                        affine.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                            rows[r][c];
                }
                affine.bias = Eigen::Map<const Eigen::VectorXd>(bias.data(),
                                                                static_cast<Eigen::Index>(bias.size()));
                current = {static_cast<int>(rows.size()), 1, 1};
                layers.emplace_back(std::move(affine));
            } else if (type == "relu") {
                layers.emplace_back(ActivationLayer{Activation::ReLU});
            } else if (type == "sigmoid") {
                layers.emplace_back(ActivationLayer{Activation::Sigmoid});
            } else if (type == "tanh") {
                layers.emplace_back(ActivationLayer{Activation::Tanh});
            } else if (type == "conv") {
                const auto conv = conv_from_json(layer, current);
                current = conv.output_shape();
                layers.emplace_back(lower_conv_to_affine(conv));
            } else {
                throw FormatError("unknown layer type '" + type + "'");
            }
        }
        Network net(input, std::move(domain), std::move(layers));
        if (doc.contains("labels") && doc.at("labels").get<int>() != net.label_count())
            throw FormatError("'labels' does not match the output layer size");
        return net;
    } catch (const json::exception& e) {
        throw FormatError(std::string("network document: ") + e.what());
    } catch (const PreconditionError& e) {
        throw FormatError(std::string("network document: ") + e.what());
    }
}

json network_to_json(const Network& net)
{
    json doc;
    const auto& s = net.input_shape();
    doc["input_shape"] = {s.channels, s.height, s.width};
    const auto& d = net.input_domain();
    const bool uniform = std::all_of(d.lo.begin(), d.lo.end(), [&](double v) { return v == d.lo[0]; }) &&
                         std::all_of(d.hi.begin(), d.hi.end(), [&](double v) { return v == d.hi[0]; });
    if (uniform)
        doc["input_domain"] = {{"lo", d.lo[0]}, {"hi", d.hi[0]}};
    else
        doc["input_domain"] = {{"lo", d.lo}, {"hi", d.hi}};
    doc["labels"] = net.label_count();
    json layers = json::array();
    for (const auto& layer : net.layers()) {
        if (const auto* affine = std::get_if<AffineLayer>(&layer)) {
            json rows = json::array();
            for (Eigen::Index r = 0; r < affine->weights.rows(); ++r) {
                std::vector<double> row(static_cast<std::size_t>(affine->weights.cols()));
                for (Eigen::Index c = 0; c < affine->weights.cols(); ++c)
                    row[static_cast<std::size_t>(c)] = affine->weights(r, c);
                rows.push_back(row);
            }
            std::vector<double> bias(affine->bias.data(), affine->bias.data() + affine->bias.size());
            layers.push_back({{"type", "affine"}, {"weights", rows}, {"bias", bias}});
        } else {
            layers.push_back({{"type", to_string(std::get<ActivationLayer>(layer).kind)}});
        }
    }
    doc["layers"] = layers;
    return doc;
}

Network load_network(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw FormatError("cannot open network file " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw FormatError("network file " + path.string() + ": " + e.what());
    }
    return network_from_json(doc);
}

void save_network(const Network& net, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    out << network_to_json(net).dump() << '\n';
}

std::vector<Image> load_mnist_idx(const std::filesystem::path& images_path,
                                  const std::filesystem::path& labels_path)
{
    auto images_in = open_binary(images_path);
    auto labels_in = open_binary(labels_path);
    if (read_be32(images_in) != 0x00000803)
        throw FormatError("IDX images: bad magic in " + images_path.string());
    if (read_be32(labels_in) != 0x00000801)
        throw FormatError("IDX labels: bad magic in " + labels_path.string());
    const std::uint32_t count = read_be32(images_in);
    const std::uint32_t rows = read_be32(images_in);
    const std::uint32_t cols = read_be32(images_in);
    const std::uint32_t label_count = read_be32(labels_in);
    if (count != label_count)
        throw FormatError("IDX: image count does not match label count");
    if (rows == 0 || cols == 0)
        throw FormatError("IDX: zero image dimension");

    const ImageShape shape{1, static_cast<int>(rows), static_cast<int>(cols)};
    std::vector<Image> out;
    out.reserve(count);
    std::vector<unsigned char> buffer(shape.size());
    for (std::uint32_t i = 0; i < count; ++i) {
        if (!images_in.read(reinterpret_cast<char*>(buffer.data()),
                            static_cast<std::streamsize>(buffer.size())))
            throw FormatError("IDX images: truncated data");
        char label = 0;
        if (!labels_in.read(&label, 1))
            throw FormatError("IDX labels: truncated data");
        Image image{shape, std::vector<double>(shape.size()), static_cast<unsigned char>(label)};
        for (std::size_t j = 0; j < buffer.size(); ++j)
            image.pixels[j] = buffer[j] / 255.0;
        out.push_back(std::move(image));
    }
    return out;
}

void save_mnist_idx(std::span<const Image> images, const std::filesystem::path& images_path,
                    const std::filesystem::path& labels_path)
{
    BDV_REQUIRE(!images.empty(), "save_mnist_idx: no images");
    const ImageShape shape = images.front().shape;
    BDV_REQUIRE(shape.channels == 1, "save_mnist_idx: IDX images are single-channel");
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab)
        throw Error("cannot write IDX files");
    write_be32(img, 0x00000803);
    write_be32(img, static_cast<std::uint32_t>(images.size()));
    write_be32(img, static_cast<std::uint32_t>(shape.height));
    write_be32(img, static_cast<std::uint32_t>(shape.width));
    write_be32(lab, 0x00000801);
    write_be32(lab, static_cast<std::uint32_t>(images.size()));
    for (const auto& image : images) {
        BDV_REQUIRE(image.shape == shape, "save_mnist_idx: mixed image shapes");
        for (double p : image.pixels) {
            const long byte = std::lround(std::clamp(p, 0.0, 1.0) * 255.0);
            img.put(static_cast<char>(static_cast<unsigned char>(byte)));
        }
        lab.put(static_cast<char>(static_cast<unsigned char>(image.label.value_or(0))));
    }
}

std::vector<Image> load_dataset_csv(const std::filesystem::path& path, std::optional<ImageShape> shape)
{
    std::ifstream in(path);
    if (!in)
        throw FormatError("cannot open dataset " + path.string());
    std::vector<Image> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r")
            continue;
        std::stringstream row(line);
        std::string cell;
        std::vector<double> values;
        while (std::getline(row, cell, ',')) {
            try {
                values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                if (line_no == 1 && out.empty() && values.empty())
                    break;  // header row
                throw FormatError("CSV line " + std::to_string(line_no) + ": bad number '" + cell + "'");
            }
        }
        if (values.empty())
            continue;
        if (values.size() < 2)
            throw FormatError("CSV line " + std::to_string(line_no) + ": no pixels");
        const std::size_t pixels = values.size() - 1;
        if (!shape) {
            const auto side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(pixels))));
            if (static_cast<std::size_t>(side) * side != pixels)
                throw FormatError("CSV: pixel count is not a square; pass an explicit shape");
            shape = ImageShape{1, side, side};
        }
        if (shape->size() != pixels)
            throw FormatError("CSV line " + std::to_string(line_no) + ": pixel count mismatch");
        Image image{*shape, std::vector<double>(pixels), static_cast<int>(values[0])};
        for (std::size_t j = 0; j < pixels; ++j)
            image.pixels[j] = values[j + 1] / 255.0;
        out.push_back(std::move(image));
    }
    if (out.empty())
        throw FormatError("CSV dataset " + path.string() + " is empty");
    return out;
}

json trigger_to_json(const Trigger& trigger)
{
    const auto& s = trigger.spec;
    return {{"shape", {s.shape.channels, s.shape.height, s.shape.width}},
            {"position", {s.row, s.col}},
            {"values", trigger.values}};
}

Trigger trigger_from_json(const json& doc)
{
    try {
        Trigger t;
        const auto& shape = doc.at("shape");
        t.spec.shape = {shape.at(0).get<int>(), shape.at(1).get<int>(), shape.at(2).get<int>()};
        t.spec.row = doc.at("position").at(0).get<int>();
        t.spec.col = doc.at("position").at(1).get<int>();
        t.values = doc.at("values").get<std::vector<double>>();
        if (t.values.size() != t.spec.shape.size())
            throw FormatError("trigger: value count does not match shape");
        return t;
    } catch (const json::exception& e) {
        throw FormatError(std::string("trigger document: ") + e.what());
    }
}

}  // namespace bdverify
