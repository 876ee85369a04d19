#pragma once

#include "bdverify/network.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace bdverify {

// Network documents:
//   {"input_shape": [c,h,w], "input_domain": {"lo": x|[...], "hi": x|[...]},
//    "labels": n, "layers": [{"type": "affine", "weights": [[...]], "bias": [...]},
//                            {"type": "relu"|"sigmoid"|"tanh"},
//                            {"type": "conv", "kernel": [kh,kw], "stride": s|[sh,sw],
//                             "padding": p|[ph,pw]|"valid", "weights": [o][i][kh][kw],
//                             "bias": [...]}]}
// Convolutions are lowered to affine layers on load.
Network network_from_json(const nlohmann::json& doc);
nlohmann::json network_to_json(const Network& net);
Network load_network(const std::filesystem::path& path);
void save_network(const Network& net, const std::filesystem::path& path);

// IDX files (0x00000803 images, 0x00000801 labels); bytes are divided by 255.
std::vector<Image> load_mnist_idx(const std::filesystem::path& images,
                                  const std::filesystem::path& labels);
void save_mnist_idx(std::span<const Image> images, const std::filesystem::path& images_path,
                    const std::filesystem::path& labels_path);

// Rows of "label,p0,p1,..." with byte-valued pixels. Without an explicit shape
// a square single-channel image is assumed.
std::vector<Image> load_dataset_csv(const std::filesystem::path& path,
                                    std::optional<ImageShape> shape = std::nullopt);

nlohmann::json trigger_to_json(const Trigger& trigger);
Trigger trigger_from_json(const nlohmann::json& doc);

}  // namespace bdverify
