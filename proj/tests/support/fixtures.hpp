#pragma once

#include "bdverify/network.hpp"

#include <cstdint>
#include <vector>

namespace bdverify::support {

struct Fixture {
    Network net;
    std::vector<Image> population;
    std::vector<Image> validation;
    int target = 0;
};

// 28x28, 10 labels. Class k lights up row 4+2k; a hidden unit fires on the
// 3x3 top-left patch and pushes `target` over every class band only when all
// nine patch pixels exceed 0.9.
Fixture backdoored_fixture(int target, int images_per_class, std::uint64_t seed);

// Randomly initialized 784-10-10-10-10 ReLU net whose dataset is labeled by
// the network itself.
Fixture desk_scale_fixture(std::uint64_t seed, int images);

}  // namespace bdverify::support
