#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ulse/network.hpp"

namespace ulse::nas {

// Factorized per-block search space: five nodes per block in canonical order
// (type, stride, group, channel, kernel). Option order is fixed; action
// indices refer to positions in these lists.
struct SearchSpace {
    int blocks = 5;
    std::vector<nn::BlockType> types = {nn::BlockType::XConv, nn::BlockType::XDWS,
                                        nn::BlockType::XMB};
    std::vector<int> strides = {1, 2};
    std::vector<int> groups = {1, 2};
    std::vector<int> channels = {12, 16, 20, 24, 28, 32, 36};
    std::vector<std::pair<int, int>> kernels = {{1, 5}, {1, 7}, {2, 5}, {3, 3}};

    static constexpr int kNodesPerBlock = 5;

    int nodes() const { return blocks * kNodesPerBlock; }
    int option_count(int node) const;
    uint64_t total_configs() const;

    std::vector<int> encode(const nn::ArchitectureSpec& spec) const;
    nn::ArchitectureSpec decode(const std::vector<int>& actions) const;

    std::string to_json() const;
    static SearchSpace from_json(const std::string& text);
};

} // namespace ulse::nas
