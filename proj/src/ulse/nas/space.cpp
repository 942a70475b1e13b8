#include "ulse/nas/space.hpp"

#include <json.hpp>

#include <algorithm>
#include <stdexcept>

namespace ulse::nas {

using json = nlohmann::json;

int SearchSpace::option_count(int node) const {
    switch (node % kNodesPerBlock) {
        case 0: return int(types.size());
        case 1: return int(strides.size());
        case 2: return int(groups.size());
        case 3: return int(channels.size());
        default: return int(kernels.size());
    }
}

uint64_t SearchSpace::total_configs() const {
    uint64_t total = 1;
    for (int n = 0; n < nodes(); ++n) total *= uint64_t(option_count(n));
    return total;
}

std::vector<int> SearchSpace::encode(const nn::ArchitectureSpec& spec) const {
    if (int(spec.encoder_blocks.size()) != blocks)
        throw std::invalid_argument("encode: spec has " +
                                    std::to_string(spec.encoder_blocks.size()) +
                                    " blocks, space expects " + std::to_string(blocks));
    std::vector<int> actions;
    actions.reserve(nodes());
    auto find_index = [](auto& list, const auto& value, const char* what) {
        auto it = std::find(list.begin(), list.end(), value);
        if (it == list.end())
            throw std::invalid_argument(std::string("encode: ") + what + " not in search space");
        return int(it - list.begin());
    };
    for (const auto& b : spec.encoder_blocks) {
        actions.push_back(find_index(types, b.type, "block type"));
        actions.push_back(find_index(strides, b.stride, "stride"));
        actions.push_back(find_index(groups, b.groups, "group count"));
        actions.push_back(find_index(channels, b.out_channels, "channel count"));
        actions.push_back(
            find_index(kernels, std::make_pair(b.kernel_t, b.kernel_f), "kernel"));
    }
    return actions;
}

nn::ArchitectureSpec SearchSpace::decode(const std::vector<int>& actions) const {
    if (int(actions.size()) != nodes())
        throw std::invalid_argument("decode: expected " + std::to_string(nodes()) + " actions");
    for (int n = 0; n < nodes(); ++n)
        if (actions[n] < 0 || actions[n] >= option_count(n))
            throw std::invalid_argument("decode: action " + std::to_string(actions[n]) +
                                        " out of range at node " + std::to_string(n));
    nn::ArchitectureSpec spec;
    for (int b = 0; b < blocks; ++b) {
        const int* a = actions.data() + b * kNodesPerBlock;
        nn::BlockSpec s;
        s.type = types[a[0]];
        s.stride = strides[a[1]];
        s.groups = groups[a[2]];
        s.out_channels = channels[a[3]];
        s.kernel_t = kernels[a[4]].first;
        s.kernel_f = kernels[a[4]].second;
        spec.encoder_blocks.push_back(s);
    }
    return spec;
}

std::string SearchSpace::to_json() const {
    json j;
    j["blocks"] = blocks;
    for (auto t : types) j["types"].push_back(nn::block_type_name(t));
    j["strides"] = strides;
    j["groups"] = groups;
    j["channels"] = channels;
    for (auto& k : kernels) j["kernels"].push_back({k.first, k.second});
    return j.dump(2);
}

SearchSpace SearchSpace::from_json(const std::string& text) {
    json j = json::parse(text);
    SearchSpace s;
    if (j.contains("blocks")) s.blocks = j["blocks"].get<int>();
    if (j.contains("types")) {
        s.types.clear();
        for (const auto& t : j["types"])
            s.types.push_back(nn::block_type_from_name(t.get<std::string>()));
    }
    if (j.contains("strides")) s.strides = j["strides"].get<std::vector<int>>();
    if (j.contains("groups")) s.groups = j["groups"].get<std::vector<int>>();
    if (j.contains("channels")) s.channels = j["channels"].get<std::vector<int>>();
    if (j.contains("kernels")) {
        s.kernels.clear();
        for (const auto& k : j["kernels"]) s.kernels.emplace_back(k[0].get<int>(), k[1].get<int>());
    }
    if (s.blocks < 1 || s.types.empty() || s.strides.empty() || s.groups.empty() ||
        s.channels.empty() || s.kernels.empty())
        throw std::invalid_argument("search space has an empty option list");
    return s;
}

} // namespace ulse::nas
