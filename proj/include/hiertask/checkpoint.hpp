#pragma once

#include <filesystem>

#include "hiertask/network.hpp"

namespace hiertask {

/// Flat binary checkpoint: magic "HTMT1", a length-prefixed JSON manifest
/// (mode, encoder spec, dropout, class counts, taxonomy hash, tensor shapes),
/// then the parameter tensors as little-endian float64 in declaration order.
void save_checkpoint(MtlNetwork& net, const std::filesystem::path& path);

struct CheckpointManifest {
    MtlNetworkConfig config;
    std::size_t make_count = 0;
    std::size_t model_count = 0;
    std::uint64_t taxonomy_hash = 0;
    std::vector<std::vector<std::size_t>> param_shapes;
};

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& path);

/// Rebuilds the network for the given taxonomy and loads the stored
/// parameters. The taxonomy must hash to the value recorded at save time.
MtlNetwork load_checkpoint(const std::filesystem::path& path, const Taxonomy& taxonomy);

}  // namespace hiertask
