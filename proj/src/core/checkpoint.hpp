#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "core/nn.hpp"
#include "core/objectives.hpp"

namespace mrct {

// Architecture of one serialized network, enough to rebuild it exactly.
struct NetSpec {
    std::string name;   // g_a, d_a, g_b, d_bu, d_bc
    std::string kind;   // unet | patchgan
    int in_channels = 1;
    int out_channels = 1; // unet only
    int base_width = 32;
    int depth = 5;    // unet only
    int n_layers = 3; // patchgan only
};

// Versioned training snapshot: parameters, Adam moments and the rng states
// needed to continue the exact trajectory. Blobs are raw little-endian f64 in
// the order params, adam_m, adam_v per net, nets in header order.
struct Checkpoint {
    int version = 1;
    ModelKind model = ModelKind::pixmc;
    std::uint64_t seed = 0;
    std::string config_hash;
    int epoch = 0; // fully completed epochs
    int iter = 0;  // completed iterations inside epoch+1 (0 at an epoch boundary)
    std::uint64_t loader_rng_state = 0;
    std::uint64_t route_rng_state = 0;
    std::vector<NetSpec> nets;
    std::vector<std::vector<double>> params;
    std::vector<std::uint64_t> adam_t;
    std::vector<std::vector<double>> adam_m;
    std::vector<std::vector<double>> adam_v;
};

// Atomic: writes a temp file in the target directory, then renames.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<double> flatten_parameters(Net& net);
void load_parameters(Net& net, const std::vector<double>& flat);

} // namespace mrct
