#pragma once

#include <string>
#include <utility>

#include "srm/model.hpp"
#include "srm/tensor.hpp"

namespace srm {

// Checkpoint layout: "<prefix>.manifest" (text) + "<prefix>.bin" (little-endian
// float64 blob, arrays in manifest order). Round-trips are bit-exact.
void save_checkpoint(const ModelConfig& config, const ParamStore& params,
                     const std::string& prefix);

std::pair<ModelConfig, ParamStore> load_checkpoint(const std::string& prefix);

// Load into existing parameters; shapes must match exactly (error names the
// first mismatched array).
void load_checkpoint_into(ParamStore& params, const std::string& prefix);

}  // namespace srm
