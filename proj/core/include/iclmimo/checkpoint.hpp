// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "iclmimo/icl_model.hpp"

namespace iclmimo {

// Binary tensor container: magic "ICLCKPT1", u32 version, then one record
// per tensor {u32 name length, name bytes, u32 rank, u64 dims, f64 payload},
// all little-endian. Serialization is bitwise, so save/load round-trips are
// byte-identical.
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

// Replaces the model's parameters with the checkpoint's, matching by name
// and validating every shape against the current configuration.
void load_into_model(IclModel& model, const std::string& path);

}  // namespace iclmimo
