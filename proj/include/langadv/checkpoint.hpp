#pragma once

#include <string>
#include <utility>
#include <vector>

#include "langadv/autodiff.hpp"
#include "langadv/encoder.hpp"

namespace langadv {

// Flat parameter archive. Byte layout (all integers and floats little-endian):
//   bytes 0..7    magic "LADVCKP1"
//   bytes 8..63   7 x u64: vocab_size, hidden, layers, heads, ffn_width, max_len, seed
//   bytes 64..71  u64 parameter count
//   per parameter:
//     u32 name length, name bytes (UTF-8),
//     u32 rank, rank x u64 extents,
//     numel x f64 values (row-major)
struct Checkpoint {
    EncoderConfig config;
    std::vector<std::pair<std::string, Tensor>> entries;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const EncoderConfig& config,
                     const std::vector<const Parameter*>& params);

Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into the given parameters by name; every
// parameter must be present with a matching shape.
void restore_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params);

}  // namespace langadv
