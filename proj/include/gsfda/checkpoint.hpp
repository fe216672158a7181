#pragma once

#include <optional>
#include <string>

#include "gsfda/pipeline.hpp"

namespace gsfda {

// Checkpoint file: little-endian binary, a flat key -> tensor store.
//   magic "GSFDACKP" (8 bytes), u32 version, u32 entry count, then per entry
//   u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64 values.
// Every network tensor, BN statistic, attention embedding and (optionally)
// the domain classifier round-trips bit-exact.
constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ModelState& model,
                     const DomainClassifier* dc = nullptr);

struct Checkpoint {
  ModelState model;
  std::optional<DomainClassifier> dc;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace gsfda
