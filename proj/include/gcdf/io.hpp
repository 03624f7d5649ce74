#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcdf/dimred.hpp"
#include "gcdf/gcdformer.hpp"
#include "gcdf/synthgen.hpp"

namespace gcdf {

inline constexpr std::uint16_t kGcdvVersion = 1;
inline constexpr std::uint16_t kGcdtVersion = 1;
inline constexpr std::uint16_t kCheckpointVersion = 1;

// Feature file contents: the matrix plus its per-row sidecar records.
struct FeatureRecord {
  FeatureMatrix features;
  std::vector<i64> labels;
  std::vector<std::uint8_t> observed;
};

// GCDV: "GCDV" | version u16 | n u32 | d u32 | n*d f32, all little-endian.
// The sidecar `<path>.labels` holds one "<label> <observed>" line per row.
void write_gcdv(const std::string& path, const FeatureRecord& rec);
FeatureRecord read_gcdv(const std::string& path);

// GCDT: "GCDT" | version u16 | n u32 | d u32 | n*d f64 | n x (label i64,
// observed u8), little-endian. Round-trips a GcdTask bit-exactly.
void write_gcdt(const std::string& path, const GcdTask& task);
GcdTask read_gcdt(const std::string& path);

// Checkpoint: "GCDF-CKPT" | version u16 | model config | completed steps u64 |
// parameter tensors | optimizer section (present iff saved mid-training state
// is wanted; load restores it when present, enabling bit-exact resume).
void save_checkpoint(const std::string& path, const Trainer& trainer, bool with_optimizer = true);
Trainer load_checkpoint(const std::string& path);

}  // namespace gcdf
