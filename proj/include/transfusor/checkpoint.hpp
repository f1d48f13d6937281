#pragma once
// Binary model checkpoints.
//
//   "TRSF" | u32 version | u32 kind | u32 metadata bytes | metadata text
//   | u32 entry count | entries | u64 FNV-1a of everything before it
//   entry: u32 name bytes | name | u32 rank | u32 extents[rank] | f32 values
//
// All integers and floats little-endian. Parameters are computed in double
// and stored rounded to float.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "transfusor/config.hpp"
#include "transfusor/cvae.hpp"
#include "transfusor/diffusion.hpp"
#include "transfusor/tensor.hpp"

namespace transfusor {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind : std::uint32_t { kTransfusor = 0, kCvae = 1 };
std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);  // UsageError

struct StoredArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  ModelKind kind = ModelKind::kTransfusor;
  KeyValues metadata;
  std::vector<StoredArray> arrays;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
// CheckpointError on bad magic, unknown version or kind, truncation or a
// checksum mismatch.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Model <-> checkpoint. `extra` metadata (seed, corpus fingerprint, ...) is
// appended after the architecture, schedule and normalization keys.
Checkpoint make_checkpoint(const diffusion::TransfusorModel& model, const KeyValues& extra = {});
Checkpoint make_checkpoint(const cvae::CvaeModel& model, const KeyValues& extra = {});
// CheckpointError on a kind mismatch or when stored arrays do not match the
// architecture named in the metadata.
diffusion::TransfusorModel restore_transfusor(const Checkpoint& checkpoint);
cvae::CvaeModel restore_cvae(const Checkpoint& checkpoint);

// Metadata key under which commands record the training corpus fingerprint.
inline constexpr std::string_view kCorpusFingerprintKey = "corpus_fingerprint";

}  // namespace transfusor
