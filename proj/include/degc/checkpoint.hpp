#pragma once

#include <filesystem>
#include <string>

#include "degc/gcn.hpp"
#include "degc/stream_data.hpp"
#include "degc/temporal.hpp"

namespace degc {

/// Everything needed to resume or re-score a run. Embedding rows are keyed by
/// external ids on disk, so a checkpoint can be loaded against a fresh
/// vocabulary.
struct Checkpoint {
  GcnModel model;
  EmbeddingTable embeddings;
  TemporalAttention temporal;
  IdVocabulary users;
  IdVocabulary items;
  int segment = 0;
};

/// Binary layout, little-endian:
///   magic "DEGCCKPT", u32 version, u8 variant, i32 segment, i32 d, i32 K,
///   K x i32 widths, then per layer user and item matrices as row-major f64,
///   then known user rows and known item rows as (u32 len, bytes, d x f64),
///   then w_ta (d x f64) and history rows as (id, i32 last_seen, d x f64).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace degc
