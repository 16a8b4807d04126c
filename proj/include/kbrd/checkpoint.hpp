// Binary model checkpoints.
//
// Layout (little-endian):
//   "KBRDCKPT"  u32 version  u64 header_bytes  header JSON
//   f64 payload for every tensor listed in the header, in order
//   u64 FNV-1a checksum of every preceding byte
//
// The header carries the model config, vocabulary, graph and alias lexicon,
// so a checkpoint alone is enough to serve the model.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbrd/model.hpp"
#include "kbrd/optim.hpp"

namespace kbrd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointVersionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointIntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimizerState {
  std::uint64_t steps = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> m, v;
};

struct LoadedCheckpoint {
  KbrdModel model;
  std::optional<OptimizerState> optimizer;
  std::uint64_t checksum = 0;
};

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);

std::vector<unsigned char> serialize_checkpoint(const KbrdModel& model, const Adam* optimizer = nullptr);
LoadedCheckpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes);

/// Writes to a temporary file and renames it over `path`.
void save_checkpoint(const std::string& path, const KbrdModel& model, const Adam* optimizer = nullptr);
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Copies saved moments into an optimizer built for the same model.
void restore_optimizer(Adam& optimizer, const OptimizerState& state);

}  // namespace kbrd
