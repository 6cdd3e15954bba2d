#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rondo/network.hpp"
#include "rondo/sim.hpp"

namespace rondo {

// Everything needed to resume or evaluate a policy. On disk: the 8-byte magic
// "RONDOCKP", a little-endian u32 format version, a u64 header length, a JSON
// header, then the parameters and the optimiser state as raw doubles.
struct Checkpoint {
  AgentRole role = AgentRole::Active;
  NetworkShape shape;
  std::vector<double> params;
  std::vector<double> optimizer;  // RMSProp mean squares; may be empty
  std::uint64_t version = 0;
  std::uint64_t master_seed = 0;
  double validation_reaches = -1.0;  // < 0 when never validated
  double validation_steps = 0.0;
  std::map<std::string, std::int64_t> counters;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointFormat = 1;

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& file);

// FNV-1a over the file bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& file);

}  // namespace rondo
