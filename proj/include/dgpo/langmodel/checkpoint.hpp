#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgpo/langmodel/model.hpp"

// Checkpoint file layout (all integers little-endian):
//
//   magic        8 bytes  "DGPOCKPT"
//   version      u32      kCheckpointVersion
//   vocab_size   u32
//   layers       u32
//   width        u32
//   heads        u32
//   context      u32
//   ffn_mult     u32
//   tensor_count u32
//   tensors, in model parameter order:
//     name_len u32, name bytes, group_len u32, group bytes,
//     rank u32, dims u64[rank], values f64[prod(dims)]
//   trailer      u64      FNV-1a of every preceding byte
namespace dgpo::langmodel {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kVersionMismatch, kCorrupt, kConfigMismatch };
  CheckpointError(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct CheckpointHeader {
  std::uint32_t version = 0;
  ModelConfig config;
  std::uint32_t tensor_count = 0;
};

void save_checkpoint(const PolicyModel& model, const std::string& path);

// Loads and validates a checkpoint. When expected_vocab is set, a file whose
// vocabulary size differs is rejected with kConfigMismatch.
PolicyModel load_checkpoint(const std::string& path,
                            std::optional<std::size_t> expected_vocab = std::nullopt);

// Reads only the fixed header.
CheckpointHeader inspect_checkpoint(const std::string& path);

// Writes/reads an arbitrary list of named tensors with the same framing
// (used for optimizer state).
void save_tensors(const std::string& path, const std::vector<std::string>& names,
                  const std::vector<std::vector<double>>& tensors);
std::vector<std::vector<double>> load_tensors(const std::string& path);

}  // namespace dgpo::langmodel
