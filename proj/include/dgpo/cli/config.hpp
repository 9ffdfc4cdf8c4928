#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgpo/distill/kd.hpp"
#include "dgpo/episode/episode.hpp"
#include "dgpo/langmodel/model.hpp"
#include "dgpo/rl/trainer.hpp"
#include "dgpo/world/world.hpp"

namespace dgpo::cli {

// Bad configuration value; `field()` is the dotted path of the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class Recipe { kDGPO, kPPO, kKD, kSeqKD, kGKD, kKDThenGKD, kPPOThenKD };

const char* recipe_name(Recipe r);
Recipe parse_recipe(const std::string& name);

struct ModelSize {
  std::size_t layers = 2;
  std::size_t width = 32;
  std::size_t heads = 2;
  std::size_t context = 256;
  std::size_t ffn_mult = 4;

  langmodel::ModelConfig to_config(std::size_t vocab_size) const;
};

struct TeacherConfig {
  // Empty: the scripted oracle teacher. Otherwise a trained teacher checkpoint.
  std::string checkpoint;
  double eta = 0.05;
};

struct GKDConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double max_grad_norm = 1.0;
};

// Ablation switches layered over the recipe defaults.
struct AblationFlags {
  std::optional<bool> cold_start;
  std::optional<rl::KLMode> kl_mode;
};

struct CheckpointPolicy {
  std::size_t every = 100;
  std::size_t keep_last = 3;
};

// Run defaults sized for a two-layer, 32-wide student on one CPU core.
episode::EpisodeBudget default_budget();
distill::KDConfig default_kd();
rl::RLConfig default_rl();

struct RunConfig {
  Recipe recipe = Recipe::kDGPO;
  std::uint64_t seed = 1;
  world::WorldSpec world;
  ModelSize model;
  TeacherConfig teacher;
  episode::EpisodeBudget budget = default_budget();
  distill::KDConfig kd = default_kd();
  rl::RLConfig rl = default_rl();
  GKDConfig gkd;
  AblationFlags ablation;
  CheckpointPolicy checkpoint;
  // Fixed leading slice of the training split used for validation EM.
  std::size_t val_size = 48;
  bool determinism = true;
  std::string output_dir;

  void validate() const;
};

// Full JSON rendering with every field present.
nlohmann::ordered_json to_json(const RunConfig& cfg);
// Overlays `overlay` on `base`. Unknown keys and ill-typed values raise
// ConfigError naming the key.
RunConfig apply_overlay(RunConfig base, const nlohmann::json& overlay);
RunConfig config_from_json(const nlohmann::json& j);
// Reads a JSON file and overlays it on the defaults.
RunConfig load_config(const std::string& path);

// Digest of the canonical JSON rendering, excluding output_dir.
std::string config_digest(const RunConfig& cfg);

// Parses "a.b.c=value" where value is JSON, or a bare string when it does
// not parse as JSON, into a nested overlay object.
nlohmann::json overlay_from_assignment(const std::string& assignment);

nlohmann::ordered_json world_spec_to_json(const world::WorldSpec& spec);
world::WorldSpec world_spec_from_json(const nlohmann::json& j);

// Build stamp recorded in every run directory.
std::string code_version();

}  // namespace dgpo::cli
