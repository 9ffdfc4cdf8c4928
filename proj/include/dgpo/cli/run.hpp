#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dgpo/cli/config.hpp"
#include "dgpo/langmodel/model.hpp"
#include "dgpo/world/world.hpp"

namespace dgpo::cli {

// Raised when training cannot start or continue (missing world, bad
// checkpoint, mismatched resume state).
class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PhaseKind { kKD, kRL, kGKD };

const char* phase_name(PhaseKind p);

struct Phase {
  PhaseKind kind = PhaseKind::kKD;
  distill::KDMode kd_mode = distill::KDMode::kKD;
  rl::KLMode kl_mode = rl::KLMode::kSelectiveTeacher;
};

// Ordered phases of a recipe after ablation flags are applied.
std::vector<Phase> recipe_phases(const RunConfig& cfg);

enum class RunStatus { kCompleted, kCollapsed, kStopped };

const char* run_status_name(RunStatus s);

struct RunResult {
  RunStatus status = RunStatus::kCompleted;
  std::filesystem::path run_dir;
  double test_em = 0.0;
  std::string final_digest;  // digest of final.ckpt contents
  std::optional<std::size_t> collapse_step;
  bool resumed = false;
};

// Files inside a run directory.
struct RunLayout {
  std::filesystem::path dir;
  std::filesystem::path config() const { return dir / "config.json"; }
  std::filesystem::path manifest() const { return dir / "run.json"; }
  std::filesystem::path metrics() const { return dir / "metrics.jsonl"; }
  std::filesystem::path checkpoints() const { return dir / "checkpoints"; }
  std::filesystem::path reference() const { return dir / "reference.ckpt"; }
  std::filesystem::path best() const { return dir / "best.ckpt"; }
  std::filesystem::path final_model() const { return dir / "final.ckpt"; }
};

struct TrainOptions {
  // Stop after this many optimizer steps in the current invocation, leaving
  // a resumable checkpoint behind. Used to exercise resume.
  std::optional<std::size_t> stop_after_steps;
  // Progress lines go here when set.
  std::ostream* log = nullptr;
};

// Runs the configured recipe inside `run_dir`. An existing run directory
// with a matching config digest and an unfinished status is resumed from
// its latest checkpoint; a digest mismatch raises RunError.
RunResult run_training(const RunConfig& cfg, const world::World& world,
                       const std::filesystem::path& run_dir, const TrainOptions& options = {});

// Greedy exact-match rate over `items`.
double greedy_em(const langmodel::PolicyModel& model, const world::World& world,
                 const std::vector<world::QAItem>& items, const episode::EpisodeBudget& budget);

// Default directory for a run: $DGPO_OUTPUT_ROOT (or ./runs) joined with
// "<recipe>-s<seed>-<digest>".
std::filesystem::path default_run_dir(const RunConfig& cfg);

// Digest of the raw bytes of a file.
std::string file_digest(const std::filesystem::path& path);

}  // namespace dgpo::cli
