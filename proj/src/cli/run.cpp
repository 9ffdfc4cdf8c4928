#include "dgpo/cli/run.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>

#include "dgpo/distill/kd.hpp"
#include "dgpo/langmodel/checkpoint.hpp"
#include "dgpo/rl/trainer.hpp"
#include "dgpo/util/hashing.hpp"
#include "dgpo/world/teacher.hpp"
#include "dgpo/world/text.hpp"

namespace dgpo::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

const char* phase_name(PhaseKind p) {
  switch (p) {
    case PhaseKind::kKD: return "kd";
    case PhaseKind::kRL: return "rl";
    case PhaseKind::kGKD: return "gkd";
  }
  return "unknown";
}

const char* run_status_name(RunStatus s) {
  switch (s) {
    case RunStatus::kCompleted: return "completed";
    case RunStatus::kCollapsed: return "collapsed";
    case RunStatus::kStopped: return "stopped";
  }
  return "unknown";
}

std::vector<Phase> recipe_phases(const RunConfig& cfg) {
  const auto& ab = cfg.ablation;
  auto kd = [](distill::KDMode m) { return Phase{PhaseKind::kKD, m, rl::KLMode::kNone}; };
  auto rl_phase = [&](rl::KLMode fallback) {
    return Phase{PhaseKind::kRL, distill::KDMode::kKD, ab.kl_mode.value_or(fallback)};
  };
  const Phase gkd{PhaseKind::kGKD, distill::KDMode::kGKD, rl::KLMode::kNone};
  std::vector<Phase> out;
  switch (cfg.recipe) {
    case Recipe::kDGPO:
      if (ab.cold_start.value_or(true)) out.push_back(kd(distill::KDMode::kKD));
      out.push_back(rl_phase(rl::KLMode::kSelectiveTeacher));
      break;
    case Recipe::kPPO:
      if (ab.cold_start.value_or(false)) out.push_back(kd(distill::KDMode::kKD));
      out.push_back(rl_phase(rl::KLMode::kUniformReference));
      break;
    case Recipe::kKD: out.push_back(kd(distill::KDMode::kKD)); break;
    case Recipe::kSeqKD: out.push_back(kd(distill::KDMode::kSeqKD)); break;
    case Recipe::kGKD: out.push_back(gkd); break;
    case Recipe::kKDThenGKD:
      out.push_back(kd(distill::KDMode::kKD));
      out.push_back(gkd);
      break;
    case Recipe::kPPOThenKD:
      out.push_back(rl_phase(rl::KLMode::kUniformReference));
      out.push_back(kd(distill::KDMode::kKD));
      break;
  }
  return out;
}

double greedy_em(const langmodel::PolicyModel& model, const world::World& world,
                 const std::vector<world::QAItem>& items, const episode::EpisodeBudget& budget) {
  if (items.empty()) return 0.0;
  const langmodel::ModelPolicy policy(model);
  episode::EpisodeOptions opts;
  opts.temperature = 0.0;
  double hits = 0.0;
  for (const auto& item : items) {
    const auto t = episode::run_episode(policy, world, item, budget, opts, 0);
    if (world::exact_match(t.answer, item.answer)) hits += 1.0;
  }
  return hits / static_cast<double>(items.size());
}

fs::path default_run_dir(const RunConfig& cfg) {
  const char* root = std::getenv("DGPO_OUTPUT_ROOT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  return base / (std::string(recipe_name(cfg.recipe)) + "-s" + std::to_string(cfg.seed) + "-" +
                 config_digest(cfg).substr(0, 8));
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RunError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return util::digest_hex(ss.str());
}

namespace {

// Everything besides model and optimizer tensors needed to resume.
struct RunState {
  std::size_t phase = 0;
  std::size_t step = 0;  // completed steps of the current phase
  std::uintmax_t metrics_offset = 0;
  std::optional<double> best_val;
  std::uint64_t optimizer_steps = 0;
  rl::RLProgress rl;
};

ordered_json state_to_json(const RunState& s) {
  ordered_json j;
  j["phase"] = s.phase;
  j["step"] = s.step;
  j["metrics_offset"] = s.metrics_offset;
  j["best_val"] = s.best_val ? ordered_json(*s.best_val) : ordered_json(nullptr);
  j["optimizer_steps"] = s.optimizer_steps;
  j["rl"] = {{"step", s.rl.step},
             {"peak_val_em", s.rl.peak_val_em},
             {"collapse_step", s.rl.collapse_step ? ordered_json(*s.rl.collapse_step) : ordered_json(nullptr)}};
  return j;
}

RunState state_from_json(const json& j) {
  RunState s;
  s.phase = j.at("phase").get<std::size_t>();
  s.step = j.at("step").get<std::size_t>();
  s.metrics_offset = j.at("metrics_offset").get<std::uintmax_t>();
  if (!j.at("best_val").is_null()) s.best_val = j.at("best_val").get<double>();
  s.optimizer_steps = j.at("optimizer_steps").get<std::uint64_t>();
  const auto& r = j.at("rl");
  s.rl.step = r.at("step").get<std::size_t>();
  s.rl.peak_val_em = r.at("peak_val_em").get<double>();
  if (!r.at("collapse_step").is_null()) s.rl.collapse_step = r.at("collapse_step").get<std::size_t>();
  return s;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RunError("cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw RunError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RunError("cannot write '" + tmp.string() + "'");
    out << text;
    if (!out) throw RunError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void save_optimizer(const numerics::Adam& adam, const fs::path& path) {
  std::vector<std::string> names;
  std::vector<std::vector<double>> tensors;
  for (std::size_t i = 0; i < adam.first_moments().size(); ++i) {
    names.push_back("m" + std::to_string(i));
    tensors.push_back(adam.first_moments()[i]);
  }
  for (std::size_t i = 0; i < adam.second_moments().size(); ++i) {
    names.push_back("v" + std::to_string(i));
    tensors.push_back(adam.second_moments()[i]);
  }
  langmodel::save_tensors(path.string(), names, tensors);
}

void load_optimizer(numerics::Adam& adam, const fs::path& path, std::uint64_t steps) {
  auto tensors = langmodel::load_tensors(path.string());
  if (tensors.size() % 2 != 0) throw RunError("optimizer state '" + path.string() + "' is malformed");
  const std::size_t half = tensors.size() / 2;
  std::vector<std::vector<double>> m(std::make_move_iterator(tensors.begin()),
                                     std::make_move_iterator(tensors.begin() + static_cast<std::ptrdiff_t>(half)));
  std::vector<std::vector<double>> v(std::make_move_iterator(tensors.begin() + static_cast<std::ptrdiff_t>(half)),
                                     std::make_move_iterator(tensors.end()));
  adam.restore(steps, std::move(m), std::move(v));
}

std::string checkpoint_name(std::size_t phase, std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%02zu-s%07zu", phase, step);
  return buf;
}

std::vector<fs::path> checkpoint_dirs(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "state.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

class Run {
 public:
  Run(const RunConfig& cfg, const world::World& world, fs::path dir, const TrainOptions& options)
      : cfg_(cfg), world_(world), layout_{std::move(dir)}, options_(options),
        phases_(recipe_phases(cfg)),
        val_items_(world.train().begin(),
                   world.train().begin() + static_cast<std::ptrdiff_t>(std::min(cfg.val_size, world.train().size()))) {
    cfg_.rl.budget = cfg_.budget;
  }

  RunResult execute();

 private:
  void log(const std::string& line) {
    if (options_.log) *options_.log << line << std::endl;
  }
  double validate(const langmodel::PolicyModel& m) const { return greedy_em(m, world_, val_items_, cfg_.budget); }
  void emit(ordered_json line);
  void note_val(double val);
  void save_checkpoint(const numerics::Adam* adam);
  void write_manifest(const std::string& status, const RunResult* result);
  const langmodel::Policy& teacher();
  bool budget_exhausted() const {
    return options_.stop_after_steps && steps_this_call_ >= *options_.stop_after_steps;
  }

  // Each returns false when the run must stop early (collapse or step cap).
  bool run_kd(const Phase& phase);
  bool run_rl(const Phase& phase);
  bool run_gkd();

  RunConfig cfg_;
  const world::World& world_;
  RunLayout layout_;
  TrainOptions options_;
  std::vector<Phase> phases_;
  std::vector<world::QAItem> val_items_;

  std::unique_ptr<langmodel::PolicyModel> student_;
  std::unique_ptr<langmodel::PolicyModel> teacher_model_;
  std::unique_ptr<langmodel::Policy> teacher_;
  RunState state_;
  std::optional<fs::path> resume_from_;
  std::unique_ptr<std::ofstream> metrics_;
  std::size_t steps_this_call_ = 0;
  bool collapsed_ = false;
};

const langmodel::Policy& Run::teacher() {
  if (!teacher_) {
    if (cfg_.teacher.checkpoint.empty()) {
      teacher_ = std::make_unique<world::OracleTeacher>(world_, cfg_.teacher.eta);
    } else {
      teacher_model_ = std::make_unique<langmodel::PolicyModel>(
          langmodel::load_checkpoint(cfg_.teacher.checkpoint, world_.vocabulary().size()));
      teacher_ = std::make_unique<langmodel::ModelPolicy>(*teacher_model_);
    }
  }
  return *teacher_;
}

void Run::emit(ordered_json line) {
  *metrics_ << line.dump() << '\n';
  metrics_->flush();
  if (!*metrics_) throw RunError("write failed for '" + layout_.metrics().string() + "'");
}

void Run::note_val(double val) {
  if (!state_.best_val || val > *state_.best_val) {
    state_.best_val = val;
    langmodel::save_checkpoint(*student_, layout_.best().string());
  }
}

void Run::save_checkpoint(const numerics::Adam* adam) {
  metrics_->flush();
  state_.metrics_offset = fs::file_size(layout_.metrics());
  state_.optimizer_steps = adam ? adam->steps() : 0;
  const fs::path dir = layout_.checkpoints() / checkpoint_name(state_.phase, state_.step);
  fs::create_directories(dir);
  langmodel::save_checkpoint(*student_, (dir / "model.ckpt").string());
  if (adam) save_optimizer(*adam, dir / "optimizer.bin");
  write_text(dir / "state.json", state_to_json(state_).dump(2) + "\n");
  auto dirs = checkpoint_dirs(layout_.checkpoints());
  while (dirs.size() > cfg_.checkpoint.keep_last) {
    fs::remove_all(dirs.front());
    dirs.erase(dirs.begin());
  }
}

void Run::write_manifest(const std::string& status, const RunResult* result) {
  ordered_json j;
  j["v"] = 1;
  j["kind"] = "run";
  j["recipe"] = recipe_name(cfg_.recipe);
  j["config_digest"] = config_digest(cfg_);
  j["seeds"] = {{"run", cfg_.seed}, {"world", cfg_.world.seed}};
  j["code_version"] = code_version();
  j["world_digest"] = world_.digest();
  auto phases = ordered_json::array();
  for (const auto& p : phases_) phases.push_back(phase_name(p.kind));
  j["phases"] = phases;
  j["status"] = status;
  if (result) {
    j["test_em"] = result->test_em;
    j["final_digest"] = result->final_digest;
    j["collapse_step"] = result->collapse_step ? ordered_json(*result->collapse_step) : ordered_json(nullptr);
  }
  write_text(layout_.manifest(), j.dump(2) + "\n");
}

bool Run::run_kd(const Phase& phase) {
  auto kc = cfg_.kd;
  kc.mode = phase.kd_mode;
  log("[kd] collecting teacher outputs");
  const auto tgo = distill::collect_tgos(teacher(), world_, world_.train(), cfg_.budget, kc.filter_correct, 0.0,
                                         cfg_.seed);
  log("[kd] retained " + std::to_string(tgo.retained().size()) + " of " + std::to_string(tgo.trajectories.size()));
  distill::ValidationFn vfn;
  if (!val_items_.empty()) vfn = [this](const langmodel::PolicyModel& m) { return validate(m); };
  const auto history = distill::train_cold_start(*student_, teacher(), tgo, kc, cfg_.seed, vfn);
  for (const auto& m : history) {
    ordered_json line;
    line["phase"] = "kd";
    line["step"] = m.epoch;
    line["loss"] = m.loss;
    line["ce"] = m.ce;
    line["kl"] = m.kl;
    if (m.val_em) line["val_em"] = *m.val_em;
    emit(std::move(line));
    if (m.val_em) note_val(*m.val_em);
    std::ostringstream msg;
    msg << "[kd] epoch " << m.epoch << " loss " << m.loss << (m.val_em ? " val_em " + std::to_string(*m.val_em) : "");
    log(msg.str());
  }
  return true;
}

bool Run::run_rl(const Phase& phase) {
  auto rc = cfg_.rl;
  rc.ppo.kl_mode = phase.kl_mode;
  std::unique_ptr<langmodel::PolicyModel> reference;
  if (phase.kl_mode == rl::KLMode::kUniformReference) {
    if (state_.step == 0) langmodel::save_checkpoint(*student_, layout_.reference().string());
    reference = std::make_unique<langmodel::PolicyModel>(langmodel::load_checkpoint(layout_.reference().string()));
  }
  const bool needs_teacher =
      phase.kl_mode == rl::KLMode::kSelectiveTeacher || phase.kl_mode == rl::KLMode::kUniformTeacher;
  rl::EvalFn vfn;
  if (!val_items_.empty()) vfn = [this](const langmodel::PolicyModel& m) { return validate(m); };
  rl::RLTrainer trainer(*student_, needs_teacher ? &teacher() : nullptr, reference.get(), world_, world_.train(), rc,
                        cfg_.seed, vfn);
  if (state_.step > 0) {
    trainer.restore(state_.rl);
    load_optimizer(trainer.optimizer(), *resume_from_ / "optimizer.bin", state_.optimizer_steps);
  }
  while (!trainer.finished()) {
    const auto rec = trainer.step();
    state_.step = rec.step;
    state_.rl = trainer.progress();
    ++steps_this_call_;
    ordered_json line;
    line["phase"] = "rl";
    line["step"] = rec.step;
    line["reward"] = rec.reward;
    line["em"] = rec.em;
    line["kl_penalty"] = rec.kl_penalty;
    line["clip_fraction"] = rec.update.clip_fraction;
    line["approx_kl"] = rec.update.approx_kl;
    line["surrogate"] = rec.update.surrogate;
    line["value_loss"] = rec.update.value_loss;
    line["grad_norm"] = rec.update.grad_norm;
    line["search_steps"] = rec.search_steps;
    line["response_tokens"] = rec.response_tokens;
    if (rec.val_em) line["val_em"] = *rec.val_em;
    if (rec.initial_val_em) line["initial_val_em"] = *rec.initial_val_em;
    if (rec.collapsed) line["collapsed"] = 1;
    emit(std::move(line));
    if (rec.val_em) {
      note_val(*rec.val_em);
      std::ostringstream msg;
      msg << "[rl] step " << rec.step << " reward " << rec.reward << " val_em " << *rec.val_em;
      log(msg.str());
    }
    if (rec.collapsed) {
      collapsed_ = true;
      log("[rl] collapse detected at step " + std::to_string(rec.step));
      save_checkpoint(&trainer.optimizer());
      return false;
    }
    if (rec.step % cfg_.checkpoint.every == 0 || budget_exhausted()) save_checkpoint(&trainer.optimizer());
    if (budget_exhausted() && !trainer.finished()) return false;
  }
  return true;
}

bool Run::run_gkd() {
  const auto& g = cfg_.gkd;
  numerics::Adam adam({0.9, 0.999, 1e-8, {{"actor", g.learning_rate}}});
  if (state_.step > 0) load_optimizer(adam, *resume_from_ / "optimizer.bin", state_.optimizer_steps);
  const auto& pool = world_.train();
  while (state_.step < g.steps) {
    const std::size_t s = state_.step + 1;
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(util::mix_seed(cfg_.seed, 0x676b64, s));
    std::vector<world::QAItem> batch;
    for (std::size_t i = 0; i < std::min(g.batch_size, idx.size()); ++i) {
      std::swap(idx[i], idx[i + rng() % (idx.size() - i)]);
      batch.push_back(pool[idx[i]]);
    }
    const auto m = distill::gkd_step(*student_, adam, teacher(), world_, batch, cfg_.budget, g.max_grad_norm,
                                     util::mix_seed(cfg_.seed, 0x676b, s));
    state_.step = s;
    ++steps_this_call_;
    ordered_json line;
    line["phase"] = "gkd";
    line["step"] = s;
    line["loss"] = m.loss;
    line["grad_norm"] = m.grad_norm;
    line["reward"] = m.mean_reward;
    const std::size_t every = cfg_.rl.eval_every;
    if (!val_items_.empty() && every > 0 && (s % every == 0 || s == g.steps)) {
      const double v = validate(*student_);
      line["val_em"] = v;
      note_val(v);
      log("[gkd] step " + std::to_string(s) + " val_em " + std::to_string(v));
    }
    emit(std::move(line));
    if (s % cfg_.checkpoint.every == 0 || budget_exhausted()) save_checkpoint(&adam);
    if (budget_exhausted() && state_.step < g.steps) return false;
  }
  return true;
}

RunResult Run::execute() {
  const std::string digest = config_digest(cfg_);
  RunResult result;
  result.run_dir = layout_.dir;

  fs::create_directories(layout_.dir);
  if (fs::exists(layout_.manifest())) {
    const auto manifest = read_json(layout_.manifest());
    if (manifest.value("config_digest", "") != digest) {
      throw RunError("run directory '" + layout_.dir.string() + "' holds a run with config digest " +
                     manifest.value("config_digest", "?") + ", not " + digest);
    }
    const std::string status = manifest.value("status", "");
    if (status == "completed" || status == "collapsed") {
      result.status = status == "completed" ? RunStatus::kCompleted : RunStatus::kCollapsed;
      result.test_em = manifest.at("test_em").get<double>();
      result.final_digest = manifest.at("final_digest").get<std::string>();
      if (!manifest.at("collapse_step").is_null()) result.collapse_step = manifest.at("collapse_step").get<std::size_t>();
      result.resumed = true;
      return result;
    }
    const auto dirs = checkpoint_dirs(layout_.checkpoints());
    if (!dirs.empty()) resume_from_ = dirs.back();
  }

  const auto model_cfg = cfg_.model.to_config(world_.vocabulary().size());
  if (resume_from_) {
    state_ = state_from_json(read_json(*resume_from_ / "state.json"));
    student_ = std::make_unique<langmodel::PolicyModel>(
        langmodel::load_checkpoint((*resume_from_ / "model.ckpt").string(), world_.vocabulary().size()));
    if (!fs::exists(layout_.metrics())) throw RunError("resume: metrics log is missing");
    fs::resize_file(layout_.metrics(), state_.metrics_offset);
    result.resumed = true;
    log("[run] resuming from " + resume_from_->filename().string());
  } else {
    fs::remove_all(layout_.checkpoints());
    write_text(layout_.config(), to_json(cfg_).dump(2) + "\n");
    std::ofstream(layout_.metrics(), std::ios::trunc);
    student_ = std::make_unique<langmodel::PolicyModel>(model_cfg, cfg_.seed);
  }
  write_manifest("running", nullptr);
  metrics_ = std::make_unique<std::ofstream>(layout_.metrics(), std::ios::binary | std::ios::app);
  if (!*metrics_) throw RunError("cannot open '" + layout_.metrics().string() + "'");

  if (!resume_from_) save_checkpoint(nullptr);
  bool stopped = false;
  while (state_.phase < phases_.size()) {
    const Phase& phase = phases_[state_.phase];
    log(std::string("[run] phase ") + phase_name(phase.kind));
    bool done = true;
    switch (phase.kind) {
      case PhaseKind::kKD: done = run_kd(phase); break;
      case PhaseKind::kRL: done = run_rl(phase); break;
      case PhaseKind::kGKD: done = run_gkd(); break;
    }
    if (collapsed_) break;
    if (!done) {
      stopped = true;
      break;
    }
    ++state_.phase;
    state_.step = 0;
    state_.rl = {};
    save_checkpoint(nullptr);
  }
  metrics_->flush();

  if (stopped) {
    result.status = RunStatus::kStopped;
    write_manifest("stopped", nullptr);
    return result;
  }

  langmodel::save_checkpoint(*student_, layout_.final_model().string());
  result.final_digest = file_digest(layout_.final_model());
  result.test_em = greedy_em(*student_, world_, world_.test(), cfg_.budget);
  ordered_json line;
  line["phase"] = "test";
  line["step"] = 0;
  line["em"] = result.test_em;
  emit(std::move(line));
  if (collapsed_) {
    result.status = RunStatus::kCollapsed;
    result.collapse_step = state_.rl.collapse_step;
  }
  write_manifest(run_status_name(result.status), &result);
  log("[run] test_em " + std::to_string(result.test_em));
  return result;
}

}  // namespace

RunResult run_training(const RunConfig& cfg, const world::World& world, const fs::path& run_dir,
                       const TrainOptions& options) {
  cfg.validate();
  return Run(cfg, world, run_dir, options).execute();
}

}  // namespace dgpo::cli
