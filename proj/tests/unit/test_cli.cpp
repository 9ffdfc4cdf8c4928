#include <doctest.h>

#include <fstream>
#include <sstream>

#include "dgpo/cli/config.hpp"
#include "dgpo/cli/export.hpp"
#include "dgpo/cli/run.hpp"
#include "dgpo/langmodel/checkpoint.hpp"
#include "support/tmpdir.hpp"

using namespace dgpo::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const dgpo::world::World& small_world() {
  static const dgpo::world::World w = [] {
    dgpo::world::WorldSpec spec;
    spec.seed = 3;
    spec.entity_count = 40;
    return dgpo::world::generate_world(spec);
  }();
  return w;
}

RunConfig tiny(Recipe recipe) {
  RunConfig c;
  c.recipe = recipe;
  c.seed = 5;
  c.world = small_world().spec();
  c.model.layers = 1;
  c.model.width = 16;
  c.model.context = 192;
  c.budget.max_total_length = 192;
  c.kd.epochs = 2;
  c.rl.steps = 6;
  c.rl.eval_every = 3;
  c.rl.ppo.rollout_batch = 4;
  c.rl.ppo.minibatch_size = 4;
  c.gkd.steps = 4;
  c.gkd.batch_size = 3;
  c.val_size = 6;
  c.checkpoint.every = 2;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> phases_of(const fs::path& metrics) {
  std::vector<std::string> out;
  for (const auto& r : read_metrics(metrics))
    if (out.empty() || out.back() != r.phase) out.push_back(r.phase);
  return out;
}

}  // namespace

TEST_CASE("recipes expand into their phase schedules") {
  auto names = [](const RunConfig& c) {
    std::vector<std::string> out;
    for (const auto& p : recipe_phases(c)) out.push_back(phase_name(p.kind));
    return out;
  };
  RunConfig c;
  c.recipe = Recipe::kDGPO;
  CHECK(names(c) == std::vector<std::string>{"kd", "rl"});
  CHECK(recipe_phases(c)[1].kl_mode == dgpo::rl::KLMode::kSelectiveTeacher);
  c.ablation.cold_start = false;
  CHECK(names(c) == std::vector<std::string>{"rl"});
  c.recipe = Recipe::kPPO;
  c.ablation = {};
  CHECK(names(c) == std::vector<std::string>{"rl"});
  CHECK(recipe_phases(c)[0].kl_mode == dgpo::rl::KLMode::kUniformReference);
  c.ablation.cold_start = true;
  CHECK(names(c) == std::vector<std::string>{"kd", "rl"});
  c.ablation = {};
  c.recipe = Recipe::kDGPO;
  c.ablation.kl_mode = dgpo::rl::KLMode::kUniformTeacher;
  CHECK(recipe_phases(c)[1].kl_mode == dgpo::rl::KLMode::kUniformTeacher);
  c.ablation = {};
  c.recipe = Recipe::kSeqKD;
  CHECK(recipe_phases(c)[0].kd_mode == dgpo::distill::KDMode::kSeqKD);
  c.recipe = Recipe::kKDThenGKD;
  CHECK(names(c) == std::vector<std::string>{"kd", "gkd"});
  c.recipe = Recipe::kPPOThenKD;
  CHECK(names(c) == std::vector<std::string>{"rl", "kd"});
  c.recipe = Recipe::kGKD;
  CHECK(names(c) == std::vector<std::string>{"gkd"});
}

TEST_CASE("recipe names round-trip and unknown names are rejected") {
  for (auto r : {Recipe::kDGPO, Recipe::kPPO, Recipe::kKD, Recipe::kSeqKD, Recipe::kGKD, Recipe::kKDThenGKD,
                 Recipe::kPPOThenKD})
    CHECK(parse_recipe(recipe_name(r)) == r);
  try {
    parse_recipe("grpo");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "recipe");
  }
}

TEST_CASE("the default config is valid and survives a JSON round trip") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  c.ablation.kl_mode = dgpo::rl::KLMode::kUniformReference;
  c.ablation.cold_start = false;
  c.kd.em_threshold = 0.5;
  c.rl.ppo.beta = 0.25;
  const auto j = json::parse(to_json(c).dump());
  const auto back = config_from_json(j);
  CHECK(to_json(back) == to_json(c));
  CHECK(config_digest(back) == config_digest(c));
}

TEST_CASE("overlays reject unknown keys and ill-typed values by field name") {
  auto field_of = [](const json& overlay) {
    try {
      apply_overlay(RunConfig{}, overlay);
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  CHECK(field_of(json::parse(R"({"ppo":{"betta":0.1}})")) == "ppo.betta");
  CHECK(field_of(json::parse(R"({"nonsense":1})")) == "nonsense");
  CHECK(field_of(json::parse(R"({"kd":{"epochs":"ten"}})")) == "kd.epochs");
  CHECK(field_of(json::parse(R"({"ablation":{"kl_mode":"sideways"}})")) == "ablation.kl_mode");
  CHECK(field_of(json::parse(R"({"world":{"relations":["likes_cheese"]}})")) == "world.relations");
  CHECK(field_of(json::parse(R"({"ppo":{"beta":0.5}})")) == "<none>");

  RunConfig bad;
  bad.world.entity_count = 0;
  try {
    bad.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field().rfind("world.", 0) == 0);
  }
  RunConfig small_ctx;
  small_ctx.model.context = 64;
  try {
    small_ctx.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "model.context");
  }
}

TEST_CASE("assignments become nested overlays and later layers win") {
  CHECK(overlay_from_assignment("ppo.beta=0.01") == json::parse(R"({"ppo":{"beta":0.01}})"));
  CHECK(overlay_from_assignment("recipe=ppo") == json::parse(R"({"recipe":"ppo"})"));
  CHECK(overlay_from_assignment("ablation.cold_start=false") == json::parse(R"({"ablation":{"cold_start":false}})"));
  CHECK_THROWS_AS(overlay_from_assignment("no_equals_sign"), ConfigError);
  auto c = apply_overlay(RunConfig{}, json::parse(R"({"recipe":"kd","ppo":{"beta":0.5}})"));
  c = apply_overlay(c, overlay_from_assignment("ppo.beta=0.01"));
  CHECK(c.recipe == Recipe::kKD);
  CHECK(c.rl.ppo.beta == 0.01);
}

TEST_CASE("the config digest ignores the output directory only") {
  RunConfig a, b;
  b.output_dir = "/elsewhere";
  CHECK(config_digest(a) == config_digest(b));
  b.seed = 2;
  CHECK(config_digest(a) != config_digest(b));
  CHECK_FALSE(code_version().empty());
}

TEST_CASE("metric export handles empty, single and compared logs") {
  CHECK(metrics_to_csv({}) == "phase,step\n");
  const auto a = parse_metrics(
      "{\"phase\":\"kd\",\"step\":1,\"loss\":2.5}\n"
      "{\"phase\":\"rl\",\"step\":1,\"em\":0.5,\"reward\":0.5}\n"
      "{\"phase\":\"rl\",\"step\":2,\"em\":1,\"reward\":0.75}\n");
  CHECK(metrics_to_csv(a) ==
        "phase,step,em,loss,reward\n"
        "kd,1,,2.5,\n"
        "rl,1,0.5,,0.5\n"
        "rl,2,1.0,,0.75\n");
  const auto b = parse_metrics(
      "{\"phase\":\"rl\",\"step\":2,\"em\":0.25}\n"
      "{\"phase\":\"rl\",\"step\":3,\"em\":0.125}\n");
  CHECK(compare_to_csv({{"dgpo", a}, {"ppo", b}}) ==
        "phase,step,dgpo.em,dgpo.loss,dgpo.reward,ppo.em\n"
        "kd,1,,2.5,,\n"
        "rl,1,0.5,,0.5,\n"
        "rl,2,1.0,,0.75,0.25\n"
        "rl,3,,,,0.125\n");
}

TEST_CASE("malformed metric lines are reported with their line number") {
  auto line_of = [](const std::string& text) {
    try {
      parse_metrics(text);
    } catch (const MetricsFormatError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  CHECK(line_of("{\"phase\":\"rl\",\"step\":1}\nnot json\n") == 2);
  CHECK(line_of("{\"step\":1}\n") == 1);
  CHECK(line_of("{\"phase\":\"rl\",\"step\":1}\n{\"phase\":\"rl\",\"step\":2,\"em\":\"high\"}\n") == 2);
  CHECK(line_of("{\"phase\":\"rl\",\"step\":-1}\n") == 1);
}

TEST_CASE("a dgpo run writes a complete, reproducible run directory") {
  const auto cfg = tiny(Recipe::kDGPO);
  const auto dir_a = dgpo::testing::scratch_dir("run_dgpo_a");
  const auto dir_b = dgpo::testing::scratch_dir("run_dgpo_b");
  const auto a = run_training(cfg, small_world(), dir_a);
  const auto b = run_training(cfg, small_world(), dir_b);
  CHECK(a.status == RunStatus::kCompleted);
  const RunLayout la{dir_a};
  for (const auto& p : {la.config(), la.manifest(), la.metrics(), la.final_model(), la.best()})
    CHECK_MESSAGE(fs::exists(p), p.string());
  const auto manifest = json::parse(slurp(la.manifest()));
  CHECK(manifest["config_digest"] == config_digest(cfg));
  CHECK(manifest["seeds"]["run"] == cfg.seed);
  CHECK(manifest["code_version"] == code_version());
  CHECK(manifest["world_digest"] == small_world().digest());
  CHECK(manifest["status"] == "completed");
  CHECK(config_digest(load_config(la.config().string())) == config_digest(cfg));

  CHECK(slurp(la.metrics()) == slurp(RunLayout{dir_b}.metrics()));
  CHECK(a.final_digest == b.final_digest);
  CHECK(a.final_digest == file_digest(la.final_model()));
  CHECK(phases_of(la.metrics()) == std::vector<std::string>{"kd", "rl", "test"});

  const auto rows = read_metrics(la.metrics());
  std::size_t rl_steps = 0;
  for (const auto& r : rows) {
    if (r.phase != "rl") continue;
    CHECK(r.step == ++rl_steps);
    for (const char* key : {"reward", "em", "kl_penalty", "clip_fraction", "search_steps"}) CHECK(r.values.count(key));
  }
  CHECK(rl_steps == cfg.rl.steps);
  CHECK(rows.back().values.at("em") == doctest::Approx(a.test_em));
  // Keep-last plus the initial and phase-boundary checkpoints never exceed the cap.
  std::size_t ckpts = 0;
  for (const auto& e : fs::directory_iterator(la.checkpoints())) ckpts += e.is_directory();
  CHECK(ckpts <= cfg.checkpoint.keep_last);

  // Re-running a completed directory returns the recorded result.
  const auto again = run_training(cfg, small_world(), dir_a);
  CHECK(again.resumed);
  CHECK(again.final_digest == a.final_digest);
}

TEST_CASE("resuming after an interruption continues the log without gaps or overlaps") {
  for (Recipe recipe : {Recipe::kPPO, Recipe::kKDThenGKD}) {
    INFO(recipe_name(recipe));
    const auto cfg = tiny(recipe);
    const auto whole = dgpo::testing::scratch_dir("resume_whole");
    const auto split = dgpo::testing::scratch_dir("resume_split");
    const auto ref = run_training(cfg, small_world(), whole);
    TrainOptions stop;
    stop.stop_after_steps = 3;
    const auto first = run_training(cfg, small_world(), split, stop);
    CHECK(first.status == RunStatus::kStopped);
    // Lines past the last checkpoint are dropped and replayed.
    std::ofstream(RunLayout{split}.metrics(), std::ios::app) << "{\"phase\":\"rl\",\"step\":99}\n";
    const auto second = run_training(cfg, small_world(), split);
    CHECK(second.resumed);
    CHECK(second.status == RunStatus::kCompleted);
    CHECK(slurp(RunLayout{split}.metrics()) == slurp(RunLayout{whole}.metrics()));
    CHECK(second.final_digest == ref.final_digest);
  }
}

TEST_CASE("dgpo without cold start and with zero beta logs exactly what ppo logs") {
  auto dgpo_cfg = tiny(Recipe::kDGPO);
  dgpo_cfg.ablation.cold_start = false;
  dgpo_cfg.rl.ppo.beta = 0.0;
  auto ppo_cfg = tiny(Recipe::kPPO);
  ppo_cfg.rl.ppo.beta = 0.0;
  const auto d = dgpo::testing::scratch_dir("reduce_dgpo");
  const auto p = dgpo::testing::scratch_dir("reduce_ppo");
  const auto rd = run_training(dgpo_cfg, small_world(), d);
  const auto rp = run_training(ppo_cfg, small_world(), p);
  CHECK(slurp(RunLayout{d}.metrics()) == slurp(RunLayout{p}.metrics()));
  CHECK(rd.final_digest == rp.final_digest);
}

TEST_CASE("ppo_then_kd logs both phases in order") {
  const auto cfg = tiny(Recipe::kPPOThenKD);
  const auto dir = dgpo::testing::scratch_dir("ppo_then_kd");
  run_training(cfg, small_world(), dir);
  CHECK(phases_of(RunLayout{dir}.metrics()) == std::vector<std::string>{"rl", "kd", "test"});
}

TEST_CASE("a run directory holding a different config is refused") {
  const auto dir = dgpo::testing::scratch_dir("digest_clash");
  auto cfg = tiny(Recipe::kKD);
  cfg.kd.epochs = 1;
  run_training(cfg, small_world(), dir);
  cfg.seed = 99;
  CHECK_THROWS_AS(run_training(cfg, small_world(), dir), RunError);
}

TEST_CASE("a trained teacher checkpoint can replace the oracle") {
  const auto dir = dgpo::testing::scratch_dir("trained_teacher");
  auto teacher_cfg = tiny(Recipe::kKD);
  teacher_cfg.kd.epochs = 1;
  run_training(teacher_cfg, small_world(), dir / "teacher");
  auto cfg = tiny(Recipe::kGKD);
  cfg.gkd.steps = 2;
  cfg.teacher.checkpoint = (dir / "teacher" / "final.ckpt").string();
  const auto r = run_training(cfg, small_world(), dir / "student");
  CHECK(r.status == RunStatus::kCompleted);
  cfg.teacher.checkpoint = (dir / "missing.ckpt").string();
  CHECK_THROWS_AS(run_training(cfg, small_world(), dir / "student2"), dgpo::langmodel::CheckpointError);
}
