#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "dgpo/arc/arc.hpp"
#include "dgpo/cli/config.hpp"
#include "dgpo/cli/export.hpp"
#include "dgpo/cli/run.hpp"
#include "dgpo/langmodel/checkpoint.hpp"
#include "dgpo/world/corpus_io.hpp"
#include "dgpo/world/teacher.hpp"

namespace fs = std::filesystem;
using namespace dgpo;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitCollapse = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fs::path output_root() {
  const char* root = std::getenv("DGPO_OUTPUT_ROOT");
  return root && *root ? fs::path(root) : fs::path(".");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

struct LoadedWorld {
  world::WorldSpec spec;
  world::World world;
};

LoadedWorld load_world_dir(const fs::path& dir) {
  const fs::path manifest = dir / "world.json";
  if (!fs::exists(manifest)) {
    throw std::runtime_error("no world at '" + dir.string() + "' (world.json missing; run gen-world first)");
  }
  const json j = read_json_file(manifest);
  auto spec = cli::world_spec_from_json(j.at("spec"));
  auto w = world::load_world(dir, spec);
  const auto want = j.at("digest").get<std::string>();
  if (w.digest() != want) {
    throw std::runtime_error("world at '" + dir.string() + "' does not match its recorded digest " + want);
  }
  return {spec, std::move(w)};
}

// ---- gen-world ----------------------------------------------------------

struct GenWorldArgs {
  std::string spec_file;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> entities;
  std::optional<double> multi_hop_fraction;
  std::optional<std::size_t> distractors;
  std::optional<double> test_fraction;
};

int cmd_gen_world(const GenWorldArgs& a) {
  cli::RunConfig base;
  json overlay = json::object();
  if (!a.spec_file.empty()) overlay["world"] = read_json_file(a.spec_file);
  if (a.seed) overlay["world"]["seed"] = *a.seed;
  if (a.entities) overlay["world"]["entity_count"] = *a.entities;
  if (a.multi_hop_fraction) overlay["world"]["multi_hop_fraction"] = *a.multi_hop_fraction;
  if (a.distractors) overlay["world"]["distractor_density"] = *a.distractors;
  if (a.test_fraction) overlay["world"]["test_fraction"] = *a.test_fraction;
  const auto spec = cli::apply_overlay(base, overlay).world;
  try {
    spec.validate();
  } catch (const world::WorldSpecError& e) {
    throw cli::ConfigError("world." + e.field(), e.what());
  }
  const fs::path dir = a.out.empty() ? output_root() / ("world-s" + std::to_string(spec.seed)) : fs::path(a.out);
  const auto w = world::generate_world(spec);
  fs::create_directories(dir);
  world::save_world(dir, w);
  ordered_json j;
  j["v"] = 1;
  j["kind"] = "world";
  j["spec"] = cli::world_spec_to_json(spec);
  j["digest"] = w.digest();
  j["counts"] = {{"documents", w.corpus().size()}, {"train", w.train().size()}, {"test", w.test().size()}};
  std::ofstream(dir / "world.json") << j.dump(2) << "\n";
  std::cout << "world " << dir.string() << " digest " << w.digest() << " documents " << w.corpus().size()
            << " train " << w.train().size() << " test " << w.test().size() << "\n";
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string world_dir;
  std::string config_file;
  std::vector<std::string> sets;
  std::string recipe;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> stop_after;
  bool quiet = false;
};

cli::RunConfig build_config(const std::string& config_file, const std::vector<std::string>& sets) {
  cli::RunConfig cfg;
  if (!config_file.empty()) cfg = cli::load_config(config_file);
  for (const auto& s : sets) cfg = cli::apply_overlay(cfg, cli::overlay_from_assignment(s));
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  auto cfg = build_config(a.config_file, a.sets);
  if (!a.recipe.empty()) cfg.recipe = cli::parse_recipe(a.recipe);
  if (a.seed) cfg.seed = *a.seed;
  auto loaded = load_world_dir(a.world_dir);
  cfg.world = loaded.spec;
  if (!a.out.empty()) cfg.output_dir = a.out;
  cfg.validate();
  const fs::path dir = cfg.output_dir.empty() ? cli::default_run_dir(cfg) : fs::path(cfg.output_dir);
  cli::TrainOptions opts;
  opts.stop_after_steps = a.stop_after;
  if (!a.quiet) opts.log = &std::cerr;
  const auto result = cli::run_training(cfg, loaded.world, dir, opts);
  std::cout << "run " << dir.string() << " status " << cli::run_status_name(result.status);
  if (result.status != cli::RunStatus::kStopped) std::cout << " test_em " << result.test_em;
  std::cout << "\n";
  if (result.status == cli::RunStatus::kCollapsed) {
    std::cerr << "error: training collapsed at RL step " << *result.collapse_step
              << " (validation EM fell below the collapse ratio of its peak)\n";
    return kExitCollapse;
  }
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string world_dir;
  std::string checkpoint;
  bool oracle = false;
  std::vector<std::string> protocols;
  std::string split = "test";
  std::string qa_file;
  std::string config_file;
  std::vector<std::string> sets;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  if (a.checkpoint.empty() == !a.oracle) throw UsageError("give exactly one of --checkpoint or --oracle");
  const auto cfg = build_config(a.config_file, a.sets);
  auto loaded = load_world_dir(a.world_dir);
  const auto& w = loaded.world;

  std::vector<world::QAItem> items;
  if (!a.qa_file.empty()) {
    items = world::load_qa(a.qa_file);
  } else if (a.split == "test") {
    items = w.test();
  } else if (a.split == "train") {
    items = w.train();
  } else {
    throw UsageError("--split must be train or test");
  }

  std::vector<arc::Protocol> protocols;
  if (a.protocols.empty()) {
    protocols = arc::all_protocols();
  } else {
    for (const auto& p : a.protocols) {
      try {
        protocols.push_back(arc::parse_protocol(p));
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    }
  }

  std::unique_ptr<langmodel::PolicyModel> model;
  std::unique_ptr<langmodel::Policy> policy;
  std::string digest;
  if (a.oracle) {
    policy = std::make_unique<world::OracleTeacher>(w, cfg.teacher.eta);
    digest = "oracle";
  } else {
    model = std::make_unique<langmodel::PolicyModel>(langmodel::load_checkpoint(a.checkpoint, w.vocabulary().size()));
    policy = std::make_unique<langmodel::ModelPolicy>(*model);
    digest = cli::file_digest(a.checkpoint);
  }
  arc::ArcReport report;
  try {
    report = arc::run_arc(*policy, w, items, cfg.budget, digest, protocols);
  } catch (const arc::ProtocolMismatchError& e) {
    throw UsageError(e.what());
  }
  const fs::path out = a.out.empty() ? output_root() / "arc_report.json" : fs::path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  arc::write_report(report, out.string());
  for (const auto* r : {&report.overall, &report.source_ref, &report.source_ref_think, &report.query_rewrite,
                        &report.thinking}) {
    if (!*r) continue;
    std::cout << arc::protocol_name((*r)->mode) << " count " << (*r)->count;
    if ((*r)->score) std::cout << " score " << *(*r)->score;
    std::cout << "\n";
  }
  std::cout << "report " << out.string() << "\n";
  return kExitOk;
}

// ---- export ---------------------------------------------------------------

struct ExportArgs {
  std::vector<std::string> logs;
  std::vector<std::string> labels;
  std::string out;
};

int cmd_export(const ExportArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.logs.size()) {
    throw UsageError("--label must be given once per log");
  }
  std::string csv;
  if (a.logs.size() == 1 && a.labels.empty()) {
    csv = cli::metrics_to_csv(cli::read_metrics(a.logs[0]));
  } else {
    std::vector<std::pair<std::string, std::vector<cli::MetricRow>>> logs;
    for (std::size_t i = 0; i < a.logs.size(); ++i) {
      const fs::path p(a.logs[i]);
      std::string label = a.labels.empty() ? p.parent_path().filename().string() : a.labels[i];
      if (label.empty()) label = p.stem().string();
      logs.emplace_back(label, cli::read_metrics(p));
    }
    csv = cli::compare_to_csv(logs);
  }
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + a.out + "'");
    out << csv;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distillation-guided policy optimization for search-augmented question answering"};
  app.require_subcommand(1);

  GenWorldArgs gw;
  auto* gen = app.add_subcommand("gen-world", "Generate a synthetic world (corpus and QA splits)");
  gen->add_option("--spec", gw.spec_file, "JSON world spec overlay");
  gen->add_option("--out", gw.out, "Output directory (default: $DGPO_OUTPUT_ROOT/world-s<seed>)");
  gen->add_option("--seed", gw.seed, "World seed");
  gen->add_option("--entities", gw.entities, "Entity count");
  gen->add_option("--multi-hop-fraction", gw.multi_hop_fraction, "Fraction of chain subjects with two-hop questions");
  gen->add_option("--distractors", gw.distractors, "Decoy documents per subject");
  gen->add_option("--test-fraction", gw.test_fraction, "Held-out question fraction");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a student with the configured recipe");
  train->add_option("--world", tr.world_dir, "World directory from gen-world")->required();
  train->add_option("--config", tr.config_file, "JSON run config overlay");
  train->add_option("--set", tr.sets, "Override one field, e.g. --set ppo.beta=0.01");
  train->add_option("--recipe", tr.recipe, "dgpo, ppo, kd, seqkd, gkd, kd_then_gkd or ppo_then_kd");
  train->add_option("--seed", tr.seed, "Run seed");
  train->add_option("--out", tr.out, "Run directory (default under $DGPO_OUTPUT_ROOT or ./runs)");
  train->add_option("--stop-after", tr.stop_after, "Stop after this many optimizer steps, leaving a checkpoint");
  train->add_flag("--quiet", tr.quiet, "Suppress progress output");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Run capability protocols and write a report");
  eval->add_option("--world", ev.world_dir, "World directory from gen-world")->required();
  eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint to evaluate");
  eval->add_flag("--oracle", ev.oracle, "Evaluate the scripted oracle teacher");
  eval->add_option("--protocol", ev.protocols,
                   "overall, source_ref, source_ref_think, query_rewrite, thinking_multihop (default: all)");
  eval->add_option("--split", ev.split, "QA split to evaluate: train or test");
  eval->add_option("--qa", ev.qa_file, "QA file to evaluate instead of a split");
  eval->add_option("--config", ev.config_file, "JSON run config supplying the episode budget");
  eval->add_option("--set", ev.sets, "Override one config field");
  eval->add_option("--out", ev.out, "Report path (default: $DGPO_OUTPUT_ROOT/arc_report.json)");

  ExportArgs ex;
  auto* exp = app.add_subcommand("export", "Convert metric logs to CSV");
  exp->add_option("logs", ex.logs, "metrics.jsonl files")->required();
  exp->add_option("--label", ex.labels, "Column label per log");
  exp->add_option("--out", ex.out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_world(gw);
    if (*train) return cmd_train(tr);
    if (*eval) return cmd_eval(ev);
    if (*exp) return cmd_export(ex);
  } catch (const cli::ConfigError& e) {
    std::cerr << "usage error: invalid config field '" << e.field() << "': " << e.what() << "\n";
    return kExitUsage;
  } catch (const world::WorldSpecError& e) {
    std::cerr << "usage error: invalid world field '" << e.field() << "': " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
