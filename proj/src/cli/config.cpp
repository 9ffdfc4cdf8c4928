#include "dgpo/cli/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dgpo/util/hashing.hpp"

#ifndef DGPO_CODE_VERSION
#define DGPO_CODE_VERSION "unknown"
#endif

namespace dgpo::cli {

using nlohmann::json;
using nlohmann::ordered_json;

const char* recipe_name(Recipe r) {
  switch (r) {
    case Recipe::kDGPO: return "dgpo";
    case Recipe::kPPO: return "ppo";
    case Recipe::kKD: return "kd";
    case Recipe::kSeqKD: return "seqkd";
    case Recipe::kGKD: return "gkd";
    case Recipe::kKDThenGKD: return "kd_then_gkd";
    case Recipe::kPPOThenKD: return "ppo_then_kd";
  }
  return "unknown";
}

Recipe parse_recipe(const std::string& name) {
  for (auto r : {Recipe::kDGPO, Recipe::kPPO, Recipe::kKD, Recipe::kSeqKD, Recipe::kGKD, Recipe::kKDThenGKD,
                 Recipe::kPPOThenKD})
    if (name == recipe_name(r)) return r;
  throw ConfigError("recipe", "unknown recipe '" + name +
                                  "' (expected dgpo, ppo, kd, seqkd, gkd, kd_then_gkd or ppo_then_kd)");
}

episode::EpisodeBudget default_budget() {
  episode::EpisodeBudget b;
  b.max_total_length = 256;
  return b;
}

distill::KDConfig default_kd() {
  distill::KDConfig kd;
  kd.epochs = 20;
  kd.learning_rate = 3e-3;
  return kd;
}

rl::RLConfig default_rl() {
  rl::RLConfig r;
  r.budget = default_budget();
  r.ppo.actor_lr = 3e-4;
  r.ppo.critic_lr = 1e-3;
  r.ppo.rollout_batch = 8;
  r.ppo.minibatch_size = 8;
  r.eval_every = 100;
  return r;
}

langmodel::ModelConfig ModelSize::to_config(std::size_t vocab_size) const {
  return {vocab_size, layers, width, heads, context, ffn_mult};
}

void RunConfig::validate() const {
  auto wrap = [](const std::string& prefix, auto&& fn) {
    try {
      fn();
    } catch (const world::WorldSpecError& e) {
      throw ConfigError(prefix + "." + e.field(), e.what());
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(prefix, e.what());
    }
  };
  wrap("world", [&] { world.validate(); });
  wrap("model", [&] { model.to_config(1).validate(); });
  wrap("budget", [&] { budget.validate(); });
  wrap("kd", [&] { kd.validate(); });
  wrap("rl", [&] { rl.validate(); });
  if (model.context < budget.max_total_length) {
    throw ConfigError("model.context", "must be at least budget.max_total_length (" +
                                           std::to_string(budget.max_total_length) + ")");
  }
  if (!(teacher.eta >= 0.0 && teacher.eta < 1.0)) throw ConfigError("teacher.eta", "must be in [0, 1)");
  if (gkd.batch_size == 0) throw ConfigError("gkd.batch_size", "must be positive");
  if (!(gkd.learning_rate > 0.0)) throw ConfigError("gkd.learning_rate", "must be positive");
  if (checkpoint.every == 0) throw ConfigError("checkpoint.every", "must be positive");
  if (checkpoint.keep_last == 0) throw ConfigError("checkpoint.keep_last", "must be positive");
}

ordered_json world_spec_to_json(const world::WorldSpec& spec) {
  ordered_json j;
  j["seed"] = spec.seed;
  j["entity_count"] = spec.entity_count;
  auto rels = ordered_json::array();
  for (const auto& r : spec.relations) rels.push_back(r.name);
  j["relations"] = rels;
  j["multi_hop_fraction"] = spec.multi_hop_fraction;
  j["distractor_density"] = spec.distractor_density;
  j["test_fraction"] = spec.test_fraction;
  return j;
}

namespace {

ordered_json budget_json(const episode::EpisodeBudget& b) {
  ordered_json j;
  j["max_turns"] = b.max_turns;
  j["max_turn_tokens"] = b.max_turn_tokens;
  j["max_total_length"] = b.max_total_length;
  j["retrieval_k"] = b.retrieval_k;
  return j;
}

// Typed read of `j[key]` that reports the dotted path on failure.
template <typename T>
T read(const json& j, const std::string& path, const char* key) {
  const std::string field = path.empty() ? key : path + "." + key;
  if (!j.contains(key)) throw ConfigError(field, "missing");
  try {
    const auto& v = j.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(field, "expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(field, "expected a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(field, "expected a number");
    } else {
      if (!v.is_number_unsigned()) throw ConfigError(field, "expected a non-negative integer");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field, e.what());
  }
}

void merge(json& base, const json& overlay, const std::string& path) {
  if (!overlay.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : overlay.items()) {
    const std::string field = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError(field, "unknown key");
    auto& slot = base[key];
    if (slot.is_object()) {
      merge(slot, value, field);
    } else {
      slot = value;
    }
  }
}

}  // namespace

world::WorldSpec world_spec_from_json(const json& j) {
  world::WorldSpec s;
  s.seed = read<std::uint64_t>(j, "world", "seed");
  s.entity_count = read<std::size_t>(j, "world", "entity_count");
  s.multi_hop_fraction = read<double>(j, "world", "multi_hop_fraction");
  s.distractor_density = read<std::size_t>(j, "world", "distractor_density");
  s.test_fraction = read<double>(j, "world", "test_fraction");
  if (!j.contains("relations") || !j["relations"].is_array()) {
    throw ConfigError("world.relations", "expected an array of relation names");
  }
  s.relations.clear();
  const auto known = world::default_relations();
  for (const auto& r : j["relations"]) {
    if (!r.is_string()) throw ConfigError("world.relations", "expected relation names");
    const auto name = r.get<std::string>();
    auto it = std::find_if(known.begin(), known.end(), [&](const auto& k) { return k.name == name; });
    if (it == known.end()) throw ConfigError("world.relations", "unknown relation '" + name + "'");
    s.relations.push_back(*it);
  }
  return s;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["recipe"] = recipe_name(c.recipe);
  j["seed"] = c.seed;
  j["world"] = world_spec_to_json(c.world);
  j["model"] = {{"layers", c.model.layers},
                {"width", c.model.width},
                {"heads", c.model.heads},
                {"context", c.model.context},
                {"ffn_mult", c.model.ffn_mult}};
  j["teacher"] = {{"checkpoint", c.teacher.checkpoint}, {"eta", c.teacher.eta}};
  j["budget"] = budget_json(c.budget);
  ordered_json kd;
  kd["lambda"] = c.kd.lambda;
  kd["epochs"] = c.kd.epochs;
  kd["batch_size"] = c.kd.batch_size;
  kd["learning_rate"] = c.kd.learning_rate;
  kd["max_grad_norm"] = c.kd.max_grad_norm;
  kd["filter_correct"] = c.kd.filter_correct;
  kd["em_threshold"] = c.kd.em_threshold ? ordered_json(*c.kd.em_threshold) : ordered_json(nullptr);
  j["kd"] = kd;
  const auto& p = c.rl.ppo;
  ordered_json ppo;
  ppo["clip_epsilon"] = p.clip_epsilon;
  ppo["gamma"] = p.gamma;
  ppo["gae_lambda"] = p.gae_lambda;
  ppo["value_coef"] = p.value_coef;
  ppo["ppo_epochs"] = p.ppo_epochs;
  ppo["minibatch_size"] = p.minibatch_size;
  ppo["actor_lr"] = p.actor_lr;
  ppo["critic_lr"] = p.critic_lr;
  ppo["max_grad_norm"] = p.max_grad_norm;
  ppo["whiten_advantages"] = p.whiten_advantages;
  ppo["beta"] = p.beta;
  ppo["rollout_batch"] = p.rollout_batch;
  ppo["per_token_kl"] = p.per_token_kl;
  j["ppo"] = ppo;
  ordered_json rl;
  rl["steps"] = c.rl.steps;
  rl["temperature"] = c.rl.temperature;
  rl["eval_every"] = c.rl.eval_every;
  rl["collapse"] = {{"enabled", c.rl.collapse.enabled},
                    {"ratio", c.rl.collapse.ratio},
                    {"min_peak", c.rl.collapse.min_peak}};
  j["rl"] = rl;
  j["gkd"] = {{"steps", c.gkd.steps},
              {"batch_size", c.gkd.batch_size},
              {"learning_rate", c.gkd.learning_rate},
              {"max_grad_norm", c.gkd.max_grad_norm}};
  ordered_json ab;
  ab["cold_start"] = c.ablation.cold_start ? ordered_json(*c.ablation.cold_start) : ordered_json(nullptr);
  ab["kl_mode"] = c.ablation.kl_mode ? ordered_json(rl::kl_mode_name(*c.ablation.kl_mode)) : ordered_json(nullptr);
  j["ablation"] = ab;
  j["checkpoint"] = {{"every", c.checkpoint.every}, {"keep_last", c.checkpoint.keep_last}};
  j["val_size"] = c.val_size;
  j["determinism"] = c.determinism;
  j["output_dir"] = c.output_dir;
  return j;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  c.recipe = parse_recipe(read<std::string>(j, "", "recipe"));
  c.seed = read<std::uint64_t>(j, "", "seed");
  c.world = world_spec_from_json(j.at("world"));
  const auto& m = j.at("model");
  c.model.layers = read<std::size_t>(m, "model", "layers");
  c.model.width = read<std::size_t>(m, "model", "width");
  c.model.heads = read<std::size_t>(m, "model", "heads");
  c.model.context = read<std::size_t>(m, "model", "context");
  c.model.ffn_mult = read<std::size_t>(m, "model", "ffn_mult");
  const auto& t = j.at("teacher");
  c.teacher.checkpoint = read<std::string>(t, "teacher", "checkpoint");
  c.teacher.eta = read<double>(t, "teacher", "eta");
  const auto& b = j.at("budget");
  c.budget.max_turns = read<std::size_t>(b, "budget", "max_turns");
  c.budget.max_turn_tokens = read<std::size_t>(b, "budget", "max_turn_tokens");
  c.budget.max_total_length = read<std::size_t>(b, "budget", "max_total_length");
  c.budget.retrieval_k = read<std::size_t>(b, "budget", "retrieval_k");
  const auto& kd = j.at("kd");
  c.kd.lambda = read<double>(kd, "kd", "lambda");
  c.kd.epochs = read<std::size_t>(kd, "kd", "epochs");
  c.kd.batch_size = read<std::size_t>(kd, "kd", "batch_size");
  c.kd.learning_rate = read<double>(kd, "kd", "learning_rate");
  c.kd.max_grad_norm = read<double>(kd, "kd", "max_grad_norm");
  c.kd.filter_correct = read<bool>(kd, "kd", "filter_correct");
  if (!kd.at("em_threshold").is_null()) c.kd.em_threshold = read<double>(kd, "kd", "em_threshold");
  const auto& p = j.at("ppo");
  auto& pc = c.rl.ppo;
  pc.clip_epsilon = read<double>(p, "ppo", "clip_epsilon");
  pc.gamma = read<double>(p, "ppo", "gamma");
  pc.gae_lambda = read<double>(p, "ppo", "gae_lambda");
  pc.value_coef = read<double>(p, "ppo", "value_coef");
  pc.ppo_epochs = read<std::size_t>(p, "ppo", "ppo_epochs");
  pc.minibatch_size = read<std::size_t>(p, "ppo", "minibatch_size");
  pc.actor_lr = read<double>(p, "ppo", "actor_lr");
  pc.critic_lr = read<double>(p, "ppo", "critic_lr");
  pc.max_grad_norm = read<double>(p, "ppo", "max_grad_norm");
  pc.whiten_advantages = read<bool>(p, "ppo", "whiten_advantages");
  pc.beta = read<double>(p, "ppo", "beta");
  pc.rollout_batch = read<std::size_t>(p, "ppo", "rollout_batch");
  pc.per_token_kl = read<bool>(p, "ppo", "per_token_kl");
  const auto& r = j.at("rl");
  c.rl.steps = read<std::size_t>(r, "rl", "steps");
  c.rl.temperature = read<double>(r, "rl", "temperature");
  c.rl.eval_every = read<std::size_t>(r, "rl", "eval_every");
  const auto& col = r.at("collapse");
  c.rl.collapse.enabled = read<bool>(col, "rl.collapse", "enabled");
  c.rl.collapse.ratio = read<double>(col, "rl.collapse", "ratio");
  c.rl.collapse.min_peak = read<double>(col, "rl.collapse", "min_peak");
  const auto& g = j.at("gkd");
  c.gkd.steps = read<std::size_t>(g, "gkd", "steps");
  c.gkd.batch_size = read<std::size_t>(g, "gkd", "batch_size");
  c.gkd.learning_rate = read<double>(g, "gkd", "learning_rate");
  c.gkd.max_grad_norm = read<double>(g, "gkd", "max_grad_norm");
  const auto& ab = j.at("ablation");
  if (!ab.at("cold_start").is_null()) c.ablation.cold_start = read<bool>(ab, "ablation", "cold_start");
  if (!ab.at("kl_mode").is_null()) {
    try {
      c.ablation.kl_mode = rl::parse_kl_mode(read<std::string>(ab, "ablation", "kl_mode"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError("ablation.kl_mode", e.what());
    }
  }
  const auto& ck = j.at("checkpoint");
  c.checkpoint.every = read<std::size_t>(ck, "checkpoint", "every");
  c.checkpoint.keep_last = read<std::size_t>(ck, "checkpoint", "keep_last");
  c.val_size = read<std::size_t>(j, "", "val_size");
  c.determinism = read<bool>(j, "", "determinism");
  c.output_dir = read<std::string>(j, "", "output_dir");
  c.budget.validate();
  c.rl.budget = c.budget;
  return c;
}

RunConfig apply_overlay(RunConfig base, const json& overlay) {
  json tree = json::parse(to_json(base).dump());
  merge(tree, overlay, "");
  return config_from_json(tree);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", "'" + path + "' is not valid JSON: " + e.what());
  }
  return apply_overlay(RunConfig{}, j);
}

std::string config_digest(const RunConfig& cfg) {
  auto j = to_json(cfg);
  j.erase("output_dir");
  return util::digest_hex(j.dump());
}

json overlay_from_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "expected key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json root = json::object();
  json* cur = &root;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    (*cur)[parts[i]] = json::object();
    cur = &(*cur)[parts[i]];
  }
  (*cur)[parts.back()] = value;
  return root;
}

std::string code_version() { return DGPO_CODE_VERSION; }

}  // namespace dgpo::cli
