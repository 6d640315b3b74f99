#include "rlhflab/config.hpp"

#include <fstream>
#include <set>

namespace rlhflab {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& section,
                const std::set<std::string>& known) {
  if (!obj.is_object())
    throw ConfigError(section, "must be a JSON object");
  for (const auto& [key, _] : obj.items())
    if (!known.count(key))
      throw ConfigError(section.empty() ? key : section + "." + key, "unknown key");
}

template <typename T>
void read_into(const json& obj, const std::string& section, const char* key, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(section + "." + key, "wrong type");
  }
}

void fail_if(bool cond, const std::string& key, const std::string& what) {
  if (cond) throw ConfigError(key, what);
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  check_keys(j, "",
             {"mdp", "oracle", "feedback", "reward_model", "policy", "analysis", "output_dir"});

  if (j.contains("mdp")) {
    const json& m = j.at("mdp");
    check_keys(m, "mdp", {"vocab_size", "horizon", "num_contexts", "context_dist"});
    read_into(m, "mdp", "vocab_size", cfg.mdp.vocab_size);
    read_into(m, "mdp", "horizon", cfg.mdp.horizon);
    read_into(m, "mdp", "num_contexts", cfg.mdp.num_contexts);
    if (m.contains("context_dist")) {
      const json& d = m.at("context_dist");
      if (d.is_string()) {
        fail_if(d.get<std::string>() != "uniform", "mdp.context_dist",
                "string form must be \"uniform\"");
      } else {
        read_into(m, "mdp", "context_dist", cfg.mdp.context_dist);
      }
    }
  }

  if (j.contains("oracle")) {
    const json& o = j.at("oracle");
    check_keys(o, "oracle",
               {"kind", "mean", "stddev", "seed", "token", "bonus", "targets", "match_value"});
    read_into(o, "oracle", "kind", cfg.oracle.kind);
    read_into(o, "oracle", "mean", cfg.oracle.mean);
    read_into(o, "oracle", "stddev", cfg.oracle.stddev);
    read_into(o, "oracle", "seed", cfg.oracle.seed);
    read_into(o, "oracle", "token", cfg.oracle.token);
    read_into(o, "oracle", "bonus", cfg.oracle.bonus);
    read_into(o, "oracle", "targets", cfg.oracle.targets);
    read_into(o, "oracle", "match_value", cfg.oracle.match_value);
  }

  if (j.contains("feedback")) {
    const json& f = j.at("feedback");
    check_keys(f, "feedback", {"mode", "kappa", "outputs_per_context", "samples_per_pair", "seed"});
    read_into(f, "feedback", "mode", cfg.feedback.mode);
    read_into(f, "feedback", "kappa", cfg.feedback.kappa);
    read_into(f, "feedback", "outputs_per_context", cfg.feedback.outputs_per_context);
    read_into(f, "feedback", "samples_per_pair", cfg.feedback.samples_per_pair);
    read_into(f, "feedback", "seed", cfg.feedback.seed);
  }

  if (j.contains("reward_model")) {
    const json& r = j.at("reward_model");
    check_keys(r, "reward_model",
               {"model_class", "features", "objective", "step_size", "num_epochs", "l2_weight",
                "convergence_tol", "seed"});
    read_into(r, "reward_model", "model_class", cfg.reward_model.model_class);
    read_into(r, "reward_model", "features", cfg.reward_model.features);
    read_into(r, "reward_model", "objective", cfg.reward_model.objective);
    read_into(r, "reward_model", "step_size", cfg.reward_model.step_size);
    read_into(r, "reward_model", "num_epochs", cfg.reward_model.num_epochs);
    if (r.contains("l2_weight")) {
      double v = 0.0;
      read_into(r, "reward_model", "l2_weight", v);
      cfg.reward_model.l2_weight = v;
    }
    read_into(r, "reward_model", "convergence_tol", cfg.reward_model.convergence_tol);
    read_into(r, "reward_model", "seed", cfg.reward_model.seed);
  }

  if (j.contains("policy")) {
    const json& p = j.at("policy");
    check_keys(p, "policy",
               {"algorithm", "step_size", "batch_size", "num_iters", "beta", "clip_epsilon",
                "baseline", "critic_step_size", "seed", "pre", "pre_scale", "pre_seed",
                "diag_every"});
    read_into(p, "policy", "algorithm", cfg.policy.algorithm);
    read_into(p, "policy", "step_size", cfg.policy.step_size);
    read_into(p, "policy", "batch_size", cfg.policy.batch_size);
    read_into(p, "policy", "num_iters", cfg.policy.num_iters);
    read_into(p, "policy", "beta", cfg.policy.beta);
    read_into(p, "policy", "clip_epsilon", cfg.policy.clip_epsilon);
    read_into(p, "policy", "baseline", cfg.policy.baseline);
    read_into(p, "policy", "critic_step_size", cfg.policy.critic_step_size);
    read_into(p, "policy", "seed", cfg.policy.seed);
    read_into(p, "policy", "pre", cfg.policy.pre);
    read_into(p, "policy", "pre_scale", cfg.policy.pre_scale);
    read_into(p, "policy", "pre_seed", cfg.policy.pre_seed);
    read_into(p, "policy", "diag_every", cfg.policy.diag_every);
  }

  if (j.contains("analysis")) {
    const json& a = j.at("analysis");
    check_keys(a, "analysis",
               {"beta_grid", "kappa_grid", "feedback_size_grid", "seeds", "eval_dist"});
    read_into(a, "analysis", "beta_grid", cfg.analysis.beta_grid);
    read_into(a, "analysis", "kappa_grid", cfg.analysis.kappa_grid);
    read_into(a, "analysis", "feedback_size_grid", cfg.analysis.feedback_size_grid);
    read_into(a, "analysis", "seeds", cfg.analysis.seeds);
    read_into(a, "analysis", "eval_dist", cfg.analysis.eval_dist);
  }

  read_into(j, "", "output_dir", cfg.output_dir);

  // Range and enum checks, with the offending key in the error.
  fail_if(cfg.mdp.vocab_size < 2, "mdp.vocab_size", "must be >= 2");
  fail_if(cfg.mdp.horizon < 1, "mdp.horizon", "must be >= 1");
  fail_if(cfg.mdp.num_contexts < 1, "mdp.num_contexts", "must be >= 1");
  if (!cfg.mdp.context_dist.empty()) {
    fail_if(cfg.mdp.context_dist.size() != cfg.mdp.num_contexts, "mdp.context_dist",
            "length must equal num_contexts");
    double total = 0.0;
    for (double p : cfg.mdp.context_dist) {
      fail_if(!(p >= 0.0), "mdp.context_dist", "entries must be >= 0");
      total += p;
    }
    fail_if(std::fabs(total - 1.0) > 1e-12, "mdp.context_dist", "must sum to 1 within 1e-12");
  }

  fail_if(cfg.oracle.kind != "gaussian_random" && cfg.oracle.kind != "target_token" &&
              cfg.oracle.kind != "prefix_match",
          "oracle.kind", "must be gaussian_random, target_token, or prefix_match");
  fail_if(!(cfg.oracle.stddev >= 0.0), "oracle.stddev", "must be >= 0");
  if (cfg.oracle.kind == "target_token")
    fail_if(cfg.oracle.token >= cfg.mdp.vocab_size, "oracle.token", "must be < vocab_size");
  if (cfg.oracle.kind == "prefix_match") {
    fail_if(cfg.oracle.targets.size() != cfg.mdp.num_contexts, "oracle.targets",
            "needs one target per context");
    for (const auto& t : cfg.oracle.targets) {
      fail_if(t.size() != cfg.mdp.horizon, "oracle.targets", "target length must equal horizon");
      for (uint32_t a : t)
        fail_if(a >= cfg.mdp.vocab_size, "oracle.targets", "token out of range");
    }
  }

  fail_if(cfg.feedback.mode != "ratings" && cfg.feedback.mode != "preferences", "feedback.mode",
          "must be ratings or preferences");
  fail_if(!(cfg.feedback.kappa > 0.0 && cfg.feedback.kappa <= 1.0), "feedback.kappa",
          "must be in (0, 1]");
  fail_if(cfg.feedback.samples_per_pair == 0, "feedback.samples_per_pair", "must be >= 1");
  fail_if(cfg.feedback.mode == "preferences" && cfg.feedback.outputs_per_context == 1,
          "feedback.outputs_per_context", "preferences need >= 2 outputs per context");

  fail_if(cfg.reward_model.model_class != "tabular" && cfg.reward_model.model_class != "linear",
          "reward_model.model_class", "must be tabular or linear");
  fail_if(cfg.reward_model.features != "token_counts" &&
              cfg.reward_model.features != "positional_onehot" &&
              cfg.reward_model.features != "context_crossed",
          "reward_model.features",
          "must be token_counts, positional_onehot, or context_crossed");
  fail_if(cfg.reward_model.objective != "mse" && cfg.reward_model.objective != "bt_nll",
          "reward_model.objective", "must be mse or bt_nll");
  fail_if(!(cfg.reward_model.step_size > 0.0), "reward_model.step_size", "must be > 0");
  fail_if(cfg.reward_model.num_epochs == 0, "reward_model.num_epochs", "must be >= 1");
  if (cfg.reward_model.l2_weight)
    fail_if(!(*cfg.reward_model.l2_weight >= 0.0), "reward_model.l2_weight", "must be >= 0");
  fail_if(!(cfg.reward_model.convergence_tol >= 0.0), "reward_model.convergence_tol",
          "must be >= 0");
  fail_if(cfg.feedback.mode == "ratings" && cfg.reward_model.objective != "mse",
          "reward_model.objective", "ratings feedback trains the mse objective");
  fail_if(cfg.feedback.mode == "preferences" && cfg.reward_model.objective != "bt_nll",
          "reward_model.objective", "preference feedback trains the bt_nll objective");

  fail_if(cfg.policy.algorithm != "ppo" && cfg.policy.algorithm != "vanilla_pg" &&
              cfg.policy.algorithm != "sft",
          "policy.algorithm", "must be ppo, vanilla_pg, or sft");
  fail_if(!(cfg.policy.step_size > 0.0), "policy.step_size", "must be > 0");
  fail_if(cfg.policy.batch_size == 0, "policy.batch_size", "must be >= 1");
  fail_if(cfg.policy.num_iters == 0, "policy.num_iters", "must be >= 1");
  fail_if(!(cfg.policy.beta > 0.0), "policy.beta", "must be > 0");
  fail_if(!(cfg.policy.clip_epsilon > 0.0), "policy.clip_epsilon", "must be > 0");
  fail_if(cfg.policy.baseline != "none" && cfg.policy.baseline != "exact_value" &&
              cfg.policy.baseline != "learned_value",
          "policy.baseline", "must be none, exact_value, or learned_value");
  fail_if(!(cfg.policy.critic_step_size > 0.0 && cfg.policy.critic_step_size <= 1.0),
          "policy.critic_step_size", "must be in (0, 1]");
  fail_if(cfg.policy.pre != "uniform" && cfg.policy.pre != "random_logits", "policy.pre",
          "must be uniform or random_logits");
  fail_if(cfg.policy.diag_every == 0, "policy.diag_every", "must be >= 1");

  fail_if(cfg.analysis.eval_dist != "uniform" && cfg.analysis.eval_dist != "context_dist",
          "analysis.eval_dist", "must be uniform or context_dist");
  fail_if(cfg.analysis.beta_grid.size() < 2, "analysis.beta_grid", "needs >= 2 grid points");
  for (size_t i = 0; i < cfg.analysis.beta_grid.size(); ++i) {
    fail_if(!(cfg.analysis.beta_grid[i] > 0.0), "analysis.beta_grid", "values must be > 0");
    fail_if(i > 0 && cfg.analysis.beta_grid[i] <= cfg.analysis.beta_grid[i - 1],
            "analysis.beta_grid", "must be strictly increasing");
  }
  fail_if(cfg.analysis.kappa_grid.size() < 2, "analysis.kappa_grid", "needs >= 2 grid points");
  for (double k : cfg.analysis.kappa_grid)
    fail_if(!(k > 0.0 && k <= 1.0), "analysis.kappa_grid", "values must be in (0, 1]");
  fail_if(cfg.analysis.feedback_size_grid.size() < 2, "analysis.feedback_size_grid",
          "needs >= 2 grid points");
  for (uint64_t s : cfg.analysis.feedback_size_grid)
    fail_if(s == 0, "analysis.feedback_size_grid", "values must be >= 1");
  fail_if(cfg.analysis.seeds.empty(), "analysis.seeds", "must be non-empty");
  fail_if(cfg.output_dir.empty(), "output_dir", "must be non-empty");

  // The enumeration-heavy pipeline needs the output space materialized.
  double log_outputs = cfg.mdp.horizon * std::log2(static_cast<double>(cfg.mdp.vocab_size));
  fail_if(log_outputs > std::log2(static_cast<double>(kDefaultEnumerationCap)),
          "mdp.horizon", "vocab_size^horizon exceeds the enumeration cap of 1000000");

  return cfg;
}

ExperimentConfig config_from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
  return config_from_json(j);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["mdp"]["vocab_size"] = cfg.mdp.vocab_size;
  j["mdp"]["horizon"] = cfg.mdp.horizon;
  j["mdp"]["num_contexts"] = cfg.mdp.num_contexts;
  if (cfg.mdp.context_dist.empty())
    j["mdp"]["context_dist"] = "uniform";
  else
    j["mdp"]["context_dist"] = cfg.mdp.context_dist;

  j["oracle"]["kind"] = cfg.oracle.kind;
  if (cfg.oracle.kind == "gaussian_random") {
    j["oracle"]["mean"] = cfg.oracle.mean;
    j["oracle"]["stddev"] = cfg.oracle.stddev;
    j["oracle"]["seed"] = cfg.oracle.seed;
  } else if (cfg.oracle.kind == "target_token") {
    j["oracle"]["token"] = cfg.oracle.token;
    j["oracle"]["bonus"] = cfg.oracle.bonus;
  } else {
    j["oracle"]["targets"] = cfg.oracle.targets;
    j["oracle"]["match_value"] = cfg.oracle.match_value;
  }

  j["feedback"]["mode"] = cfg.feedback.mode;
  j["feedback"]["kappa"] = cfg.feedback.kappa;
  j["feedback"]["outputs_per_context"] = cfg.feedback.outputs_per_context;
  j["feedback"]["samples_per_pair"] = cfg.feedback.samples_per_pair;
  j["feedback"]["seed"] = cfg.feedback.seed;

  j["reward_model"]["model_class"] = cfg.reward_model.model_class;
  j["reward_model"]["features"] = cfg.reward_model.features;
  j["reward_model"]["objective"] = cfg.reward_model.objective;
  j["reward_model"]["step_size"] = cfg.reward_model.step_size;
  j["reward_model"]["num_epochs"] = cfg.reward_model.num_epochs;
  if (cfg.reward_model.l2_weight) j["reward_model"]["l2_weight"] = *cfg.reward_model.l2_weight;
  j["reward_model"]["convergence_tol"] = cfg.reward_model.convergence_tol;
  j["reward_model"]["seed"] = cfg.reward_model.seed;

  j["policy"]["algorithm"] = cfg.policy.algorithm;
  j["policy"]["step_size"] = cfg.policy.step_size;
  j["policy"]["batch_size"] = cfg.policy.batch_size;
  j["policy"]["num_iters"] = cfg.policy.num_iters;
  j["policy"]["beta"] = cfg.policy.beta;
  j["policy"]["clip_epsilon"] = cfg.policy.clip_epsilon;
  j["policy"]["baseline"] = cfg.policy.baseline;
  j["policy"]["critic_step_size"] = cfg.policy.critic_step_size;
  j["policy"]["seed"] = cfg.policy.seed;
  j["policy"]["pre"] = cfg.policy.pre;
  if (cfg.policy.pre == "random_logits") {
    j["policy"]["pre_scale"] = cfg.policy.pre_scale;
    j["policy"]["pre_seed"] = cfg.policy.pre_seed;
  }
  j["policy"]["diag_every"] = cfg.policy.diag_every;

  j["analysis"]["beta_grid"] = cfg.analysis.beta_grid;
  j["analysis"]["kappa_grid"] = cfg.analysis.kappa_grid;
  j["analysis"]["feedback_size_grid"] = cfg.analysis.feedback_size_grid;
  j["analysis"]["seeds"] = cfg.analysis.seeds;
  j["analysis"]["eval_dist"] = cfg.analysis.eval_dist;

  j["output_dir"] = cfg.output_dir;
  return j;
}

void apply_override(nlohmann::json& j, const std::string& spec) {
  auto eq = spec.find('=');
  if (eq == std::string::npos)
    throw ConfigError(spec, "--set expects section.key=value");
  std::string path = spec.substr(0, eq);
  std::string value = spec.substr(eq + 1);

  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t dot = path.find('.', start);
    if (dot == std::string::npos) {
      parts.push_back(path.substr(start));
      break;
    }
    parts.push_back(path.substr(start, dot - start));
    start = dot + 1;
  }
  if (parts.empty() || parts.size() > 2 || parts[0].empty() ||
      (parts.size() == 2 && parts[1].empty()))
    throw ConfigError(path, "--set expects section.key=value");

  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // bare strings are taken literally
  }
  if (parts.size() == 1)
    j[parts[0]] = parsed;
  else
    j[parts[0]][parts[1]] = parsed;
}

void apply_env_seed(ExperimentConfig& cfg, uint64_t seed) {
  cfg.oracle.seed = seed;
  cfg.feedback.seed = seed + 1;
  cfg.reward_model.seed = seed + 2;
  cfg.policy.seed = seed + 3;
}

GenerationMdp ExperimentConfig::make_mdp() const {
  if (mdp.context_dist.empty())
    return GenerationMdp::uniform_contexts(mdp.vocab_size, mdp.horizon, mdp.num_contexts);
  return GenerationMdp(mdp.vocab_size, mdp.horizon, mdp.num_contexts, mdp.context_dist);
}

RewardSpec ExperimentConfig::make_reward_spec() const {
  if (oracle.kind == "gaussian_random")
    return GaussianRandomSpec{oracle.mean, oracle.stddev, oracle.seed};
  if (oracle.kind == "target_token") return TargetTokenSpec{oracle.token, oracle.bonus};
  PrefixMatchSpec pm;
  pm.match_value = oracle.match_value;
  for (const auto& t : oracle.targets) pm.targets.emplace_back(t.begin(), t.end());
  return pm;
}

Policy ExperimentConfig::make_pre_policy(const GenerationMdp& m) const {
  if (policy.pre == "uniform") return Policy::uniform(m, PolicyRole::Pre);
  return Policy::random_logits(m, policy.pre_seed, policy.pre_scale, PolicyRole::Pre);
}

TrainConfig ExperimentConfig::make_train_config() const {
  TrainConfig t;
  t.objective = reward_model.objective == "mse" ? Objective::Mse : Objective::BtNll;
  t.step_size = reward_model.step_size;
  t.num_epochs = reward_model.num_epochs;
  t.l2_weight = reward_model.l2_weight;
  t.convergence_tol = reward_model.convergence_tol;
  t.seed = reward_model.seed;
  return t;
}

ModelClass ExperimentConfig::model_class() const {
  return reward_model.model_class == "tabular" ? ModelClass::Tabular : ModelClass::Linear;
}

FeatureKind ExperimentConfig::feature_kind() const {
  if (reward_model.model_class == "tabular") return FeatureKind::None;
  if (reward_model.features == "token_counts") return FeatureKind::TokenCounts;
  if (reward_model.features == "positional_onehot") return FeatureKind::PositionalOnehot;
  return FeatureKind::ContextCrossed;
}

OptimConfig ExperimentConfig::make_optim_config() const {
  OptimConfig o;
  o.algorithm = policy.algorithm == "ppo"        ? Algorithm::Ppo
                : policy.algorithm == "vanilla_pg" ? Algorithm::VanillaPg
                                                   : Algorithm::Sft;
  o.step_size = policy.step_size;
  o.batch_size = policy.batch_size;
  o.num_iters = policy.num_iters;
  o.beta = policy.beta;
  o.clip_epsilon = policy.clip_epsilon;
  o.baseline = policy.baseline == "none"        ? BaselineKind::None
               : policy.baseline == "exact_value" ? BaselineKind::ExactValue
                                                  : BaselineKind::LearnedValue;
  o.critic_step_size = policy.critic_step_size;
  o.seed = policy.seed;
  return o;
}

std::vector<double> ExperimentConfig::eval_weights(const GenerationMdp& m) const {
  if (analysis.eval_dist == "context_dist")
    return std::vector<double>(m.context_dist().begin(), m.context_dist().end());
  return std::vector<double>(m.num_contexts(), 1.0 / static_cast<double>(m.num_contexts()));
}

}  // namespace rlhflab
