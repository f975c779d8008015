#include "exolam/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace exolam {

using nlohmann::json;

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::custom: return "custom";
    case Objective::baseline: return "baseline";
    case Objective::xexo: return "xexo";
    case Objective::action_pred: return "action_pred";
    case Objective::q_pred: return "q_pred";
  }
  return "custom";
}

Objective objective_from_name(const std::string& s) {
  if (s == "custom") return Objective::custom;
  if (s == "baseline") return Objective::baseline;
  if (s == "xexo") return Objective::xexo;
  if (s == "action_pred") return Objective::action_pred;
  if (s == "q_pred") return Objective::q_pred;
  throw std::invalid_argument(
      "unknown objective '" + s +
      "' (expected custom|baseline|xexo|action_pred|q_pred)");
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << content;
}

namespace {

[[noreturn]] void bad_key(const std::string& pointer, const std::string& key) {
  throw std::invalid_argument("config: unknown key at " + pointer + "/" + key);
}

void check_keys(const json& obj, const std::string& pointer,
                const std::set<std::string>& allowed) {
  if (!obj.is_object())
    throw std::invalid_argument("config: expected object at " + pointer);
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) bad_key(pointer, k);
}

template <typename T>
void get_to(const json& obj, const std::string& pointer, const char* key,
            T& out) {
  if (!obj.contains(key)) return;
  try {
    obj.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: bad value at " + pointer + "/" + key +
                                ": " + e.what());
  }
}

void parse_linear_env(const json& j, LinearEnvConfig& env) {
  check_keys(j, "/env",
             {"d_s", "d_a", "d_o", "n_xi", "p_switch", "alpha", "n_traj",
              "traj_len"});
  get_to(j, "/env", "d_s", env.d_s);
  get_to(j, "/env", "d_a", env.d_a);
  get_to(j, "/env", "d_o", env.d_o);
  get_to(j, "/env", "n_xi", env.n_xi);
  get_to(j, "/env", "p_switch", env.p_switch);
  get_to(j, "/env", "alpha", env.alpha);
  get_to(j, "/env", "n_traj", env.n_traj);
  get_to(j, "/env", "traj_len", env.traj_len);
  env.validate();
}

void parse_linear_model(const json& j, LinearTrainConfig& m,
                        Objective& objective) {
  check_keys(j, "/model",
             {"d_z", "lr", "steps", "batch_size", "objective", "lambda_xexo",
              "lambda_robust", "robust_target", "grad_clip", "log_every"});
  get_to(j, "/model", "d_z", m.d_z);
  get_to(j, "/model", "lr", m.lr);
  get_to(j, "/model", "steps", m.steps);
  get_to(j, "/model", "batch_size", m.batch_size);
  get_to(j, "/model", "lambda_xexo", m.lambda_xexo);
  get_to(j, "/model", "lambda_robust", m.lambda_robust);
  get_to(j, "/model", "grad_clip", m.grad_clip);
  get_to(j, "/model", "log_every", m.log_every);
  if (j.contains("robust_target"))
    m.robust_target =
        robust_target_from_name(j.at("robust_target").get<std::string>());
  if (j.contains("objective"))
    objective = objective_from_name(j.at("objective").get<std::string>());
}

void parse_grid_env(const json& j, GridEnvConfig& env) {
  check_keys(j, "/env", {"sigma", "n_steps"});
  get_to(j, "/env", "sigma", env.sigma);
  get_to(j, "/env", "n_steps", env.n_steps);
  env.validate();
}

void parse_grid_model(const json& j, GridModelConfig& m,
                      Objective& objective) {
  check_keys(j, "/model",
             {"d_z", "codebook_size", "beta", "enc_channels", "mlp_hidden",
              "dec_channels", "lr", "steps", "batch_size", "grad_clip",
              "objective", "lambda_xexo", "lambda_robust", "label_fraction",
              "log_every"});
  get_to(j, "/model", "d_z", m.d_z);
  get_to(j, "/model", "codebook_size", m.codebook_size);
  get_to(j, "/model", "beta", m.beta);
  get_to(j, "/model", "enc_channels", m.enc_channels);
  get_to(j, "/model", "mlp_hidden", m.mlp_hidden);
  get_to(j, "/model", "dec_channels", m.dec_channels);
  get_to(j, "/model", "lr", m.lr);
  get_to(j, "/model", "steps", m.steps);
  get_to(j, "/model", "batch_size", m.batch_size);
  get_to(j, "/model", "grad_clip", m.grad_clip);
  get_to(j, "/model", "lambda_xexo", m.lambda_xexo);
  get_to(j, "/model", "lambda_robust", m.lambda_robust);
  get_to(j, "/model", "label_fraction", m.label_fraction);
  get_to(j, "/model", "log_every", m.log_every);
  if (j.contains("objective"))
    objective = objective_from_name(j.at("objective").get<std::string>());
}

void parse_eval(const json& j, EvalConfig& e) {
  check_keys(j, "/eval",
             {"lambda_ridge", "anchors", "draws", "eval_traj", "eval_steps"});
  get_to(j, "/eval", "lambda_ridge", e.lambda_ridge);
  get_to(j, "/eval", "anchors", e.anchors);
  get_to(j, "/eval", "draws", e.draws);
  get_to(j, "/eval", "eval_traj", e.eval_traj);
  get_to(j, "/eval", "eval_steps", e.eval_steps);
}

void apply_objective(ExperimentConfig& cfg) {
  switch (cfg.objective) {
    case Objective::custom:
      break;
    case Objective::baseline:
      cfg.model.lambda_xexo = 0.0;
      cfg.model.lambda_robust = 0.0;
      cfg.model.robust_target = RobustTarget::none;
      cfg.grid_model.lambda_xexo = 0.0;
      cfg.grid_model.lambda_robust = 0.0;
      break;
    case Objective::xexo:
      if (cfg.model.lambda_xexo == 0.0) cfg.model.lambda_xexo = 1.0;
      if (cfg.grid_model.lambda_xexo == 0.0) cfg.grid_model.lambda_xexo = 1.0;
      cfg.model.lambda_robust = 0.0;
      cfg.model.robust_target = RobustTarget::none;
      cfg.grid_model.lambda_robust = 0.0;
      break;
    case Objective::action_pred:
      if (cfg.model.lambda_robust == 0.0) cfg.model.lambda_robust = 1.0;
      if (cfg.grid_model.lambda_robust == 0.0)
        cfg.grid_model.lambda_robust = 1.0;
      cfg.model.robust_target = RobustTarget::action;
      cfg.model.lambda_xexo = 0.0;
      cfg.grid_model.lambda_xexo = 0.0;
      break;
    case Objective::q_pred:
      if (!cfg.is_linear())
        throw std::invalid_argument(
            "config: objective q_pred applies only to linear experiments");
      if (cfg.model.lambda_robust == 0.0) cfg.model.lambda_robust = 1.0;
      cfg.model.robust_target = RobustTarget::q;
      cfg.model.lambda_xexo = 0.0;
      break;
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: JSON parse error: ") +
                                e.what());
  }
  check_keys(j, "", {"kind", "env", "model", "eval", "seeds"});
  ExperimentConfig cfg;
  if (!j.contains("kind"))
    throw std::invalid_argument("config: missing required key /kind");
  cfg.kind = j.at("kind").get<std::string>();
  if (cfg.kind != "linear" && cfg.kind != "grid")
    throw std::invalid_argument("config: kind must be 'linear' or 'grid'");

  if (cfg.is_linear()) {
    if (j.contains("env")) parse_linear_env(j.at("env"), cfg.env);
    if (j.contains("model"))
      parse_linear_model(j.at("model"), cfg.model, cfg.objective);
    cfg.model.validate(cfg.env.d_o);
  } else {
    if (j.contains("env")) parse_grid_env(j.at("env"), cfg.grid_env);
    if (j.contains("model"))
      parse_grid_model(j.at("model"), cfg.grid_model, cfg.objective);
    cfg.grid_model.validate();
  }
  if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval);
  if (j.contains("seeds")) {
    cfg.seeds.clear();
    j.at("seeds").get_to(cfg.seeds);
    if (cfg.seeds.empty())
      throw std::invalid_argument("config: seeds list is empty");
  }
  apply_objective(cfg);
  return cfg;
}

ExperimentConfig parse_experiment_config_file(const std::string& path) {
  return parse_experiment_config(read_text_file(path));
}

std::string canonical_config_json(const ExperimentConfig& cfg) {
  json j;
  j["kind"] = cfg.kind;
  j["objective"] = objective_name(cfg.objective);
  if (cfg.is_linear()) {
    j["env"] = {{"d_s", cfg.env.d_s},         {"d_a", cfg.env.d_a},
                {"d_o", cfg.env.d_o},         {"n_xi", cfg.env.n_xi},
                {"p_switch", cfg.env.p_switch}, {"alpha", cfg.env.alpha},
                {"n_traj", cfg.env.n_traj},   {"traj_len", cfg.env.traj_len}};
    j["model"] = {{"d_z", cfg.model.d_z},
                  {"lr", cfg.model.lr},
                  {"steps", cfg.model.steps},
                  {"batch_size", cfg.model.batch_size},
                  {"lambda_xexo", cfg.model.lambda_xexo},
                  {"lambda_robust", cfg.model.lambda_robust},
                  {"robust_target",
                   robust_target_name(cfg.model.robust_target)},
                  {"grad_clip", cfg.model.grad_clip},
                  {"log_every", cfg.model.log_every}};
  } else {
    j["env"] = {{"sigma", cfg.grid_env.sigma},
                {"n_steps", cfg.grid_env.n_steps}};
    j["model"] = {{"d_z", cfg.grid_model.d_z},
                  {"codebook_size", cfg.grid_model.codebook_size},
                  {"beta", cfg.grid_model.beta},
                  {"enc_channels", cfg.grid_model.enc_channels},
                  {"mlp_hidden", cfg.grid_model.mlp_hidden},
                  {"dec_channels", cfg.grid_model.dec_channels},
                  {"lr", cfg.grid_model.lr},
                  {"steps", cfg.grid_model.steps},
                  {"batch_size", cfg.grid_model.batch_size},
                  {"grad_clip", cfg.grid_model.grad_clip},
                  {"lambda_xexo", cfg.grid_model.lambda_xexo},
                  {"lambda_robust", cfg.grid_model.lambda_robust},
                  {"label_fraction", cfg.grid_model.label_fraction},
                  {"log_every", cfg.grid_model.log_every}};
  }
  j["eval"] = {{"lambda_ridge", cfg.eval.lambda_ridge},
               {"anchors", cfg.eval.anchors},
               {"draws", cfg.eval.draws},
               {"eval_traj", cfg.eval.eval_traj},
               {"eval_steps", cfg.eval.eval_steps}};
  j["seeds"] = cfg.seeds;
  return j.dump();  // nlohmann objects iterate in sorted key order
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf, 16);
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = json::parse(canonical_config_json(cfg));
  j.erase("seeds");
  return fnv1a_hex(j.dump());
}

std::vector<std::pair<ExperimentConfig, std::string>> SweepSpec::expand()
    const {
  std::vector<std::pair<ExperimentConfig, std::string>> out;
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    json base = json::parse(base_json);
    json swept = json::object();
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const json value = json::parse(axes[a].values[idx[a]]);
      // Walk the dot path.
      json* cur = &base;
      std::string path = axes[a].path;
      std::size_t pos;
      while ((pos = path.find('.')) != std::string::npos) {
        cur = &((*cur)[path.substr(0, pos)]);
        path = path.substr(pos + 1);
      }
      (*cur)[path] = value;
      swept[axes[a].path] = value;
    }
    out.emplace_back(parse_experiment_config(base.dump()), swept.dump());
    // Odometer increment.
    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++idx[a] < axes[a].values.size()) break;
      idx[a] = 0;
    }
    if (axes.empty() || a == axes.size()) break;
  }
  return out;
}

SweepSpec parse_sweep_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("sweep: JSON parse error: ") +
                                e.what());
  }
  check_keys(j, "", {"base", "axes", "figure"});
  if (!j.contains("base") || !j.contains("axes"))
    throw std::invalid_argument("sweep: need 'base' and 'axes'");
  SweepSpec spec;
  spec.base_json = j.at("base").dump();
  parse_experiment_config(spec.base_json);  // validate early
  for (const auto& axis : j.at("axes")) {
    check_keys(axis, "/axes[]", {"path", "values"});
    SweepAxis a;
    a.path = axis.at("path").get<std::string>();
    for (const auto& v : axis.at("values")) a.values.push_back(v.dump());
    if (a.values.empty())
      throw std::invalid_argument("sweep: axis '" + a.path + "' has no values");
    spec.axes.push_back(std::move(a));
  }
  if (j.contains("figure")) spec.figure = j.at("figure").get<std::string>();

  std::size_t combos = 1;
  for (const auto& a : spec.axes) combos *= a.values.size();
  const ExperimentConfig base = parse_experiment_config(spec.base_json);
  spec.total_runs = combos * base.seeds.size();
  return spec;
}

SweepSpec parse_sweep_spec_file(const std::string& path) {
  return parse_sweep_spec(read_text_file(path));
}

}  // namespace exolam
