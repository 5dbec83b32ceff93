#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sparseot/controller.hpp"
#include "sparseot/data.hpp"
#include "sparseot/io.hpp"
#include "sparseot/reference.hpp"

namespace sparseot {
namespace cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace detail {

inline json parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  json cfg = json::parse(in, nullptr, false);
  if (cfg.is_discarded() || !cfg.is_object())
    throw ConfigError("config: " + path + " must hold one JSON object");
  return cfg;
}

// --set key=value; the value is JSON when it parses as JSON, a bare string
// otherwise, so lambda=0.5 is a number and penalty=l1 a string.
inline void apply_override(json& cfg, const std::string& kv) {
  auto pos = kv.find('=');
  if (pos == std::string::npos || pos == 0)
    throw ConfigError("--set expects key=value, got '" + kv + "'");
  std::string key = kv.substr(0, pos), raw = kv.substr(pos + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  cfg[key] = value;
}

inline void check_keys(const json& cfg,
                       const std::vector<std::string>& valid,
                       const std::string& sub) {
  for (const auto& [key, value] : cfg.items()) {
    if (std::find(valid.begin(), valid.end(), key) != valid.end()) continue;
    std::string keys;
    for (const auto& k : valid) keys += (keys.empty() ? "" : ", ") + k;
    throw ConfigError("unknown key '" + key + "' for subcommand '" + sub +
                      "' (valid keys: " + keys + ")");
  }
}

inline double num(const json& cfg, const std::string& key, double fallback) {
  if (!cfg.contains(key)) return fallback;
  if (!cfg[key].is_number())
    throw ConfigError("key '" + key + "' must be a number");
  return cfg[key].get<double>();
}

inline long integer(const json& cfg, const std::string& key, long fallback) {
  if (!cfg.contains(key)) return fallback;
  if (!cfg[key].is_number_integer())
    throw ConfigError("key '" + key + "' must be an integer");
  return cfg[key].get<long>();
}

inline std::string str(const json& cfg, const std::string& key,
                       const std::string& fallback) {
  if (!cfg.contains(key)) return fallback;
  if (!cfg[key].is_string())
    throw ConfigError("key '" + key + "' must be a string");
  return cfg[key].get<std::string>();
}

inline std::string required_str(const json& cfg, const std::string& key,
                                const std::string& sub) {
  if (!cfg.contains(key))
    throw ConfigError("subcommand '" + sub + "' requires key '" + key + "'");
  if (!cfg[key].is_string())
    throw ConfigError("key '" + key + "' must be a string");
  return cfg[key].get<std::string>();
}

inline std::vector<int> int_list(const json& cfg, const std::string& key,
                                 std::vector<int> fallback) {
  if (!cfg.contains(key)) return fallback;
  if (!cfg[key].is_array())
    throw ConfigError("key '" + key + "' must be an integer array");
  std::vector<int> out;
  for (const auto& v : cfg[key]) {
    if (!v.is_number_integer())
      throw ConfigError("key '" + key + "' must be an integer array");
    out.push_back(v.get<int>());
  }
  return out;
}

inline void ensure_parent_dir(const std::string& path) {
  std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline Penalty penalty_from(const json& cfg) {
  std::map<std::string, double> params;
  if (cfg.contains("gamma")) params["gamma"] = num(cfg, "gamma", 0);
  if (cfg.contains("xi")) params["xi"] = num(cfg, "xi", 0);
  return penalty_from_config(str(cfg, "penalty", "l1"), params);
}

inline TrainConfig train_config_from(const json& cfg) {
  TrainConfig tc;
  tc.batch_size = integer(cfg, "batch_size", tc.batch_size);
  tc.lr_f = num(cfg, "lr_f", tc.lr_f);
  tc.lr_g = num(cfg, "lr_g", tc.lr_g);
  tc.inner_steps = integer(cfg, "inner_steps", tc.inner_steps);
  tc.total_iters = integer(cfg, "total_iters", 1000);
  tc.lambda = num(cfg, "lambda", tc.lambda);
  tc.penalty = penalty_from(cfg);
  tc.seed = static_cast<uint64_t>(integer(cfg, "seed", 0));
  tc.log_every = integer(cfg, "log_every", tc.log_every);
  tc.eval_n = integer(cfg, "eval_n", tc.eval_n);
  tc.n_proj = integer(cfg, "n_proj", tc.n_proj);
  tc.eval_a = num(cfg, "eval_a", tc.eval_a);
  return tc;
}

inline AnnealConfig anneal_config_from(const json& cfg) {
  AnnealConfig ac;
  ac.lambda0 = num(cfg, "lambda0", ac.lambda0);
  ac.tem0 = num(cfg, "tem0", ac.tem0);
  ac.tem_min = num(cfg, "tem_min", ac.tem_min);
  ac.decay = num(cfg, "decay", ac.decay);
  ac.radius = num(cfg, "r", ac.radius);
  ac.r_low = num(cfg, "r_low", ac.r_low);
  ac.n_ini = static_cast<int>(integer(cfg, "n_ini", ac.n_ini));
  ac.n_tr = static_cast<int>(integer(cfg, "n_tr", ac.n_tr));
  ac.n_sm = static_cast<int>(integer(cfg, "n_sm", ac.n_sm));
  ac.a = num(cfg, "a", ac.a);
  ac.l = static_cast<int>(integer(cfg, "l", ac.l));
  std::string rule = str(cfg, "accept_rule", "consistent");
  if (rule == "consistent")
    ac.accept_rule = AcceptRule::consistent;
  else if (rule == "paper")
    ac.accept_rule = AcceptRule::paper;
  else
    throw ConfigError("accept_rule must be 'consistent' or 'paper'");
  ac.seed = static_cast<uint64_t>(integer(cfg, "seed", 0));
  return ac;
}

// Source rows are the cloud being moved (the map's inputs), target rows the
// destination distribution.
struct LoadedPair {
  PointCloud source;
  PointCloud target;
};

inline LoadedPair load_pair(const json& cfg, const std::string& sub) {
  LoadedPair out;
  out.source = load_matrix(required_str(cfg, "source", sub));
  out.target = load_matrix(required_str(cfg, "target", sub));
  require(out.source.cols() == out.target.cols(),
          "source and target dimensions differ");
  return out;
}

inline void write_json(const ordered_json& doc, const std::string& path) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  out << doc.dump(2) << "\n";
}

inline std::vector<int> load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("truth: cannot open " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("truth") ||
      !doc["truth"].is_array())
    throw ConfigError("truth: " + path +
                      " must hold {\"truth\": [indices]}");
  std::vector<int> truth;
  for (const auto& v : doc["truth"]) truth.push_back(v.get<int>());
  return truth;
}

inline int run_generate(const json& cfg) {
  check_keys(cfg,
             {"kind", "n", "seed", "radius", "std", "out_source", "out_target",
              "d", "k", "effect", "noise_sigma", "out_control",
              "out_perturbed", "out_truth"},
             "generate");
  std::string kind = required_str(cfg, "kind", "generate");
  if (kind == "eight_gaussians") {
    auto [source, target] = gen_eight_gaussians(
        static_cast<int>(integer(cfg, "n", 1024)), num(cfg, "radius", 10.0),
        num(cfg, "std", 0.5), static_cast<uint64_t>(integer(cfg, "seed", 0)));
    std::string sp = required_str(cfg, "out_source", "generate");
    std::string tp = required_str(cfg, "out_target", "generate");
    ensure_parent_dir(sp);
    ensure_parent_dir(tp);
    save_matrix(source, sp);
    save_matrix(target, tp);
    std::cout << "wrote " << sp << "\nwrote " << tp << "\n";
    return 0;
  }
  if (kind == "perturbation") {
    SyntheticSpec spec;
    spec.n = static_cast<int>(integer(cfg, "n", spec.n));
    spec.d = static_cast<int>(integer(cfg, "d", spec.d));
    spec.k = static_cast<int>(integer(cfg, "k", spec.k));
    spec.effect = num(cfg, "effect", spec.effect);
    spec.noise_sigma = num(cfg, "noise_sigma", spec.noise_sigma);
    spec.seed = static_cast<uint64_t>(integer(cfg, "seed", 0));
    SyntheticData data = gen_synthetic_perturbation(spec);
    std::string cp = required_str(cfg, "out_control", "generate");
    std::string pp = required_str(cfg, "out_perturbed", "generate");
    ensure_parent_dir(cp);
    ensure_parent_dir(pp);
    save_matrix(data.control, cp);
    save_matrix(data.perturbed, pp);
    std::cout << "wrote " << cp << "\nwrote " << pp << "\n";
    if (cfg.contains("out_truth")) {
      ordered_json doc;
      doc["truth"] = data.truth;
      std::string tp = str(cfg, "out_truth", "");
      write_json(doc, tp);
      std::cout << "wrote " << tp << "\n";
    }
    return 0;
  }
  throw ConfigError("generate: kind must be 'eight_gaussians' or "
                    "'perturbation', got '" +
                    kind + "'");
}

inline ordered_json summary_from(const TrajectoryRecord& rec) {
  ordered_json doc;
  doc["iter"] = rec.iter;
  doc["lambda"] = rec.lambda;
  doc["obj"] = rec.obj;
  doc["spa"] = rec.spa;
  doc["res"] = rec.res;
  doc["eval"] = rec.eval;
  doc["dim"] = rec.dim;
  return doc;
}

inline void write_run_outputs(const DualPair& pair, const Trajectory& traj,
                              const ordered_json& summary,
                              const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  icnn_save(pair.f, out_dir + "/f.icnn");
  icnn_save(pair.g, out_dir + "/g.icnn");
  save_trajectory(traj, out_dir + "/trajectory.jsonl");
  write_json(summary, out_dir + "/summary.json");
}

inline int run_train(const json& cfg) {
  check_keys(cfg,
             {"source", "target", "lambda", "penalty", "gamma", "xi", "widths",
              "activation", "batch_size", "lr_f", "lr_g", "inner_steps",
              "total_iters", "log_every", "eval_n", "n_proj", "eval_a", "seed",
              "out_dir"},
             "train");
  LoadedPair clouds = load_pair(cfg, "train");
  TrainConfig tc = train_config_from(cfg);
  DualPair pair = make_dual_pair(
      static_cast<int>(clouds.source.cols()),
      int_list(cfg, "widths", {64, 64, 1}),
      activation_from_string(str(cfg, "activation", "softplus")), tc.seed);
  Trainer trainer(std::move(pair), make_resampler(clouds.target),
                  make_resampler(clouds.source), tc);
  trainer.train(static_cast<int>(tc.total_iters));
  TrajectoryRecord rec = trainer.snapshot();
  sparseot::detail::push_record(trainer.trajectory(), rec);

  ordered_json summary = summary_from(rec);
  std::string out_dir = required_str(cfg, "out_dir", "train");
  write_run_outputs(trainer.pair(), trainer.trajectory(), summary, out_dir);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

inline int run_anneal(const json& cfg) {
  check_keys(cfg,
             {"source", "target", "penalty", "gamma", "xi", "widths",
              "activation", "batch_size", "lr_f", "lr_g", "inner_steps",
              "log_every", "eval_n", "n_proj", "seed", "out_dir", "mode",
              "lambda0", "tem0", "tem_min", "decay", "r", "r_low", "n_ini",
              "n_tr", "n_sm", "a", "l", "accept_rule"},
             "anneal");
  LoadedPair clouds = load_pair(cfg, "anneal");
  TrainConfig tc = train_config_from(cfg);
  AnnealConfig ac = anneal_config_from(cfg);
  std::string mode = required_str(cfg, "mode", "anneal");
  DualPair pair = make_dual_pair(
      static_cast<int>(clouds.source.cols()),
      int_list(cfg, "widths", {64, 64, 1}),
      activation_from_string(str(cfg, "activation", "softplus")), tc.seed);
  Sampler sample_p = make_resampler(clouds.target);
  Sampler sample_q = make_resampler(clouds.source);

  AnnealResult result;
  if (mode == "low_dim")
    result = anneal_low_dim(std::move(pair), sample_p, sample_q, tc, ac);
  else if (mode == "high_dim")
    result = anneal_high_dim(std::move(pair), sample_p, sample_q, tc, ac);
  else
    throw ConfigError("anneal: mode must be 'low_dim' or 'high_dim'");

  ordered_json summary;
  summary["mode"] = mode;
  summary["final_lambda"] = result.final_lambda;
  summary["final_dim"] = result.final_dim;
  summary["final_res"] = result.final_res;
  summary["phase_boundaries"] = result.phase_boundaries;
  std::string out_dir = required_str(cfg, "out_dir", "anneal");
  write_run_outputs(result.pair, result.trajectory, summary, out_dir);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

inline int run_evaluate(const json& cfg) {
  check_keys(cfg,
             {"checkpoint", "source", "target", "penalty", "gamma", "xi",
              "threshold", "n_proj", "seed", "truth", "out"},
             "evaluate");
  LoadedPair clouds = load_pair(cfg, "evaluate");
  IcnnNet g =
      icnn_load(required_str(cfg, "checkpoint", "evaluate") + "/g.icnn");
  require(g.input_dim == clouds.source.cols(),
          "checkpoint dimension does not match the data");
  Penalty penalty = penalty_from(cfg);
  double threshold = num(cfg, "threshold", 1e-2);

  PointCloud disp = displacement(g, clouds.source);
  ordered_json doc;
  doc["spa"] = spa(disp, penalty);
  doc["res"] = sliced_w2(clouds.source + disp, clouds.target,
                         static_cast<int>(integer(cfg, "n_proj", 128)),
                         static_cast<uint64_t>(integer(cfg, "seed", 0)));
  doc["dim"] = displacement_dim(disp, threshold);
  if (cfg.contains("truth"))
    doc["overlap"] =
        gene_overlap(disp, load_truth(str(cfg, "truth", "")), threshold);
  if (cfg.contains("out")) write_json(doc, str(cfg, "out", ""));
  std::cout << doc.dump(2) << "\n";
  return 0;
}

inline int run_oracle(const json& cfg) {
  check_keys(cfg,
             {"op", "source", "target", "epsilon", "lambda", "max_iters",
              "tol", "out", "out_mapped"},
             "oracle");
  std::string op = required_str(cfg, "op", "oracle");
  LoadedPair clouds = load_pair(cfg, "oracle");
  double eps = num(cfg, "epsilon", 1e-3);
  double lambda = num(cfg, "lambda", 0.0);
  int max_iters = static_cast<int>(integer(cfg, "max_iters", 200000));
  double tol = num(cfg, "tol", 1e-6);

  ordered_json doc;
  doc["op"] = op;
  if (op == "assignment") {
    Assignment match = exact_assignment_w2(clouds.source, clouds.target);
    doc["cost"] = match.mean_cost;
  } else if (op == "sinkhorn") {
    Coupling c = sinkhorn(clouds.source, clouds.target, eps, max_iters, tol);
    doc["cost"] = coupling_cost(
        c, pairwise_half_sq(clouds.source, clouds.target));
    doc["iters"] = c.iters;
    doc["marginal_err"] = c.marginal_err;
    doc["epsilon"] = eps;
  } else if (op == "elastic") {
    Vec a = Vec::Constant(clouds.source.rows(), 1.0 / clouds.source.rows());
    Vec b = Vec::Constant(clouds.target.rows(), 1.0 / clouds.target.rows());
    Coupling duals = sinkhorn_cost(
        pairwise_elastic(clouds.source, clouds.target, lambda), a, b, eps,
        max_iters, tol);
    PointCloud mapped =
        elastic_map_l1(clouds.source, clouds.target, lambda, eps, duals);
    doc["dim"] = displacement_dim(mapped - clouds.source);
    doc["iters"] = duals.iters;
    doc["epsilon"] = eps;
    doc["lambda"] = lambda;
    if (cfg.contains("out_mapped")) {
      std::string mp = str(cfg, "out_mapped", "");
      ensure_parent_dir(mp);
      save_matrix(mapped, mp);
    }
  } else {
    throw ConfigError(
        "oracle: op must be 'assignment', 'sinkhorn' or 'elastic'");
  }
  if (cfg.contains("out")) write_json(doc, str(cfg, "out", ""));
  std::cout << doc.dump(2) << "\n";
  return 0;
}

inline int run_report(const json& cfg) {
  check_keys(cfg, {"inputs", "out", "mode"}, "report");
  if (!cfg.contains("inputs") || !cfg["inputs"].is_array() ||
      cfg["inputs"].empty())
    throw ConfigError(
        "report: requires key 'inputs' holding an array of trajectory paths");
  std::string mode = str(cfg, "mode", "final");
  if (mode != "final" && mode != "full")
    throw ConfigError("report: mode must be 'final' or 'full'");
  std::string out_path = required_str(cfg, "out", "report");

  ensure_parent_dir(out_path);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("report: cannot open " + out_path);
  out << "file,iter,lambda,obj,spa,res,eval,dim,accepted\n";
  char buf[40];
  long rows = 0;
  auto emit = [&](const std::string& file, const TrajectoryRecord& rec) {
    out << file;
    for (double v : {static_cast<double>(rec.iter), rec.lambda, rec.obj,
                     rec.spa, rec.res, rec.eval, rec.dim}) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << ',' << (rec.has_accepted ? (rec.accepted ? "1" : "0") : "") << "\n";
    ++rows;
  };
  for (const auto& entry : cfg["inputs"]) {
    if (!entry.is_string())
      throw ConfigError("report: inputs must be an array of paths");
    std::string file = entry.get<std::string>();
    Trajectory traj = load_trajectory(file);
    if (traj.empty())
      throw ConfigError("report: " + file + " holds no records");
    if (mode == "final")
      emit(file, traj.back());
    else
      for (const auto& rec : traj) emit(file, rec);
  }
  if (!out) throw IoError("report: write failed for " + out_path);
  std::cout << "wrote " << out_path << " (" << rows << " rows)\n";
  return 0;
}

}  // namespace detail

// Entry point shared by the binary and the tests; args exclude the program
// name. Exit codes: 0 success, 1 usage or config error, 2 numerical abort.
inline int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"sparsity-regularized neural optimal transport"};
  app.require_subcommand(1);

  struct SubSpec {
    const char* name;
    const char* desc;
    int (*run)(const json&);
  };
  static const SubSpec subs[] = {
      {"generate", "write synthetic datasets", detail::run_generate},
      {"train", "fit a dual pair at constant lambda", detail::run_train},
      {"anneal", "adapt lambda by simulated annealing", detail::run_anneal},
      {"evaluate", "metrics for a checkpoint on a dataset",
       detail::run_evaluate},
      {"oracle", "reference discrete solvers", detail::run_oracle},
      {"report", "aggregate trajectories into a CSV table",
       detail::run_report},
  };

  struct SubState {
    CLI::App* cmd = nullptr;
    std::string config_path;
    std::vector<std::string> sets;
    int (*run)(const json&) = nullptr;
  };
  std::vector<SubState> states(std::size(subs));
  for (size_t i = 0; i < std::size(subs); ++i) {
    states[i].cmd = app.add_subcommand(subs[i].name, subs[i].desc);
    states[i].run = subs[i].run;
    states[i].cmd->add_option("--config", states[i].config_path,
                              "JSON config file");
    states[i].cmd->add_option("--set", states[i].sets,
                              "override a config key (key=value)");
  }

  std::vector<const char*> argv;
  argv.push_back("sparse_ot");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    for (const auto& st : states) {
      if (!st.cmd->parsed()) continue;
      json cfg = st.config_path.empty()
                     ? json::object()
                     : detail::parse_config_file(st.config_path);
      for (const auto& kv : st.sets) detail::apply_override(cfg, kv);
      return st.run(cfg);
    }
    throw ConfigError("no subcommand given");
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace cli
}  // namespace sparseot
