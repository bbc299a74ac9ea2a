#include "cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "checks.hpp"
#include "fiem/algorithms.hpp"
#include "fiem/dataset_io.hpp"
#include "fiem/errors.hpp"
#include "fiem/experiments.hpp"
#include "fiem/gmm.hpp"
#include "fiem/stepsize.hpp"
#include "fiem/toy_model.hpp"

namespace fiem::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  T value{};
  try {
    if constexpr (std::is_floating_point_v<T>) {
      value = static_cast<T>(std::stod(text, &used));
    } else {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
      value = static_cast<T>(std::stoull(text, &used));
    }
  } catch (const std::exception&) {
    throw ArgumentError(what + ": cannot parse '" + text + "'");
  }
  if (used != text.size()) throw ArgumentError(what + ": cannot parse '" + text + "'");
  return value;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw ArgumentError("cannot write " + path.string());
  file << text;
  if (!file) throw ArgumentError("write failed for " + path.string());
}

std::string read_text(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw ArgumentError("cannot read " + path);
  std::stringstream buffer;
  buffer << file.rdbuf();
  return buffer.str();
}

std::string config_value(const json& value, const std::string& key) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number()) return value.dump();
  if (value.is_array()) {
    std::string joined;
    for (const auto& item : value) {
      if (item.is_array() || item.is_object()) throw ConfigurationError("config key '" + key + "': nested values");
      if (!joined.empty()) joined += ',';
      joined += item.is_string() ? item.get<std::string>() : item.dump();
    }
    return joined;
  }
  throw ConfigurationError("config key '" + key + "': unsupported value type");
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

// Inserts the keys of a JSON object as flags of `sub` unless given on the command line.
void apply_config(std::vector<std::string>& args, const std::string& path, CLI::App& sub) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& error) {
    throw ConfigurationError("config " + path + ": " + error.what());
  }
  if (!doc.is_object()) throw ConfigurationError("config " + path + ": expected a JSON object");
  std::vector<std::string> extra;
  for (const auto& [key, value] : doc.items()) {
    const std::string flag = "--" + key;
    const CLI::Option* option = sub.get_option_no_throw(flag);
    if (option == nullptr || key == "help") {
      throw ConfigurationError("config " + path + ": unknown key '" + key + "' for '" + sub.get_name() + "'");
    }
    if (has_flag(args, flag)) continue;
    if (value.is_boolean()) {
      if (option->get_expected_min() != 0) throw ConfigurationError("config key '" + key + "' expects a value");
      if (value.get<bool>()) extra.push_back(flag);
      continue;
    }
    extra.push_back(flag);
    extra.push_back(config_value(value, key));
  }
  args.insert(args.end(), extra.begin(), extra.end());
}

// plan ------------------------------------------------------------------

struct PlanArgs {
  std::size_t n = 0;
  std::size_t kmax = 0;
  double vmin = 1.0;
  double l = 1.0;
  double lv = 1.0;
  double mu = 0.25;
  double lambda = 0.5;
  double delta_v = 1.0;
  std::string strategy = "case1";
  std::string weights;
  std::optional<double> epsilon;
  std::optional<double> li_max;
  std::string out;
};

void add_plan(CLI::App& app, PlanArgs& a) {
  app.add_option("--n", a.n, "number of examples")->required();
  app.add_option("--kmax", a.kmax, "number of iterations")->required();
  app.add_option("--vmin", a.vmin, "smallest eigenvalue bound v_min");
  app.add_option("--L", a.l, "root-mean-square Lipschitz constant of the per-example statistics");
  app.add_option("--Lv", a.lv, "Lipschitz constant of the curvature field");
  app.add_option("--mu", a.mu, "descent fraction in (0, 1)");
  app.add_option("--lambda", a.lambda, "variance parameter in (0, 1)");
  app.add_option("--delta-v", a.delta_v, "objective decrease used in the reported bound");
  app.add_option("--strategy", a.strategy, "case1 | case2 | nonuniform | karimi | auto");
  app.add_option("--weights", a.weights, "CSV of termination weights for the nonuniform strategy");
  app.add_option("--epsilon", a.epsilon, "target accuracy for --strategy auto");
  app.add_option("--Li-max", a.li_max, "largest per-example Lipschitz constant (karimi; default --L)");
  app.add_option("--out", a.out, "write the plan JSON to this file instead of stdout");
}

std::vector<double> read_weights(const std::string& path) {
  const Eigen::MatrixXd m = read_matrix_csv(path);
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.push_back(m(i, j));
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) throw ArgumentError("termination weights must have a positive sum");
  for (double& x : w) x /= total;
  return w;
}

int run_plan(const PlanArgs& a, std::ostream& out) {
  PlannerInputs inputs;
  inputs.n = a.n;
  inputs.k_max = a.kmax;
  inputs.v_min = a.vmin;
  inputs.l_rms = a.l;
  inputs.l_gradv = a.lv;
  inputs.mu = a.mu;
  inputs.lambda = a.lambda;
  inputs.delta_v = a.delta_v;
  inputs.validate();

  Strategy strategy;
  if (a.strategy == "auto") {
    if (!a.epsilon) throw ArgumentError("--strategy auto needs --epsilon");
    strategy = recommend(*a.epsilon, a.n);
  } else {
    strategy = parse_strategy(a.strategy);
  }

  ordered_json doc;
  int code = kSuccess;
  try {
    StepSizePlan plan;
    switch (strategy) {
      case Strategy::Case1:
        plan = plan_case1(inputs);
        break;
      case Strategy::Case2:
        plan = solve_case2(inputs);
        break;
      case Strategy::NonUniform: {
        std::vector<double> w = a.weights.empty() ? std::vector<double>(a.kmax, 1.0 / static_cast<double>(a.kmax))
                                                  : read_weights(a.weights);
        plan = nonuniform_plan(inputs, w);
        break;
      }
      case Strategy::Karimi:
        plan = karimi_plan(inputs, {a.li_max.value_or(a.l)});
        break;
    }
    doc = plan_to_json(plan);
  } catch (const InfeasibleError& error) {
    doc = infeasible_plan_json(strategy, inputs, error.condition());
    code = kInfeasible;
  }
  const std::string text = doc.dump(2) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
  }
  return code;
}

// toy -------------------------------------------------------------------

struct ToyArgs {
  std::uint64_t seed = 1;
  std::size_t n = 100;
  std::size_t kmax = 0;
  std::string algos = "em,iem,online-em,fiem,opt-fiem";
  std::string plan;
  std::size_t replicas = 100;
  std::size_t batch = 1;
  double mu = 0.25;
  double lambda = 0.5;
  std::string out = "toy_out";
  std::string preset;
};

void add_toy(CLI::App& app, ToyArgs& a) {
  app.add_option("--seed", a.seed, "master seed");
  app.add_option("--n", a.n, "number of examples");
  app.add_option("--kmax", a.kmax, "number of iterations (0: 20 n)");
  app.add_option("--algos", a.algos, "comma-separated list of em, iem, online-em, fiem, opt-fiem");
  app.add_option("--plan", a.plan, "plan JSON produced by 'plan' (default: case1 schedule from the model constants)");
  app.add_option("--replicas", a.replicas, "independent replicas");
  app.add_option("--batch", a.batch, "mini-batch size");
  app.add_option("--mu", a.mu, "descent fraction for the default schedule");
  app.add_option("--lambda", a.lambda, "variance parameter for the default schedule");
  app.add_option("--out", a.out, "output directory");
  app.add_option("--preset", a.preset, "desk | paper-fig7");
}

void apply_toy_preset(CLI::App& app, ToyArgs& a) {
  if (a.preset.empty()) return;
  std::size_t n = 0;
  std::size_t replicas = 0;
  if (a.preset == "desk") {
    n = 100;
    replicas = 100;
  } else if (a.preset == "paper-fig7") {
    n = 1000;
    replicas = 1000;
  } else {
    throw ArgumentError("unknown toy preset '" + a.preset + "'");
  }
  if (app.count("--n") == 0) a.n = n;
  if (app.count("--replicas") == 0) a.replicas = replicas;
  if (app.count("--kmax") == 0) a.kmax = 20 * a.n;
  if (app.count("--mu") == 0) a.mu = 0.25;
  if (app.count("--lambda") == 0) a.lambda = 0.5;
}

StepSchedule schedule_from_plan(const std::string& path, std::size_t k_max) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& error) {
    throw ConfigurationError("plan " + path + ": " + error.what());
  }
  if (!doc.is_object() || !doc.contains("gamma")) throw ConfigurationError("plan " + path + ": missing 'gamma'");
  if (doc.contains("feasible") && !doc.at("feasible").get<bool>()) {
    throw ConfigurationError("plan " + path + " is infeasible");
  }
  const json& gamma = doc.at("gamma");
  if (gamma.is_number()) return StepSchedule::constant(k_max, gamma.get<double>());
  if (!gamma.is_array()) throw ConfigurationError("plan " + path + ": 'gamma' must be a number or an array");
  std::vector<double> values = gamma.get<std::vector<double>>();
  if (values.size() != k_max) {
    throw ConfigurationError(fmt::format("plan {}: {} step sizes for {} iterations", path, values.size(), k_max));
  }
  return StepSchedule(std::move(values));
}

int run_toy(ToyArgs a, CLI::App& app, std::size_t threads, std::ostream& out) {
  apply_toy_preset(app, a);
  if (a.kmax == 0) a.kmax = 20 * a.n;
  std::vector<Algorithm> algorithms;
  for (const auto& name : split_list(a.algos)) algorithms.push_back(parse_algorithm(name));
  if (algorithms.empty()) throw ArgumentError("--algos is empty");

  const ToyModel model(generate_toy(a.seed, a.n));
  const ModelConstants c = model.constants();
  const PlannerInputs inputs = PlannerInputs::from_constants(c, a.n, a.kmax, a.mu, a.lambda);
  const double C = solve_C_case1(inputs);
  const double gamma_fgm = gamma_case1(inputs, C);
  const double ratio = C / inputs.lambda;
  const bool fgm_feasible = static_cast<double>(a.n) > ratio * ratio * ratio;
  const StepSizePlan karimi = karimi_plan(inputs, c.lipschitz_i);

  ExperimentConfig config;
  config.algorithms = algorithms;
  config.schedule = a.plan.empty() ? StepSchedule::constant(a.kmax, gamma_fgm) : schedule_from_plan(a.plan, a.kmax);
  config.termination = TerminationRule::uniform(a.kmax);
  config.replicas = a.replicas;
  config.seed = a.seed;
  config.threads = threads;
  config.checkpoints = default_checkpoints(a.kmax, a.n);
  config.metrics = {Metric::HSq,       Metric::GapSq,      Metric::IncrementSq, Metric::Lambda,
                    Metric::Objective, Metric::ThetaError, Metric::VdotSq};

  RunOptions<ToyModel> options;
  options.batch_size = a.batch;
  options.initial_stat = SuffStat::Zero(static_cast<Eigen::Index>(model.stat_dim()));
  options.diagnostics = DiagnosticsFlags{true, true, true, true};
  try {
    options.theta_ref = model.make_parameter(model.theta_star());
  } catch (const LinearAlgebraError&) {
  }
  const ReplicatedRuns runs = run_replicated(model, config, options);

  const fs::path dir(a.out);
  fs::create_directories(dir);

  ordered_json constants;
  constants["n"] = a.n;
  constants["k_max"] = a.kmax;
  constants["seed"] = a.seed;
  constants["v_min"] = c.v_min;
  constants["v_max"] = c.v_max;
  constants["L"] = c.lipschitz_rms;
  constants["L_i_max"] = c.max_lipschitz_i();
  constants["L_Vdot"] = c.lipschitz_gradv;
  constants["mu"] = a.mu;
  constants["lambda"] = a.lambda;
  constants["C"] = C;
  constants["gamma_fgm"] = gamma_fgm;
  constants["gamma_fgm_feasible"] = fgm_feasible;
  constants["gamma_karimi"] = karimi.gammas[0];
  constants["bound_constant_fgm"] = bound_case1(inputs, C).constant;
  constants["bound_constant_karimi"] = karimi.bound_constant;
  constants["schedule"] = a.plan.empty() ? "gamma_fgm" : a.plan;
  write_text(dir / "constants.json", constants.dump(2) + "\n");
  write_text(dir / "spec.json", toy_spec_to_json(model.spec()).dump(2) + "\n");

  {
    std::ostringstream text;
    write_diagnostics_csv(text, runs, config.checkpoints, config.metrics);
    write_text(dir / "diagnostics.csv", text.str());
  }
  {
    std::ostringstream text;
    aggregate(runs, config.checkpoints, config.metrics).write_csv(text);
    write_text(dir / "aggregates.csv", text.str());
  }
  std::ostringstream est;
  est << "algorithm,replicas,e0,e0_se,e1,e1_se,e2,e2_se,delta_v,delta_v_se\n";
  const auto field = [](const std::optional<Estimate>& e, bool se) {
    if (!e) return std::string("nan");
    return format_double(se ? e->se : e->value);
  };
  std::size_t aborted = 0;
  for (std::size_t i = 0; i < algorithms.size(); ++i) {
    const auto completed = runs.completed_runs(i);
    aborted += a.replicas - completed.size();
    if (completed.empty()) continue;
    const bool gap = algorithms[i] != Algorithm::EM && algorithms[i] != Algorithm::OnlineEM;
    const EEstimates e = estimate_E(completed, gap, c.v_max);
    const Estimate dv = estimate_delta_v(completed);
    est << algorithm_name(algorithms[i]) << ',' << completed.size() << ',' << field(e.e0, false) << ','
        << field(e.e0, true) << ',' << format_double(e.e1.value) << ',' << format_double(e.e1.se) << ','
        << field(e.e2, false) << ',' << field(e.e2, true) << ',' << format_double(dv.value) << ','
        << format_double(dv.se) << '\n';
  }
  write_text(dir / "estimates.csv", est.str());
  out << fmt::format("wrote {} ({} algorithms x {} replicas, K_max={}, gamma={})\n", dir.string(), algorithms.size(),
                     a.replicas, a.kmax, format_double(config.schedule[0]));
  if (aborted > 0) {
    out << fmt::format("{} runs aborted\n", aborted);
    return kDomainAbort;
  }
  return kSuccess;
}

// gmm -------------------------------------------------------------------

struct GmmArgs {
  std::string data;
  std::string synthetic;
  std::size_t preprocess = 0;
  std::size_t g = 0;
  std::string algos = "em,iem,online-em,h-fiem";
  double gamma = kGmmPresetGamma;
  double iem_gamma = 1.0;
  std::size_t batch = 100;
  std::size_t kswitch = 6;
  std::size_t epochs = 100;
  std::size_t replicas = 1;
  std::uint64_t seed = 1;
  std::string out = "gmm_out";
  std::string preset;
  std::string report_epochs = "0,1,15,25,50,100";
  std::string domain_policy = "warn";
};

void add_gmm(CLI::App& app, GmmArgs& a) {
  app.add_option("--data", a.data, "CSV of observations, one row per example");
  app.add_option("--synthetic", a.synthetic, "seed,n,g,p,sep: draw a synthetic mixture");
  app.add_option("--preprocess", a.preprocess, "project onto this many principal components (0: none)");
  app.add_option("--g", a.g, "number of components (default: synthetic g, else 12)");
  app.add_option("--algos", a.algos, "comma-separated list of em, iem, online-em, fiem, h-fiem");
  app.add_option("--gamma", a.gamma, "step size of Online EM, FIEM and h-FIEM");
  app.add_option("--iem-gamma", a.iem_gamma, "step size of iEM");
  app.add_option("--batch", a.batch, "mini-batch size");
  app.add_option("--kswitch", a.kswitch, "Online EM epochs before h-FIEM switches to FIEM");
  app.add_option("--epochs", a.epochs, "number of epochs");
  app.add_option("--replicas", a.replicas, "independent replicas");
  app.add_option("--seed", a.seed, "master seed (initialization and index draws)");
  app.add_option("--out", a.out, "output directory");
  app.add_option("--preset", a.preset, "paper");
  app.add_option("--report-epochs", a.report_epochs, "epochs listed in the epoch table");
  app.add_option("--domain-policy", a.domain_policy, "warn | abort");
}

int run_gmm(GmmArgs a, CLI::App& app, std::size_t threads, std::ostream& out) {
  if (!a.preset.empty()) {
    if (a.preset != "paper") throw ArgumentError("unknown gmm preset '" + a.preset + "'");
    if (app.count("--g") == 0) a.g = 12;
    if (app.count("--preprocess") == 0 && !a.data.empty()) a.preprocess = 20;
    if (app.count("--batch") == 0) a.batch = 100;
    if (app.count("--gamma") == 0) a.gamma = kGmmPresetGamma;
    if (app.count("--epochs") == 0) a.epochs = 100;
    if (app.count("--kswitch") == 0) a.kswitch = 6;
  }
  if (a.data.empty() == a.synthetic.empty()) throw ArgumentError("give exactly one of --data and --synthetic");

  ordered_json summary;
  Eigen::MatrixXd observations;
  if (!a.data.empty()) {
    observations = read_matrix_csv(a.data);
    summary["source"] = a.data;
    if (a.g == 0) a.g = 12;
  } else {
    const auto parts = split_list(a.synthetic);
    if (parts.size() != 5) throw ArgumentError("--synthetic expects seed,n,g,p,sep");
    const auto sseed = parse_number<std::uint64_t>(parts[0], "--synthetic seed");
    const auto sn = parse_number<std::size_t>(parts[1], "--synthetic n");
    const auto sg = parse_number<std::size_t>(parts[2], "--synthetic g");
    const auto sp = parse_number<std::size_t>(parts[3], "--synthetic p");
    const auto sep = parse_number<double>(parts[4], "--synthetic sep");
    SyntheticGmm synthetic = generate_gmm_synthetic(sseed, sn, sg, sp, sep);
    observations = synthetic.data.observations;
    summary["source"] = "synthetic";
    summary["synthetic_truth"] = gmm_params_to_json(synthetic.truth);
    if (a.g == 0) a.g = sg;
  }
  if (a.preprocess > 0) {
    PreprocessResult pre = preprocess(observations, a.preprocess);
    summary["kept_columns"] = pre.kept_columns.size();
    summary["captured_variance"] = pre.captured_variance;
    observations = std::move(pre.observations);
  }

  const GmmModel model(GmmDataset::from_observations(std::move(observations)), a.g);
  const GmmParams initial = initialize_gmm(model.data(), a.g, a.seed);

  GmmExperimentConfig config;
  config.algorithms = split_list(a.algos);
  for (const auto& name : config.algorithms) {
    if (name != "h-fiem" && parse_algorithm(name) == Algorithm::OptFIEM) {
      throw ArgumentError("opt-fiem is not available for mixtures");
    }
  }
  config.gamma = a.gamma;
  config.iem_gamma = a.iem_gamma;
  config.batch_size = a.batch;
  config.epochs = a.epochs;
  config.kswitch = a.kswitch;
  config.replicas = a.replicas;
  config.seed = a.seed;
  config.threads = threads;
  if (a.domain_policy == "warn") {
    config.domain_policy = DomainPolicy::Warn;
  } else if (a.domain_policy == "abort") {
    config.domain_policy = DomainPolicy::Abort;
  } else {
    throw ArgumentError("--domain-policy must be warn or abort");
  }
  const GmmExperimentResult result = run_gmm_experiment(model, initial, config);

  std::vector<std::size_t> report;
  for (const auto& e : split_list(a.report_epochs)) {
    const auto epoch = parse_number<std::size_t>(e, "--report-epochs");
    if (epoch <= a.epochs) report.push_back(epoch);
  }

  const fs::path dir(a.out);
  fs::create_directories(dir);
  {
    std::ostringstream text;
    write_epoch_table_csv(text, result, report);
    write_text(dir / "epoch_table.csv", text.str());
  }
  {
    std::ostringstream text;
    write_gmm_trajectories_csv(text, result, config, model.size());
    write_text(dir / "trajectories.csv", text.str());
  }
  write_text(dir / "init_params.json", gmm_params_to_json(initial).dump(2) + "\n");

  summary["n"] = model.size();
  summary["p"] = model.dim();
  summary["g"] = a.g;
  summary["initial_loglik"] = result.initial_loglik;
  std::size_t aborted = 0;
  ordered_json paths = ordered_json::array();
  for (const auto& path : result.paths) {
    ordered_json entry;
    entry["algorithm"] = path.algorithm;
    entry["replica"] = path.replica;
    entry["iterations"] = path.iterations;
    entry["examples_processed"] = path.examples_processed;
    entry["final_loglik"] = path.loglik.back();
    entry["domain_violations"] = path.domain_violations;
    entry["first_violation"] = path.first_violation;
    entry["abort_reason"] = path.abort_reason;
    if (!path.abort_reason.empty()) ++aborted;
    paths.push_back(std::move(entry));
  }
  summary["paths"] = std::move(paths);
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  out << fmt::format("wrote {} (n={}, p={}, g={}, initial loglik {})\n", dir.string(), model.size(), model.dim(),
                     a.g, format_double(result.initial_loglik));
  if (aborted > 0) {
    out << fmt::format("{} runs aborted on a domain violation\n", aborted);
    return kDomainAbort;
  }
  return kSuccess;
}

// check -----------------------------------------------------------------

struct CheckArgs {
  std::string suite = "all";
  std::string scale = "desk";
  std::uint64_t seed = 1;
};

void add_check(CLI::App& app, CheckArgs& a) {
  app.add_option("--suite", a.suite, "theorem1 | prop2 | identities | all");
  app.add_option("--scale", a.scale, "desk | paper");
  app.add_option("--seed", a.seed, "master seed");
}

int run_check(const CheckArgs& a, std::size_t threads, std::ostream& out) {
  bool ok = true;
  for (const auto& result : run_check_suite(a.suite, a.scale, a.seed, threads)) {
    out << (result.passed ? "PASS " : "FAIL ") << result.name << ": " << result.detail << '\n';
    ok = ok && result.passed;
  }
  return ok ? kSuccess : kFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& input, std::ostream& out, std::ostream& err) {
  CLI::App app("Incremental EM algorithms: step-size planning, experiments and checks", "fiem");
  app.require_subcommand(1);
  app.fallthrough();
  std::size_t threads = 0;
  std::string config_path;
  app.add_option("--threads", threads, "worker threads (0: all cores)");
  app.add_option("--config", config_path, "JSON file of option values for the subcommand");

  PlanArgs plan_args;
  ToyArgs toy_args;
  GmmArgs gmm_args;
  CheckArgs check_args;
  CLI::App* plan = app.add_subcommand("plan", "compute a step-size plan");
  CLI::App* toy = app.add_subcommand("toy", "run the linear Gaussian toy experiments");
  CLI::App* gmm = app.add_subcommand("gmm", "fit a Gaussian mixture with shared covariance");
  CLI::App* check = app.add_subcommand("check", "run the verification suites");
  add_plan(*plan, plan_args);
  add_toy(*toy, toy_args);
  add_gmm(*gmm, gmm_args);
  add_check(*check, check_args);

  try {
    std::vector<std::string> args;
    for (std::size_t i = 0; i < input.size(); ++i) {
      if (input[i] == "--config") {
        if (i + 1 >= input.size()) throw ArgumentError("--config needs a file");
        config_path = input[++i];
      } else if (input[i].rfind("--config=", 0) == 0) {
        config_path = input[i].substr(9);
      } else {
        args.push_back(input[i]);
      }
    }
    if (!config_path.empty()) {
      const auto name = std::find_if(args.begin(), args.end(), [](const std::string& a) {
        return a == "plan" || a == "toy" || a == "gmm" || a == "check";
      });
      if (name == args.end()) throw ArgumentError("--config needs a subcommand");
      apply_config(args, config_path, *app.get_subcommand(*name));
    }
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::ParseError& error) {
      const int code = app.exit(error, out, err);
      return code == 0 ? kSuccess : kFailure;
    }

    if (plan->parsed()) return run_plan(plan_args, out);
    if (toy->parsed()) return run_toy(toy_args, *toy, threads, out);
    if (gmm->parsed()) return run_gmm(gmm_args, *gmm, threads, out);
    return run_check(check_args, threads, out);
  } catch (const RunAborted& error) {
    err << "error: " << error.what() << '\n';
    return kDomainAbort;
  } catch (const std::exception& error) {
    err << "error: " << error.what() << '\n';
    return kFailure;
  }
}

}  // namespace fiem::cli
