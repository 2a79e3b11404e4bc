// scatter_ra: simulate datasets, run the baseline, train and evaluate models.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scatter_ra/scatter_ra.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scatter_ra;

namespace {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

LogLevel log_level() {
  const char* env = std::getenv("SCATTER_RA_LOG");
  if (env == nullptr) return LogLevel::warn;
  const std::string v = env;
  if (v == "error") return LogLevel::error;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::warn;
}

void log(LogLevel level, const std::string& msg) {
  static const LogLevel threshold = log_level();
  if (level > threshold) return;
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  std::cerr << "[scatter_ra " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::io_failure, "failed writing '" + path.string() + "'");
}

// Writes to the file, or to stdout when no path is given.
void emit_json(const std::string& path, const json& j) {
  const auto text = j.dump(2) + "\n";
  if (path.empty()) {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

// Config file lookup: the key may sit at the top level or under a
// per-command section.
json config_section(const json& cfg, const std::string& section) {
  json merged = json::object();
  if (cfg.is_object()) {
    for (const auto& [k, v] : cfg.items())
      if (!v.is_object() || k == "galvanized" || k == "other") merged[k] = v;
    if (cfg.contains(section) && cfg[section].is_object())
      for (const auto& [k, v] : cfg[section].items()) merged[k] = v;
  }
  return merged;
}

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
  std::string out;
  std::string dataset;
  std::size_t theta = kDefaultThetaRank;
  double cutoff_um = kDefaultCutoffUm;
  std::string method;
  std::string protocol = "per20";
  std::optional<std::uint64_t> extractor_seed;
};

// Flags override config values; config values override defaults.
template <class T>
void layer(T& target, const json& cfg, const char* key, const CLI::App& app, const char* flag) {
  if (app.count(flag) > 0) return;
  if (cfg.contains(key)) target = cfg.at(key).get<T>();
}

std::size_t jobs_or_default(std::size_t jobs) { return jobs == 0 ? default_jobs() : jobs; }

ExperimentConfig experiment_config(const Common& c, const json& cfg) {
  ExperimentConfig ec;
  from_json(cfg, ec);
  ec.baseline.theta = c.theta;
  ec.baseline.cutoff_um = c.cutoff_um;
  ec.extractor_seed = c.extractor_seed.value_or(default_extractor_seed(c.seed));
  ec.jobs = jobs_or_default(c.jobs);
  return ec;
}

Dataset load(const std::string& dir) {
  if (dir.empty()) throw Error(ErrorCode::invalid_argument, "--dataset is required");
  log(LogLevel::info, "loading dataset " + dir);
  return load_dataset(dir);
}

// ---------------------------------------------------------------------------

void cmd_simulate(const Common& c, const CLI::App& app, std::optional<std::size_t> timesteps,
                  std::optional<std::size_t> samples, bool force) {
  if (c.out.empty()) throw Error(ErrorCode::invalid_argument, "--out is required");
  const json file_cfg = c.config_path.empty() ? json::object() : read_json_file(c.config_path);
  const json cfg = config_section(file_cfg, "simulate");
  DatasetConfig dc;
  from_json(cfg, dc);
  std::uint64_t seed = c.seed;
  layer(seed, cfg, "seed", app, "--seed");
  if (timesteps) dc.timesteps = *timesteps;
  if (samples) {
    dc.samples = *samples;
    if (!cfg.contains("other_coating_samples")) dc.other_coating_samples = std::min(dc.other_coating_samples, *samples / 2);
  }

  const fs::path out = c.out;
  if (fs::exists(out)) {
    if (!force) throw Error(ErrorCode::invalid_argument, "output '" + out.string() + "' exists; pass --force");
    if (!fs::is_directory(out) || (!fs::is_empty(out) && !fs::exists(out / kManifestName))) {
      throw Error(ErrorCode::invalid_argument,
                  "refusing to replace '" + out.string() + "': not a dataset directory");
    }
    fs::remove_all(out);
  }

  log(LogLevel::info, "generating dataset, seed " + std::to_string(seed));
  const auto ds = generate_dataset(dc, seed, jobs_or_default(c.jobs));
  save_dataset(ds, out);
  const json echoed = {{"command", "simulate"}, {"seed", seed}, {"dataset", dc}};
  write_text(out / "simulate_config.json", echoed.dump(2) + "\n");

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : ds.samples) {
    lo = std::min(lo, mean_ra_label(s));
    hi = std::max(hi, mean_ra_label(s));
  }
  std::cout << json{{"config", echoed},
                    {"samples", ds.samples.size()},
                    {"readings", ds.reading_count()},
                    {"label_ra_min", lo},
                    {"label_ra_max", hi}}
                   .dump(2)
            << '\n';
}

void cmd_baseline(const Common& c, const std::string& calibrate) {
  const auto ds = load(c.dataset);
  ExperimentConfig ec;
  ec.baseline = {c.theta, c.cutoff_um};
  ec.jobs = jobs_or_default(c.jobs);
  ExperimentContext ctx(ds, ec);
  const auto& values = ctx.baseline_values();

  json config = {{"command", "baseline"}, {"dataset_seed", ds.seed}, {"theta", c.theta}, {"cutoff_um", c.cutoff_um}};
  std::optional<AffineCalibration> cal;
  if (!calibrate.empty()) {
    const auto plan = read_json_file(calibrate).get<SplitPlan>();
    const auto model = train_model(ctx, plan, Method::baseline_calibrated);
    cal = model.calibration;
    config["calibration_split"] = plan;
  }

  json records = json::array();
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    json rec = {{"reading_id", ctx.reading(i).id()}, {"sample_id", ctx.sample_of(i).sample_id}, {"baseline_ra", values[i]}};
    rec["calibrated_ra"] = cal ? json(cal->apply(values[i])) : json(nullptr);
    records.push_back(std::move(rec));
  }
  json result = {{"config", config}, {"records", records}};
  if (cal) result["calibration"] = {{"a", cal->scale}, {"b", cal->offset}};
  emit_json(c.out, result);
}

json experiment_echo(const std::string& command, const Common& c, const ExperimentConfig& ec, const Dataset& ds) {
  json j = {{"command", command}, {"seed", c.seed}, {"dataset_seed", ds.seed}, {"experiment", ec}};
  if (!c.method.empty()) j["method"] = to_string(parse_method(c.method));
  j["protocol"] = to_string(parse_protocol(c.protocol));
  return j;
}

void cmd_train(const Common& c, const json& cfg, const std::string& split_in, const std::string& split_out,
               const std::string& features_out) {
  if (c.out.empty()) throw Error(ErrorCode::invalid_argument, "--out is required");
  if (c.method.empty()) throw Error(ErrorCode::invalid_argument, "--method is required");
  if (parse_protocol(c.protocol) != Protocol::per_sample_20) {
    throw Error(ErrorCode::invalid_argument, "train supports --protocol per20 only; kfold trains per fold inside evaluate");
  }
  const auto ds = load(c.dataset);
  const auto ec = experiment_config(c, cfg);
  ExperimentContext ctx(ds, ec);
  const auto plan = split_in.empty() ? split_per_sample_20(ds, c.seed) : read_json_file(split_in).get<SplitPlan>();
  const auto method = parse_method(c.method);
  log(LogLevel::info, "training " + to_string(method) + " on " + std::to_string(plan.train_ids.size()) + " readings");
  const auto model = train_model(ctx, plan, method);

  json out = model_json(model);
  out["config"] = experiment_echo("train", c, ec, ds);
  emit_json(c.out, out);
  if (!split_out.empty()) emit_json(split_out, json(plan));
  if (!features_out.empty()) {
    if (!uses_features(method)) throw Error(ErrorCode::invalid_argument, "--features-out needs a feature method");
    const auto fx = detail::make_extractor(model);
    const auto rows = ctx.indices(plan.train_ids);
    const auto features = detail::extract_features(ctx, model, fx, rows);
    write_feature_matrix(features, features_out, method == Method::rocket_ridge ? "rocket" : "minirocket",
                         model.extractor_seed);
  }
}

void cmd_evaluate(Common c, const json& cfg, const std::string& model_path, const std::string& csv) {
  if (c.method.empty() == model_path.empty()) {
    throw Error(ErrorCode::invalid_argument, "give exactly one of --method or --model");
  }
  const auto ds = load(c.dataset);
  EvalReport report;
  json config;
  if (!model_path.empty()) {
    const auto model = model_from_json(read_json_file(model_path));
    if (model.dataset_seed != ds.seed) {
      throw Error(ErrorCode::plan_mismatch, "model was trained on dataset seed " + std::to_string(model.dataset_seed) +
                                                ", dataset has seed " + std::to_string(ds.seed));
    }
    validate_plan(model.plan, ds);
    ExperimentConfig ec;
    ec.baseline = model.baseline;
    ec.jobs = jobs_or_default(c.jobs);
    ExperimentContext ctx(ds, ec);
    report = make_report(predict_records(ctx, model, model.plan.test_ids), ds.samples);
    config = {{"command", "evaluate"},
              {"model_method", to_string(model.method)},
              {"dataset_seed", ds.seed},
              {"plan_seed", model.plan.seed},
              {"protocol", to_string(model.plan.protocol)}};
    if (uses_features(model.method)) config["extractor_fingerprint"] = extractor_fingerprint(extractor_json(model));
  } else {
    const auto ec = experiment_config(c, cfg);
    ExperimentContext ctx(ds, ec);
    const auto method = parse_method(c.method);
    const auto protocol = parse_protocol(c.protocol);
    log(LogLevel::info, "evaluating " + to_string(method) + " under " + to_string(protocol));
    report = run_experiment(ctx, protocol, method, c.seed);
    config = experiment_echo("evaluate", c, ec, ds);
  }
  json out = report_json(report);
  out["config"] = config;
  emit_json(c.out, out);
  if (!csv.empty()) {
    std::ostringstream buf;
    write_records_csv(report, ds.samples, buf);
    write_text(csv, buf.str());
  }
}

int fail(ErrorCode code, const std::string& message, int status) {
  std::cerr << json{{"error", {{"code", std::string(to_string(code))}, {"message", message}}}}.dump() << '\n';
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Laser-scatter Ra estimation: simulation, baseline, Rocket/MiniRocket regression"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config_path, "JSON config file (flags take precedence)");
    sub->add_option("--seed", c.seed, "Root seed");
    sub->add_option("--jobs", c.jobs, "Worker threads (default: all cores)");
    sub->add_option("--out", c.out, "Output path");
  };
  auto add_dataset = [&](CLI::App* sub) {
    sub->add_option("--dataset", c.dataset, "Dataset directory");
    sub->add_option("--theta", c.theta, "Threshold rank")->check(CLI::PositiveNumber);
    sub->add_option("--cutoff-um", c.cutoff_um, "High-pass cutoff wavelength in um")->check(CLI::PositiveNumber);
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--method", c.method, "baseline | calibrated | rocket | minirocket");
    sub->add_option("--protocol", c.protocol, "per20 | kfold");
    sub->add_option("--extractor-seed", c.extractor_seed, "Kernel seed (default: derived from --seed)");
  };

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  add_common(sim);
  std::optional<std::size_t> timesteps;
  std::optional<std::size_t> samples;
  bool force = false;
  sim->add_option("--t", timesteps, "Timesteps per reading");
  sim->add_option("--samples", samples, "Number of steel samples");
  sim->add_flag("--force", force, "Replace an existing dataset directory");

  auto* base = app.add_subcommand("baseline", "Closed-form Ra per reading");
  add_common(base);
  add_dataset(base);
  std::string calibrate;
  base->add_option("--calibrate", calibrate, "Split plan JSON; fits the affine map on its train set");

  auto* train = app.add_subcommand("train", "Fit a model on a per-sample 20% split");
  add_common(train);
  add_dataset(train);
  add_model(train);
  std::string split_in;
  std::string split_out;
  std::string features_out;
  train->add_option("--split", split_in, "Use this split plan instead of drawing one");
  train->add_option("--split-out", split_out, "Write the split plan here");
  train->add_option("--features-out", features_out, "Write the training feature matrix here");

  auto* eval = app.add_subcommand("evaluate", "Report metrics on held-out readings");
  add_common(eval);
  add_dataset(eval);
  add_model(eval);
  std::string model_path;
  std::string csv;
  eval->add_option("--model", model_path, "Model file from train");
  eval->add_option("--csv", csv, "Write per-reading predictions as CSV");

  auto* rf = app.add_subcommand("rf", "Receptive field of a dilated TCN");
  std::uint64_t ks = 0;
  std::uint64_t nl = 0;
  std::uint64_t dil_base = 2;
  rf->add_option("kernel_size", ks)->required();
  rf->add_option("layers", nl)->required();
  rf->add_option("--base", dil_base, "Dilation base");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(ErrorCode::invalid_argument, e.what(), 2);
  }

  try {
    auto* sub = app.get_subcommands().front();
    json cfg = json::object();
    if (sub != rf && !c.config_path.empty()) cfg = config_section(read_json_file(c.config_path), sub->get_name());
    if (sub != sim && sub != rf) {
      layer(c.seed, cfg, "seed", *sub, "--seed");
      layer(c.dataset, cfg, "dataset", *sub, "--dataset");
      layer(c.theta, cfg, "theta", *sub, "--theta");
      layer(c.cutoff_um, cfg, "cutoff_um", *sub, "--cutoff-um");
    }
    if (sub == train || sub == eval) {
      layer(c.method, cfg, "method", *sub, "--method");
      layer(c.protocol, cfg, "protocol", *sub, "--protocol");
      if (sub->count("--extractor-seed") == 0 && cfg.contains("extractor_seed")) {
        c.extractor_seed = cfg.at("extractor_seed").get<std::uint64_t>();
      }
    }

    if (sub == sim) {
      cmd_simulate(c, *sim, timesteps, samples, force);
    } else if (sub == base) {
      cmd_baseline(c, calibrate);
    } else if (sub == train) {
      cmd_train(c, cfg, split_in, split_out, features_out);
    } else if (sub == eval) {
      cmd_evaluate(c, cfg, model_path, csv);
    } else {
      std::cout << tcn_receptive_field(ks, nl, dil_base) << '\n';
    }
  } catch (const Error& e) {
    return fail(e.code(), e.what(), 1);
  } catch (const json::exception& e) {
    return fail(ErrorCode::invalid_argument, std::string("config: ") + e.what(), 1);
  } catch (const std::exception& e) {
    return fail(ErrorCode::io_failure, e.what(), 1);
  }
  return 0;
}
