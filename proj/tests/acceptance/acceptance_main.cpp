// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance <path to scatter_ra CLI> <scratch directory>

#include <sys/wait.h>

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "scatter_ra/scatter_ra.hpp"

namespace fs = std::filesystem;
using namespace scatter_ra;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------- 1
Outcome receptive_field() {
  const std::uint64_t a = tcn_receptive_field(9, 12);
  const std::uint64_t b = tcn_receptive_field(5, 13);
  const std::uint64_t c = tcn_receptive_field(7, 8);
  return {a == 65520 && b == 65528 && c == 3060,
          std::to_string(a) + ", " + std::to_string(b) + ", " + std::to_string(c)};
}

// ---------------------------------------------------------------- 2
Outcome baseline_round_trip() {
  const auto geom = build_sensor_geometry();
  const double arc = geom.angles_deg.back();
  std::size_t accepted = 0;
  std::size_t failed = 0;
  double worst = 0.0;
  double ra_lo = 1e9;
  double ra_hi = 0.0;
  for (std::uint64_t seed = 1; seed <= 200 && accepted < 24; ++seed) {
    SurfaceSpec spec;
    spec.length_steps = 4096;
    spec.target_ra = 0.5 + 2.0 * static_cast<double>((seed - 1) % 12) / 11.0;
    // Longer shortest wavelength for rougher surfaces keeps slopes moderate.
    spec.lambda_min_um = std::max(10.0, 28.0 * spec.target_ra);
    const auto p = synthesize_surface(spec, seed);
    double steepest = 0.0;
    for (std::size_t j = 0; j + 1 < p.heights.size(); ++j) {
      const double slope = (p.heights[j + 1] - p.heights[j]) / p.step_um;
      steepest = std::max(steepest, std::abs(2.0 * std::atan(slope) * 180.0 / std::numbers::pi));
    }
    if (steepest > arc) continue;
    ++accepted;
    const double truth = ra(highpass_roughness(p));
    const double est = baseline_ra(forward_scatter(p, geom, ScatterSpec{}, seed).reading);
    const double rel = std::abs(est - truth) / truth;
    worst = std::max(worst, rel);
    failed += rel > 0.05;
    ra_lo = std::min(ra_lo, truth);
    ra_hi = std::max(ra_hi, truth);
  }
  return {accepted >= 20 && failed == 0,
          std::to_string(accepted) + " surfaces, Ra " + fmt("%.2f..%.2f um, worst relative error %.4f", ra_lo, ra_hi, worst)};
}

// ---------------------------------------------------------------- 3
SurfaceProfile sinusoid(double lambda_um, std::size_t n) {
  SurfaceProfile p;
  for (std::size_t j = 0; j < n; ++j) {
    p.heights.push_back(std::sin(2 * std::numbers::pi * static_cast<double>(j) * p.step_um / lambda_um + 0.3));
  }
  return p;
}

Outcome filter_behaviour() {
  // Grid-aligned 200 um cosine: whole periods, half-sample phase.
  SurfaceProfile aligned;
  for (std::size_t j = 0; j < 4000; ++j) {
    aligned.heights.push_back(std::cos(2 * std::numbers::pi * (static_cast<double>(j) + 0.5) * aligned.step_um / 200.0));
  }
  double peak = 0.0;
  for (double h : highpass_roughness(aligned).heights) peak = std::max(peak, std::abs(h));
  // Arbitrary phase: amplitude of the surviving 200 um component.
  double gain = 0.0;
  for (double phase : {0.0, 0.3, 1.0, 2.0}) {
    SurfaceProfile q;
    for (std::size_t j = 0; j < 4096; ++j) {
      q.heights.push_back(std::sin(2 * std::numbers::pi * static_cast<double>(j) * q.step_um / 200.0 + phase));
    }
    const auto r = highpass_roughness(q);
    double c = 0.0, s = 0.0;
    for (std::size_t j = 0; j < r.heights.size(); ++j) {
      const double w = 2 * std::numbers::pi * static_cast<double>(j) * q.step_um / 200.0;
      c += r.heights[j] * std::cos(w);
      s += r.heights[j] * std::sin(w);
    }
    gain = std::max(gain, 2 * std::hypot(c, s) / static_cast<double>(r.heights.size()));
  }

  const auto p = sinusoid(20.0, 4096);
  const auto r = highpass_roughness(p);
  double err = 0.0;
  double ref = 0.0;
  for (std::size_t j = 200; j + 200 < p.heights.size(); ++j) {
    err += (r.heights[j] - p.heights[j]) * (r.heights[j] - p.heights[j]);
    ref += p.heights[j] * p.heights[j];
  }
  const double rms = std::sqrt(err / ref);
  const double flat = ra(highpass_roughness(SurfaceProfile{std::vector<double>(4096, 2.75), kDefaultStepUm}));
  return {peak < 0.01 && gain < 0.01 && rms < 0.02 && flat == 0.0,
          fmt("200um aligned max %.2e, any-phase gain %.2e; 20um rms error %.2e; constant Ra %g", peak, gain, rms,
              flat)};
}

// ---------------------------------------------------------------- 4
Outcome hand_oracles() {
  std::vector<int> counts(20 * 5, 0);
  const int row[] = {5, 3, 7, 3, 9};
  std::copy(std::begin(row), std::end(row), counts.begin());
  const auto xt = threshold(LaserReading::from_counts("h", 5, counts), 2);
  const double want[] = {2, 0, 4, 0, 6};
  bool thr = true;
  for (std::size_t t = 0; t < 5; ++t) thr = thr && xt.at(0, t) == want[t];

  const auto geom = build_sensor_geometry();
  RealMatrix sym(20, 1);
  for (std::size_t i = 0; i < 10; ++i) sym.at(i, 0) = sym.at(19 - i, 0) = static_cast<double>(2 * i + 1);
  const double g_sym = gradients(sym, geom).radians[0];
  RealMatrix single(20, 1);
  single.at(11, 0) = 50.0;
  const double g_single = gradients(single, geom).radians[0];
  const double d_single = std::abs(g_single - 5.05 * std::numbers::pi / 180.0);
  return {thr && std::abs(g_sym) <= 1e-12 && d_single <= 1e-12,
          std::string("threshold ") + (thr ? "exact" : "wrong") + fmt(", symmetric %.1e rad, +10.1 deg error %.1e rad", g_sym, d_single)};
}

// ---------------------------------------------------------------- 5
Outcome minirocket_equivalence() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> len(9, 256);
  std::uniform_int_distribution<std::size_t> dil(1, 8);
  std::uniform_int_distribution<std::size_t> nch(1, 9);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::uint16_t> pool(20);
  std::iota(pool.begin(), pool.end(), std::uint16_t{0});
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    RealMatrix x(20, len(rng));
    for (auto& v : x.values) v = normal(rng);
    const long n = static_cast<long>(x.timesteps);
    const long d = static_cast<long>(dil(rng));
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::vector<std::uint16_t> ch(pool.begin(), pool.begin() + static_cast<long>(nch(rng)));
    for (std::size_t k = 0; k < kMiniRocketKernels; ++k) {
      const auto fast = minirocket_convolution(x, ch, k, static_cast<std::size_t>(d));
      const auto w = minirocket_weights(k);
      for (long t = 0; t < n; ++t) {
        double s = 0.0;
        for (long j = 0; j < 9; ++j) {
          const long i = t + (j - 4) * d;
          if (i < 0 || i >= n) continue;
          for (auto c : ch) s += w[static_cast<std::size_t>(j)] * x.at(c, static_cast<std::size_t>(i));
        }
        worst = std::max(worst, std::abs(s - fast[static_cast<std::size_t>(t)]));
      }
    }
  }
  return {worst <= 1e-9, fmt("100 signals x 84 kernels, max abs difference %.2e", worst)};
}

// ---------------------------------------------------------------- 6
Eigen::MatrixXd zscore(const FeatureMatrix& f) {
  Eigen::MatrixXd x(f.rows, f.cols);
  for (std::size_t r = 0; r < f.rows; ++r)
    for (std::size_t c = 0; c < f.cols; ++c) x(r, c) = f.values[r * f.cols + c];
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double sd = std::sqrt(x.col(c).squaredNorm() / static_cast<double>(x.rows()));
    if (sd > 1e-12) x.col(c) /= sd;
  }
  return x;
}

Outcome ridge_correctness() {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_system = [&](std::size_t n, std::size_t p) {
    FeatureMatrix f(n, p);
    for (auto& v : f.values) v = normal(rng);
    std::vector<double> y(n);
    for (auto& v : y) v = 1.5 + 0.5 * normal(rng);
    return std::pair{f, y};
  };

  double worst_w = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto [f, y] = random_system(50, 10);
    const auto z = zscore(f);
    Eigen::VectorXd yc = Eigen::Map<const Eigen::VectorXd>(y.data(), 50);
    yc.array() -= yc.mean();
    for (double lambda : default_lambda_grid()) {
      const std::vector<double> grid{lambda};
      const auto model = ridge_fit(f, y, grid);
      const Eigen::MatrixXd a = z.transpose() * z + lambda * Eigen::MatrixXd::Identity(10, 10);
      const Eigen::VectorXd w = a.ldlt().solve(z.transpose() * yc);
      for (int c = 0; c < 10; ++c) worst_w = std::max(worst_w, std::abs(w(c) - model.weights[c]));
    }
  }

  std::size_t agree = 0;
  const std::size_t systems = 5;
  for (std::size_t trial = 0; trial < systems; ++trial) {
    const auto [f, y] = random_system(20, 5);
    const auto model = ridge_fit(f, y);
    const auto z = zscore(f);
    std::vector<double> brute;
    for (double lambda : model.lambda_grid) {
      double sse = 0.0;
      for (int out = 0; out < 20; ++out) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(6, 6);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(6);
        for (int r = 0; r < 20; ++r) {
          if (r == out) continue;
          Eigen::VectorXd x(6);
          x(0) = 1.0;
          x.tail(5) = z.row(r).transpose();
          a += x * x.transpose();
          b += x * y[r];
        }
        for (int c = 1; c < 6; ++c) a(c, c) += lambda;
        const Eigen::VectorXd beta = a.ldlt().solve(b);
        const double e = y[out] - beta(0) - z.row(out).dot(beta.tail(5));
        sse += e * e;
      }
      brute.push_back(sse / 20);
    }
    const auto best = static_cast<std::size_t>(std::min_element(brute.begin(), brute.end()) - brute.begin());
    agree += model.lambda == model.lambda_grid[best];
  }
  return {worst_w <= 1e-9 && agree == systems,
          fmt("max weight difference %.2e over 5 systems x 10 lambdas; LOO choice agrees on %g/%g", worst_w,
              static_cast<double>(agree), static_cast<double>(systems))};
}

// ---------------------------------------------------------------- 7, 8
struct DefaultRun {
  Dataset ds;
  EvalReport base_per20, base_kfold, cal_per20, mr_per20, mr_kfold;
  double train_rmse_raw = 0, train_rmse_cal = 0;
  double seconds = 0;
};

DefaultRun run_default(std::uint64_t seed) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  DefaultRun r;
  r.ds = generate_dataset(DatasetConfig{}, seed, default_jobs());
  ExperimentConfig cfg;
  cfg.extractor_seed = default_extractor_seed(seed);
  cfg.jobs = default_jobs();
  ExperimentContext ctx(r.ds, cfg);
  r.base_per20 = run_experiment(ctx, Protocol::per_sample_20, Method::baseline, seed);
  r.base_kfold = run_experiment(ctx, Protocol::kfold_steel, Method::baseline, seed);
  r.cal_per20 = run_experiment(ctx, Protocol::per_sample_20, Method::baseline_calibrated, seed);

  const auto plan = split_per_sample_20(r.ds, seed);
  const auto raw = train_model(ctx, plan, Method::baseline);
  const auto cal = train_model(ctx, plan, Method::baseline_calibrated);
  r.train_rmse_raw = make_report(predict_records(ctx, raw, plan.train_ids), r.ds.samples).rmse;
  r.train_rmse_cal = make_report(predict_records(ctx, cal, plan.train_ids), r.ds.samples).rmse;

  r.mr_per20 = run_experiment(ctx, Protocol::per_sample_20, Method::minirocket_ridge, seed);
  std::cout << "  minirocket per-sample split done after "
            << std::chrono::duration<double>(clock::now() - start).count() << " s" << std::endl;
  r.mr_kfold = run_experiment(ctx, Protocol::kfold_steel, Method::minirocket_ridge, seed);
  r.seconds = std::chrono::duration<double>(clock::now() - start).count();
  return r;
}

Outcome ordering(const DefaultRun& r) {
  const bool per20 = r.mr_per20.rmse < r.base_per20.rmse;
  const bool kfold = r.mr_kfold.rmse < r.base_kfold.rmse;
  const bool cal = r.train_rmse_cal <= r.train_rmse_raw;
  std::string detail = std::to_string(r.ds.samples.size()) + " samples / " + std::to_string(r.ds.reading_count()) +
                       " readings; " +
                       fmt("per20 minirocket %.4f vs baseline %.4f; kfold minirocket %.4f vs baseline %.4f; ",
                           r.mr_per20.rmse, r.base_per20.rmse, r.mr_kfold.rmse, r.base_kfold.rmse) +
                       fmt("train rmse calibrated %.4f vs raw %.4f; %.0f s", r.train_rmse_cal, r.train_rmse_raw,
                           r.seconds);
  return {per20 && kfold && cal, detail};
}

Outcome protocol_integrity(const DefaultRun& r) {
  std::vector<std::string> problems;
  std::map<std::string, std::string> owner;
  for (const auto& s : r.ds.samples)
    for (const auto& rd : s.readings) owner[rd.id()] = s.sample_id;

  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto plan = split_per_sample_20(r.ds, seed);
    const std::set<std::string> train(plan.train_ids.begin(), plan.train_ids.end());
    std::set<std::string> in_train;
    for (const auto& id : plan.train_ids) in_train.insert(owner.at(id));
    for (const auto& id : plan.test_ids)
      if (train.contains(id)) problems.push_back("per20 leak " + id);
    if (in_train.size() != r.ds.samples.size()) problems.push_back("per20 sample missing from train");
    if (plan.train_ids.size() + plan.test_ids.size() != r.ds.reading_count()) problems.push_back("per20 not a partition");
  }

  const auto folds = kfold_per_steel(r.ds);
  std::map<std::string, int> seen;
  for (const auto& f : folds) {
    std::set<std::string> test_samples;
    for (const auto& id : f.test_ids) {
      ++seen[id];
      test_samples.insert(owner.at(id));
    }
    if (test_samples.size() != 1) problems.push_back("fold with several test samples");
    for (const auto& id : f.train_ids)
      if (test_samples.contains(owner.at(id))) problems.push_back("kfold sample leak");
  }
  if (folds.size() != r.ds.samples.size() || seen.size() != r.ds.reading_count()) problems.push_back("kfold count");
  for (const auto& [id, n] : seen)
    if (n != 1) problems.push_back("reading tested twice " + id);

  double worst_rmse = 0.0;
  double worst_affine = 0.0;
  for (const auto* rep : {&r.base_per20, &r.base_kfold, &r.cal_per20, &r.mr_per20, &r.mr_kfold}) {
    worst_rmse = std::max(worst_rmse, std::abs(rep->rmse * rep->rmse - rep->mse));
    std::vector<double> y, p, y2;
    for (const auto& rec : rep->records) {
      y.push_back(rec.truth);
      p.push_back(rec.prediction);
      y2.push_back(3.0 * rec.truth + 0.4);
    }
    worst_affine = std::max(worst_affine, std::abs(pearson(y2, p) - pearson(y, p)));
  }
  const double shared = std::abs(r.base_per20.pearson_r - r.cal_per20.pearson_r);
  std::ostringstream detail;
  detail << folds.size() << " folds; " << fmt("|rmse^2-mse| %.1e, affine pearson drift %.1e, ", worst_rmse, worst_affine)
         << fmt("pearson baseline %.6f vs calibrated %.6f", r.base_per20.pearson_r, r.cal_per20.pearson_r);
  if (!problems.empty()) detail << "; " << problems.front();
  return {problems.empty() && worst_rmse <= 1e-12 && worst_affine <= 1e-12 && shared <= 1e-12, detail.str()};
}

// ---------------------------------------------------------------- 9
int run_cli(const std::string& cli, const std::string& args, const fs::path& out_file) {
  const std::string cmd = cli + " " + args + " >" + out_file.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::set<std::string> na, nb;
  for (const auto& e : fs::directory_iterator(a)) na.insert(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) nb.insert(e.path().filename().string());
  if (na != nb) return false;
  for (const auto& n : na)
    if (slurp(a / n) != slurp(b / n)) return false;
  return true;
}

Outcome determinism(const std::string& cli, const fs::path& work) {
  const auto dir = work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> problems;
  auto step = [&](const std::string& args, const std::string& tag) {
    if (run_cli(cli, args, dir / (tag + ".log")) != 0) problems.push_back(tag + " failed: " + slurp(dir / (tag + ".log")));
  };
  const std::string jobs[] = {"1", "1", "2"};
  for (int i = 0; i < 3; ++i) {
    const auto n = std::to_string(i);
    const auto ds = (dir / ("ds" + n)).string();
    step("simulate --seed 17 --samples 4 --t 1024 --jobs " + jobs[i] + " --out " + ds, "simulate" + n);
    step("train --seed 3 --method minirocket --jobs " + jobs[i] + " --dataset " + ds + " --out " +
             (dir / ("model" + n + ".json")).string() + " --features-out " + (dir / ("feat" + n + ".f64")).string(),
         "train" + n);
    step("evaluate --jobs " + jobs[i] + " --dataset " + ds + " --model " + (dir / ("model" + n + ".json")).string() +
             " --out " + (dir / ("eval" + n + ".json")).string() + " --csv " + (dir / ("eval" + n + ".csv")).string(),
         "evaluate" + n);
    step("evaluate --seed 3 --method minirocket --protocol kfold --jobs " + jobs[i] + " --dataset " + ds + " --out " +
             (dir / ("kfold" + n + ".json")).string(),
         "kfold" + n);
  }
  if (!problems.empty()) return {false, problems.front()};
  std::size_t compared = 0;
  for (int i = 1; i < 3; ++i) {
    const auto n = std::to_string(i);
    if (!same_tree(dir / "ds0", dir / ("ds" + n))) problems.push_back("dataset " + n + " differs");
    for (const std::string f : {"model", "eval", "kfold"}) {
      if (slurp(dir / (f + "0.json")) != slurp(dir / (f + n + ".json"))) problems.push_back(f + " " + n + " differs");
      ++compared;
    }
    for (const std::string f : {"feat0.f64", "feat0.f64.json", "eval0.csv"}) {
      auto other = f;
      other.replace(other.find('0'), 1, n);
      if (slurp(dir / f) != slurp(dir / other)) problems.push_back(other + " differs");
      ++compared;
    }
  }
  if (!problems.empty()) return {false, problems.front()};
  return {true, "simulate/train/evaluate artifacts identical over 2 runs and --jobs 1 vs 2 (" +
                    std::to_string(compared) + " files + dataset trees)"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <scatter_ra CLI> <work dir>\n";
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path work = argv[2];
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail
              << fmt(" [%.1f s]", s) << std::endl;
  };

  report(1, "receptive field", receptive_field);
  report(2, "baseline round trip", baseline_round_trip);
  report(3, "filter behaviour", filter_behaviour);
  report(4, "threshold and gradient oracles", hand_oracles);
  report(5, "minirocket addition scheme", minirocket_equivalence);
  report(6, "ridge correctness", ridge_correctness);

  std::optional<DefaultRun> run;
  auto ensure_run = [&]() -> const DefaultRun& {
    if (!run) run = run_default(2024);
    return *run;
  };
  report(7, "ordering on default dataset", [&] { return ordering(ensure_run()); });
  report(8, "protocol integrity", [&] { return protocol_integrity(ensure_run()); });
  report(9, "determinism", [&] { return determinism(cli, work); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
