// Simulates a small dataset, then compares the closed-form baseline with
// MiniRocket + ridge on a per-sample 20% split.

#include <cstdio>

#include "scatter_ra/scatter_ra.hpp"

int main() {
  using namespace scatter_ra;

  DatasetConfig config;
  config.samples = 8;
  config.other_coating_samples = 2;
  config.timesteps = 1024;
  const Dataset ds = generate_dataset(config, /*seed=*/7);
  std::printf("%zu samples, %zu readings\n", ds.samples.size(), ds.reading_count());

  // One reading through the closed-form pipeline.
  const auto& reading = ds.samples.front().readings.front();
  std::printf("%s: baseline Ra %.3f um, stylus label %.3f um\n", reading.id().c_str(),
              baseline_ra(reading), mean_ra_label(ds.samples.front()));

  ExperimentConfig ec;
  ec.minirocket.num_features = 2000;
  ec.extractor_seed = default_extractor_seed(7);
  ExperimentContext ctx(ds, ec);
  for (auto method : {Method::baseline, Method::baseline_calibrated, Method::minirocket_ridge}) {
    const auto report = run_experiment(ctx, Protocol::per_sample_20, method, 7);
    std::printf("%-20s rmse %.4f  pearson %.4f  coverage %.2f\n", to_string(method).c_str(), report.rmse,
                report.pearson_r, report.pred_coverage);
  }
}
