#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sivi/models.hpp"
#include "sivi/tensor.hpp"

namespace sivi {

// ---------------------------------------------------------------------------
// Dataset files.
// ---------------------------------------------------------------------------

// Numeric CSV with a header row (no quoting).
struct CsvData {
  std::vector<std::string> header;
  Tensor values;  // rows x cols
};
CsvData read_csv(const std::string& path);

// Values printed with 17 significant digits so re-reading round-trips and
// repeated runs are byte-identical.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Tensor& rows);

// Label column named `y` (values 0/1); remaining columns are covariates in
// file order; an intercept column of ones is prepended automatically.
LogisticData load_logistic_csv(const std::string& path);

// One integer per line; blank lines and lines starting with '#' are skipped.
std::vector<int> load_counts(const std::string& path);

// ---------------------------------------------------------------------------
// Plot-data export: histogram with the Freedman-Diaconis bin rule.
// ---------------------------------------------------------------------------

struct Histogram {
  double left = 0.0;   // left edge of the first bin
  double width = 0.0;  // common bin width
  std::vector<std::size_t> counts;
};
// Bin width 2 IQR / n^(1/3); degenerate samples collapse to a single bin.
Histogram fd_histogram(std::span<const double> x);

// ---------------------------------------------------------------------------
// Run configuration (versioned JSON schema).
// ---------------------------------------------------------------------------

struct ConfigError {
  std::string field;
  std::string message;
};

// Sentinels (-1 / empty) mean "use the experiment's default"; the resolved
// defaults embed the published per-experiment constants.
struct RunConfig {
  int version = 1;
  std::string experiment;  // toy | nb | poislog | logistic
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  // Variational settings.
  int iterations = 1000;
  int K = -1;
  int J = 50;
  bool k_ramp = true;  // ramp K_t from 1 to K over the first half of training
  std::vector<int> hidden;
  int noise_dim = -1;
  std::string noise = "normal";  // normal | pepper_salt
  double sigma0_sq = -1.0;
  double phi_step = 0.01;
  double xi_step = 0.001;
  double decay = 0.9;
  int minibatch = 0;  // 0 = full data
  bool full_cov = true;
  int export_draws = 2000;

  // Model hyperparameters and data.
  std::string toy_variant = "laplace";
  double a = 0.01, b = 0.01, alpha = 0.01, beta = 0.01;
  double alpha_prior = 0.01;
  std::string dataset;  // counts file (nb) / csv (logistic / optional poislog)
  int holdout = 0;      // logistic rows held out from the end for prediction
  int synth_n = 100;    // poislog synthetic data when no dataset is given
  double synth_r = 2.0;
  double synth_p = 0.5;

  // Baselines.
  bool gibbs = true;
  bool mfvi_diag = false;
  bool mfvi_full = false;
  int burn_in = 2000;
  int gibbs_draws = 2000;
};

// Parses and validates; returns machine-readable errors (empty = valid).
// On success `cfg` holds the fully resolved configuration.
std::vector<ConfigError> parse_run_config(const std::string& json_text,
                                          RunConfig& cfg);

// Errors as a JSON array of {field, message} objects.
std::string config_errors_json(const std::vector<ConfigError>& errors);

// ---------------------------------------------------------------------------
// Experiment orchestration.
// ---------------------------------------------------------------------------

struct RunOutcome {
  int exit_code = 0;  // 0 = ok; nonzero = aborted (partial outputs preserved)
  std::string message;
  std::string report_path;
};

// Trains the semi-implicit posterior, runs the enabled baselines, and writes
// draws/trace/histograms/report under cfg.out_dir.  Deterministic in
// (config, seed) for every output except the report's timing block.
RunOutcome run_experiment(const RunConfig& cfg);

}  // namespace sivi
