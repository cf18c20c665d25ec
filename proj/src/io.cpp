#include "sivi/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sivi/baselines.hpp"
#include "sivi/conjugate.hpp"
#include "sivi/diagnostics.hpp"
#include "sivi/posterior.hpp"
#include "sivi/train.hpp"

namespace sivi {
namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

CsvData read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty file (header row required)");
  CsvData out;
  out.header = split_csv_line(line);
  const std::size_t cols = out.header.size();
  std::vector<double> data;
  std::size_t rows = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != cols)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected " + std::to_string(cols) +
                               " cells, got " + std::to_string(cells.size()));
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (end == c.c_str() || *end != '\0')
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": not a number: '" + c + "'");
      data.push_back(v);
    }
    ++rows;
  }
  out.values = Tensor({rows, cols}, std::move(data));
  return out;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Tensor& rows) {
  if (header.size() != rows.cols())
    throw std::invalid_argument("write_csv: header/column mismatch");
  std::ostringstream ss;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) ss << ',';
    ss << header[c];
  }
  ss << '\n';
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    const double* row = rows.row(r);
    for (std::size_t c = 0; c < rows.cols(); ++c) {
      if (c) ss << ',';
      ss << fmt17(row[c]);
    }
    ss << '\n';
  }
  write_text(path, ss.str());
}

LogisticData load_logistic_csv(const std::string& path) {
  const CsvData csv = read_csv(path);
  std::size_t ycol = csv.header.size();
  for (std::size_t c = 0; c < csv.header.size(); ++c)
    if (csv.header[c] == "y") ycol = c;
  if (ycol == csv.header.size())
    throw std::runtime_error(path + ": no label column named 'y'");
  const std::size_t n = csv.values.rows();
  const std::size_t v = csv.header.size() - 1;
  LogisticData data;
  data.X = Tensor::zeros({n, v + 1});
  data.y.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* src = csv.values.row(r);
    double* dst = data.X.row(r);
    dst[0] = 1.0;  // intercept
    std::size_t k = 1;
    for (std::size_t c = 0; c < csv.header.size(); ++c) {
      if (c == ycol) continue;
      dst[k++] = src[c];
    }
    const double yy = src[ycol];
    if (yy != 0.0 && yy != 1.0)
      throw std::runtime_error(path + ": label not in {0,1} at data row " +
                               std::to_string(r + 1));
    data.y[r] = static_cast<int>(yy);
  }
  return data;
}

std::vector<int> load_counts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<int> counts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    char* end = nullptr;
    const long v = std::strtol(line.c_str(), &end, 10);
    if (end == line.c_str() || *end != '\0' || v < 0)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected a nonnegative integer, got '" +
                               line + "'");
    counts.push_back(static_cast<int>(v));
  }
  if (counts.empty()) throw std::runtime_error(path + ": no counts found");
  return counts;
}

Histogram fd_histogram(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("fd_histogram: empty sample");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const double lo = s.front();
  const double hi = s.back();

  Histogram h;
  if (hi == lo) {
    h.left = lo - 0.5;
    h.width = 1.0;
    h.counts = {n};
    return h;
  }
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(n - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < n ? s[i] + frac * (s[i + 1] - s[i]) : s[i];
  };
  double width = 2.0 * (quantile(0.75) - quantile(0.25)) /
                 std::cbrt(static_cast<double>(n));
  if (width <= 0.0) width = (hi - lo) / std::ceil(std::sqrt(static_cast<double>(n)));
  std::size_t nbins =
      static_cast<std::size_t>(std::ceil((hi - lo) / width));
  nbins = std::min<std::size_t>(std::max<std::size_t>(nbins, 1), 2000);
  width = (hi - lo) / static_cast<double>(nbins);

  h.left = lo;
  h.width = width;
  h.counts.assign(nbins, 0);
  for (double v : s) {
    auto idx = static_cast<std::size_t>((v - lo) / width);
    if (idx >= nbins) idx = nbins - 1;
    ++h.counts[idx];
  }
  return h;
}

// ---------------------------------------------------------------------------
// Config parsing and validation.
// ---------------------------------------------------------------------------

namespace {

const std::map<std::string, ToyVariant>& toy_variant_names() {
  static const std::map<std::string, ToyVariant> m = {
      {"std_normal", ToyVariant::StdNormal},
      {"laplace", ToyVariant::Laplace},
      {"bimodal", ToyVariant::Bimodal1D},
      {"gamma", ToyVariant::GammaTarget},
      {"mixture2d", ToyVariant::Mixture2D},
      {"banana", ToyVariant::Banana},
      {"xshape", ToyVariant::XShape}};
  return m;
}

struct ConfigReader {
  std::vector<ConfigError>& errors;

  void fail(const std::string& field, const std::string& msg) {
    errors.push_back({field, msg});
  }

  void check_keys(const json& obj, const std::string& scope,
                  const std::set<std::string>& allowed) {
    for (const auto& item : obj.items())
      if (!allowed.count(item.key()))
        fail(scope.empty() ? item.key() : scope + "." + item.key(),
             "unknown key");
  }

  bool geti(const json& obj, const std::string& scope, const char* key,
            int& dst, int lo, int hi = std::numeric_limits<int>::max()) {
    if (!obj.contains(key)) return false;
    const auto& v = obj.at(key);
    const std::string field = scope.empty() ? key : scope + "." + key;
    if (!v.is_number_integer()) {
      fail(field, "expected an integer");
      return false;
    }
    const auto x = v.get<long long>();
    if (x < lo || x > hi) {
      fail(field, "out of range [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]: " + std::to_string(x));
      return false;
    }
    dst = static_cast<int>(x);
    return true;
  }

  bool getd(const json& obj, const std::string& scope, const char* key,
            double& dst, double lo_excl,
            double hi_incl = std::numeric_limits<double>::infinity()) {
    if (!obj.contains(key)) return false;
    const auto& v = obj.at(key);
    const std::string field = scope.empty() ? key : scope + "." + key;
    if (!v.is_number()) {
      fail(field, "expected a number");
      return false;
    }
    const double x = v.get<double>();
    if (!(x > lo_excl) || !(x <= hi_incl)) {
      fail(field, "must be in (" + fmt17(lo_excl) + ", " + fmt17(hi_incl) +
                      "]: " + fmt17(x));
      return false;
    }
    dst = x;
    return true;
  }

  bool getb(const json& obj, const std::string& scope, const char* key,
            bool& dst) {
    if (!obj.contains(key)) return false;
    const auto& v = obj.at(key);
    if (!v.is_boolean()) {
      fail(scope.empty() ? key : scope + "." + key, "expected a boolean");
      return false;
    }
    dst = v.get<bool>();
    return true;
  }

  bool gets(const json& obj, const std::string& scope, const char* key,
            std::string& dst) {
    if (!obj.contains(key)) return false;
    const auto& v = obj.at(key);
    if (!v.is_string()) {
      fail(scope.empty() ? key : scope + "." + key, "expected a string");
      return false;
    }
    dst = v.get<std::string>();
    return true;
  }
};

// Per-experiment defaults for the sentinel fields (published constants).
void resolve_defaults(RunConfig& cfg) {
  const bool logistic = cfg.experiment == "logistic";
  if (cfg.K < 0) {
    if (cfg.experiment == "toy") cfg.K = 100;
    else if (cfg.experiment == "nb") cfg.K = 1000;
    else if (cfg.experiment == "poislog") cfg.K = 200;
    else cfg.K = 500;
  }
  if (cfg.hidden.empty())
    cfg.hidden = logistic ? std::vector<int>{100, 200, 100}
                          : std::vector<int>{30, 60, 30};
  if (cfg.noise_dim < 0) cfg.noise_dim = logistic ? 50 : 10;
  if (cfg.sigma0_sq < 0.0) cfg.sigma0_sq = cfg.experiment == "nb" ? 0.01 : 0.1;
  if (cfg.experiment == "toy") {
    cfg.gibbs = false;
    cfg.mfvi_diag = false;
    cfg.mfvi_full = false;
  }
}

}  // namespace

std::vector<ConfigError> parse_run_config(const std::string& json_text,
                                          RunConfig& cfg) {
  std::vector<ConfigError> errors;
  ConfigReader r{errors};

  const json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded()) {
    errors.push_back({"", "not valid JSON"});
    return errors;
  }
  if (!root.is_object()) {
    errors.push_back({"", "top level must be a JSON object"});
    return errors;
  }

  r.check_keys(root, "",
               {"version", "experiment", "seed", "out_dir", "sivi", "model",
                "baselines"});

  r.geti(root, "", "version", cfg.version, 1, 1);
  if (!root.contains("version")) r.fail("version", "required (schema version 1)");

  if (!r.gets(root, "", "experiment", cfg.experiment))
    r.fail("experiment", "required: one of toy, nb, poislog, logistic");
  if (!cfg.experiment.empty() && cfg.experiment != "toy" &&
      cfg.experiment != "nb" && cfg.experiment != "poislog" &&
      cfg.experiment != "logistic")
    r.fail("experiment", "unknown experiment '" + cfg.experiment + "'");

  if (root.contains("seed")) {
    const auto& v = root.at("seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      r.fail("seed", "expected a nonnegative integer");
    else
      cfg.seed = v.get<std::uint64_t>();
  }
  r.gets(root, "", "out_dir", cfg.out_dir);

  if (root.contains("sivi")) {
    const json& s = root.at("sivi");
    if (!s.is_object()) {
      r.fail("sivi", "expected an object");
    } else {
      r.check_keys(s, "sivi",
                   {"iterations", "K", "J", "k_ramp", "hidden", "noise_dim",
                    "noise", "sigma0_sq", "phi_step", "xi_step", "decay",
                    "minibatch", "full_cov", "export_draws"});
      r.geti(s, "sivi", "iterations", cfg.iterations, 0);
      r.geti(s, "sivi", "K", cfg.K, 0);
      r.geti(s, "sivi", "J", cfg.J, 1);
      r.getb(s, "sivi", "k_ramp", cfg.k_ramp);
      if (s.contains("hidden")) {
        const auto& h = s.at("hidden");
        if (!h.is_array() || h.empty()) {
          r.fail("sivi.hidden", "expected a nonempty array of integers");
        } else {
          cfg.hidden.clear();
          for (const auto& w : h) {
            if (!w.is_number_integer() || w.get<long long>() < 1) {
              r.fail("sivi.hidden", "layer widths must be integers >= 1");
              cfg.hidden.clear();
              break;
            }
            cfg.hidden.push_back(w.get<int>());
          }
        }
      }
      r.geti(s, "sivi", "noise_dim", cfg.noise_dim, 1);
      r.gets(s, "sivi", "noise", cfg.noise);
      if (cfg.noise != "normal" && cfg.noise != "pepper_salt")
        r.fail("sivi.noise", "must be 'normal' or 'pepper_salt'");
      r.getd(s, "sivi", "sigma0_sq", cfg.sigma0_sq, 0.0);
      r.getd(s, "sivi", "phi_step", cfg.phi_step, 0.0);
      r.getd(s, "sivi", "xi_step", cfg.xi_step, 0.0);
      r.getd(s, "sivi", "decay", cfg.decay, 0.0, 1.0);
      r.geti(s, "sivi", "minibatch", cfg.minibatch, 0);
      r.getb(s, "sivi", "full_cov", cfg.full_cov);
      r.geti(s, "sivi", "export_draws", cfg.export_draws, 2);
    }
  }

  if (root.contains("model")) {
    const json& m = root.at("model");
    if (!m.is_object()) {
      r.fail("model", "expected an object");
    } else {
      r.check_keys(m, "model",
                   {"variant", "a", "b", "alpha", "beta", "alpha_prior",
                    "dataset", "holdout", "synth_n", "synth_r", "synth_p"});
      r.gets(m, "model", "variant", cfg.toy_variant);
      if (!toy_variant_names().count(cfg.toy_variant))
        r.fail("model.variant", "unknown target '" + cfg.toy_variant + "'");
      r.getd(m, "model", "a", cfg.a, 0.0);
      r.getd(m, "model", "b", cfg.b, 0.0);
      r.getd(m, "model", "alpha", cfg.alpha, 0.0);
      r.getd(m, "model", "beta", cfg.beta, 0.0);
      r.getd(m, "model", "alpha_prior", cfg.alpha_prior, 0.0);
      r.gets(m, "model", "dataset", cfg.dataset);
      r.geti(m, "model", "holdout", cfg.holdout, 0);
      r.geti(m, "model", "synth_n", cfg.synth_n, 1);
      r.getd(m, "model", "synth_r", cfg.synth_r, 0.0);
      if (m.contains("synth_p")) {
        double p = cfg.synth_p;
        if (r.getd(m, "model", "synth_p", p, 0.0) && p >= 1.0)
          r.fail("model.synth_p", "must be in (0, 1)");
        else
          cfg.synth_p = p;
      }
    }
  }

  if (root.contains("baselines")) {
    const json& b = root.at("baselines");
    if (!b.is_object()) {
      r.fail("baselines", "expected an object");
    } else {
      r.check_keys(b, "baselines",
                   {"gibbs", "mfvi_diag", "mfvi_full", "burn_in", "draws"});
      r.getb(b, "baselines", "gibbs", cfg.gibbs);
      r.getb(b, "baselines", "mfvi_diag", cfg.mfvi_diag);
      r.getb(b, "baselines", "mfvi_full", cfg.mfvi_full);
      r.geti(b, "baselines", "burn_in", cfg.burn_in, 0);
      r.geti(b, "baselines", "draws", cfg.gibbs_draws, 2);
    }
  }

  if (!errors.empty()) return errors;
  resolve_defaults(cfg);

  // Cross-field checks (no computation; file existence only).
  const bool count_model = cfg.experiment == "nb" || cfg.experiment == "poislog";
  if (cfg.experiment == "nb" && cfg.dataset.empty())
    r.fail("model.dataset", "a counts file is required for experiment=nb");
  if (cfg.experiment == "logistic" && cfg.dataset.empty())
    r.fail("model.dataset", "a dataset CSV is required for experiment=logistic");
  if (cfg.experiment == "toy" && !cfg.dataset.empty())
    r.fail("model.dataset", "not used by experiment=toy");
  if (!cfg.dataset.empty() && !std::filesystem::exists(cfg.dataset))
    r.fail("model.dataset", "file not found: " + cfg.dataset);
  if (count_model && cfg.mfvi_full)
    r.fail("baselines.mfvi_full",
           "full-covariance mean-field applies to experiment=logistic only");
  if (cfg.experiment != "logistic" && cfg.holdout > 0)
    r.fail("model.holdout", "held-out rows apply to experiment=logistic only");
  return errors;
}

std::string config_errors_json(const std::vector<ConfigError>& errors) {
  json arr = json::array();
  for (const auto& e : errors)
    arr.push_back(json{{"field", e.field}, {"message", e.message}});
  return arr.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Experiment orchestration.
// ---------------------------------------------------------------------------

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  const auto dt = std::chrono::steady_clock::now() - t0;
  return std::chrono::duration<double>(dt).count();
}

std::vector<std::string> draw_columns(const std::string& experiment, int zdim) {
  std::vector<std::string> names;
  if (experiment == "nb" || experiment == "poislog") {
    names = {"r", "p"};
  } else if (experiment == "logistic") {
    for (int i = 0; i < zdim; ++i) names.push_back("beta_" + std::to_string(i));
  } else {
    for (int i = 0; i < zdim; ++i) names.push_back("z_" + std::to_string(i));
  }
  return names;
}

std::vector<double> column_of(const Tensor& t, std::size_t c) {
  std::vector<double> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) out[r] = t.row(r)[c];
  return out;
}

void export_histograms(const std::string& out_dir, const std::string& method,
                       const std::vector<std::string>& vars, const Tensor& draws,
                       json& files) {
  for (std::size_t c = 0; c < vars.size(); ++c) {
    const auto col = column_of(draws, c);
    const Histogram h = fd_histogram(col);
    Tensor rows = Tensor::zeros({h.counts.size(), 4});
    const auto n = static_cast<double>(col.size());
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      double* row = rows.row(i);
      row[0] = h.left + static_cast<double>(i) * h.width;
      row[1] = h.left + static_cast<double>(i + 1) * h.width;
      row[2] = static_cast<double>(h.counts[i]);
      row[3] = static_cast<double>(h.counts[i]) / (n * h.width);
    }
    const std::string name = "hist_" + vars[c] + "_" + method + ".csv";
    write_csv(out_dir + "/" + name, {"left", "right", "count", "density"}, rows);
    files["hist_" + vars[c] + "_" + method] = name;
  }
}

json moments_json(const Tensor& draws, const std::vector<std::string>& vars) {
  const SummaryStats st = summary_stats(draws);
  json corr = json::array();
  for (std::size_t u = 0; u < draws.cols(); ++u) {
    json row = json::array();
    for (std::size_t v = 0; v < draws.cols(); ++v)
      row.push_back(st.corr.row(u)[v]);
    corr.push_back(std::move(row));
  }
  json zv = json::array();
  for (bool f : st.zero_variance) zv.push_back(f);
  return json{{"variables", vars}, {"mean", st.mean},  {"sd", st.sd},
              {"corr", corr},      {"zero_variance", zv}};
}

void ks_entries(json& ks, const std::string& pair, const Tensor& a,
                const Tensor& b, const std::vector<std::string>& vars) {
  for (std::size_t c = 0; c < vars.size(); ++c) {
    const auto ca = column_of(a, c);
    const auto cb = column_of(b, c);
    const KsResult kr = ks_two_sample(ca, cb);
    ks.push_back(json{{"pair", pair},
                      {"variable", vars[c]},
                      {"d", kr.d},
                      {"p_value", kr.p_value},
                      {"n1", kr.n1},
                      {"n2", kr.n2}});
  }
}

// Marginal density grid of a 2-D target and of the fitted semi-implicit
// marginal (mixture over S mixing draws).
void export_contour(const std::string& out_dir, const SemiImplicitPosterior& post,
                    ToyVariant variant, const Tensor& target_draws,
                    std::uint64_t mix_seed, json& files) {
  constexpr int kGrid = 81;
  constexpr int kMix = 500;
  double lo[2], hi[2];
  for (int d = 0; d < 2; ++d) {
    const auto col = column_of(target_draws, static_cast<std::size_t>(d));
    const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
    lo[d] = *mn - 0.5;
    hi[d] = *mx + 0.5;
  }
  RngStream rng(mix_seed);
  const Tensor psis = mix_sample(post.mixer, post.phi(), rng, kMix);
  std::vector<std::vector<DistSpec>> parts;
  parts.reserve(kMix);
  for (int s = 0; s < kMix; ++s)
    parts.push_back(post.cond.make<double>(psis.row(static_cast<std::size_t>(s)),
                                           post.xi().data()));

  Tensor rows = Tensor::zeros({static_cast<std::size_t>(kGrid) * kGrid, 4});
  std::size_t idx = 0;
  for (int i = 0; i < kGrid; ++i) {
    const double x = lo[0] + (hi[0] - lo[0]) * i / (kGrid - 1);
    for (int j = 0; j < kGrid; ++j) {
      const double y = lo[1] + (hi[1] - lo[1]) * j / (kGrid - 1);
      const double z[2] = {x, y};
      double mix = 0.0;
      for (const auto& p : parts) mix += std::exp(cond_logpdf(p, z));
      double* row = rows.row(idx++);
      row[0] = x;
      row[1] = y;
      row[2] = std::exp(toy_target_logpdf(variant, z));
      row[3] = mix / kMix;
    }
  }
  write_csv(out_dir + "/contour.csv",
            {"z_0", "z_1", "target_density", "fit_density"}, rows);
  files["contour"] = "contour.csv";
}

}  // namespace

RunOutcome run_experiment(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  if (cfg.experiment != "toy" && cfg.experiment != "nb" &&
      cfg.experiment != "poislog" && cfg.experiment != "logistic")
    throw std::invalid_argument("run_experiment: unknown experiment '" +
                                cfg.experiment + "'");
  resolve_defaults(cfg);
  if (cfg.K < 0 || cfg.J < 1 || cfg.iterations < 0 || cfg.export_draws < 2)
    throw std::invalid_argument("run_experiment: invalid resolved settings");

  const auto t_total = std::chrono::steady_clock::now();
  std::filesystem::create_directories(cfg.out_dir);

  // Sub-seeds, all recorded in the report so every exported file is
  // reproducible in isolation.
  const std::uint64_t seed_train = cfg.seed;
  const std::uint64_t seed_gibbs = cfg.seed + 1;
  const std::uint64_t seed_sivi_draws = cfg.seed + 2;
  const std::uint64_t seed_mfvi_fit = cfg.seed + 3;
  const std::uint64_t seed_mfvi_draws = cfg.seed + 4;
  const std::uint64_t seed_target = cfg.seed + 5;
  const std::uint64_t seed_synth = cfg.seed + 6;
  const std::uint64_t seed_contour = cfg.seed + 7;

  // ---- Model and data ------------------------------------------------------
  ModelRef model;
  std::vector<int> counts;
  std::vector<std::array<int, 2>> pairs;
  LogisticData train_data;
  Tensor X_test;
  json files = json::object();

  ToyVariant variant = ToyVariant::Laplace;
  if (cfg.experiment == "toy") {
    variant = toy_variant_names().at(cfg.toy_variant);
    model.tag = ModelTag::Toy;
    model.toy = variant;
  } else if (cfg.experiment == "nb") {
    counts = load_counts(cfg.dataset);
    model.tag = ModelTag::NegBinomial;
    model.a = cfg.a;
    model.b = cfg.b;
    model.alpha = cfg.alpha;
    model.beta = cfg.beta;
    model.counts = &counts;
  } else if (cfg.experiment == "poislog") {
    if (cfg.dataset.empty()) {
      RngStream synth_rng(seed_synth);
      pairs = poislog_synth(cfg.synth_r, cfg.synth_p, cfg.synth_n, synth_rng);
      Tensor prows = Tensor::zeros({pairs.size(), 2});
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        prows.row(i)[0] = pairs[i][0];
        prows.row(i)[1] = pairs[i][1];
      }
      write_csv(cfg.out_dir + "/pairs_synth.csv", {"n", "l"}, prows);
      files["pairs_synth"] = "pairs_synth.csv";
    } else {
      const CsvData csv = read_csv(cfg.dataset);
      if (csv.header != std::vector<std::string>{"n", "l"})
        throw std::runtime_error(cfg.dataset + ": expected header 'n,l'");
      for (std::size_t i = 0; i < csv.values.rows(); ++i) {
        const double* row = csv.values.row(i);
        pairs.push_back({static_cast<int>(row[0]), static_cast<int>(row[1])});
      }
    }
    model.tag = ModelTag::PoissonLog;
    model.a = cfg.a;
    model.b = cfg.b;
    model.alpha = cfg.alpha;
    model.beta = cfg.beta;
    model.pairs = &pairs;
  } else {
    LogisticData all = load_logistic_csv(cfg.dataset);
    const std::size_t n = all.N();
    const auto holdout = static_cast<std::size_t>(cfg.holdout);
    if (holdout + 2 > n)
      throw std::runtime_error("holdout leaves fewer than 2 training rows");
    const std::size_t ntr = n - holdout;
    const std::size_t d = all.dim();
    train_data.X = Tensor::zeros({ntr, d});
    train_data.y.assign(all.y.begin(), all.y.begin() + static_cast<long>(ntr));
    std::copy(all.X.data.begin(), all.X.data.begin() + static_cast<long>(ntr * d),
              train_data.X.data.begin());
    if (holdout > 0) {
      X_test = Tensor::zeros({holdout, d});
      std::copy(all.X.data.begin() + static_cast<long>(ntr * d),
                all.X.data.end(), X_test.data.begin());
    }
    model.tag = ModelTag::Logistic;
    model.alpha_prior = cfg.alpha_prior;
    model.logistic = &train_data;
  }

  // ---- Posterior family ----------------------------------------------------
  ExplicitConditional cond;
  cond.zdim = model.zdim();
  cond.sigma0_sq = cfg.sigma0_sq;
  if (cfg.experiment == "toy") {
    cond.kind = CondKind::MvnDiagFixedVar;
  } else if (cfg.experiment == "nb") {
    cond.kind = CondKind::LogNormalLogitNormal;
  } else if (cfg.experiment == "poislog") {
    cond.kind = CondKind::GammaBeta;
  } else {
    cond.kind = CondKind::MvnMeanCov;
    cond.full_cov = cfg.full_cov;
  }

  Mlp mlp;
  mlp.widths.push_back(cfg.noise_dim);
  for (int w : cfg.hidden) mlp.widths.push_back(w);
  mlp.widths.push_back(cond.psi_dim());
  ImplicitMixer mixer{mlp, cfg.noise == "normal" ? NoiseKind::Normal
                                                 : NoiseKind::PepperSalt};
  SemiImplicitPosterior post(mixer, cond);
  {
    RngStream init_rng(seed_train);
    post.init_params(init_rng);
  }

  // ---- Training ------------------------------------------------------------
  TrainConfig tc;
  tc.iterations = cfg.iterations;
  tc.J = cfg.J;
  tc.k_max = cfg.K;
  if (cfg.k_ramp) tc.k_schedule = make_linear_ramp(cfg.K, cfg.iterations);
  tc.minibatch = cfg.minibatch;
  tc.phi_step = cfg.phi_step;
  tc.xi_step = cfg.xi_step;
  tc.decay = cfg.decay;
  tc.seed = seed_train;

  const auto t_train = std::chrono::steady_clock::now();
  TrainResult tr = post.cond.reparameterizable() ? train(post, model, tc)
                                                 : train_conjugate(post, model, tc);
  const double train_secs = seconds_since(t_train);

  // Uniform trace export: the value of the maximized lower bound.  The
  // conjugate trainer records the negated objective, so flip it back.
  {
    Tensor trace = Tensor::zeros({tr.trace.size(), 2});
    const double sign = post.cond.reparameterizable() ? 1.0 : -1.0;
    for (std::size_t i = 0; i < tr.trace.size(); ++i) {
      trace.row(i)[0] = static_cast<double>(i);
      trace.row(i)[1] = sign * tr.trace[i];
    }
    write_csv(cfg.out_dir + "/trace.csv", {"iteration", "lower_bound"}, trace);
    files["trace"] = "trace.csv";
  }
  write_text(cfg.out_dir + "/posterior.json", posterior_to_json(post));
  files["posterior"] = "posterior.json";

  const std::vector<std::string> vars =
      draw_columns(cfg.experiment, model.zdim());

  // ---- Draw exports --------------------------------------------------------
  Tensor sivi_draws;
  {
    RngStream rng(seed_sivi_draws);
    sivi_draws = posterior_draws(post, rng, cfg.export_draws);
    write_csv(cfg.out_dir + "/draws_sivi.csv", vars, sivi_draws);
    files["sivi_draws"] = "draws_sivi.csv";
  }

  json report;
  json ks = json::array();
  json moments = json::object();
  json timing = json::object();
  moments["sivi"] = moments_json(sivi_draws, vars);
  export_histograms(cfg.out_dir, "sivi", vars, sivi_draws, files);

  if (cfg.experiment == "toy") {
    RngStream rng(seed_target);
    Tensor target = Tensor::zeros({static_cast<std::size_t>(cfg.export_draws),
                                   static_cast<std::size_t>(model.zdim())});
    for (int i = 0; i < cfg.export_draws; ++i) {
      const Tensor one = toy_target_sample(variant, rng);
      for (std::size_t c = 0; c < one.numel(); ++c)
        target.row(static_cast<std::size_t>(i))[c] = one.data[c];
    }
    write_csv(cfg.out_dir + "/draws_target.csv", vars, target);
    files["target_draws"] = "draws_target.csv";
    moments["target"] = moments_json(target, vars);
    export_histograms(cfg.out_dir, "target", vars, target, files);
    ks_entries(ks, "sivi_vs_target", sivi_draws, target, vars);
    if (model.zdim() == 2)
      export_contour(cfg.out_dir, post, variant, target, seed_contour, files);
  }

  Tensor gibbs_draws;
  if (cfg.gibbs) {
    const auto t_gibbs = std::chrono::steady_clock::now();
    if (cfg.experiment == "logistic")
      gibbs_draws = run_pg_gibbs(train_data, cfg.alpha_prior, cfg.burn_in,
                                 cfg.gibbs_draws, seed_gibbs);
    else
      gibbs_draws = run_count_gibbs(model, cfg.burn_in, cfg.gibbs_draws,
                                    seed_gibbs);
    timing["gibbs"] = seconds_since(t_gibbs);
    write_csv(cfg.out_dir + "/draws_gibbs.csv", vars, gibbs_draws);
    files["gibbs_draws"] = "draws_gibbs.csv";
    moments["gibbs"] = moments_json(gibbs_draws, vars);
    export_histograms(cfg.out_dir, "gibbs", vars, gibbs_draws, files);
    ks_entries(ks, "sivi_vs_gibbs", sivi_draws, gibbs_draws, vars);
  }

  if (cfg.mfvi_diag && (cfg.experiment == "nb" || cfg.experiment == "poislog")) {
    const auto t_mfvi = std::chrono::steady_clock::now();
    TrainConfig mc;
    mc.iterations = std::max(cfg.iterations, 10000);
    mc.J = 1;
    mc.k_max = 0;
    mc.seed = seed_mfvi_fit;
    const MfviCount fit = mfvi_count(model, mc);
    RngStream rng(seed_mfvi_draws);
    const Tensor mfvi_draws = mfvi_count_draws(fit, cfg.export_draws, rng);
    timing["mfvi"] = seconds_since(t_mfvi);
    write_csv(cfg.out_dir + "/draws_mfvi.csv", vars, mfvi_draws);
    files["mfvi_draws"] = "draws_mfvi.csv";
    moments["mfvi"] = moments_json(mfvi_draws, vars);
    export_histograms(cfg.out_dir, "mfvi", vars, mfvi_draws, files);
    if (cfg.gibbs) ks_entries(ks, "mfvi_vs_gibbs", mfvi_draws, gibbs_draws, vars);
    report["mfvi_fit"] = json{{"shape", fit.shape},
                              {"rate", fit.rate},
                              {"alpha", fit.alpha},
                              {"beta", fit.beta},
                              {"converged", !fit.result.aborted}};
  }

  std::map<std::string, Tensor> logistic_mfvi_draws;
  if (cfg.experiment == "logistic" && (cfg.mfvi_diag || cfg.mfvi_full)) {
    const auto t_mfvi = std::chrono::steady_clock::now();
    for (const bool full : {false, true}) {
      if ((full && !cfg.mfvi_full) || (!full && !cfg.mfvi_diag)) continue;
      const std::string method = full ? "mfvi_full" : "mfvi_diag";
      const MfviLogistic fit =
          full ? mfvi_logistic_full(train_data, cfg.alpha_prior, 5000)
               : mfvi_logistic_diag(train_data, cfg.alpha_prior, 5000);
      RngStream rng(seed_mfvi_draws + (full ? 1 : 0));
      const Tensor dr = mfvi_logistic_draws(fit, cfg.export_draws, rng);
      write_csv(cfg.out_dir + "/draws_" + method + ".csv", vars, dr);
      files[method + "_draws"] = "draws_" + method + ".csv";
      moments[method] = moments_json(dr, vars);
      export_histograms(cfg.out_dir, method, vars, dr, files);
      if (cfg.gibbs) ks_entries(ks, method + "_vs_gibbs", dr, gibbs_draws, vars);
      report[method + "_fit"] = json{{"sweeps", fit.sweeps},
                                     {"converged", fit.converged},
                                     {"bound", fit.bound_trace.empty()
                                                   ? json()
                                                   : json(fit.bound_trace.back())}};
      logistic_mfvi_draws.emplace(method, dr);
    }
    timing["mfvi"] = seconds_since(t_mfvi);
  }

  // ---- Held-out predictive table (logistic) --------------------------------
  if (cfg.experiment == "logistic" && cfg.holdout > 0) {
    std::vector<std::pair<std::string, const Tensor*>> methods;
    methods.emplace_back("sivi", &sivi_draws);
    if (cfg.gibbs) methods.emplace_back("gibbs", &gibbs_draws);
    for (const auto& [name, dr] : logistic_mfvi_draws)
      methods.emplace_back(name, &dr);

    std::vector<std::string> header = {"row"};
    Tensor rows = Tensor::zeros({X_test.rows(), 1 + 2 * methods.size()});
    for (std::size_t i = 0; i < X_test.rows(); ++i) rows.row(i)[0] = double(i);
    json pred = json::object();
    pred["holdout_rows"] = X_test.rows();
    json mean_sd = json::object();
    std::size_t col = 1;
    for (const auto& [name, dr] : methods) {
      const PredictiveSummary ps = predictive_probs(*dr, X_test);
      header.push_back("mean_" + name);
      header.push_back("sd_" + name);
      double acc = 0.0;
      for (std::size_t i = 0; i < X_test.rows(); ++i) {
        rows.row(i)[col] = ps.mean[i];
        rows.row(i)[col + 1] = ps.sd[i];
        acc += ps.sd[i];
      }
      mean_sd[name] = acc / static_cast<double>(X_test.rows());
      col += 2;
    }
    write_csv(cfg.out_dir + "/predictive.csv", header, rows);
    files["predictive"] = "predictive.csv";
    pred["mean_sd"] = mean_sd;
    pred["file"] = "predictive.csv";
    report["predictive"] = pred;
  }

  // ---- Report --------------------------------------------------------------
  timing["train"] = train_secs;
  timing["total"] = seconds_since(t_total);
  report["version"] = 1;
  report["experiment"] = cfg.experiment;
  report["seed"] = cfg.seed;
  report["seeds"] = json{{"train", seed_train},
                         {"gibbs", seed_gibbs},
                         {"sivi_draws", seed_sivi_draws},
                         {"mfvi_fit", seed_mfvi_fit},
                         {"mfvi_draws", seed_mfvi_draws},
                         {"target_draws", seed_target},
                         {"synth_data", seed_synth},
                         {"contour_mix", seed_contour}};
  report["iterations"] = cfg.iterations;
  report["K"] = cfg.K;
  report["J"] = cfg.J;
  report["aborted"] = tr.aborted;
  if (tr.aborted) {
    report["abort_iteration"] = tr.abort_iteration;
    report["abort_reason"] = tr.abort_reason;
  }
  report["clip_events"] = tr.clip_events;
  const double sign = post.cond.reparameterizable() ? 1.0 : -1.0;
  report["final_bound"] =
      tr.trace.empty() ? json() : json(sign * tr.trace.back());
  report["ks"] = ks;
  report["moments"] = moments;
  report["files"] = files;
  report["timing_seconds"] = timing;

  // Resolved configuration (for provenance; reproduces this run exactly).
  {
    json rc;
    rc["version"] = cfg.version;
    rc["experiment"] = cfg.experiment;
    rc["seed"] = cfg.seed;
    rc["out_dir"] = cfg.out_dir;
    rc["sivi"] = json{{"iterations", cfg.iterations}, {"K", cfg.K},
                      {"J", cfg.J},                   {"k_ramp", cfg.k_ramp},
                      {"hidden", cfg.hidden},         {"noise_dim", cfg.noise_dim},
                      {"noise", cfg.noise},           {"sigma0_sq", cfg.sigma0_sq},
                      {"phi_step", cfg.phi_step},     {"xi_step", cfg.xi_step},
                      {"decay", cfg.decay},           {"minibatch", cfg.minibatch},
                      {"full_cov", cfg.full_cov},
                      {"export_draws", cfg.export_draws}};
    rc["model"] = json{{"variant", cfg.toy_variant},
                       {"a", cfg.a},
                       {"b", cfg.b},
                       {"alpha", cfg.alpha},
                       {"beta", cfg.beta},
                       {"alpha_prior", cfg.alpha_prior},
                       {"dataset", cfg.dataset},
                       {"holdout", cfg.holdout},
                       {"synth_n", cfg.synth_n},
                       {"synth_r", cfg.synth_r},
                       {"synth_p", cfg.synth_p}};
    rc["baselines"] = json{{"gibbs", cfg.gibbs},
                           {"mfvi_diag", cfg.mfvi_diag},
                           {"mfvi_full", cfg.mfvi_full},
                           {"burn_in", cfg.burn_in},
                           {"draws", cfg.gibbs_draws}};
    write_text(cfg.out_dir + "/resolved_config.json", rc.dump(2) + "\n");
  }

  const std::string report_path = cfg.out_dir + "/report.json";
  write_text(report_path, report.dump(2) + "\n");

  RunOutcome out;
  out.report_path = report_path;
  if (tr.aborted) {
    out.exit_code = 2;
    out.message = "training aborted: " + tr.abort_reason +
                  " (partial trace preserved in trace.csv)";
  }
  return out;
}

}  // namespace sivi
