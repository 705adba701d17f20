#include "fareyesc/cli.hpp"

#include "fareyesc/error.hpp"
#include "fareyesc/holes.hpp"
#include "fareyesc/operator.hpp"
#include "fareyesc/oracles.hpp"
#include "fareyesc/spectral.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

namespace fareyesc {

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string short_fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

double parse_real(const std::string& s) {
  if (s == "-inf" || s == "-infinity") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) throw ConfigError("not a finite number: '" + s + "'");
  return v;
}

std::vector<double> parse_reals(const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const auto& s : items) {
    if (!s.empty()) out.push_back(parse_real(s));
  }
  return out;
}

json real_json(double x) { return std::isinf(x) ? json("-inf") : json(x); }

/// Reads a flat JSON object of option values for one subcommand. Keys are
/// long option names; underscores may stand for dashes.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(std::string section) : section_(std::move(section)) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config: top level must be an object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, val] : j.items()) {
      CLI::ConfigItem item;
      if (!section_.empty()) item.parents = {section_};
      item.name = key;
      for (char& c : item.name) {
        if (c == '_') c = '-';
      }
      if (val.is_array()) {
        for (const auto& v : val) item.inputs.push_back(scalar(v, key));
      } else {
        item.inputs.push_back(scalar(val, key));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const json& v, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return fmt(v.get<double>());
    throw CLI::ConversionError("config: unsupported value for '" + key + "'");
  }

  std::string section_;
};

struct SeriesFlags {
  SeriesControl ctl;

  void attach(CLI::App* app) {
    app->add_option("--n-cap", ctl.n_cap, "Cap on the outer series index")->capture_default_str();
    app->add_option("--rel-tol", ctl.rel_tol, "Relative stopping tolerance")->capture_default_str();
    app->add_option("--consecutive-small", ctl.consecutive_small,
                    "Successive small terms required to stop")
        ->capture_default_str();
    app->add_option("--bits", ctl.precision.bits, "Absolute accuracy target in bits")
        ->capture_default_str();
    app->add_flag("--hardware", ctl.precision.hardware, "Sum the series in IEEE double");
  }
};

struct HoleFlags {
  std::string eps = "0.1";
  double mu = 1;

  void attach(CLI::App* app, bool eps_required = false) {
    auto* e = app->add_option("--eps", eps, "Hole endpoint epsilon (< 1/2, or -inf)");
    if (eps_required) e->required();
    app->add_option("--mu", mu, "Steepness mu")->capture_default_str();
  }
  HoleParams hole() const { return HoleParams(parse_real(eps), mu); }
};

std::string output_dir_default() {
  const char* env = std::getenv(kOutputDirEnv);
  return env && *env ? env : ".";
}

/// Header echoed at the top of every output.
std::string header(const std::string& command, const json& params, const std::string& prefix = "# ") {
  const std::string dump = params.dump();
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(command + dump)));
  return prefix + "fareyesc " + command + "\n" + prefix + "config_hash " + hash + "\n" + prefix +
         "params " + dump + "\n";
}

json meta(const std::string& command, const json& params) {
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a64(command + params.dump())));
  return {{"command", command}, {"config_hash", hash}, {"params", params}};
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << content;
  if (!f) throw Error("write to '" + path.string() + "' failed");
}

/// Files are collected during a command and written only after it finishes.
struct Outputs {
  std::vector<std::pair<fs::path, std::string>> files;
  void add(fs::path p, std::string content) { files.emplace_back(std::move(p), std::move(content)); }
};

// ---------------------------------------------------------------------------

struct EntryCmd {
  unsigned j = 0, nu = 0;
  HoleFlags hole;
  SeriesFlags series;
  bool as_json = false;

  void attach(CLI::App* app) {
    app->add_option("--j", j, "Row index")->required();
    app->add_option("--nu", nu, "Column index")->required();
    hole.attach(app, true);
    series.attach(app);
    app->add_flag("--json", as_json, "Print a JSON record");
  }

  int run(std::ostream& out, Outputs&) {
    const HoleParams h = hole.hole();
    json params = {{"j", j}, {"nu", nu}, {"hole", h}, {"series", series.ctl}};
    const OpenEntryResult r = open_entry_detail(j, nu, h, series.ctl);
    if (as_json) {
      out << json{{"meta", meta("entry", params)},
                  {"value", r.value},
                  {"hole_series", r.hole_series},
                  {"terms_used", r.terms_used},
                  {"last_term", r.last_term},
                  {"working_bits", r.working_bits}}
                 .dump(1)
          << '\n';
      return kExitOk;
    }
    out << header("entry", params) << "value " << fmt(r.value) << "\nhole_series "
        << fmt(r.hole_series) << "\nterms_used " << r.terms_used << "\nlast_term "
        << fmt(r.last_term) << "\nworking_bits " << r.working_bits << '\n';
    return kExitOk;
  }
};

struct MatrixCmd {
  std::size_t n = 32;
  std::string kind = "closed";
  HoleFlags hole;
  SeriesFlags series;
  std::string format = "csv";
  std::string output;
  std::string output_dir = output_dir_default();

  void attach(CLI::App* app) {
    app->add_option("-N,--N", n, "Truncation order")->capture_default_str();
    app->add_option("--kind", kind, "closed or open")->check(CLI::IsMember({"closed", "open"}));
    hole.attach(app);
    series.attach(app);
    app->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    app->add_option("--output", output, "Output file ('-' for stdout)");
    app->add_option("--output-dir", output_dir, "Directory for default file names");
  }

  int run(std::ostream& out, Outputs& files) {
    const MatrixKind k = matrix_kind_from_string(kind);
    std::optional<HoleParams> h;
    json params = {{"N", n}, {"kind", kind}};
    if (k == MatrixKind::open) {
      h = hole.hole();
      params["hole"] = *h;
      params["series"] = series.ctl;
    }
    const OperatorMatrix m = build_matrix(n, k, h, series.ctl);
    std::string content;
    if (format == "json") {
      json j = matrix_to_json(m);
      j["meta"] = meta("matrix", params);
      content = j.dump() + '\n';
    } else {
      content = header("matrix", params) + matrix_to_csv(m);
    }
    if (output == "-") {
      out << content;
      return kExitOk;
    }
    const fs::path path = output.empty()
                              ? fs::path(output_dir) / ("matrix_" + kind + "_N" + std::to_string(n) + "." + format)
                              : fs::path(output);
    files.add(path, content);
    out << "wrote " << path.string() << '\n';
    return kExitOk;
  }
};

struct EigCmd {
  std::size_t n = 64;
  std::string kind = "closed";
  HoleFlags hole;
  SeriesFlags series;
  double tol = kDefaultEigTol;
  std::size_t max_iter = kDefaultMaxIter;

  void attach(CLI::App* app) {
    app->add_option("-N,--N", n, "Truncation order")->capture_default_str();
    app->add_option("--kind", kind, "closed or open")->check(CLI::IsMember({"closed", "open"}));
    hole.attach(app);
    series.attach(app);
    app->add_option("--tol", tol, "Residual tolerance")->capture_default_str();
    app->add_option("--max-iter", max_iter, "Iteration cap")->capture_default_str();
  }

  int run(std::ostream& out, Outputs&) {
    const MatrixKind k = matrix_kind_from_string(kind);
    json params = {{"N", n}, {"kind", kind}, {"tol", tol}, {"max_iter", max_iter}};
    std::optional<HoleParams> h;
    if (k == MatrixKind::open) {
      h = hole.hole();
      params["hole"] = *h;
      params["series"] = series.ctl;
    }
    const SpectralResult closed =
        principal_eigenvalue(build_matrix(n, MatrixKind::closed), tol, max_iter);
    out << header("eig", params);
    if (k == MatrixKind::closed) {
      out << "lambda " << fmt(closed.lambda) << "\nresidual " << fmt(closed.residual)
          << "\niterations " << closed.iterations << "\nN " << n << '\n';
      return kExitOk;
    }
    const OperatorMatrix a = build_matrix(n, MatrixKind::open, h, series.ctl);
    const SpectralResult open = principal_eigenvalue(a, tol, max_iter);
    out << "lambda " << fmt(open.lambda) << "\nresidual " << fmt(open.residual) << "\niterations "
        << open.iterations << "\nN " << n << "\nlambda_closed " << fmt(closed.lambda)
        << "\ngamma " << fmt(escape_rate(open, closed)) << "\nseries_terms_used "
        << a.series_terms_used << '\n';
    return kExitOk;
  }
};

struct MeasureCmd {
  HoleFlags hole;

  void attach(CLI::App* app) { hole.attach(app, true); }

  int run(std::ostream& out, Outputs&) {
    const HoleParams h = hole.hole();
    out << header("measure", json{{"hole", h}}) << "shift " << fmt(h.shift()) << "\nhole_measure "
        << fmt(hole_measure(h).value) << '\n';
    return kExitOk;
  }
};

struct CurveCmd {
  std::vector<std::string> mus = {"1", "2", "2.5", "3", "3.5"};
  std::vector<std::string> eps;
  std::size_t n = 128;
  SeriesFlags series;
  bool doubling = false;
  double tol = kDefaultEigTol;
  std::string output_dir = output_dir_default();

  void attach(CLI::App* app) {
    app->add_option("--mu", mus, "Steepness values")->delimiter(',');
    app->add_option("--eps", eps, "Epsilon grid (default: twelve points, 0.1 to -1e4)")
        ->delimiter(',')
        ->expected(0, -1);
    app->add_option("-N,--N", n, "Truncation order")->capture_default_str();
    series.attach(app);
    app->add_flag("--doubling", doubling, "Recompute at 2N and flag unstable points");
    app->add_option("--tol", tol, "Eigenvalue residual tolerance")->capture_default_str();
    app->add_option("--output-dir", output_dir, "Output directory");
  }

  int run(std::ostream& out, Outputs& files, const CLI::App* app) {
    const bool eps_flag = app->count("--eps") > 0;
    std::vector<double> grid = eps_flag ? parse_reals(eps) : default_epsilon_grid();
    if (grid.empty()) throw ConfigError("curve: empty epsilon grid");
    const std::vector<double> mu_list = parse_reals(mus);
    if (mu_list.empty()) throw ConfigError("curve: empty mu list");
    for (double mu : mu_list) {
      for (double e : grid) HoleParams(e, mu);
      if (!(mu > 0)) throw ConfigError("curve: mu must be positive");
    }
    series.ctl.validate();

    json grid_json = json::array();
    for (double e : grid) grid_json.push_back(real_json(e));
    json params = {{"mu", mu_list}, {"eps", grid_json}, {"N", n}, {"series", series.ctl},
                   {"doubling", doubling}, {"tol", tol}};
    CurveOptions opts;
    opts.eig_tol = tol;
    opts.check_doubling = doubling;

    std::string reference = header("curve", params) + "mu,hole_measure,t,t_over_minus_log_t\n";
    out << header("curve", params);
    for (double mu : mu_list) {
      const EscapeCurve curve = escape_curve(mu, grid, n, series.ctl, opts);
      const std::string tag = "mu" + short_fmt(mu);
      files.add(fs::path(output_dir) / ("curve_" + tag + ".csv"),
                header("curve", params) + curve_csv_header() + curve_to_csv_rows(curve));
      json j = curve_to_json(curve);
      j["meta"] = meta("curve", params);
      files.add(fs::path(output_dir) / ("curve_" + tag + ".json"), j.dump(1) + '\n');
      for (const CurvePoint& p : curve.points) {
        const double m = p.hole_measure;
        reference += fmt(mu) + ',' + fmt(m) + ',' + fmt(m) + ',' + fmt(m / -std::log(m)) + '\n';
      }
      out << "mu " << short_fmt(mu) << ": " << curve.points.size() << " points\n";
      for (const CurvePoint& p : curve.points) {
        out << "  eps " << short_fmt(p.epsilon) << "  M " << fmt(p.hole_measure) << "  gamma "
            << fmt(p.gamma) << "  " << p.status << '\n';
      }
      try {
        const ScalingReport rep = scaling_compare(curve);
        json s = scaling_to_json(rep);
        s["meta"] = meta("curve", params);
        files.add(fs::path(output_dir) / ("scaling_" + tag + ".json"), s.dump(1) + '\n');
        out << "  scaling: selected " << rep.selected << ", gamma/f in [" << fmt(rep.ratio_f_min)
            << ", " << fmt(rep.ratio_f_max) << "]\n";
      } catch (const InsufficientPoints& e) {
        out << "  scaling: " << e.what() << '\n';
      }
    }
    files.add(fs::path(output_dir) / "reference_curves.csv", reference);
    for (const auto& f : files.files) out << "wrote " << f.first.string() << '\n';
    return kExitOk;
  }
};

struct UlamCmd {
  std::size_t bins = 2048;
  std::size_t samples_per_bin = 32;
  std::string hole_mode = "indicator";
  HoleFlags hole;
  double tol = 1e-12;

  void attach(CLI::App* app) {
    app->add_option("--bins", bins, "Number of bins")->capture_default_str();
    app->add_option("--samples-per-bin", samples_per_bin, "Midpoint samples per bin")
        ->capture_default_str();
    app->add_option("--hole", hole_mode, "indicator or smooth")
        ->check(CLI::IsMember({"indicator", "smooth"}));
    hole.attach(app);
    app->add_option("--tol", tol, "Residual tolerance")->capture_default_str();
  }

  HoleSpec spec() const {
    if (hole_mode == "smooth") return hole.hole();
    return IndicatorHole{parse_real(hole.eps)};
  }

  int run(std::ostream& out, Outputs&) {
    UlamConfig cfg;
    cfg.bins = bins;
    cfg.samples_per_bin = samples_per_bin;
    cfg.hole = spec();
    json params = {{"bins", bins}, {"samples_per_bin", samples_per_bin}, {"hole_mode", hole_mode},
                   {"eps", real_json(parse_real(hole.eps))}, {"mu", hole.mu}, {"tol", tol}};
    const SpectralResult r = ulam_eigenvalue(cfg, tol);
    out << header("ulam", params) << "lambda " << fmt(r.lambda) << "\ngamma "
        << fmt(-std::log(r.lambda) + 0.0) << "\nresidual " << fmt(r.residual) << "\niterations "
        << r.iterations << '\n';
    return kExitOk;
  }
};

struct McCmd {
  std::string map = "farey";
  std::string hole_mode = "indicator";
  HoleFlags hole;
  unsigned n_hole = 0;
  McOptions opts;
  bool as_json = false;

  void attach(CLI::App* app) {
    app->add_option("--map", map, "farey or km")->check(CLI::IsMember({"farey", "km"}));
    app->add_option("--hole", hole_mode, "indicator or smooth")
        ->check(CLI::IsMember({"indicator", "smooth"}));
    hole.attach(app);
    app->add_option("--n-hole", n_hole, "Indicator hole [0, 1/n) (overrides --eps)");
    app->add_option("--steps", opts.n_steps, "Iterations per orbit")->capture_default_str();
    app->add_option("--samples", opts.samples, "Number of orbits")->capture_default_str();
    app->add_option("--seed", opts.seed, "Master seed")->capture_default_str();
    app->add_option("--fit-begin", opts.fit_begin, "First step of the fit window");
    app->add_option("--fit-end", opts.fit_end, "Last step of the fit window");
    app->add_option("--streams", opts.streams, "Random streams")->capture_default_str();
    app->add_flag("--json", as_json, "Print a JSON record");
  }

  int run(std::ostream& out, Outputs&) {
    HoleSpec spec = IndicatorHole{};
    json params = {{"map", map}, {"hole_mode", hole_mode}, {"steps", opts.n_steps},
                   {"samples", opts.samples}, {"seed", opts.seed}, {"fit_begin", opts.fit_begin},
                   {"fit_end", opts.fit_end}, {"streams", opts.streams}};
    if (hole_mode == "smooth") {
      spec = hole.hole();
      params["hole"] = std::get<HoleParams>(spec);
    } else {
      const double e = n_hole ? 1.0 / n_hole : parse_real(hole.eps);
      spec = IndicatorHole{e};
      params["eps"] = e;
    }
    const SurvivalEstimate est = mc_survival(map_kind_from_string(map), spec, opts);
    if (as_json) {
      json j = survival_to_json(est);
      j["meta"] = meta("mc", params);
      out << j.dump(1) << '\n';
      return kExitOk;
    }
    out << header("mc", params) << "gamma_hat " << fmt(est.gamma_hat) << "\nstderr "
        << fmt(est.stderr_gamma) << "\nfit_window " << est.fit_begin << ' ' << est.fit_end
        << "\nn,count,p\n";
    for (std::size_t n = 0; n <= est.n_steps; ++n) {
      out << n << ',' << est.counts[n] << ',' << fmt(est.p[n]) << '\n';
    }
    return kExitOk;
  }
};

struct KmCmd {
  std::vector<unsigned> ns = {10, 100, 1000};

  void attach(CLI::App* app) {
    app->add_option("--n", ns, "Hole indices n (hole [0, 1/n))")->delimiter(',');
  }

  int run(std::ostream& out, Outputs&) {
    out << header("km", json{{"n", ns}}) << "n,lambda,gamma,gamma_n_log_n\n";
    for (unsigned n : ns) {
      const KmResult r = km_open_eigenvalue_detail(n);
      out << n << ',' << fmt(r.lambda) << ',' << fmt(r.gamma) << ','
          << fmt(r.gamma * n * std::log(static_cast<double>(n))) << '\n';
    }
    return kExitOk;
  }
};

struct CompareCmd {
  std::size_t n = 128;
  double mu = 2;
  std::string eps = "0.1";
  std::size_t bins = 2048;
  std::size_t samples = 1000000;
  std::size_t steps = 40;
  std::uint64_t seed = 1;
  std::vector<unsigned> km_n = {10, 100, 1000};
  unsigned borel_nu_max = 4;
  SeriesFlags series;
  std::string output_dir = output_dir_default();

  void attach(CLI::App* app) {
    app->add_option("-N,--N", n, "Laguerre truncation order")->capture_default_str();
    app->add_option("--mu", mu, "Steepness for the cross-method section")->capture_default_str();
    app->add_option("--eps", eps, "Epsilon for the cross-method section")->capture_default_str();
    app->add_option("--bins", bins, "Ulam bins")->capture_default_str();
    app->add_option("--samples", samples, "Monte Carlo orbits")->capture_default_str();
    app->add_option("--steps", steps, "Monte Carlo steps")->capture_default_str();
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
    app->add_option("--km-n", km_n, "KM hole indices")->delimiter(',');
    app->add_option("--borel-nu-max", borel_nu_max, "Largest nu in the Borel section")
        ->capture_default_str();
    series.attach(app);
    app->add_option("--output-dir", output_dir, "Output directory");
  }

  int run(std::ostream& out, Outputs& files) {
    const HoleParams h(parse_real(eps), mu);
    series.ctl.validate();
    json params = {{"N", n}, {"hole", h}, {"bins", bins}, {"samples", samples}, {"steps", steps},
                   {"seed", seed}, {"km_n", km_n}, {"borel_nu_max", borel_nu_max},
                   {"series", series.ctl}};
    json report = {{"meta", meta("compare", params)}};
    std::vector<std::string> hard_failures;
    std::vector<std::string> soft_flags;
    out << header("compare", params);

    // KM
    out << "[km]\nn,lambda,gamma,gamma_n_log_n\n";
    json km = json::array();
    const KmResult km2 = km_open_eigenvalue_detail(2);
    if (std::fabs(km2.gamma - std::log(2.0)) > 1e-15) hard_failures.push_back("km gamma(2) != log 2");
    double prev = 0;
    for (unsigned k : km_n) {
      const KmResult r = km_open_eigenvalue_detail(k);
      const double scaled = r.gamma * k * std::log(static_cast<double>(k));
      out << k << ',' << fmt(r.lambda) << ',' << fmt(r.gamma) << ',' << fmt(scaled) << '\n';
      km.push_back({{"n", k}, {"lambda", r.lambda}, {"gamma", r.gamma}, {"gamma_n_log_n", scaled}});
      if (!(r.lambda > prev)) hard_failures.push_back("km eigenvalue not increasing at n = " + std::to_string(k));
      prev = r.lambda;
    }
    report["km"] = km;

    // Borel
    out << "[borel]\nmu,eps,nu,x,rel_error\n";
    json borel = json::array();
    std::vector<unsigned> nus;
    for (unsigned v = 0; v <= borel_nu_max; ++v) nus.push_back(v);
    const std::vector<double> xs = {0.1, 0.3, 0.5, 0.9};
    for (double bmu : {1.0, 2.0}) {
      for (double be : {0.1, -1.0}) {
        const auto reps = borel_identity_check(HoleParams(be, bmu), nus, xs, series.ctl);
        for (const BorelReport& r : reps) {
          for (const BorelSample& s : r.samples) {
            out << short_fmt(bmu) << ',' << short_fmt(be) << ',' << r.nu << ',' << short_fmt(s.x)
                << ',' << fmt(s.rel_error) << '\n';
          }
          json jr = borel_to_json(r);
          jr["mu"] = bmu;
          jr["eps"] = be;
          borel.push_back(jr);
          if (!(r.max_rel_error <= 1e-8)) {
            hard_failures.push_back("borel error " + fmt(r.max_rel_error) + " at mu=" + short_fmt(bmu) +
                                    " eps=" + short_fmt(be) + " nu=" + std::to_string(r.nu));
          }
        }
      }
    }
    report["borel"] = borel;

    // Cross-method
    const SpectralResult closed = principal_eigenvalue(build_matrix(n, MatrixKind::closed));
    const OperatorMatrix a = build_matrix(n, MatrixKind::open, h, series.ctl);
    const SpectralResult open = principal_eigenvalue(a);
    const double gamma_l = escape_rate(open, closed);
    if (!(gamma_l > 0)) hard_failures.push_back("laguerre gamma not positive");

    UlamConfig closed_cfg;
    closed_cfg.bins = bins;
    const SpectralResult ulam_closed = ulam_eigenvalue(closed_cfg);
    if (!(std::fabs(ulam_closed.lambda - 1) <= 1e-10)) hard_failures.push_back("closed ulam eigenvalue != 1");
    UlamConfig cfg;
    cfg.bins = bins;
    cfg.hole = h;
    const SpectralResult ulam = ulam_eigenvalue(cfg);
    const double gamma_u = -std::log(ulam.lambda);

    McOptions mo;
    mo.samples = samples;
    mo.n_steps = steps;
    mo.seed = seed;
    const SurvivalEstimate mc = mc_survival(MapKind::farey, h, mo);
    for (std::size_t k = 1; k < mc.p.size(); ++k) {
      if (mc.p[k] > mc.p[k - 1]) hard_failures.push_back("mc survival not monotone");
    }
    const double rel_lu = std::fabs(gamma_l - gamma_u) / gamma_u;
    const double z_mc = std::fabs(mc.gamma_hat - gamma_u) / mc.stderr_gamma;
    if (!(rel_lu <= 0.1)) soft_flags.push_back("laguerre vs ulam differ by " + fmt(rel_lu));
    if (!(z_mc <= 3)) soft_flags.push_back("mc vs ulam differ by " + fmt(z_mc) + " sigma");
    out << "[cross]\nlaguerre_gamma " << fmt(gamma_l) << "\nulam_gamma " << fmt(gamma_u)
        << "\nmc_gamma " << fmt(mc.gamma_hat) << "\nmc_stderr " << fmt(mc.stderr_gamma)
        << "\nlaguerre_vs_ulam_rel " << fmt(rel_lu) << "\nmc_vs_ulam_sigma " << fmt(z_mc) << '\n';
    report["cross"] = {{"laguerre_gamma", gamma_l}, {"ulam_gamma", gamma_u},
                       {"ulam_closed_lambda", ulam_closed.lambda}, {"mc", survival_to_json(mc)},
                       {"laguerre_vs_ulam_rel", rel_lu}, {"mc_vs_ulam_sigma", z_mc}};
    report["hard_failures"] = hard_failures;
    report["soft_flags"] = soft_flags;

    out << "[summary]\n";
    for (const auto& f : hard_failures) out << "FAIL " << f << '\n';
    for (const auto& f : soft_flags) out << "FLAG " << f << '\n';
    out << (hard_failures.empty() ? "hard invariants: pass\n" : "hard invariants: FAIL\n");
    const fs::path path = fs::path(output_dir) / "compare_report.json";
    files.add(path, report.dump(1) + '\n');
    out << "wrote " << path.string() << '\n';
    return hard_failures.empty() ? kExitOk : kExitInvariantFailed;
  }
};

std::string first_subcommand(const std::vector<std::string>& args, const std::vector<std::string>& names) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    for (const auto& n : names) {
      if (args[i] == n) return n;
    }
  }
  return {};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Escape rates of the Farey map with smooth holes", "fareyesc"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "JSON file of option values for the subcommand");
  app.allow_config_extras(CLI::config_extras_mode::error);

  EntryCmd entry;
  MatrixCmd matrix;
  EigCmd eig;
  MeasureCmd measure;
  CurveCmd curve;
  CompareCmd compare;
  UlamCmd ulam;
  McCmd mc;
  KmCmd km;

  std::map<std::string, std::function<int(Outputs&)>> handlers;
  auto add = [&](const std::string& name, const std::string& help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.attach(sub);
    return sub;
  };
  add("entry", "One open-operator matrix entry with series diagnostics", entry);
  add("matrix", "Write a closed or open truncation as CSV or JSON", matrix);
  add("eig", "Principal eigenvalue (and escape rate) of a truncation", eig);
  add("measure", "Hole measure M_mu(eps)", measure);
  CLI::App* curve_app = add("curve", "Escape-rate curves over an epsilon grid", curve);
  add("compare", "Cross-check report: KM, Borel identity, Ulam, Monte Carlo", compare);
  add("ulam", "Ulam eigenvalue of the open Farey operator", ulam);
  add("mc", "Monte Carlo survival probabilities", mc);
  add("km", "Escape rates of the piecewise-linear Markov model", km);

  std::vector<std::string> names;
  for (const CLI::App* s : app.get_subcommands([](const CLI::App*) { return true; })) names.push_back(s->get_name());
  app.config_formatter(std::make_shared<JsonConfig>(first_subcommand(args, names)));

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  Outputs files;
  try {
    int code = kExitOk;
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "entry") code = entry.run(out, files);
    if (cmd == "matrix") code = matrix.run(out, files);
    if (cmd == "eig") code = eig.run(out, files);
    if (cmd == "measure") code = measure.run(out, files);
    if (cmd == "curve") code = curve.run(out, files, curve_app);
    if (cmd == "compare") code = compare.run(out, files);
    if (cmd == "ulam") code = ulam.run(out, files);
    if (cmd == "mc") code = mc.run(out, files);
    if (cmd == "km") code = km.run(out, files);
    for (const auto& [path, content] : files.files) write_file(path, content);
    return code;
  } catch (const ConfigError& e) {
    err << "invalid configuration: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NonConvergent& e) {
    err << "non-convergent: " << e.what() << '\n';
    return kExitNonConvergent;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace fareyesc
