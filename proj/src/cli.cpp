#include "cpsdyn/cli.hpp"

#include "cpsdyn/errors.hpp"
#include "cpsdyn/kernels.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#ifndef CPSDYN_VERSION
#define CPSDYN_VERSION "unknown"
#endif

namespace cpsdyn {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

std::string version_string() { return CPSDYN_VERSION; }

namespace {

[[noreturn]] void bad_key(const std::string& key, const std::string& msg) {
  throw ParseError(key + ": " + msg);
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const char* b = t.data();
  const char* e = b + t.size();
  if (b != e && *b == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (t.empty() || ec != std::errc() || ptr != e || !std::isfinite(v))
    bad_key(key, "expected a number, got '" + text + "'");
  return v;
}

long parse_long(const std::string& key, const std::string& text) {
  // accepts 100000 as well as 1e5
  const double v = parse_double(key, text);
  if (v != std::floor(v) || std::abs(v) > 9.0e18) bad_key(key, "expected an integer, got '" + text + "'");
  return static_cast<long>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string t = trim(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  bad_key(key, "expected true/false, got '" + text + "'");
}

class Section {
 public:
  Section(const pt::ptree& root, std::string name) : name_(std::move(name)) {
    if (const auto child = root.get_child_optional(name_)) tree_ = *child;
  }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    if (const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '\0')))
      return trim(*v);
    return std::nullopt;
  }
  std::string path(const std::string& key) const { return name_ + "." + key; }

  std::string str(const std::string& key, const std::string& def) {
    return raw(key).value_or(def);
  }
  std::string required(const std::string& key) {
    auto v = raw(key);
    if (!v || v->empty()) bad_key(path(key), "required key is missing");
    return *v;
  }
  double num(const std::string& key, double def) {
    const auto v = raw(key);
    return v ? parse_double(path(key), *v) : def;
  }
  long integer(const std::string& key, long def) {
    const auto v = raw(key);
    return v ? parse_long(path(key), *v) : def;
  }
  bool flag(const std::string& key, bool def) {
    const auto v = raw(key);
    return v ? parse_bool(path(key), *v) : def;
  }

  void reject_unknown() const {
    for (const auto& [k, _] : tree_)
      if (!used_.count(k)) bad_key(path(k), "unknown key");
  }

 private:
  std::string name_;
  pt::ptree tree_;
  std::set<std::string> used_;
};

ModelSpec parse_model(Section& s, const fs::path& base) {
  const std::string kind = s.required("kind");
  ModelSpec spec;
  if (kind == "two_level") {
    spec = ModelSpec::two_level(s.num("coupling", 1.0), s.num("half_gap", 0.0));
  } else if (kind == "random") {
    const long f = s.integer("F", 2);
    if (f < 1 || f > 64) bad_key(s.path("F"), "must lie in [1, 64]");
    const long seed = s.integer("seed", 0);
    if (seed < 0) bad_key(s.path("seed"), "must be >= 0");
    spec = ModelSpec::random(static_cast<int>(f), static_cast<std::uint64_t>(seed), s.num("scale", 1.0));
  } else if (kind == "ladder") {
    const long f = s.integer("F", 2);
    if (f < 1 || f > 64) bad_key(s.path("F"), "must lie in [1, 64]");
    spec = ModelSpec::ladder(static_cast<int>(f), s.num("gap", 1.0), s.num("coupling", 0.5));
  } else if (kind == "file") {
    fs::path p = s.required("path");
    if (p.is_relative()) p = base / p;
    spec = ModelSpec::file(p.string());
  } else {
    bad_key(s.path("kind"), "unknown model '" + kind + "' (two_level, random, ladder, file)");
  }
  return spec;
}

GammaWeight parse_weight(Section& s, int f) {
  const std::string kind = s.str("weight", "single");
  if (kind == "single") return GammaWeight::single(s.num("gamma", gamma_w(f)));
  if (kind == "triangle") return GammaWeight::triangle(f);
  if (kind == "intra_comb") return intra_electron_comb(f);
  if (kind == "delta_comb") {
    std::vector<std::pair<double, double>> deltas;
    for (const auto& item : split(s.required("deltas"), ',')) {
      const auto parts = split(item, ':');
      if (parts.size() != 2) bad_key(s.path("deltas"), "expected gamma:weight items, got '" + item + "'");
      deltas.emplace_back(parse_double(s.path("deltas"), parts[0]),
                          parse_double(s.path("deltas"), parts[1]));
    }
    if (deltas.empty()) bad_key(s.path("deltas"), "needs at least one gamma:weight item");
    return GammaWeight::delta_comb(std::move(deltas));
  }
  if (kind == "custom") {
    std::vector<double> edges, values;
    for (const auto& v : split(s.required("edges"), ',')) edges.push_back(parse_double(s.path("edges"), v));
    for (const auto& v : split(s.required("values"), ','))
      values.push_back(parse_double(s.path("values"), v));
    try {
      return GammaWeight::custom(std::move(edges), std::move(values));
    } catch (const std::exception& e) {
      bad_key(s.path("edges"), e.what());
    }
  }
  bad_key(s.path("weight"), "unknown weight '" + kind + "' (single, delta_comb, triangle, custom, intra_comb)");
}

MethodSpec parse_method(Section& s, int f) {
  const std::string name = s.required("family");
  const auto family = parse_family(name);
  if (!family) bad_key(s.path("family"), "unknown method '" + name + "'");
  using F = MethodSpec::Family;
  MethodSpec m;
  switch (*family) {
    case F::cmm:
      m = MethodSpec::cmm(s.num("gamma", gamma_w(f)));
      break;
    case F::wmm:
      m = MethodSpec::wmm(parse_weight(s, f));
      break;
    case F::cmmcv:
      m = MethodSpec::cmmcv({s.num("gamma", gamma_w(f)), s.num("sigma", 0.0)});
      break;
    case F::cornered_simplex:
      m = MethodSpec::cornered_simplex(s.num("gamma", 1.0));
      break;
    case F::triangle_sqc: {
      const std::string og = s.str("observable_gamma", "shell");
      if (og != "shell" && og != "third")
        bad_key(s.path("observable_gamma"), "expected 'shell' or 'third', got '" + og + "'");
      m = MethodSpec::triangle_sqc(og == "third");
      break;
    }
    case F::ehrenfest:
      m = MethodSpec::ehrenfest();
      break;
    case F::lambda_point:
      m = MethodSpec::lambda_point(s.num("gamma", gamma_w(f)));
      break;
    case F::dtwa:
      m = MethodSpec::dtwa();
      break;
    case F::gdtwa:
      m = MethodSpec::gdtwa();
      break;
    case F::triangle_ww:
      m = MethodSpec::triangle_ww();
      break;
    case F::triangle_f2_single:
      m = MethodSpec::triangle_f2_single(s.num("gamma", 0.0));
      break;
    case F::hill_ww:
      m = MethodSpec::hill_ww(s.num("gamma", 0.0));
      break;
  }
  try {
    m.validate(f);
  } catch (const std::invalid_argument& e) {
    bad_key("method", e.what());
  }
  return m;
}

std::vector<IndexPair> parse_pairs(Section& s, int f, const MethodSpec& method) {
  std::vector<IndexPair> pairs;
  const auto raw = s.raw("pairs");
  if (!raw || raw->empty()) {
    for (int k = 0; k < f; ++k) pairs.push_back({0, 0, k, k});
  } else {
    for (const auto& item : split(*raw, ';')) {
      std::istringstream is(item);
      std::vector<long> idx;
      std::string tok;
      while (is >> tok) idx.push_back(parse_long(s.path("pairs"), tok));
      if (idx.size() != 4) bad_key(s.path("pairs"), "each item needs four indices 'n m k l', got '" + item + "'");
      for (const long v : idx)
        if (v < 1 || v > f) {
          std::ostringstream os;
          os << "index " << v << " outside [1, " << f << "]";
          bad_key(s.path("pairs"), os.str());
        }
      pairs.push_back({static_cast<int>(idx[0] - 1), static_cast<int>(idx[1] - 1),
                       static_cast<int>(idx[2] - 1), static_cast<int>(idx[3] - 1)});
    }
  }
  for (const auto& p : pairs) {
    if (method.estimator_class() == EstimatorClass::ww && (p.n != p.m || p.k != p.l))
      bad_key(s.path("pairs"), family_name(method.family) + " takes population pairs only (n = m, k = l)");
    if (method.estimator_class() == EstimatorClass::cx && p.k != p.l)
      bad_key(s.path("pairs"), "cornered_simplex needs a diagonal observable (k = l)");
  }
  return pairs;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  pt::ptree root;
  try {
    pt::ini_parser::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(source + ":" + std::to_string(e.line()) + ": " + e.message(),
                     static_cast<int>(e.line()));
  }
  for (const auto& [name, child] : root) {
    if (name != "model" && name != "method" && name != "tcf" && name != "validate")
      bad_key(name, "unknown section (model, method, tcf, validate)");
    if (child.empty() && !child.data().empty()) bad_key(name, "key outside any section");
  }

  ExperimentConfig cfg;
  cfg.source = source;
  const fs::path base = fs::path(source).has_parent_path() ? fs::path(source).parent_path() : fs::path(".");

  Section model(root, "model");
  cfg.model = parse_model(model, base);
  model.reject_unknown();
  int f = 0;
  try {
    f = build(cfg.model).dim();
  } catch (const std::exception& e) {
    bad_key("model", e.what());
  }

  Section method(root, "method");
  cfg.method = parse_method(method, f);
  method.reject_unknown();

  Section tcf(root, "tcf");
  cfg.pairs = parse_pairs(tcf, f, cfg.method);
  cfg.t_max = tcf.num("t_max", 10.0);
  if (!(cfg.t_max > 0.0)) bad_key(tcf.path("t_max"), "must be > 0");
  const long nt = tcf.integer("n_times", 21);
  if (nt < 2) bad_key(tcf.path("n_times"), "must be >= 2");
  cfg.n_times = static_cast<int>(nt);
  cfg.n_traj = tcf.integer("n_traj", 100000);
  if (cfg.n_traj < 1) bad_key(tcf.path("n_traj"), "must be >= 1");
  const long seed = tcf.integer("seed", 1);
  if (seed < 0) bad_key(tcf.path("seed"), "must be >= 0");
  cfg.seed = static_cast<std::uint64_t>(seed);
  const std::string backend = tcf.str("backend", "exact");
  if (backend == "exact") {
    cfg.backend = Backend::exact();
  } else if (backend == "rk4") {
    const double dt = tcf.num("dt", 1e-3);
    if (!(dt > 0.0)) bad_key(tcf.path("dt"), "must be > 0");
    cfg.backend = Backend::rk4(dt);
  } else {
    bad_key(tcf.path("backend"), "expected 'exact' or 'rk4', got '" + backend + "'");
  }
  tcf.raw("dt");
  const long threads = tcf.integer("threads", 1);
  if (threads < 1) bad_key(tcf.path("threads"), "must be >= 1");
  cfg.threads = static_cast<int>(threads);
  tcf.reject_unknown();

  Section val(root, "validate");
  cfg.validate.exact = val.flag("exact", true);
  cfg.validate.k_se = val.num("k_se", 5.0);
  cfg.validate.abs_tol = val.num("abs_tol", 1e-3);
  if (cfg.validate.k_se < 0.0) bad_key(val.path("k_se"), "must be >= 0");
  if (cfg.validate.abs_tol < 0.0) bad_key(val.path("abs_tol"), "must be >= 0");
  cfg.validate.exact_mapping = val.flag("exact_mapping", false);
  cfg.validate.invariant_drift = val.flag("invariant_drift", false);
  cfg.validate.moments = val.flag("moments", false);
  cfg.validate.n_check = val.integer("n_check", 100000);
  if (cfg.validate.n_check < 1) bad_key(val.path("n_check"), "must be >= 1");
  val.reject_unknown();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path);
  return parse_config(in, path);
}

std::vector<double> time_grid(const ExperimentConfig& cfg) {
  std::vector<double> t(static_cast<std::size_t>(cfg.n_times));
  for (int i = 0; i < cfg.n_times; ++i) t[i] = cfg.t_max * i / (cfg.n_times - 1);
  return t;
}

std::vector<long> parse_count_list(const std::string& text) {
  std::vector<long> out;
  for (const auto& item : split(text, ',')) {
    const long v = parse_long("--n", item);
    if (v < 1) bad_key("--n", "ensemble sizes must be >= 1");
    out.push_back(v);
  }
  return out;
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string model_name(const ModelSpec& m) {
  std::ostringstream os;
  os.precision(17);
  switch (m.kind) {
    case ModelSpec::Kind::two_level:
      os << "two_level(coupling=" << m.coupling << ",half_gap=" << m.half_gap << ")";
      break;
    case ModelSpec::Kind::random:
      os << "random(F=" << m.F << ",seed=" << m.seed << ",scale=" << m.scale << ")";
      break;
    case ModelSpec::Kind::ladder:
      os << "ladder(F=" << m.F << ",gap=" << m.gap << ",coupling=" << m.coupling << ")";
      break;
    case ModelSpec::Kind::file:
      os << "file(" << m.path << ")";
      break;
  }
  return os.str();
}

std::string backend_name(const Backend& b) {
  return b.kind == Backend::Kind::exact ? std::string("exact") : "rk4(dt=" + g17(b.dt) + ")";
}

TCFRequest make_request(const ExperimentConfig& cfg, const HermitianMatrix& h, const IndexPair& p,
                        long n_traj, std::uint64_t seed) {
  TCFRequest r;
  r.hamiltonian = h;
  r.n = p.n;
  r.m = p.m;
  r.k = p.k;
  r.l = p.l;
  r.t_grid = time_grid(cfg);
  r.n_traj = n_traj;
  r.seed = seed;
  r.method = cfg.method;
  r.backend = cfg.backend;
  r.threads = cfg.threads;
  return r;
}

bool within(double err, double se, double k, double tol) {
  const double s = std::isfinite(se) ? se : 0.0;
  return std::abs(err) <= k * s + tol;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  const HermitianMatrix h = build(cfg.model);
  const std::vector<double> grid = time_grid(cfg);

  fs::create_directories(cfg.out_dir);
  RunSummary sum;
  sum.results_path = (fs::path(cfg.out_dir) / "results.csv").string();
  std::ofstream out(sum.results_path);
  if (!out) throw ParseError("cannot write " + sum.results_path);
  out << "# cpsdyn " << version_string() << "\n"
      << "# model: " << model_name(cfg.model) << "\n"
      << "# F: " << h.dim() << "\n"
      << "# method: " << cfg.method.name() << "\n"
      << "# backend: " << backend_name(cfg.backend) << "\n"
      << "# seed: " << cfg.seed << "\n"
      << "# n_traj: " << cfg.n_traj << "\n"
      << "# t_max: " << g17(cfg.t_max) << "\n"
      << "# n_times: " << cfg.n_times << "\n"
      << "# indices are 1-based; rho = |n><m|, A = |k><l|\n"
      << "n,m,k,l,t,re,im,se_re,se_im,norm,exact_re,exact_im,abs_err,err_over_se\n";

  double worst_bound = 0.0;
  for (const auto& p : cfg.pairs) {
    const TCFResult res = estimate_tcf(make_request(cfg, h, p, cfg.n_traj, cfg.seed));
    const std::vector<Complex> ex = exact_element_tcf(h, p.n, p.m, p.k, p.l, grid);
    if (cfg.method.is_ratio())
      log << "pair " << p.n + 1 << p.m + 1 << "," << p.k + 1 << p.l + 1
          << ": min trajectory contribution " << res.min_contribution << "\n";
    for (std::size_t t = 0; t < grid.size(); ++t) {
      const Complex err = res.estimates[t] - ex[t];
      const double abs_err = std::abs(err);
      const double se = std::hypot(res.se_re[t], res.se_im[t]);
      const double ratio =
          se > 0.0 ? abs_err / se : (se == 0.0 && abs_err == 0.0 ? 0.0 : std::nan(""));
      out << p.n + 1 << "," << p.m + 1 << "," << p.k + 1 << "," << p.l + 1 << "," << g17(grid[t])
          << "," << g17(res.estimates[t].real()) << "," << g17(res.estimates[t].imag()) << ","
          << g17(res.se_re[t]) << "," << g17(res.se_im[t]) << "," << g17(res.normalization[t])
          << "," << g17(ex[t].real()) << "," << g17(ex[t].imag()) << "," << g17(abs_err) << ","
          << g17(ratio) << "\n";
      ++sum.rows;
      if (std::isfinite(ratio)) sum.max_err_over_se = std::max(sum.max_err_over_se, ratio);
      const auto bound = [&](double se) {
        return cfg.validate.k_se * (std::isfinite(se) ? se : 0.0) + cfg.validate.abs_tol;
      };
      worst_bound = std::max({worst_bound, std::abs(err.real()) / bound(res.se_re[t]),
                              std::abs(err.imag()) / bound(res.se_im[t])});
      if (cfg.validate.exact) {
        const bool ok = within(err.real(), res.se_re[t], cfg.validate.k_se, cfg.validate.abs_tol) &&
                        within(err.imag(), res.se_im[t], cfg.validate.k_se, cfg.validate.abs_tol);
        if (!ok) ++sum.failed_rows;
      }
    }
  }
  out.close();
  if (sum.failed_rows > 0) {
    sum.passed = false;
    log << "exact-reference check FAILED on " << sum.failed_rows << " of " << sum.rows
        << " rows (|err| > " << cfg.validate.k_se << " SE + " << cfg.validate.abs_tol << ")\n";
  } else if (cfg.validate.exact) {
    log << "exact-reference check passed on " << sum.rows << " rows (worst |err| at "
        << worst_bound << " of the " << cfg.validate.k_se << " SE + " << cfg.validate.abs_tol
        << " bound)\n";
  }

  if (cfg.validate.exact_mapping || cfg.validate.invariant_drift || cfg.validate.moments) {
    const ValidationSummary v = validate_experiment(cfg, log);
    if (!v.passed) sum.passed = false;
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ofstream man(fs::path(cfg.out_dir) / "manifest.txt");
  man << "version: " << version_string() << "\n"
      << "config: " << cfg.source << "\n"
      << "model: " << model_name(cfg.model) << "\n"
      << "method: " << cfg.method.name() << "\n"
      << "backend: " << backend_name(cfg.backend) << "\n"
      << "seed: " << cfg.seed << "\n"
      << "n_traj: " << cfg.n_traj << "\n"
      << "threads: " << cfg.threads << "\n"
      << "wall_time_s: " << wall << "\n"
      << "validation: " << (sum.passed ? "pass" : "fail") << "\n";
  log << "wrote " << sum.results_path << " (" << sum.rows << " rows, " << wall << " s)\n";
  return sum;
}

ConvergenceSummary convergence_study(const ExperimentConfig& cfg, const std::vector<long>& n_list,
                                     int replicates, std::ostream& log) {
  if (n_list.size() < 3) throw ParseError("--n: convergence study needs at least three ensemble sizes");
  if (replicates < 1) throw ParseError("--replicates: must be >= 1");
  const HermitianMatrix h = build(cfg.model);
  const std::vector<double> grid = time_grid(cfg);
  std::vector<std::vector<Complex>> exact;
  for (const auto& p : cfg.pairs) exact.push_back(exact_element_tcf(h, p.n, p.m, p.k, p.l, grid));

  ConvergenceSummary sum;
  for (const long n : n_list) {
    double acc = 0.0;
    for (int r = 0; r < replicates; ++r) {
      double worst = 0.0;
      for (std::size_t i = 0; i < cfg.pairs.size(); ++i) {
        const TCFResult res = estimate_tcf(
            make_request(cfg, h, cfg.pairs[i], n, cfg.seed + static_cast<std::uint64_t>(r)));
        for (std::size_t t = 0; t < grid.size(); ++t)
          worst = std::max(worst, std::abs(res.estimates[t] - exact[i][t]));
      }
      acc += worst;
    }
    sum.rows.push_back({n, acc / replicates});
    log << "N = " << n << ": max |err| = " << acc / replicates << "\n";
  }
  // least squares on (log10 N, log10 err)
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double cnt = static_cast<double>(sum.rows.size());
  for (const auto& row : sum.rows) {
    const double x = std::log10(static_cast<double>(row.n_traj));
    // zero-variance samplers can hit the reference exactly
    const double y = std::log10(std::max(row.max_abs_err, std::numeric_limits<double>::min()));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  sum.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  sum.intercept = (sy - sum.slope * sx) / cnt;

  fs::create_directories(cfg.out_dir);
  sum.path = (fs::path(cfg.out_dir) / "convergence.csv").string();
  std::ofstream out(sum.path);
  out << "# cpsdyn " << version_string() << "\n"
      << "# model: " << model_name(cfg.model) << "\n"
      << "# method: " << cfg.method.name() << "\n"
      << "# seed: " << cfg.seed << "\n"
      << "# replicates: " << replicates << "\n"
      << "# slope: " << g17(sum.slope) << "\n"
      << "n_traj,max_abs_err\n";
  for (const auto& row : sum.rows) out << row.n_traj << "," << g17(row.max_abs_err) << "\n";
  log << "log-log slope " << sum.slope << "; wrote " << sum.path << "\n";
  return sum;
}

namespace {

double sphere_gamma(const MethodSpec& m, int f) {
  using F = MethodSpec::Family;
  switch (m.family) {
    case F::cmm:
    case F::cornered_simplex:
    case F::lambda_point:
    case F::triangle_f2_single:
    case F::hill_ww:
      return m.gamma;
    case F::cmmcv:
      return m.commutator.gamma;
    default:
      return gamma_w(f);
  }
}

CheckOutcome check_exact_mapping(const ExperimentConfig& cfg, const HermitianMatrix& h) {
  const int f = h.dim();
  const double k = cfg.validate.k_se;
  CheckOutcome out;
  out.name = "exact mapping at t = 0";
  using F = MethodSpec::Family;
  if (cfg.method.family == F::cmm || cfg.method.family == F::wmm) {
    const GammaWeight w = cfg.method.family == F::cmm ? GammaWeight::single(cfg.method.gamma)
                                                      : cfg.method.weight;
    const MappingCheck mc =
        mapping_identity_mc(w, f, cfg.method.family == F::cmm, cfg.validate.n_check, cfg.seed,
                            cfg.threads);
    out.passed = mc.max_z() <= k;
    out.detail = "max |err|/SE over " + std::to_string(f * f * f * f) + " quadruples = " +
                 g17(mc.max_z());
    return out;
  }
  // every family-valid quadruple through the estimator itself at t = 0
  ExperimentConfig c0 = cfg;
  c0.validate.exact = false;
  double worst = 0.0;
  int count = 0;
  out.passed = true;
  for (int n = 0; n < f; ++n)
    for (int m = 0; m < f; ++m)
      for (int kk = 0; kk < f; ++kk)
        for (int l = 0; l < f; ++l) {
          const EstimatorClass ec = cfg.method.estimator_class();
          if (ec == EstimatorClass::ww && (n != m || kk != l)) continue;
          if (ec == EstimatorClass::cx && kk != l) continue;
          TCFRequest r = make_request(c0, h, {n, m, kk, l}, cfg.validate.n_check, cfg.seed);
          r.t_grid = {0.0};
          const TCFResult res = estimate_tcf(r);
          const double want = (m == kk && n == l) ? 1.0 : 0.0;
          const Complex err = res.estimates[0] - want;
          const bool ok = within(err.real(), res.se_re[0], k, cfg.validate.abs_tol) &&
                          within(err.imag(), res.se_im[0], k, cfg.validate.abs_tol);
          if (!ok) out.passed = false;
          const double se = std::hypot(res.se_re[0], res.se_im[0]);
          if (se > 0.0) worst = std::max(worst, std::abs(err) / se);
          ++count;
        }
  out.detail = std::to_string(count) + " quadruples, max |err|/SE = " + g17(worst);
  return out;
}

CheckOutcome check_drift(const ExperimentConfig& cfg, const HermitianMatrix& h) {
  const int f = h.dim();
  CheckOutcome out;
  out.name = "trajectory invariants";
  const double tol = cfg.backend.kind == Backend::Kind::exact ? 1e-10 : 1e-6;
  std::vector<StiefelPoint> points;
  for (int i = 0; i < 8; ++i) {
    Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(i));
    points.push_back(sample_sphere(f, sphere_gamma(cfg.method, f), rng));
  }
  if (f >= 2) points.push_back(gdtwa_points(f, 0).points.front());
  DriftReport worst;
  for (const auto& p : points) {
    const DriftReport d = invariant_drift(integrate_segment(p, h, time_grid(cfg), cfg.backend));
    worst.max_norm_drift = std::max(worst.max_norm_drift, d.max_norm_drift);
    worst.max_overlap_drift = std::max(worst.max_overlap_drift, d.max_overlap_drift);
    worst.max_energy_drift = std::max(worst.max_energy_drift, d.max_energy_drift);
  }
  out.passed = worst.within(tol);
  out.detail = "norm " + g17(worst.max_norm_drift) + ", overlap " + g17(worst.max_overlap_drift) +
               ", energy " + g17(worst.max_energy_drift) + " (tol " + g6(tol) + ")";
  return out;
}

// E[z_m conj z_n] = 2S/F delta_mn and
// E[z_m conj z_n z_k conj z_l] = 4S^2/(F(F+1)) (delta_mn delta_kl + delta_ml delta_kn).
CheckOutcome check_moments(const ExperimentConfig& cfg, int f) {
  CheckOutcome out;
  out.name = "sphere moments";
  const double g = sphere_gamma(cfg.method, f);
  const double s = 1.0 + f * g;
  const long n = cfg.validate.n_check;
  const std::size_t w2 = static_cast<std::size_t>(f) * f, w4 = w2 * w2;
  std::vector<Complex> m1(w2 + w4), m2(w2 + w4);
  for (long i = 0; i < n; ++i) {
    Rng rng = make_stream(cfg.seed ^ 0x6d6f6dULL, static_cast<std::uint64_t>(i));
    const ComplexMatrix z = sample_sphere(f, g, rng).frames;
    std::size_t idx = 0;
    for (int a = 0; a < f; ++a)
      for (int b = 0; b < f; ++b) {
        const Complex v = z(a, 0) * std::conj(z(b, 0));
        m1[idx] += v;
        m2[idx++] += Complex(v.real() * v.real(), v.imag() * v.imag());
      }
    for (int a = 0; a < f; ++a)
      for (int b = 0; b < f; ++b)
        for (int c = 0; c < f; ++c)
          for (int d = 0; d < f; ++d) {
            const Complex v = z(a, 0) * std::conj(z(b, 0)) * z(c, 0) * std::conj(z(d, 0));
            m1[idx] += v;
            m2[idx++] += Complex(v.real() * v.real(), v.imag() * v.imag());
          }
  }
  double worst = 0.0;
  out.passed = true;
  auto test = [&](std::size_t idx, double want) {
    const Complex mean = m1[idx] / static_cast<double>(n);
    const double var_re = m2[idx].real() / n - mean.real() * mean.real();
    const double var_im = m2[idx].imag() / n - mean.imag() * mean.imag();
    const double se_re = std::sqrt(std::max(var_re, 0.0) / n), se_im = std::sqrt(std::max(var_im, 0.0) / n);
    const double zr = se_re > 0 ? std::abs(mean.real() - want) / se_re : (std::abs(mean.real() - want) < 1e-12 ? 0 : 1e300);
    const double zi = se_im > 0 ? std::abs(mean.imag()) / se_im : (std::abs(mean.imag()) < 1e-12 ? 0 : 1e300);
    worst = std::max({worst, zr, zi});
    if (zr > 5.0 || zi > 5.0) out.passed = false;
  };
  std::size_t idx = 0;
  for (int a = 0; a < f; ++a)
    for (int b = 0; b < f; ++b) test(idx++, a == b ? 2.0 * s / f : 0.0);
  const double c4 = 4.0 * s * s / (f * (f + 1.0));
  for (int a = 0; a < f; ++a)
    for (int b = 0; b < f; ++b)
      for (int c = 0; c < f; ++c)
        for (int d = 0; d < f; ++d)
          test(idx++, c4 * ((a == b && c == d ? 1.0 : 0.0) + (a == d && c == b ? 1.0 : 0.0)));
  out.detail = "max |err|/SE = " + g17(worst) + " at gamma = " + g17(g);
  return out;
}

}  // namespace

ValidationSummary validate_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  const HermitianMatrix h = build(cfg.model);
  ValidationSummary sum;
  if (cfg.validate.exact_mapping) sum.checks.push_back(check_exact_mapping(cfg, h));
  if (cfg.validate.invariant_drift) sum.checks.push_back(check_drift(cfg, h));
  if (cfg.validate.moments) sum.checks.push_back(check_moments(cfg, h.dim()));
  for (const auto& c : sum.checks) {
    log << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    if (!c.passed) sum.passed = false;
  }
  if (sum.checks.empty()) log << "no validation suites enabled in [validate]\n";
  return sum;
}

}  // namespace cpsdyn
