#pragma once

#include <json.hpp>

#include <Eigen/Core>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "glv/continuation.hpp"
#include "glv/io.hpp"
#include "glv/postproc.hpp"
#include "glv/verify.hpp"

namespace glv::run {

using json = nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

/// Invalid or incomplete configuration; the CLI maps it to exit status 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A numerical step that did not produce a usable result; exit status 1.
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode { solve, trace, diagram, eigen, verify };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::solve: return "solve";
    case Mode::trace: return "trace";
    case Mode::diagram: return "diagram";
    case Mode::eigen: return "eigen";
    case Mode::verify: return "verify";
  }
  return "unknown";
}

inline Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::solve, Mode::trace, Mode::diagram, Mode::eigen, Mode::verify}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown mode '" + s + "' (solve, trace, diagram, eigen, verify)");
}

/// Emerging branch from a recorded bifurcation. In a diagram the branch is one of the
/// run's own labels; in trace mode it lives in the bifurcation table of a parent run.
struct SwitchSpec {
  std::string run;  // parent output directory (trace mode only)
  std::string branch;
  int bifurcation = 0;
  std::optional<IsotropyLabel> family;  // default: first family found
  int sign = +1;
  double eps = 0.05;
};

struct GuessSpec {
  enum class Kind { constant, vortex, file, switch_branch };
  Kind kind = Kind::constant;
  Complex value{1.0, 0.0};
  double noise = 0.0;  // rms of a seeded random perturbation
  int winding = 1;
  double core = 0.5;
  double cx = 0.0, cy = 0.0;
  std::string path;
  SwitchSpec from;
};

struct BranchSpec {
  std::string label;
  GuessSpec guess;
  double mu = 0.0;
  double mu_min = -std::numeric_limits<double>::infinity();
  double mu_max = std::numeric_limits<double>::infinity();
  int direction = +1;
  bool stop_on_fold = false;
  int max_points = 500;
};

struct RunConfig {
  Mode mode = Mode::solve;
  double d = 3.0;
  int n = 64;
  double mu = 0.0;
  GuessSpec guess;
  std::string label = "A";
  double mu_min = -std::numeric_limits<double>::infinity();
  double mu_max = std::numeric_limits<double>::infinity();
  ContinuationSettings cont;
  NewtonSettings newton;
  int eigen_count = 6;
  std::vector<BranchSpec> branches;
  verify::VerifySettings verify;
  std::string patterns = "ends";  // none | ends | all
  std::filesystem::path out = "glv_out";
  std::uint64_t seed = 0;
  json echo;  // effective configuration for the manifest
};

/// Grid resolution used when N is not configured: 64 for d = 3, otherwise h close to 0.05.
inline int default_n(double d) {
  if (std::abs(d - 3.0) < 1e-12) return 64;
  return std::max(2, 2 * static_cast<int>(std::lround(d / 0.1)));
}

namespace detail {

// Object reader that rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const std::string& k) {
    seen_.insert(k);
    return j_.contains(k);
  }

  template <class T>
  T get(const std::string& k, T fallback) {
    if (!has(k)) return fallback;
    return as<T>(j_.at(k), where_ + "." + k);
  }

  template <class T>
  T require(const std::string& k) {
    if (!has(k)) throw ConfigError(where_ + ": missing '" + k + "'");
    return as<T>(j_.at(k), where_ + "." + k);
  }

  const json& raw(const std::string& k) {
    seen_.insert(k);
    return j_.at(k);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

  template <class T>
  static T as(const json& v, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(where + ": expected a number");
      } else if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(where + ": expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(where + ": expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline std::pair<double, double> read_window(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError(where + ": expected [mu_min, mu_max]");
  }
  const double a = v[0].get<double>(), b = v[1].get<double>();
  if (!(a < b)) throw ConfigError(where + ": mu_min must be below mu_max");
  return {a, b};
}

inline SwitchSpec read_switch(const json& j, const std::string& where, bool need_run) {
  Reader r(j, where);
  SwitchSpec s;
  s.run = r.get<std::string>("run", "");
  if (need_run && s.run.empty()) throw ConfigError(where + ": missing 'run' (parent output directory)");
  s.branch = r.require<std::string>("branch");
  s.bifurcation = r.require<int>("bifurcation");
  if (r.has("family")) {
    try {
      s.family = parse_isotropy_label(Reader::as<std::string>(r.raw("family"), where + ".family"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ".family: " + e.what());
    }
  }
  s.sign = r.get<int>("sign", 1);
  if (s.sign != 1 && s.sign != -1) throw ConfigError(where + ".sign: must be 1 or -1");
  s.eps = r.get<double>("eps", 0.05);
  if (!(s.eps > 0.0)) throw ConfigError(where + ".eps: must be positive");
  r.finish();
  return s;
}

inline GuessSpec read_guess(const json& j, const std::string& where, bool switch_needs_run) {
  Reader r(j, where);
  GuessSpec g;
  const std::string type = r.get<std::string>("type", "constant");
  if (type == "constant") {
    g.kind = GuessSpec::Kind::constant;
    if (r.has("value")) {
      const json& v = r.raw("value");
      if (v.is_number()) {
        g.value = v.get<double>();
      } else if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
        g.value = Complex(v[0].get<double>(), v[1].get<double>());
      } else {
        throw ConfigError(where + ".value: expected a number or [re, im]");
      }
    }
    g.noise = r.get<double>("noise", 0.0);
    if (g.noise < 0.0) throw ConfigError(where + ".noise: must be nonnegative");
  } else if (type == "vortex") {
    g.kind = GuessSpec::Kind::vortex;
    g.winding = r.get<int>("winding", 1);
    g.core = r.get<double>("core", 0.5);
    if (!(g.core > 0.0)) throw ConfigError(where + ".core: must be positive");
    if (r.has("center")) {
      const json& c = r.raw("center");
      if (!c.is_array() || c.size() != 2 || !c[0].is_number() || !c[1].is_number()) {
        throw ConfigError(where + ".center: expected [x, y]");
      }
      g.cx = c[0].get<double>();
      g.cy = c[1].get<double>();
    }
  } else if (type == "file") {
    g.kind = GuessSpec::Kind::file;
    g.path = r.require<std::string>("path");
  } else if (type == "switch") {
    g.kind = GuessSpec::Kind::switch_branch;
    json rest = j;
    rest.erase("type");
    for (auto it = j.begin(); it != j.end(); ++it) r.has(it.key());
    g.from = read_switch(rest, where, switch_needs_run);
  } else {
    throw ConfigError(where + ".type: unknown guess type '" + type + "' (constant, vortex, file, switch)");
  }
  r.finish();
  return g;
}

inline void read_continuation(const json& j, ContinuationSettings& cs) {
  Reader r(j, "continuation");
  cs.ds = r.get("ds", cs.ds);
  cs.ds_min = r.get("ds_min", cs.ds_min);
  cs.ds_max = r.get("ds_max", cs.ds_max);
  cs.grow = r.get("grow", cs.grow);
  cs.max_points = r.get("max_points", cs.max_points);
  cs.direction = r.get("direction", cs.direction);
  cs.tol = r.get("tol", cs.tol);
  cs.detect = r.get("detect", cs.detect);
  cs.stop_on_fold = r.get("stop_on_fold", cs.stop_on_fold);
  cs.isotropy_tol = r.get("isotropy_tol", cs.isotropy_tol);
  cs.loc_tol_lambda = r.get("loc_tol_lambda", cs.loc_tol_lambda);
  cs.loc_tol_mu = r.get("loc_tol_mu", cs.loc_tol_mu);
  cs.trivial_norm = r.get("trivial_norm", cs.trivial_norm);
  r.finish();
  if (!(cs.ds_min > 0.0 && cs.ds_min <= cs.ds && cs.ds <= cs.ds_max)) {
    throw ConfigError("continuation: need 0 < ds_min <= ds <= ds_max");
  }
  if (cs.direction != 1 && cs.direction != -1) throw ConfigError("continuation.direction: must be 1 or -1");
  if (cs.max_points < 1) throw ConfigError("continuation.max_points: must be positive");
  if (!(cs.tol > 0.0)) throw ConfigError("continuation.tol: must be positive");
}

inline void read_newton(const json& j, NewtonSettings& ns) {
  Reader r(j, "newton");
  ns.tol = r.get("tol", ns.tol);
  ns.max_iterations = r.get("max_iterations", ns.max_iterations);
  ns.linear_tol = r.get("linear_tol", ns.linear_tol);
  if (r.has("policy")) {
    const auto p = Reader::as<std::string>(r.raw("policy"), "newton.policy");
    if (p == "fixed") {
      ns.policy = ReferencePolicy::fixed;
    } else if (p == "update") {
      ns.policy = ReferencePolicy::update;
    } else if (p == "automatic") {
      ns.policy = ReferencePolicy::automatic;
    } else {
      throw ConfigError("newton.policy: expected fixed, update or automatic");
    }
  }
  r.finish();
  if (!(ns.tol > 0.0) || ns.max_iterations < 1) throw ConfigError("newton: tol and max_iterations must be positive");
}

inline void read_eigen(const json& j, RunConfig& c) {
  Reader r(j, "eigen");
  c.eigen_count = r.get("count", c.eigen_count);
  c.cont.stability.eigen.tol = r.get("tol", c.cont.stability.eigen.tol);
  c.cont.stability.eigen.block = r.get("block", c.cont.stability.eigen.block);
  c.cont.stability.tol_stab = r.get("tol_stab", c.cont.stability.tol_stab);
  c.cont.stability.gap = r.get("gap", c.cont.stability.gap);
  r.finish();
  if (c.eigen_count < 1) throw ConfigError("eigen.count: must be positive");
}

inline const char* policy_name(ReferencePolicy p) {
  switch (p) {
    case ReferencePolicy::fixed: return "fixed";
    case ReferencePolicy::update: return "update";
    case ReferencePolicy::automatic: return "automatic";
  }
  return "automatic";
}

inline json guess_json(const GuessSpec& g) {
  switch (g.kind) {
    case GuessSpec::Kind::constant:
      return {{"type", "constant"}, {"value", {g.value.real(), g.value.imag()}}, {"noise", g.noise}};
    case GuessSpec::Kind::vortex:
      return {{"type", "vortex"}, {"winding", g.winding}, {"core", g.core}, {"center", {g.cx, g.cy}}};
    case GuessSpec::Kind::file: return {{"type", "file"}, {"path", g.path}};
    case GuessSpec::Kind::switch_branch: {
      json j{{"type", "switch"},
             {"branch", g.from.branch},
             {"bifurcation", g.from.bifurcation},
             {"sign", g.from.sign},
             {"eps", g.from.eps}};
      if (!g.from.run.empty()) j["run"] = g.from.run;
      if (g.from.family) j["family"] = std::string(to_string(*g.from.family));
      return j;
    }
  }
  return {};
}

inline json window_json(double a, double b) {
  auto v = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  return json::array({v(a), v(b)});
}

}  // namespace detail

/// Parses and validates a configuration document; the CLI mode and seed win over the file.
inline RunConfig parse_config(const json& j, Mode mode, std::optional<std::uint64_t> seed_override = std::nullopt,
                              std::optional<std::filesystem::path> out_override = std::nullopt) {
  using detail::Reader;
  RunConfig c;
  c.mode = mode;
  Reader r(j, "config");
  if (r.has("mode") && parse_mode(Reader::as<std::string>(r.raw("mode"), "config.mode")) != mode) {
    throw ConfigError("config.mode disagrees with the mode on the command line");
  }
  c.d = r.get("d", c.d);
  if (!(c.d > 0.0)) throw ConfigError("config.d: must be positive");
  c.n = r.get("N", default_n(c.d));
  if (c.n < 2 || c.n % 2 != 0) throw ConfigError("config.N: must be even and at least 2");
  c.mu = r.get("mu", c.mu);
  c.label = r.get<std::string>("label", c.label);
  c.seed = r.get<std::uint64_t>("seed", 0);
  if (seed_override) c.seed = *seed_override;
  c.out = r.get<std::string>("out", c.out.string());
  if (out_override) c.out = *out_override;
  c.patterns = r.get<std::string>("patterns", c.patterns);
  if (c.patterns != "none" && c.patterns != "ends" && c.patterns != "all") {
    throw ConfigError("config.patterns: expected none, ends or all");
  }
  if (r.has("window")) std::tie(c.mu_min, c.mu_max) = detail::read_window(r.raw("window"), "config.window");
  if (r.has("guess")) c.guess = detail::read_guess(r.raw("guess"), "guess", true);
  if (r.has("continuation")) detail::read_continuation(r.raw("continuation"), c.cont);
  if (r.has("newton")) detail::read_newton(r.raw("newton"), c.newton);
  if (r.has("eigen")) detail::read_eigen(r.raw("eigen"), c);
  c.cont.stability.eigen.seed = c.seed;
  c.cont.tol = std::min(c.cont.tol, c.newton.tol);
  c.cont.mu_min = c.mu_min;
  c.cont.mu_max = c.mu_max;

  if (r.has("verify")) {
    Reader v(r.raw("verify"), "verify");
    c.verify.n = v.get("N", c.verify.n);
    c.verify.lemma_trials = v.get("lemma_trials", c.verify.lemma_trials);
    v.finish();
    if (c.verify.n < 2 || c.verify.n % 2 != 0) throw ConfigError("verify.N: must be even and at least 2");
  }
  c.verify.d = c.d;
  c.verify.seed = c.seed;

  if (r.has("branches")) {
    const json& arr = r.raw("branches");
    if (!arr.is_array()) throw ConfigError("config.branches: expected an array");
    std::set<std::string> labels;
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const std::string where = "branches[" + std::to_string(k) + "]";
      Reader b(arr[k], where);
      BranchSpec s;
      s.label = b.require<std::string>("label");
      if (s.label.empty() || s.label.find_first_of(",/\\ ") != std::string::npos) {
        throw ConfigError(where + ".label: must be nonempty without separators");
      }
      if (!labels.insert(s.label).second) throw ConfigError(where + ": duplicate label '" + s.label + "'");
      if (b.has("guess")) s.guess = detail::read_guess(b.raw("guess"), where + ".guess", false);
      if (s.guess.kind == GuessSpec::Kind::switch_branch) {
        if (!labels.count(s.guess.from.branch) || s.guess.from.branch == s.label) {
          throw ConfigError(where + ".guess.branch: must name an earlier branch");
        }
      }
      s.mu = b.get("mu", 0.0);
      s.mu_min = c.mu_min;
      s.mu_max = c.mu_max;
      if (b.has("window")) std::tie(s.mu_min, s.mu_max) = detail::read_window(b.raw("window"), where + ".window");
      s.direction = b.get("direction", c.cont.direction);
      if (s.direction != 1 && s.direction != -1) throw ConfigError(where + ".direction: must be 1 or -1");
      s.stop_on_fold = b.get("stop_on_fold", c.cont.stop_on_fold);
      s.max_points = b.get("max_points", c.cont.max_points);
      b.finish();
      c.branches.push_back(std::move(s));
    }
  }
  r.finish();

  if (mode == Mode::diagram && c.branches.empty()) throw ConfigError("diagram mode needs a nonempty 'branches' array");
  if (mode != Mode::diagram && !c.branches.empty()) throw ConfigError("'branches' is only valid in diagram mode");
  if ((mode == Mode::solve || mode == Mode::eigen) && c.guess.kind == GuessSpec::Kind::switch_branch) {
    throw ConfigError("switch guesses need trace mode");
  }

  // the echo carries every default so the manifest alone reproduces the run
  json e;
  e["mode"] = to_string(mode);
  e["d"] = c.d;
  e["N"] = c.n;
  e["mu"] = c.mu;
  e["label"] = c.label;
  e["seed"] = c.seed;
  e["out"] = c.out.string();
  e["patterns"] = c.patterns;
  e["window"] = detail::window_json(c.mu_min, c.mu_max);
  e["guess"] = detail::guess_json(c.guess);
  e["continuation"] = {{"ds", c.cont.ds},
                       {"ds_min", c.cont.ds_min},
                       {"ds_max", c.cont.ds_max},
                       {"grow", c.cont.grow},
                       {"max_points", c.cont.max_points},
                       {"direction", c.cont.direction},
                       {"tol", c.cont.tol},
                       {"detect", c.cont.detect},
                       {"stop_on_fold", c.cont.stop_on_fold},
                       {"isotropy_tol", c.cont.isotropy_tol},
                       {"loc_tol_lambda", c.cont.loc_tol_lambda},
                       {"loc_tol_mu", c.cont.loc_tol_mu},
                       {"trivial_norm", c.cont.trivial_norm}};
  e["newton"] = {{"tol", c.newton.tol},
                 {"max_iterations", c.newton.max_iterations},
                 {"linear_tol", c.newton.linear_tol},
                 {"policy", detail::policy_name(c.newton.policy)}};
  e["eigen"] = {{"count", c.eigen_count},
                {"tol", c.cont.stability.eigen.tol},
                {"block", c.cont.stability.eigen.block},
                {"tol_stab", c.cont.stability.tol_stab},
                {"gap", c.cont.stability.gap}};
  e["verify"] = {{"N", c.verify.n}, {"lemma_trials", c.verify.lemma_trials}};
  if (!c.branches.empty()) {
    e["branches"] = json::array();
    for (const auto& b : c.branches) {
      e["branches"].push_back({{"label", b.label},
                               {"guess", detail::guess_json(b.guess)},
                               {"mu", b.mu},
                               {"window", detail::window_json(b.mu_min, b.mu_max)},
                               {"direction", b.direction},
                               {"stop_on_fold", b.stop_on_fold},
                               {"max_points", b.max_points}});
    }
  }
  c.echo = std::move(e);
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path, Mode mode,
                             std::optional<std::uint64_t> seed_override = std::nullopt,
                             std::optional<std::filesystem::path> out_override = std::nullopt) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, mode, seed_override, out_override);
}

/// Worker cap from GLV_THREADS (default 1).
inline int thread_cap() {
  const char* v = std::getenv("GLV_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("GLV_THREADS must be a positive integer");
  return static_cast<int>(std::min<long>(n, 256));
}

/// Initial field described by a guess spec (constant, vortex or file).
inline OrderField make_guess(const GuessSpec& g, const Grid& grid, std::uint64_t seed) {
  OrderField psi(grid);
  const int hf = grid.half();
  switch (g.kind) {
    case GuessSpec::Kind::constant: {
      psi = OrderField(grid, g.value);
      if (g.noise > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, g.noise / std::sqrt(2.0));
        for (std::size_t k = 0; k < psi.size(); ++k) psi[k] += Complex(nd(rng), nd(rng));
      }
      break;
    }
    case GuessSpec::Kind::vortex: {
      const int k = std::abs(g.winding);
      for (int j = -hf; j <= hf; ++j) {
        for (int i = -hf; i <= hf; ++i) {
          const double x = grid.x(i) - g.cx, y = grid.y(j) - g.cy;
          Complex z(x, g.winding >= 0 ? y : -y);
          psi(i, j) = std::pow(z, k) / std::pow(x * x + y * y + g.core * g.core, 0.5 * k);
        }
      }
      break;
    }
    case GuessSpec::Kind::file: {
      psi = io::read_field(g.path);
      if (psi.grid() != grid) throw ConfigError("guess file " + g.path + " was written on a different grid");
      break;
    }
    case GuessSpec::Kind::switch_branch: throw std::logic_error("make_guess: switch guesses carry no field");
  }
  return psi;
}

/// Bifurcation record with its critical eigenspace recomputed at the stored state.
inline BifurcationPoint reload_bifurcation(const SwitchSpec& s, const ContinuationSettings& cs, const Grid& grid) {
  const std::filesystem::path dir(s.run);
  std::vector<io::BifurcationRow> rows;
  try {
    rows = io::read_bifurcations(dir / "bifurcations.csv");
  } catch (const std::exception& e) {
    throw ConfigError(std::string("switch: ") + e.what());
  }
  for (const auto& row : rows) {
    if (row.branch != s.branch || row.id != s.bifurcation) continue;
    if (row.state_file.empty()) throw ConfigError("switch: bifurcation state was not stored by the parent run");
    BifurcationPoint bp;
    bp.id = row.id;
    bp.branch = row.branch;
    bp.mu = row.mu;
    bp.state.psi = io::read_field(dir / row.state_file);
    if (bp.state.psi.grid() != grid) throw ConfigError("switch: parent run used a different grid");
    bp.state.mu = row.mu;
    const StabilityInfo st = stability(bp.state.psi, link_field(grid, bp.mu), cs.stability);
    bp.isotropy = isotropy(bp.state.psi, 1e-4);
    StabilityInfo crit = st;
    // the recorded crossing is the eigenvalue nearest zero at the stored state
    glv::detail::fill_critical(bp, crit, cs.stability.gap);
    bp.multiplicity = row.multiplicity;
    return bp;
  }
  throw ConfigError("switch: no bifurcation " + std::to_string(s.bifurcation) + " on branch '" + s.branch + "' in " +
                    (dir / "bifurcations.csv").string());
}

inline SwitchSeed pick_seed(const BifurcationPoint& bif, const SwitchSpec& s) {
  const auto seeds = switch_branch(bif, s.eps);
  for (const auto& sd : seeds) {
    if ((!s.family || sd.label == *s.family) && sd.sign == s.sign) return sd;
  }
  std::string have;
  for (const auto& sd : seeds) {
    have += std::string(have.empty() ? "" : ", ") + std::string(to_string(sd.label)) + (sd.sign > 0 ? "+" : "-");
  }
  throw NumericalFailure("switch: no emerging family matches at bifurcation " + std::to_string(bif.id) + " of branch " +
                         bif.branch + " (found: " + (have.empty() ? "none" : have) + ")");
}

/// Output sink: everything written is recorded for the manifest.
class Session {
 public:
  Session(const RunConfig& c, std::ostream& log) : cfg_(c), log_(log), start_(clock::now()) {
    std::filesystem::create_directories(c.out);
    std::filesystem::remove(c.out / "FAILED");
  }

  void text(const std::string& name, const std::string& content) {
    io::write_atomic(cfg_.out / name, content);
    add(name);
  }

  void add(const std::string& name) {
    std::lock_guard<std::mutex> lock(mu_);
    outputs_.push_back(name);
  }

  void timing(const std::string& phase, double seconds) {
    std::lock_guard<std::mutex> lock(mu_);
    timings_[phase] += seconds;
  }

  void note(const std::string& key, json value) {
    std::lock_guard<std::mutex> lock(mu_);
    results_[key] = std::move(value);
  }

  void say(const std::string& line) {
    std::lock_guard<std::mutex> lock(mu_);
    log_ << line << std::endl;
  }

  void pattern(const OrderField& psi, const std::string& stem) {
    for (const auto& p : io::write_pattern(psi, cfg_.out / stem)) add(p.filename().string());
  }

  void finish(int status, const std::string& message) {
    json m;
    m["tool"] = "glv";
    m["version"] = kVersion;
    m["mode"] = to_string(cfg_.mode);
    m["config"] = cfg_.echo;
    m["seed"] = cfg_.seed;
    m["threads"] = threads_;
    m["versions"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"compiler", __VERSION__},
                     {"cxx", static_cast<long>(__cplusplus)}};
    m["timings"] = timings_;
    m["timings"]["total"] = std::chrono::duration<double>(clock::now() - start_).count();
    m["results"] = results_;
    m["outputs"] = outputs_;
    m["status"] = status == 0 ? "ok" : "failed";
    m["exit_code"] = status;
    if (!message.empty()) m["message"] = message;
    if (status != 0) io::write_atomic(cfg_.out / "FAILED", message + "\n");
    io::write_atomic(cfg_.out / "manifest.json", m.dump(2) + "\n");
  }

  void set_threads(int t) { threads_ = t; }

 private:
  using clock = std::chrono::steady_clock;
  const RunConfig& cfg_;
  std::ostream& log_;
  clock::time_point start_;
  std::mutex mu_;
  std::vector<std::string> outputs_;
  std::map<std::string, double> timings_;
  json results_ = json::object();
  int threads_ = 1;
};

namespace detail {

class Stopwatch {
 public:
  Stopwatch(Session& s, std::string phase) : s_(s), phase_(std::move(phase)), t0_(std::chrono::steady_clock::now()) {}
  ~Stopwatch() { s_.timing(phase_, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count()); }

 private:
  Session& s_;
  std::string phase_;
  std::chrono::steady_clock::time_point t0_;
};

inline json census_json(const OrderField& psi) {
  json arr = json::array();
  for (const auto& v : vortex_census(psi)) arr.push_back({{"x", v.x}, {"y", v.y}, {"winding", v.winding}});
  return arr;
}

inline json point_summary(const ExtendedState& s) {
  const LinkField links = link_field(s.psi.grid(), s.mu);
  json j;
  j["mu"] = s.mu;
  j["eta"] = s.eta;
  j["energy"] = free_energy(s.psi);
  j["full_energy"] = full_energy(s.psi, links);
  j["norm_psi"] = norm(s.psi);
  j["residual_norm"] = norm(residual(s.psi, links));
  j["isotropy"] = std::string(to_string(isotropy(s.psi).label));
  const auto tv = total_vorticity(s.psi);
  j["total_vorticity"] = tv ? json(*tv) : json(nullptr);
  j["vortices"] = census_json(s.psi);
  return j;
}

inline ContinuationSettings settings_for(const RunConfig& c, const BranchSpec& b) {
  ContinuationSettings cs = c.cont;
  cs.mu_min = b.mu_min;
  cs.mu_max = b.mu_max;
  cs.direction = b.direction;
  cs.stop_on_fold = b.stop_on_fold;
  cs.max_points = b.max_points;
  return cs;
}

inline json branch_summary(const Branch& br) {
  json j;
  j["label"] = br.label;
  j["points"] = br.points.size();
  j["termination"] = to_string(br.termination);
  j["end_mu"] = br.end_mu ? json(*br.end_mu) : json(nullptr);
  if (!br.points.empty()) {
    j["mu_first"] = br.points.front().state.mu;
    j["mu_last"] = br.points.back().state.mu;
  }
  j["bifurcations"] = br.bifurcations.size();
  if (br.parent) j["parent"] = *br.parent;
  return j;
}

}  // namespace detail

/// Traces one branch described by spec; parents are looked up in done (diagram) or on disk (trace).
inline Branch trace_spec(const RunConfig& c, const BranchSpec& spec, const std::map<std::string, const Branch*>& done,
                         Session& session) {
  ContinuationSettings cs = detail::settings_for(c, spec);
  cs.on_point = [&session, &spec](const BranchPoint& p) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "[%s] mu=%.6f F=%.6f unstable=%d iso=%s", spec.label.c_str(), p.state.mu, p.energy,
                  p.stability.n_unstable, std::string(to_string(p.isotropy.label)).c_str());
    session.say(buf);
  };
  const Grid grid(c.d, c.n);
  detail::Stopwatch sw(session, "trace:" + spec.label);
  if (spec.guess.kind == GuessSpec::Kind::switch_branch) {
    const SwitchSpec& s = spec.guess.from;
    BifurcationPoint bif;
    if (s.run.empty()) {
      const auto it = done.find(s.branch);
      if (it == done.end()) throw ConfigError("branch '" + spec.label + "': parent '" + s.branch + "' was not traced");
      const Branch& parent = *it->second;
      const auto found = std::find_if(parent.bifurcations.begin(), parent.bifurcations.end(),
                                      [&](const BifurcationPoint& b) { return b.id == s.bifurcation; });
      if (found == parent.bifurcations.end()) {
        throw NumericalFailure("branch '" + spec.label + "': parent '" + s.branch + "' has no bifurcation " +
                               std::to_string(s.bifurcation));
      }
      bif = *found;
      if (bif.critical_fields.empty()) {
        const StabilityInfo st = stability(bif.state.psi, link_field(grid, bif.mu), cs.stability);
        const int mult = bif.multiplicity;
        glv::detail::fill_critical(bif, st, cs.stability.gap);
        bif.multiplicity = mult;
      }
    } else {
      bif = reload_bifurcation(s, cs, grid);
    }
    const SwitchSeed seed = pick_seed(bif, s);
    try {
      return trace_from_seed(bif, seed, s.eps, cs, spec.label);
    } catch (const std::runtime_error& e) {
      throw NumericalFailure(e.what());
    }
  }
  const OrderField psi = make_guess(spec.guess, grid, c.seed);
  NewtonSettings ns = c.newton;
  const Solution sol = newton_solve(ExtendedState{psi, 0.0, spec.mu}, ns);
  if (!sol.converged()) {
    throw NumericalFailure("branch '" + spec.label + "': initial Newton solve at mu=" + io::fmt(spec.mu) + " failed (" +
                           to_string(sol.status) + ")");
  }
  return trace_branch(make_point(sol.state, cs), std::nullopt, cs, spec.label);
}

/// Writes a traced branch, its bifurcation states and (optionally) patterns.
inline void emit_branch(const RunConfig& c, const Branch& br, Session& session) {
  session.text("branch_" + br.label + ".csv", io::branch_csv(br));
  for (const auto& b : br.bifurcations) session.text(io::bifurcation_state_name(b), io::field_csv(b.state.psi));
  if (c.patterns == "none" || br.points.empty()) return;
  for (std::size_t k = 0; k < br.points.size(); ++k) {
    const bool end = k == 0 || k + 1 == br.points.size();
    if (c.patterns == "all" || end) {
      char stem[64];
      std::snprintf(stem, sizeof stem, "pattern_%s_%04zu", br.label.c_str(), k);
      session.pattern(br.points[k].state.psi, stem);
    }
  }
}

inline std::vector<BifurcationPoint> all_bifurcations(const std::vector<Branch>& branches) {
  std::vector<BifurcationPoint> out;
  for (const auto& br : branches) out.insert(out.end(), br.bifurcations.begin(), br.bifurcations.end());
  return out;
}

namespace detail {

inline int run_solve(const RunConfig& c, Session& session, bool with_eigen) {
  const Grid grid(c.d, c.n);
  const OrderField guess = make_guess(c.guess, grid, c.seed);
  Solution sol;
  {
    Stopwatch sw(session, "newton");
    sol = newton_solve(ExtendedState{guess, 0.0, c.mu}, c.newton);
  }
  json summary = point_summary(sol.state);
  summary["status"] = to_string(sol.status);
  summary["iterations"] = sol.iterations;
  summary["extended_residual_norm"] = sol.residual_norm;
  summary["history"] = sol.history;
  summary["reference_updated"] = sol.reference_updated;
  session.note("solution", summary);
  session.text("solution.csv", io::field_csv(sol.state.psi));
  if (c.patterns != "none") session.pattern(sol.state.psi, "solution");
  session.text("summary.json", summary.dump(2) + "\n");
  if (!sol.converged()) throw NumericalFailure(std::string("Newton: ") + to_string(sol.status));
  char buf[160];
  std::snprintf(buf, sizeof buf, "solved mu=%.6f in %d iterations, F=%.12f, residual %.3e", sol.state.mu,
                sol.iterations, free_energy(sol.state.psi), sol.residual_norm);
  session.say(buf);
  if (!with_eigen) return 0;

  Stopwatch sw(session, "eigen");
  const LinkField links = link_field(grid, sol.state.mu);
  EigenSettings es = c.cont.stability.eigen;
  es.count = c.eigen_count;
  const Spectrum sp = deflated_eigenpairs(sol.state.psi, links, es);
  if (!sp.converged) throw NumericalFailure("eigensolver did not converge");
  std::string csv = "index,value,residual\n";
  for (std::size_t k = 0; k < sp.pairs.size(); ++k) {
    csv += std::to_string(k) + "," + io::fmt(sp.pairs[k].value) + "," + io::fmt(sp.pairs[k].residual) + "\n";
    if (c.patterns != "none") session.pattern(sp.pairs[k].field, "eigenfield_" + std::to_string(k));
  }
  session.text("eigenvalues.csv", csv);
  StabilitySettings ss = c.cont.stability;
  const StabilityInfo st = stability(sol.state.psi, links, ss);
  json e;
  e["eigenvalues"] = st.eigenvalues;
  e["n_unstable"] = st.n_unstable;
  e["stable"] = st.stable;
  e["critical_value"] = st.critical_value;
  e["critical_multiplicity"] = st.critical_multiplicity;
  e["phase_mode_value"] = sp.phase_mode ? json(sp.phase_mode->value) : json(nullptr);
  session.note("stability", e);
  session.say(std::string("stability: ") + (st.stable ? "stable" : "unstable") + ", " + std::to_string(st.n_unstable) +
              " negative eigenvalues");
  return 0;
}

inline int run_verify(const RunConfig& c, Session& session) {
  Stopwatch sw(session, "verify");
  const auto checks = verify::run_suite(c.verify);
  std::string text;
  bool ok = true;
  json arr = json::array();
  for (const auto& ch : checks) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s %s (%.3e <= %.1e)", ch.passed ? "PASS" : "FAIL", ch.name.c_str(), ch.value,
                  ch.limit);
    text += std::string(buf) + "\n";
    session.say(buf);
    ok = ok && ch.passed;
    arr.push_back({{"name", ch.name}, {"passed", ch.passed}, {"value", ch.value}, {"limit", ch.limit}});
  }
  session.text("verify.txt", text);
  session.note("checks", arr);
  if (!ok) throw NumericalFailure("property suite reported failures");
  return 0;
}

inline BranchSpec trace_branch_spec(const RunConfig& c) {
  BranchSpec s;
  s.label = c.label;
  s.guess = c.guess;
  s.mu = c.mu;
  s.mu_min = c.mu_min;
  s.mu_max = c.mu_max;
  s.direction = c.cont.direction;
  s.stop_on_fold = c.cont.stop_on_fold;
  s.max_points = c.cont.max_points;
  return s;
}

inline int run_branches(const RunConfig& c, Session& session, const std::vector<BranchSpec>& specs, int threads) {
  std::vector<Branch> results(specs.size());
  std::vector<char> finished(specs.size(), 0);
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < specs.size(); ++k) index[specs[k].label] = k;

  std::optional<std::string> failure;
  std::mutex fail_mu;
  // waves: a branch runs once its in-run parent is done
  while (true) {
    std::vector<std::size_t> ready;
    for (std::size_t k = 0; k < specs.size(); ++k) {
      if (finished[k]) continue;
      const auto& g = specs[k].guess;
      const bool needs_parent = g.kind == GuessSpec::Kind::switch_branch && g.from.run.empty();
      if (!needs_parent || finished[index.at(g.from.branch)] == 1) ready.push_back(k);
    }
    if (ready.empty()) break;
    std::map<std::string, const Branch*> done;
    for (std::size_t k = 0; k < specs.size(); ++k) {
      if (finished[k] == 1) done[specs[k].label] = &results[k];
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (std::size_t q; (q = next.fetch_add(1)) < ready.size();) {
        const std::size_t k = ready[q];
        try {
          results[k] = trace_spec(c, specs[k], done, session);
          finished[k] = 1;
        } catch (const ConfigError&) {
          finished[k] = 2;
          throw;
        } catch (const std::exception& e) {
          finished[k] = 2;
          std::lock_guard<std::mutex> lock(fail_mu);
          if (!failure) failure = e.what();
        }
      }
    };
    const int nt = std::max(1, std::min<int>(threads, static_cast<int>(ready.size())));
    if (nt == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      std::exception_ptr config_error;
      std::mutex ce_mu;
      for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&]() {
          try {
            worker();
          } catch (...) {
            std::lock_guard<std::mutex> lock(ce_mu);
            if (!config_error) config_error = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
      if (config_error) std::rethrow_exception(config_error);
    }
    // dependents of failed branches cannot run
    for (std::size_t k = 0; k < specs.size(); ++k) {
      const auto& g = specs[k].guess;
      if (!finished[k] && g.kind == GuessSpec::Kind::switch_branch && g.from.run.empty() &&
          finished[index.at(g.from.branch)] == 2) {
        finished[k] = 2;
      }
    }
  }

  // outputs in configuration order so reruns are byte-identical
  std::vector<Branch> traced;
  json summaries = json::array();
  for (std::size_t k = 0; k < specs.size(); ++k) {
    if (finished[k] != 1) continue;
    emit_branch(c, results[k], session);
    summaries.push_back(branch_summary(results[k]));
    for (const auto& b : results[k].bifurcations) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "[%s] bifurcation %d: mu*=%.6f %s multiplicity %d iso %s", b.branch.c_str(), b.id,
                    b.mu, to_string(b.type), b.multiplicity, std::string(to_string(b.isotropy.label)).c_str());
      session.say(buf);
    }
    traced.push_back(std::move(results[k]));
  }
  session.text("bifurcations.csv", io::bifurcation_csv(all_bifurcations(traced), true));
  session.note("branches", summaries);
  if (failure) throw NumericalFailure(*failure);
  return 0;
}

}  // namespace detail

/// Executes a validated configuration; returns the process exit status.
inline int run(const RunConfig& c, std::ostream& log = std::clog) {
  Session session(c, log);
  try {
    const int threads = thread_cap();
    session.set_threads(threads);
    int status = 0;
    switch (c.mode) {
      case Mode::solve: status = detail::run_solve(c, session, false); break;
      case Mode::eigen: status = detail::run_solve(c, session, true); break;
      case Mode::verify: status = detail::run_verify(c, session); break;
      case Mode::trace: status = detail::run_branches(c, session, {detail::trace_branch_spec(c)}, 1); break;
      case Mode::diagram: status = detail::run_branches(c, session, c.branches, threads); break;
    }
    session.finish(status, "");
    return status;
  } catch (const ConfigError& e) {
    session.finish(2, e.what());
    log << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    session.finish(1, e.what());
    log << "FAILED: " << e.what() << std::endl;
    return 1;
  }
}

}  // namespace glv::run
