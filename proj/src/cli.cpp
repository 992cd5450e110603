#include "sphagg/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <json.hpp>

#include "sphagg/error.hpp"
#include "sphagg/geom.hpp"
#include "sphagg/ot.hpp"
#include "sphagg/particles.hpp"
#include "sphagg/pde.hpp"
#include "sphagg/spectral.hpp"

namespace sphagg::cli {

namespace fs = std::filesystem;

namespace {

// Shortest of %.15g / %.17g that reads back to the same double.
std::string num(double v) {
  char buf[40];
  for (int prec : {15, 17}) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string s = trim(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + text + "'");
}

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  if constexpr (std::is_same_v<T, bool>) {
    return parse_bool(key, text);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return trim(text);
  } else if constexpr (std::is_same_v<T, std::vector<double>>) {
    std::vector<double> out;
    if (trim(text).empty()) return out;
    for (const std::string& part : split(text, ',')) out.push_back(parse_number<double>(key, part));
    return out;
  } else {
    return parse_number<T>(key, text);
  }
}

template <class T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, std::vector<double>>) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(v[i]);
    return s;
  } else if constexpr (std::is_floating_point_v<T>) {
    return num(v);
  } else {
    return std::to_string(v);
  }
}

struct Field {
  std::string section, key, help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Field field(const char* section, const char* key, const char* help, T ExperimentConfig::*member) {
  return {section, key, help,
          [member, key](ExperimentConfig& c, const std::string& v) { c.*member = parse_value<T>(key, v); },
          [member](const ExperimentConfig& c) { return format_value(c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"run", "command", "solve-ae | solve-ade | sweep-epsilon | jko | particles | checks",
                 [](ExperimentConfig& c, const std::string& v) { c.command = parse_command(trim(v)); },
                 [](const ExperimentConfig& c) { return command_name(c.command); }});
    f.push_back(field("run", "output", "output directory (empty: $SPHAGG_OUTPUT_ROOT/<command>)",
                      &ExperimentConfig::output));
    f.push_back(field("run", "seed", "random seed", &ExperimentConfig::seed));
    f.push_back(field("run", "jobs", "concurrent solves in sweep-epsilon", &ExperimentConfig::jobs));
    f.push_back(field("run", "plots", "also write SVG line charts", &ExperimentConfig::plots));
    f.push_back(field("model", "n", "ambient dimension; the sphere is S^{n-1}", &ExperimentConfig::n));
    f.push_back(field("model", "W", "interaction kernel spec", &ExperimentConfig::W));
    f.push_back(field("model", "V", "mollifier kernel spec, or none", &ExperimentConfig::V));
    f.push_back(field("model", "amplitude", "initial density 1 + amplitude cos(theta), in [0, 1)",
                      &ExperimentConfig::amplitude));
    f.push_back(field("solver", "L", "spectral truncation degree", &ExperimentConfig::L));
    f.push_back(field("solver", "M", "quadrature nodes (0: default)", &ExperimentConfig::M));
    f.push_back(field("solver", "dt", "time step (0: stability default; 0.01 for particles)",
                      &ExperimentConfig::dt));
    f.push_back(field("solver", "T", "horizon (0: 1 for PDE solves, 50 for particles)", &ExperimentConfig::T));
    f.push_back(field("solver", "scheme", "rk4 | heun", &ExperimentConfig::scheme));
    f.push_back(field("solver", "diagnostics_every", "steps between samples",
                      &ExperimentConfig::diagnostics_every));
    f.push_back(field("solver", "clip_negative", "clip densities in entropy diagnostics",
                      &ExperimentConfig::clip_negative));
    f.push_back(field("solver", "max_halvings", "step halvings before giving up",
                      &ExperimentConfig::max_halvings));
    f.push_back(field("sweep", "family", "mollifier family: heat | exp", &ExperimentConfig::family));
    f.push_back(field("sweep", "eps", "comma-separated eps list", &ExperimentConfig::eps));
    f.push_back(field("jko", "tau", "JKO step", &ExperimentConfig::tau));
    f.push_back(field("jko", "K", "number of JKO steps", &ExperimentConfig::K));
    f.push_back(field("jko", "grid", "cells on S^1", &ExperimentConfig::grid));
    f.push_back(field("jko", "tol", "stationarity tolerance of each step", &ExperimentConfig::tol));
    f.push_back(field("jko", "max_iter", "inner iterations per step", &ExperimentConfig::max_iter));
    f.push_back(field("particles", "tokens", "number of particles d", &ExperimentConfig::tokens));
    f.push_back(field("particles", "init", "hemisphere | uniform", &ExperimentConfig::init));
    f.push_back(field("particles", "beta", "attractive head inverse temperature", &ExperimentConfig::beta));
    f.push_back(field("particles", "repulsion_eps", "repulsive head width (0: none)",
                      &ExperimentConfig::repulsion_eps));
    f.push_back(field("particles", "record_every", "steps between snapshots", &ExperimentConfig::record_every));
    f.push_back(field("checks", "suite", "all | geometry | transport | admissibility", &ExperimentConfig::suite));
    f.push_back(field("checks", "samples", "geometry samples per sphere", &ExperimentConfig::samples));
    f.push_back(field("checks", "pairs", "transport pairs", &ExperimentConfig::pairs));
    f.push_back(field("checks", "p", "transport exponent: 1 | 2", &ExperimentConfig::p));
    return f;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

// ---------------------------------------------------------------- artifacts

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) {
      throw ParameterRangeError("output: cannot create directory '" + dir_.string() + "'");
    }
  }

  void write(const std::string& rel, const std::string& content) {
    std::ofstream os(dir_ / rel, std::ios::binary | std::ios::trunc);
    os << content;
    os.close();
    if (!os) throw ParameterRangeError("output: cannot write '" + (dir_ / rel).string() + "'");
    files_.push_back({rel, sha256_hex(content), content.size()});
  }

  const std::vector<Artifact>& artifacts() const { return files_; }

 private:
  fs::path dir_;
  std::vector<Artifact> files_;
};

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Series {
  std::string name;
  std::vector<double> y;
};

std::string line_chart(const std::string& title, const std::string& xlabel, const std::vector<double>& x,
                       const std::vector<Series>& series) {
  const double W = 640, H = 400, left = 70, right = 160, top = 40, bottom = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (double v : x) x0 = std::min(x0, v), x1 = std::max(x1, v);
  for (const Series& s : series) {
    for (double v : s.y) {
      if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
    }
  }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double v) { return H - bottom - (v - y0) / (y1 - y0) * (H - top - bottom); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">" << svg_escape(title) << "</text>\n";
  os << "<polyline fill=\"none\" stroke=\"black\" points=\"" << left << "," << top << " " << left << ","
     << H - bottom << " " << W - right << "," << H - bottom << "\"/>\n";
  os << "<text x=\"" << left << "\" y=\"" << H - bottom + 16 << "\">" << num(x0) << "</text>\n";
  os << "<text x=\"" << W - right << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"end\">" << num(x1)
     << "</text>\n";
  os << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
     << svg_escape(xlabel) << "</text>\n";
  os << "<text x=\"" << left - 4 << "\" y=\"" << H - bottom << "\" text-anchor=\"end\">" << num(y0)
     << "</text>\n";
  os << "<text x=\"" << left - 4 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << num(y1) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = colors[k % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < x.size() && i < series[k].y.size(); ++i) {
      if (std::isfinite(series[k].y[i])) os << num(px(x[i])) << "," << num(py(series[k].y[i])) << " ";
    }
    os << "\"/>\n";
    os << "<text x=\"" << W - right + 10 << "\" y=\"" << top + 16 * (k + 1) << "\" fill=\"" << color << "\">"
       << svg_escape(series[k].name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// --------------------------------------------------------------- CSV writers

std::string coefficient_csv(const std::vector<pde::DensityState>& states) {
  std::ostringstream os;
  if (states.empty()) return "time\n";
  const pde::Discretization& d = states.front().disc();
  os << "time";
  for (int l = 0; l <= d.degree(); ++l) os << ",l" << l;
  if (d.dim() == 2) {
    for (int l = 1; l <= d.degree(); ++l) os << ",s" << l;
  }
  os << "\n";
  for (const auto& s : states) {
    os << num(s.time());
    for (Eigen::Index k = 0; k < s.coeffs().size(); ++k) os << "," << num(s.coeffs()[k]);
    os << "\n";
  }
  return os.str();
}

std::string grid_csv(const std::vector<double>& times, const std::vector<const Eigen::VectorXd*>& values) {
  std::ostringstream os;
  os << "time";
  if (!values.empty()) {
    for (Eigen::Index i = 0; i < values.front()->size(); ++i) os << ",theta_" << i;
  }
  os << "\n";
  for (std::size_t k = 0; k < values.size(); ++k) {
    os << num(times[k]);
    for (Eigen::Index i = 0; i < values[k]->size(); ++i) os << "," << num((*values[k])[i]);
    os << "\n";
  }
  return os.str();
}

std::string nodes_csv(const std::vector<double>& theta, const std::vector<double>& weight) {
  std::ostringstream os;
  os << "index,theta,weight\n";
  for (std::size_t i = 0; i < theta.size(); ++i) os << i << "," << num(theta[i]) << "," << num(weight[i]) << "\n";
  return os.str();
}

std::string energy_csv(const pde::EnergyReport& e) {
  std::ostringstream os;
  os << "time,F_double,F_sqrt,entropy,mass,min_density,conv_l2\n";
  for (std::size_t k = 0; k < e.time.size(); ++k) {
    os << num(e.time[k]) << "," << num(e.F_double[k]) << "," << num(e.F_sqrt[k]) << "," << num(e.entropy[k])
       << "," << num(e.mass[k]) << "," << num(e.min_density[k]) << "," << num(e.conv_l2[k]) << "\n";
  }
  return os.str();
}

// ----------------------------------------------------------------- commands

struct Context {
  const ExperimentConfig& config;
  Outputs& out;
  std::vector<CheckOutcome>& checks;
  std::string& stage;

  void check(const std::string& name, bool passed, const std::string& detail) {
    checks.push_back({name, passed, detail});
  }
};

double horizon(const ExperimentConfig& c, double fallback) { return c.T > 0.0 ? c.T : fallback; }

std::optional<spectral::ZonalCoefficients> optional_kernel(const std::string& spec, int n, int L) {
  if (trim(spec) == "none") return std::nullopt;
  return kernels::make_kernel(parse_kernel_spec(spec, n), L).coeffs;
}

pde::DensityState initial_density(const ExperimentConfig& c, pde::DiscretizationPtr disc) {
  const double a = c.amplitude;
  return pde::DensityState::from_function(std::move(disc), [a](double th) { return 1.0 + a * std::cos(th); });
}

pde::SolverConfig solver_config(const ExperimentConfig& c) {
  pde::SolverConfig s;
  s.L = c.L;
  s.M = c.M;
  s.dt = c.dt;
  s.T = horizon(c, 1.0);
  s.scheme = c.scheme == "heun" ? pde::Scheme::heun : pde::Scheme::rk4;
  s.clip_negative = c.clip_negative;
  s.diagnostics_every = c.diagnostics_every;
  s.max_halvings = c.max_halvings;
  return s;
}

void write_states(Context& ctx, const std::vector<pde::DensityState>& states) {
  ctx.out.write("trajectory.csv", coefficient_csv(states));
  std::vector<double> times;
  std::vector<const Eigen::VectorXd*> values;
  for (const auto& s : states) {
    times.push_back(s.time());
    values.push_back(&s.values());
  }
  ctx.out.write("grid.csv", grid_csv(times, values));
}

void run_solve(Context& ctx, bool aggregation) {
  const ExperimentConfig& c = ctx.config;
  ctx.stage = "kernels";
  const auto W = kernels::make_kernel(parse_kernel_spec(c.W, c.n), c.L).coeffs;
  std::optional<spectral::ZonalCoefficients> V;
  if (aggregation) V = optional_kernel(c.V, c.n, c.L);
  ctx.stage = "pde";
  const auto disc = pde::Discretization::create(c.n, c.L, c.M);
  const pde::DensityState rho0 = initial_density(c, disc);
  std::vector<double> weights(disc->weights().data(), disc->weights().data() + disc->weights().size());
  ctx.out.write("nodes.csv", nodes_csv(disc->theta(), weights));
  pde::SolveResult res;
  try {
    res = pde::solve(rho0, W, V, solver_config(c));
  } catch (const pde::InstabilityError& e) {
    write_states(ctx, e.partial().states);
    throw;
  }
  write_states(ctx, res.trajectory.states);
  ctx.out.write("energy.csv", energy_csv(res.energy));
  if (c.plots) {
    ctx.out.write("energy.svg", line_chart("free energy", "time", res.energy.time,
                                           {{"F_double", res.energy.F_double}, {"F_sqrt", res.energy.F_sqrt}}));
  }

  double drift = 0.0;
  for (double m : res.energy.mass) drift = std::max(drift, std::abs(m - 1.0));
  ctx.check("mass_conservation", drift <= 1e-10, "max |mass - 1| = " + num(drift));
  if (aggregation) {
    double worst = 0.0;
    const auto& F = res.energy.F_double;
    for (std::size_t k = 1; k < F.size(); ++k) worst = std::max(worst, (F[k] - F[k - 1]) / (1.0 + std::abs(F[k - 1])));
    ctx.check("energy_dissipation", worst <= 1e-6, "max relative increase = " + num(worst));
  }
}

void run_sweep(Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  ctx.stage = "kernels";
  const auto W = kernels::make_kernel(parse_kernel_spec(c.W, c.n), c.L).coeffs;
  const kernels::KernelKind kind = c.family == "exp" ? kernels::KernelKind::exponential : kernels::KernelKind::heat;
  const int n = c.n;
  const pde::KernelFamily family = [kind, n](double eps, int L) {
    kernels::KernelFamilySpec s;
    s.kind = kind;
    s.n = n;
    s.scale = eps;
    return kernels::make_kernel(s, L).coeffs;
  };
  ctx.stage = "pde";
  const auto disc = pde::Discretization::create(c.n, c.L, c.M);
  const pde::ConvergenceTable table =
      pde::convergence_study(c.eps, W, family, initial_density(c, disc), solver_config(c), c.jobs);

  std::ostringstream os;
  os << "eps,error,sup_gap,residual_mean,residual_final,ok\n";
  std::vector<double> eps, err, res;
  bool all_ok = table.ade_ok;
  for (const auto& r : table.rows) {
    os << num(r.eps) << "," << num(r.error) << "," << num(r.sup_gap) << "," << num(r.residual_mean) << ","
       << num(r.residual_final) << "," << (r.ok ? 1 : 0) << "\n";
    eps.push_back(r.eps);
    err.push_back(r.error);
    res.push_back(r.residual_mean);
    if (!r.ok) {
      all_ok = false;
      ctx.check("solve_eps_" + num(r.eps), false, r.message);
    }
  }
  ctx.out.write("table.csv", os.str());
  if (c.plots) {
    ctx.out.write("table.svg", line_chart("distance to the ADE solution", "eps", eps,
                                          {{"error", err}, {"residual_mean", res}}));
  }
  if (!table.ade_ok) ctx.check("ade_reference", false, table.ade_message);
  if (!all_ok) return;
  auto decreasing = [](const std::vector<double>& v) {
    for (std::size_t k = 1; k < v.size(); ++k) {
      if (!(v[k] < v[k - 1])) return false;
    }
    return true;
  };
  ctx.check("error_decreasing", decreasing(err), "errors " + format_value(err));
  if (c.n == 2) ctx.check("residual_decreasing", decreasing(res), "residuals " + format_value(res));
}

void run_jko(Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  ctx.stage = "kernels";
  const auto W = kernels::make_kernel(parse_kernel_spec(c.W, 2), c.L).coeffs;
  const auto V = optional_kernel(c.V, 2, c.L);
  ctx.stage = "ot";
  const auto disc = pde::Discretization::create(2, c.L);
  const ot::CircularDistribution rho0 = ot::cell_average(initial_density(c, disc), c.grid);
  const ot::InteractionEnergy F(c.grid, W, V);
  ot::JkoConfig jc;
  jc.tau = c.tau;
  jc.K = c.K;
  jc.grid = c.grid;
  jc.tol = c.tol;
  jc.max_iter = c.max_iter;
  const ot::JkoTrajectory tr = ot::jko_trajectory(rho0, jc, F);

  const int N = c.grid, L = std::min(c.L, N / 2 - 1);
  const double h = 2.0 * std::numbers::pi / N;
  std::vector<double> theta(N), weight(N, 1.0 / N), times;
  for (int j = 0; j < N; ++j) theta[j] = h * j;
  std::vector<Eigen::VectorXd> cells;
  std::ostringstream coef;
  coef << "time";
  for (int l = 0; l <= L; ++l) coef << ",l" << l;
  for (int l = 1; l <= L; ++l) coef << ",s" << l;
  coef << "\n";
  for (std::size_t k = 0; k < tr.states.size(); ++k) {
    const std::vector<double>& rho = tr.states[k].density();
    times.push_back(static_cast<double>(k) * c.tau);
    cells.push_back(Eigen::Map<const Eigen::VectorXd>(rho.data(), N));
    // Coefficients of the trigonometric interpolant in the 1, 2cos, 2sin basis.
    std::vector<double> a(L + 1, 0.0), b(L + 1, 0.0);
    for (int l = 0; l <= L; ++l) {
      for (int j = 0; j < N; ++j) {
        a[l] += rho[j] * std::cos(l * theta[j]) / N;
        b[l] += rho[j] * std::sin(l * theta[j]) / N;
      }
    }
    coef << num(times.back());
    for (int l = 0; l <= L; ++l) coef << "," << num(a[l]);
    for (int l = 1; l <= L; ++l) coef << "," << num(b[l]);
    coef << "\n";
  }
  std::vector<const Eigen::VectorXd*> ptrs;
  for (const auto& v : cells) ptrs.push_back(&v);
  ctx.out.write("nodes.csv", nodes_csv(theta, weight));
  ctx.out.write("trajectory.csv", coef.str());
  ctx.out.write("grid.csv", grid_csv(times, ptrs));

  std::ostringstream steps;
  steps << "step,time,F,w2_increment,converged\n";
  int unconverged = 0;
  for (std::size_t k = 0; k < tr.F.size(); ++k) {
    steps << k << "," << num(times[k]) << "," << num(tr.F[k]) << ","
          << (k == 0 ? "0" : num(tr.w2_increments[k - 1])) << "," << (k == 0 || tr.converged[k - 1] ? 1 : 0)
          << "\n";
    if (k > 0 && !tr.converged[k - 1]) ++unconverged;
  }
  ctx.out.write("jko.csv", steps.str());
  if (c.plots) ctx.out.write("jko.svg", line_chart("JKO energy", "time", times, {{"F", tr.F}}));

  ctx.check("summability", tr.summability_ok,
            "sum W2^2/(2 tau) = " + num(tr.summability_lhs) + " <= " + num(tr.summability_rhs));
  ctx.check("holder", tr.holder_ok, "max ratio = " + num(tr.holder_max_ratio) + ", c = " + num(tr.holder_c));
  if (unconverged > 0) {
    ctx.check("inner_convergence", false, std::to_string(unconverged) + " steps hit max_iter");
  }
}

void run_particles(Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  ctx.stage = "particles";
  const auto X0 = c.init == "uniform" ? particles::ParticleEnsemble::uniform(c.n, c.tokens, c.seed)
                                      : particles::ParticleEnsemble::hemisphere(c.n, c.tokens, c.seed);
  const auto heads = c.repulsion_eps > 0.0 ? particles::HeadConfig::attraction_repulsion(c.n, c.beta, c.repulsion_eps)
                                           : particles::HeadConfig::attraction(c.beta);
  particles::SimulationConfig sc;
  sc.T = horizon(c, 50.0);
  sc.dt = c.dt > 0.0 ? c.dt : 0.01;
  sc.record_every = c.record_every;
  const particles::ParticleTrajectory tr = particles::simulate(X0, heads, sc);

  std::ostringstream pts, met;
  pts << "time,particle_index";
  for (int k = 1; k <= c.n; ++k) pts << ",x" << k;
  pts << "\n";
  met << "time,min_inner,max_inner,energy\n";
  std::vector<double> mins, energies;
  for (std::size_t s = 0; s < tr.times.size(); ++s) {
    const Eigen::MatrixXd& X = tr.snapshots[s].matrix();
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
      pts << num(tr.times[s]) << "," << i;
      for (Eigen::Index k = 0; k < X.rows(); ++k) pts << "," << num(X(k, i));
      pts << "\n";
    }
    const auto& m = tr.metrics[s];
    met << num(tr.times[s]) << "," << num(m.min_pair_inner) << "," << num(m.max_pair_inner) << "," << num(m.energy)
        << "\n";
    mins.push_back(m.min_pair_inner);
    energies.push_back(m.energy);
  }
  ctx.out.write("particles.csv", pts.str());
  ctx.out.write("metrics.csv", met.str());
  if (c.plots) {
    ctx.out.write("metrics.svg", line_chart("clustering", "time", tr.times,
                                            {{"min_inner", mins}, {"energy", energies}}));
  }
  ctx.check("energy_dissipation", tr.max_energy_increase <= 1e-6,
            "max relative increase per step = " + num(tr.max_energy_increase));
}

void run_checks(Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  const bool all = c.suite == "all";
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  auto record = [&](const std::string& name, double max_ratio, long samples, std::uint64_t seed, double bound) {
    records.push_back({{"name", name},
                       {"max_ratio", max_ratio},
                       {"samples", samples},
                       {"seed", seed},
                       {"bound", bound},
                       {"passed", max_ratio <= bound}});
    ctx.check(name, max_ratio <= bound, "max ratio = " + num(max_ratio) + " (bound " + num(bound) + ")");
  };
  if (all || c.suite == "geometry") {
    ctx.stage = "geom";
    for (int n : {3, 5}) {
      const geom::DivergenceCheck d = geom::geodesic_divergence_check(n, c.samples, c.seed);
      const std::string sphere = "S" + std::to_string(n - 1);
      record("geodesic_divergence_" + sphere, d.max_ratio, d.samples, d.seed, 3.0);
      ctx.check("geodesic_parallel_" + sphere, d.max_parallel_deviation <= 1e-9,
                "max |ratio - 1| along log_x y = " + num(d.max_parallel_deviation));
    }
  }
  if (all || c.suite == "transport") {
    ctx.stage = "kernels";
    const auto V = kernels::make_kernel(parse_kernel_spec(c.V, 2), c.L).coeffs;
    ctx.stage = "ot";
    const ot::ContractionReport r = ot::convolution_contraction_check(V, c.pairs, c.p, c.seed);
    record("wasserstein_contraction_p" + std::to_string(c.p), r.max_ratio, r.samples, r.seed, 3.0);
  }
  if (!records.empty()) ctx.out.write("checks.json", records.dump(2) + "\n");
  if (all || c.suite == "admissibility") {
    ctx.stage = "spectral";
    std::ostringstream os;
    os << "family,n,eps,nonnegative,normalized,bounded,tail_summable,sqrt_min,sqrt_nonnegative\n";
    for (const char* fam : {"heat", "exp"}) {
      for (int n : {2, 3}) {
        const int L = c.L;
        const bool heat = std::string(fam) == "heat";
        const auto family = [heat, n, L](double eps) {
          return heat ? kernels::heat_kernel_coeffs(n, eps, L) : kernels::exponential_kernel_coeffs(n, eps, L);
        };
        const spectral::AdmissibilityReport rep = spectral::check_admissibility(family, c.eps);
        bool sqrt_ok = true;
        for (const auto& e : rep.entries) {
          const auto V = family(e.eps);
          const bool pos = spectral::sqrt_is_nonnegative(V);
          sqrt_ok = sqrt_ok && pos;
          os << fam << "," << n << "," << num(e.eps) << "," << e.nonnegative << "," << e.normalized << ","
             << e.bounded << "," << e.tail_summable << "," << num(spectral::check_sqrt_positivity(V)) << ","
             << pos << "\n";
        }
        const std::string name = std::string("admissibility_") + fam + "_n" + std::to_string(n);
        ctx.check(name, rep.passed() && sqrt_ok,
                  std::string("assumptions ") + (rep.passed() ? "hold" : "fail") + ", sqrt " +
                      (sqrt_ok ? "nonnegative" : "changes sign"));
      }
    }
    ctx.out.write("admissibility.csv", os.str());
  }
}

fs::path output_dir(const ExperimentConfig& c) {
  if (!c.output.empty()) return c.output;
  const char* root = std::getenv("SPHAGG_OUTPUT_ROOT");
  return fs::path(root != nullptr && *root != '\0' ? root : "sphagg-out") / command_name(c.command);
}

}  // namespace

std::string command_name(Command c) {
  switch (c) {
    case Command::solve_ae: return "solve-ae";
    case Command::solve_ade: return "solve-ade";
    case Command::sweep_epsilon: return "sweep-epsilon";
    case Command::jko: return "jko";
    case Command::particles: return "particles";
    case Command::checks: return "checks";
  }
  return "?";
}

Command parse_command(const std::string& name) {
  for (Command c : {Command::solve_ae, Command::solve_ade, Command::sweep_epsilon, Command::jko,
                    Command::particles, Command::checks}) {
    if (command_name(c) == name) return c;
  }
  throw ConfigError("unknown command '" + name +
                    "' (expected solve-ae, solve-ade, sweep-epsilon, jko, particles or checks)");
}

void set_field(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (f == nullptr) throw ConfigError("unknown key '" + key + "'");
  f->set(config, value);
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& source) {
  ExperimentConfig c;
  std::istringstream is(text);
  std::string line, section;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    const auto hash = line.find('#');
    const std::string s = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(where + "malformed section header '" + s + "'");
      section = trim(s.substr(1, s.size() - 2));
      const bool known = std::any_of(fields().begin(), fields().end(),
                                     [&](const Field& f) { return f.section == section; });
      if (!known) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + s + "'");
    const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
    const Field* f = find_field(key);
    if (f == nullptr) throw ConfigError(where + "unknown key '" + key + "'");
    if (f->section != section) {
      throw ConfigError(where + "key '" + key + "' belongs to section [" + f->section + "]");
    }
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      f->set(c, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + e.what());
    }
  }
  return c;
}

ExperimentConfig parse_config_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

std::string canonical(const ExperimentConfig& config, bool include_output) {
  std::ostringstream os;
  std::string section;
  for (const Field& f : fields()) {
    if (!include_output && f.key == "output") continue;
    if (f.section != section) {
      if (!section.empty()) os << "\n";
      section = f.section;
      os << "[" << section << "]\n";
    }
    os << f.key << " = " << f.get(config) << "\n";
  }
  return os.str();
}

kernels::KernelFamilySpec parse_kernel_spec(const std::string& spec, int n) {
  const std::vector<std::string> parts = split(trim(spec), ':');
  if (parts.empty() || parts[0].empty()) throw ParameterRangeError("empty kernel spec");
  kernels::KernelFamilySpec k;
  k.n = n;
  std::map<std::string, std::string> args;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    if (eq == std::string::npos) throw ParameterRangeError("kernel spec '" + spec + "': expected key=value");
    if (!args.emplace(trim(parts[i].substr(0, eq)), trim(parts[i].substr(eq + 1))).second) {
      throw ParameterRangeError("kernel spec '" + spec + "': duplicate argument");
    }
  }
  auto take = [&](const std::string& key, std::optional<double> fallback) {
    const auto it = args.find(key);
    if (it == args.end()) {
      if (!fallback) throw ParameterRangeError("kernel spec '" + spec + "': missing " + key);
      return *fallback;
    }
    const double v = parse_number<double>(key, it->second);
    args.erase(it);
    return v;
  };
  const std::string& name = parts[0];
  if (name == "heat" || name == "exp") {
    k.kind = name == "heat" ? kernels::KernelKind::heat : kernels::KernelKind::exponential;
    k.scale = take("eps", std::nullopt);
    if (!(k.scale > 0.0) || !std::isfinite(k.scale)) throw ParameterRangeError("kernel spec '" + spec + "': eps must be positive");
  } else if (name == "attract") {
    k.kind = kernels::KernelKind::attraction;
    k.scale = take("beta", 1.0);
    k.alpha = take("alpha", 1.0);
    if (!(k.scale > 0.0) || !std::isfinite(k.scale)) throw ParameterRangeError("kernel spec '" + spec + "': beta must be positive");
  } else if (name == "table") {
    k.kind = kernels::KernelKind::custom_table;
    const auto it = args.find("path");
    if (it == args.end()) throw ParameterRangeError("kernel spec '" + spec + "': missing path");
    k.table_path = it->second;
    args.erase(it);
    std::ifstream is(k.table_path);
    if (!is) throw ParameterRangeError("kernel spec '" + spec + "': cannot read " + k.table_path);
    k.table = spectral::read_coefficients_csv(is);
    if (k.table->dim() != n) {
      throw DimensionMismatch("kernel table " + k.table_path + " is for n = " + std::to_string(k.table->dim()) +
                              ", expected n = " + std::to_string(n));
    }
  } else {
    throw ParameterRangeError("unknown kernel family '" + name + "' (expected heat, exp, attract or table)");
  }
  if (!args.empty()) throw ParameterRangeError("kernel spec '" + spec + "': unknown argument " + args.begin()->first);
  return k;
}

void validate(const ExperimentConfig& c) {
  std::vector<std::string> bad;
  auto need = [&](bool ok, const std::string& key, const std::string& what) {
    if (!ok) bad.push_back(key + ": " + what);
  };
  auto in = [](const std::string& v, std::initializer_list<const char*> options) {
    return std::any_of(options.begin(), options.end(), [&](const char* o) { return v == o; });
  };
  need(c.jobs >= 1, "jobs", "must be >= 1");
  need(c.n >= 2, "n", "must be >= 2");
  need(c.amplitude >= 0.0 && c.amplitude < 1.0, "amplitude", "must lie in [0, 1)");
  need(c.L >= 1 && c.L <= spectral::kMaxDegree, "L", "must lie in [1, " + std::to_string(spectral::kMaxDegree) + "]");
  need(c.M >= 0, "M", "must be >= 0");
  need(c.dt >= 0.0 && std::isfinite(c.dt), "dt", "must be >= 0");
  need(c.T >= 0.0 && std::isfinite(c.T), "T", "must be >= 0");
  need(in(c.scheme, {"rk4", "heun"}), "scheme", "must be rk4 or heun");
  need(c.diagnostics_every >= 1, "diagnostics_every", "must be >= 1");
  need(c.max_halvings >= 0, "max_halvings", "must be >= 0");
  need(in(c.family, {"heat", "exp"}), "family", "must be heat or exp");
  need(std::all_of(c.eps.begin(), c.eps.end(), [](double e) { return e > 0.0 && std::isfinite(e); }), "eps",
       "values must be positive");
  need(c.tau > 0.0 && std::isfinite(c.tau), "tau", "must be positive");
  need(c.K >= 1, "K", "must be >= 1");
  need(c.grid >= 4 && c.grid % 2 == 0, "grid", "must be even and >= 4");
  need(c.tol > 0.0, "tol", "must be positive");
  need(c.max_iter >= 0, "max_iter", "must be >= 0");
  need(c.tokens >= 2, "tokens", "must be >= 2");
  need(in(c.init, {"hemisphere", "uniform"}), "init", "must be hemisphere or uniform");
  need(c.beta > 0.0 && std::isfinite(c.beta), "beta", "must be positive");
  need(c.repulsion_eps >= 0.0 && std::isfinite(c.repulsion_eps), "repulsion_eps", "must be >= 0");
  need(c.record_every >= 1, "record_every", "must be >= 1");
  need(in(c.suite, {"all", "geometry", "transport", "admissibility"}), "suite",
       "must be all, geometry, transport or admissibility");
  need(c.samples >= 1, "samples", "must be >= 1");
  need(c.pairs >= 1, "pairs", "must be >= 1");
  need(c.p == 1 || c.p == 2, "p", "must be 1 or 2");

  const Command cmd = c.command;
  const bool sweep = cmd == Command::sweep_epsilon;
  need(!sweep || !c.eps.empty(), "eps", "sweep-epsilon needs at least one value");
  need(!(cmd == Command::checks && (c.suite == "all" || c.suite == "admissibility")) || !c.eps.empty(), "eps",
       "the admissibility suite needs at least one value");
  need(cmd != Command::jko || c.n == 2, "n", "jko runs on S^1 only (n = 2)");
  const int kernel_n = cmd == Command::jko || cmd == Command::checks ? 2 : c.n;
  auto kernel_ok = [&](const std::string& key, const std::string& spec, bool allow_none) {
    if (allow_none && trim(spec) == "none") return;
    try {
      parse_kernel_spec(spec, kernel_n);
    } catch (const std::exception& e) {
      bad.push_back(key + ": " + e.what());
    }
  };
  const bool uses_w = cmd == Command::solve_ae || cmd == Command::solve_ade || sweep || cmd == Command::jko;
  if (uses_w) kernel_ok("W", c.W, false);
  if (cmd == Command::solve_ae || cmd == Command::checks) kernel_ok("V", c.V, false);
  if (cmd == Command::jko) kernel_ok("V", c.V, true);
  if (!bad.empty()) {
    std::string msg = "invalid configuration";
    for (const std::string& b : bad) msg += "\n  " + b;
    throw ParameterRangeError(msg);
  }
}

std::string defaults_help() {
  const ExperimentConfig d;
  std::ostringstream os;
  os << "Configuration keys (defaults shown; set in a --config file or as --key value):\n";
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      section = f.section;
      os << "  [" << section << "]\n";
    }
    std::string def = f.get(d);
    if (def.empty()) def = "\"\"";
    os << "    " << f.key << " = " << def << "\n        " << f.help << "\n";
  }
  os << "Kernel specs: heat:eps=E, exp:eps=E, attract:beta=B:alpha=A, table:path=FILE.csv, none.\n"
        "Exit codes: 0 ok, 2 invalid input, 3 numerical failure, 4 failed check.\n"
        "Use --help schema for the CSV columns.\n";
  return os.str();
}

std::string schema_help() {
  return R"(Every run writes manifest.json: {command, config, exit_code, error, checks, files[{path, sha256, bytes}]}.

solve-ae, solve-ade
  nodes.csv       index,theta,weight          quadrature nodes (polar angle) and weights
  trajectory.csv  time,l0..lL[,s1..sL]        modal coefficients; l = Z_l (for n = 2, 2cos(l theta)),
                                              s = 2sin(l theta) (n = 2 only)
  grid.csv        time,theta_0..theta_{M-1}   density at the nodes of nodes.csv
  energy.csv      time,F_double,F_sqrt,entropy,mass,min_density,conv_l2
  energy.svg      optional chart of energy.csv

sweep-epsilon
  table.csv       eps,error,sup_gap,residual_mean,residual_final,ok
                  error = L2(0,T;L2) distance of sqrt(V_eps) * rho_eps to the ADE solution
  table.svg       optional chart of table.csv

jko
  nodes.csv       index,theta,weight          cell centres and masses 1/grid
  trajectory.csv  time,l0..lL,s1..sL          trigonometric interpolant of the cells, L <= grid/2 - 1
  grid.csv        time,theta_0..theta_{N-1}   cell densities
  jko.csv         step,time,F,w2_increment,converged
  jko.svg         optional chart of jko.csv

particles
  particles.csv   time,particle_index,x1..xn
  metrics.csv     time,min_inner,max_inner,energy
  metrics.svg     optional chart of metrics.csv

checks
  checks.json     [{name, max_ratio, samples, seed, bound, passed}]
  admissibility.csv  family,n,eps,nonnegative,normalized,bounded,tail_summable,sqrt_min,sqrt_nonnegative
)";
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

RunResult run(const ExperimentConfig& config) {
  RunResult r;
  std::string stage = "config";
  std::optional<Outputs> out;
  try {
    validate(config);
    r.directory = output_dir(config);
    stage = "output";
    out.emplace(r.directory);
    Context ctx{config, *out, r.checks, stage};
    switch (config.command) {
      case Command::solve_ae: run_solve(ctx, true); break;
      case Command::solve_ade: run_solve(ctx, false); break;
      case Command::sweep_epsilon: run_sweep(ctx); break;
      case Command::jko: run_jko(ctx); break;
      case Command::particles: run_particles(ctx); break;
      case Command::checks: run_checks(ctx); break;
    }
    const bool ok = std::all_of(r.checks.begin(), r.checks.end(), [](const CheckOutcome& c) { return c.passed; });
    r.exit_code = ok ? 0 : 4;
  } catch (const std::invalid_argument& e) {
    r.exit_code = 2;
    r.error = stage + ": " + e.what();
  } catch (const std::exception& e) {
    r.exit_code = 3;
    r.error = stage + ": " + e.what();
  }
  if (out) {
    nlohmann::ordered_json m;
    m["command"] = command_name(config.command);
    m["config"] = canonical(config, false);
    m["exit_code"] = r.exit_code;
    m["error"] = r.error;
    m["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : r.checks) m["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    m["files"] = nlohmann::ordered_json::array();
    for (const auto& a : out->artifacts()) {
      m["files"].push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
    }
    r.artifacts = out->artifacts();
    std::ofstream os(r.directory / "manifest.json", std::ios::binary | std::ios::trunc);
    os << m.dump(2) << "\n";
  }
  return r;
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mollified aggregation experiments on the sphere."};
  app.set_help_flag();
  std::string topic, command, config_path;
  bool print_config = false;
  CLI::Option* help = app.add_option("-h,--help", topic, "Show help; '--help schema' lists CSV columns")
                          ->expected(0, 1);
  app.add_option("command", command, "solve-ae | solve-ade | sweep-epsilon | jko | particles | checks");
  app.add_option("--config", config_path, "config file (flags override it)");
  app.add_flag("--print-config", print_config, "print the canonical config and exit");
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  for (const Field& f : fields()) {
    if (f.key == "command") continue;
    options[f.key] = app.add_option("--" + f.key, values[f.key], f.help);
  }
  app.footer(defaults_help());
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  if (help->count() > 0) {
    out << (topic == "schema" ? schema_help() : app.help());
    return 0;
  }

  ExperimentConfig c;
  try {
    if (!config_path.empty()) c = parse_config_file(config_path);
    if (!command.empty()) {
      c.command = parse_command(command);
    } else if (config_path.empty()) {
      throw ConfigError("no command given (see --help)");
    }
    for (const Field& f : fields()) {
      const auto it = options.find(f.key);
      if (it != options.end() && it->second->count() > 0) {
        try {
          f.set(c, values[f.key]);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("--") + f.key + ": " + e.what());
        }
      }
    }
    validate(c);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  if (print_config) {
    out << canonical(c);
    return 0;
  }

  const RunResult r = run(c);
  for (const CheckOutcome& k : r.checks) {
    out << (k.passed ? "PASS " : "FAIL ") << k.name << ": " << k.detail << "\n";
  }
  if (!r.directory.empty()) {
    out << "wrote " << r.artifacts.size() << " files and manifest.json to " << r.directory.string() << "\n";
  }
  if (!r.error.empty()) err << "error: " << r.error << "\n";
  return r.exit_code;
}

}  // namespace sphagg::cli
