#include "mmo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "mmo/io.hpp"
#include "mmo/rng.hpp"

namespace mmo::analysis {

namespace {

// Neumaier-compensated accumulation; summation order is fixed by the caller.
struct Accumulator {
  double sum = 0, comp = 0;

  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + comp; }
};

}  // namespace

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

namespace {

// `parallel` feeds the omp if-clause and is unused in non-OpenMP builds.
EnsembleResult run_ensemble_impl(const EnsembleSpec& spec,
                                 [[maybe_unused]] bool parallel) {
  if (spec.n_realizations < 1) {
    throw std::invalid_argument("need at least one realization");
  }
  const sde::FastSlowModel model = spec.model_for_eps(spec.eps);
  sde::SolverConfig config = spec.solver(model.eps);

  auto ref = sections::first_hit(model, spec.start, sde::NoiseIntensities{},
                                 spec.target, config);
  if (ref.status != sections::HitStatus::hit) {
    throw std::runtime_error("deterministic reference run did not hit " +
                             spec.target.id);
  }

  EnsembleResult result;
  result.reference = ref.hit;
  result.eps = spec.eps;
  result.sigma = spec.noise.sigma;
  result.sigma_p = spec.noise.sigma_p;
  result.deviations.resize(std::size_t(spec.n_realizations));

  const int n = spec.n_realizations;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int i = 0; i < n; ++i) {
    sde::SolverConfig c = config;
    c.stream = spec.stream_offset + std::uint64_t(i);
    const auto t = sections::transition_map(model, spec.start, spec.target,
                                            spec.noise, c, &result.reference);
    Deviation d;
    d.status = t.first.status;
    if (t.has_deviation) d.d = t.deviation;
    result.deviations[std::size_t(i)] = d;
  }

  for (const auto& d : result.deviations) {
    if (d.status == sections::HitStatus::timeout) ++result.n_timeout;
    if (d.status == sections::HitStatus::escape) ++result.n_escape;
  }
  result.degraded = 5 * (result.n_timeout + result.n_escape) > n;
  return result;
}

}  // namespace

EnsembleResult run_ensemble(const EnsembleSpec& spec) {
  return run_ensemble_impl(spec, true);
}

EnsembleResult run_ensemble_serial(const EnsembleSpec& spec) {
  return run_ensemble_impl(spec, false);
}

SpreadStats spreading_stats(const EnsembleResult& ensemble) {
  SpreadStats out;
  out.n_escape = ensemble.n_escape;
  out.n_timeout = ensemble.n_timeout;
  out.degraded = ensemble.degraded;

  Accumulator sx, sy, sz;
  int n = 0;
  for (const auto& d : ensemble.deviations) {
    if (d.status != sections::HitStatus::hit) continue;
    sx.add(d.d.x);
    sy.add(d.d.y);
    sz.add(d.d.z);
    ++n;
  }
  out.n_effective = n;
  if (n < 2) throw std::runtime_error("need at least two effective runs");
  out.mean = {sx.value() / n, sy.value() / n, sz.value() / n};

  Accumulator vx, vy, vz;
  for (const auto& d : ensemble.deviations) {
    if (d.status != sections::HitStatus::hit) continue;
    vx.add((d.d.x - out.mean.x) * (d.d.x - out.mean.x));
    vy.add((d.d.y - out.mean.y) * (d.d.y - out.mean.y));
    vz.add((d.d.z - out.mean.z) * (d.d.z - out.mean.z));
  }
  out.stddev = {std::sqrt(vx.value() / (n - 1)), std::sqrt(vy.value() / (n - 1)),
                std::sqrt(vz.value() / (n - 1))};
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

SlopeFit fit_loglog(const std::vector<double>& xs, const std::vector<double>& ys,
                    const std::string& coordinate) {
  if (xs.size() != ys.size()) throw std::invalid_argument("size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] > 0 && ys[i] > 0) {
      lx.push_back(std::log10(xs[i]));
      ly.push_back(std::log10(ys[i]));
    }
  }
  const std::size_t n = lx.size();
  if (n < 2) throw std::runtime_error("not enough points for a fit");

  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / double(n);
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / double(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  SlopeFit fit;
  fit.coordinate = coordinate;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.points_used = int(n);
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  fit.grid_lo = *lo;
  fit.grid_hi = *hi;
  return fit;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  if (!(lo > 0 && hi > lo) || n < 2) throw std::invalid_argument("bad grid");
  std::vector<double> g;
  g.resize(std::size_t(n));
  const double step = (std::log10(hi) - std::log10(lo)) / (n - 1);
  for (int i = 0; i < n; ++i) {
    g[std::size_t(i)] = std::pow(10.0, std::log10(lo) + i * step);
  }
  return g;
}

namespace {

std::pair<double, double> in_plane_devs(const sections::Section& target,
                                        const SpreadStats& stats) {
  if (target.axis == sections::Axis::x) return {stats.stddev.y, stats.stddev.z};
  return {stats.stddev.x, stats.stddev.z};
}

std::pair<std::string, std::string> in_plane_labels(
    const sections::Section& target) {
  if (target.axis == sections::Axis::x) return {"y", "z"};
  return {"x", "z"};
}

SweepResult finish_sweep(const EnsembleSpec& spec,
                         std::vector<SweepPoint> points) {
  SweepResult out;
  out.points = std::move(points);
  std::vector<double> xs;
  std::vector<double> y1, y2;
  for (const auto& p : out.points) {
    if (p.stats.degraded) continue;  // excluded from the fit, kept in points
    const auto [d1, d2] = in_plane_devs(spec.target, p.stats);
    xs.push_back(p.value);
    y1.push_back(d1);
    y2.push_back(d2);
  }
  const auto [l1, l2] = in_plane_labels(spec.target);
  out.fits.push_back(fit_loglog(xs, y1, l1));
  out.fits.push_back(fit_loglog(xs, y2, l2));
  return out;
}

}  // namespace

SweepResult sweep_noise(const EnsembleSpec& spec,
                        const std::vector<std::pair<double, double>>& grid) {
  std::vector<SweepPoint> points;
  points.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EnsembleSpec s = spec;
    s.noise.sigma = grid[i].first;
    s.noise.sigma_p = grid[i].second;
    s.stream_offset = spec.stream_offset + i * std::size_t(spec.n_realizations);
    SweepPoint p;
    p.value = grid[i].first;
    p.stats = spreading_stats(run_ensemble(s));
    points.push_back(p);
  }
  return finish_sweep(spec, std::move(points));
}

SweepResult sweep_epsilon(const EnsembleSpec& spec,
                          const std::vector<double>& eps_grid) {
  std::vector<SweepPoint> points;
  points.reserve(eps_grid.size());
  for (std::size_t i = 0; i < eps_grid.size(); ++i) {
    EnsembleSpec s = spec;
    s.eps = eps_grid[i];
    s.stream_offset = spec.stream_offset + i * std::size_t(spec.n_realizations);
    SweepPoint p;
    p.value = eps_grid[i];
    p.stats = spreading_stats(run_ensemble(s));
    points.push_back(p);
  }
  return finish_sweep(spec, std::move(points));
}

void sweep_to_csv(const SweepResult& sweep, const std::string& path) {
  std::string body = "sigma_or_eps,coord,std,n_eff\n";
  char line[160];
  for (const auto& p : sweep.points) {
    const char* coords[3] = {"x", "y", "z"};
    const double devs[3] = {p.stats.stddev.x, p.stats.stddev.y,
                            p.stats.stddev.z};
    for (int c = 0; c < 3; ++c) {
      std::snprintf(line, sizeof line, "%.17g,%s,%.17g,%d\n", p.value,
                    coords[c], devs[c], p.stats.n_effective);
      body += line;
    }
  }
  io::write_file_atomic(path, body);
}

std::string fits_to_json(const std::vector<SlopeFit>& fits) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : fits) {
    arr.push_back({{"coordinate", f.coordinate},
                   {"slope", f.slope},
                   {"intercept", f.intercept},
                   {"r2", f.r_squared},
                   {"points_used", f.points_used}});
  }
  return nlohmann::json{{"fits", arr}}.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Order predictions
// ---------------------------------------------------------------------------

Transition transition_from_string(const std::string& name) {
  static const std::map<std::string, Transition> table = {
      {"s2_to_s3", Transition::s2_to_s3},   {"s3_to_s4", Transition::s3_to_s4},
      {"s4_to_s4p", Transition::s4_to_s4p}, {"s4p_to_s5", Transition::s4p_to_s5},
      {"s5_to_s6", Transition::s5_to_s6},   {"s6_to_s1", Transition::s6_to_s1},
      {"s1_to_s1p", Transition::s1_to_s1p},
      {"s1p_to_s1pp", Transition::s1p_to_s1pp},
      {"s1pp_to_s2", Transition::s1pp_to_s2}};
  const auto it = table.find(name);
  if (it == table.end()) throw std::invalid_argument("unknown transition " + name);
  return it->second;
}

std::string to_string(Transition t) {
  switch (t) {
    case Transition::s2_to_s3: return "s2_to_s3";
    case Transition::s3_to_s4: return "s3_to_s4";
    case Transition::s4_to_s4p: return "s4_to_s4p";
    case Transition::s4p_to_s5: return "s4p_to_s5";
    case Transition::s5_to_s6: return "s5_to_s6";
    case Transition::s6_to_s1: return "s6_to_s1";
    case Transition::s1_to_s1p: return "s1_to_s1p";
    case Transition::s1p_to_s1pp: return "s1p_to_s1pp";
    case Transition::s1pp_to_s2: return "s1pp_to_s2";
  }
  return "?";
}

OrderPrediction predicted_order(Transition t, double sigma, double sigma_p,
                                double eps, double mu) {
  const double rt = std::sqrt(eps);
  OrderPrediction p;
  switch (t) {
    case Transition::s2_to_s3:
    case Transition::s3_to_s4:
    case Transition::s5_to_s6:
    case Transition::s6_to_s1:
      p.dx = sigma + sigma_p;
      p.dz = sigma * rt + sigma_p;
      break;
    case Transition::s4_to_s4p:
      p.dx = sigma / std::pow(eps, 1.0 / 6.0) + sigma_p / std::cbrt(eps);
      p.dz = sigma * std::sqrt(eps * std::abs(std::log(eps))) + sigma_p;
      break;
    case Transition::s4p_to_s5:
      p.dy = sigma * rt + sigma_p * std::pow(eps, 1.0 / 6.0);
      p.dz = p.dy;
      break;
    case Transition::s1_to_s1p:
      p.dy = (sigma + sigma_p) * std::pow(eps, 0.25);
      p.dz = sigma_p;
      break;
    case Transition::s1p_to_s1pp:
      if (!(mu > 0)) throw std::invalid_argument("transition needs mu");
      p.dy = (sigma + sigma_p) * std::pow(eps / mu, 0.25);
      p.dz = sigma_p * std::pow(eps / mu, 0.25);
      break;
    case Transition::s1pp_to_s2:
      p.dy = (sigma + sigma_p) * std::pow(eps, 0.25);
      p.dz = sigma_p * std::pow(eps, 0.25);
      break;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Bound evaluators
// ---------------------------------------------------------------------------

BoundId bound_from_string(const std::string& name) {
  static const std::map<std::string, BoundId> table = {
      {"slow_segment", BoundId::slow_segment},
      {"fold_approach", BoundId::fold_approach},
      {"fold_escape", BoundId::fold_escape},
      {"node_approach", BoundId::node_approach},
      {"node_neighborhood", BoundId::node_neighborhood},
      {"node_escape", BoundId::node_escape},
      {"global_return", BoundId::global_return},
      {"inner_sector", BoundId::inner_sector},
      {"outer_entry", BoundId::outer_entry},
      {"outer_z_tail", BoundId::outer_z_tail},
      {"outer_y_interval", BoundId::outer_y_interval}};
  const auto it = table.find(name);
  if (it == table.end()) throw std::invalid_argument("unknown bound " + name);
  return it->second;
}

namespace {

double require(const std::optional<double>& v, const char* name) {
  if (!v) throw std::invalid_argument(std::string("missing bound argument ") + name);
  return *v;
}

// exp(-kappa * num / den); a vanishing denominator means the noise source is
// absent, so the term contributes nothing unless num is zero too.
double tail(double kappa, double num, double den) {
  if (den <= 0) return num > 0 ? 0.0 : 1.0;
  return std::exp(-kappa * num / den);
}

double ceil_pos(double v) { return std::ceil(std::max(v, 1.0)); }

}  // namespace

double eval_bound(BoundId id, const BoundArgs& args, const BoundParams& bp) {
  const double kappa = bp.kappa;
  switch (id) {
    case BoundId::slow_segment: {
      const double h = require(args.h, "h"), h1 = require(args.h1, "h1");
      const double sg = require(args.sigma, "sigma");
      const double sp = require(args.sigma_p, "sigma_p");
      const double eps = require(args.eps, "eps");
      const double s = require(args.s, "s");
      return ceil_pos(s / eps) *
             (tail(kappa, h * h, sg * sg) + tail(kappa, h * h, sp * sp) +
              tail(kappa, h1 * h1, sp * sp) +
              tail(kappa, h1 * h1, eps * sg * sg));
    }
    case BoundId::fold_approach: {
      const double h = require(args.h, "h"), h1 = require(args.h1, "h1");
      const double sg = require(args.sigma, "sigma");
      const double sp = require(args.sigma_p, "sigma_p");
      const double eps = require(args.eps, "eps");
      return ceil_pos(1.0 / eps) *
             (tail(kappa, h * h, sg * sg / std::cbrt(eps)) +
              tail(kappa, h * h, sp * sp * std::pow(eps, -2.0 / 3.0)) +
              tail(kappa, h1 * h1, sp * sp) +
              tail(kappa, h1 * h1,
                   eps * std::abs(std::log(eps)) * sg * sg));
    }
    case BoundId::fold_escape: {
      const double h1 = require(args.h1, "h1");
      const double sg = require(args.sigma, "sigma");
      const double sp = require(args.sigma_p, "sigma_p");
      const double eps = require(args.eps, "eps");
      return bp.C * std::abs(std::log(eps)) *
             (tail(kappa, h1 * h1, sg * sg * eps + sp * sp * std::cbrt(eps)) +
              tail(kappa, eps, sg * sg + sp * sp * eps));
    }
    case BoundId::node_approach: {
      const double h = require(args.h, "h"), h1 = require(args.h1, "h1");
      const double h2 = require(args.h2, "h2");
      const double sg = require(args.sigma, "sigma");
      const double sp = require(args.sigma_p, "sigma_p");
      const double eps = require(args.eps, "eps");
      const double s_abs = std::abs(require(args.s, "s"));
      const double elapsed = args.theta_span.value_or(1.0);
      return ceil_pos(elapsed / eps) *
             (tail(kappa, h * h * s_abs, sg * sg + sp * sp) +
              tail(kappa, h1 * h1, sg * sg * eps / s_abs + sp * sp * s_abs) +
              tail(kappa, h2 * h2, sp * sp));
    }
    case BoundId::node_neighborhood: {
      const double h = require(args.h, "h"), h1 = require(args.h1, "h1");
      const double sg = require(args.sigma, "sigma");
      const double sp = require(args.sigma_p, "sigma_p");
      const double eps = require(args.eps, "eps");
      const double mu = require(args.mu, "mu");
      const double span = require(args.theta_span, "theta_span");
      const double sb = sg * std::pow(eps, -0.75);
      const double sbp = sp * std::pow(eps, -0.75);
      const double s2 = sb * sb + sbp * sbp;
      const double heff =
          std::max(0.0, h - (h * h + h1 * h1) / std::sqrt(mu));
      return ceil_pos(span / mu) *
             (tail(kappa, heff * heff * std::sqrt(mu), s2) +
              tail(kappa, h * h, s2 * eps / mu * span) +
              tail(kappa, h1 * h1, sbp * sbp * eps / mu * span));
    }
    case BoundId::node_escape: {
      const double h1 = require(args.h1, "h1"), h2 = require(args.h2, "h2");
      const double sg = require(args.sigma, "sigma");
      const double sp = require(args.sigma_p, "sigma_p");
      const double eps = require(args.eps, "eps");
      const double rt = std::sqrt(eps);
      return bp.C * std::abs(std::log(eps)) *
             (tail(kappa, h1 * h1, (sg * sg + sp * sp) * rt) +
              tail(kappa, h2 * h2, sp * sp * rt) +
              tail(kappa, std::pow(eps, 1.5), sg * sg + sp * sp * eps));
    }
    case BoundId::global_return: {
      const double h = require(args.h, "h"), h1 = require(args.h1, "h1");
      const double sg = require(args.sigma, "sigma");
      const double sp = require(args.sigma_p, "sigma_p");
      const double eps = require(args.eps, "eps");
      return bp.C / eps *
             (tail(kappa, h * h, sg * sg + sp * sp) +
              tail(kappa, h1 * h1,
                   sg * sg * eps * std::abs(std::log(eps)) + sp * sp) +
              tail(kappa, eps, sg * sg + sp * sp * std::pow(eps, -1.0 / 3.0)));
    }
    case BoundId::inner_sector: {
      const double h1 = require(args.h1, "h1"), h2 = require(args.h2, "h2");
      const double sg = require(args.sigma, "sigma");
      const double sp = require(args.sigma_p, "sigma_p");
      const double eps = require(args.eps, "eps");
      const double mu = require(args.mu, "mu");
      return bp.C / eps *
             (tail(kappa, h1 * h1 * std::sqrt(mu),
                   (sg * sg + sp * sp) * std::sqrt(eps)) +
              tail(kappa, h2 * h2, sp * sp) +
              tail(kappa, std::pow(eps, 1.5), sg * sg + sp * sp));
    }
    case BoundId::outer_entry: {
      const double sg = require(args.sigma, "sigma");
      const double sp = require(args.sigma_p, "sigma_p");
      const double eps = require(args.eps, "eps");
      const double mu = require(args.mu, "mu");
      return bp.C / eps *
             tail(kappa, std::sqrt(mu) * std::pow(eps, 1.5),
                  sg * sg + sp * sp);
    }
    case BoundId::outer_z_tail: {
      const double sg = require(args.sigma, "sigma");
      const double sp = require(args.sigma_p, "sigma_p");
      const double eps = require(args.eps, "eps");
      const double mu = require(args.mu, "mu");
      const double z = require(args.z, "z");
      const double log_noise = std::abs(std::log(sg + sp));
      return bp.C * std::pow(std::abs(std::log(sg)), bp.gamma) *
             tail(kappa, z * z - eps * mu, eps * mu * log_noise);
    }
    case BoundId::outer_y_interval: {
      const double h1 = require(args.h1, "h1");
      const double sg = require(args.sigma, "sigma");
      const double sp = require(args.sigma_p, "sigma_p");
      const double eps = require(args.eps, "eps");
      return bp.C / eps *
             (tail(kappa, h1 * h1, (sg * sg + sp * sp) * std::sqrt(eps)) +
              tail(kappa, std::pow(eps, 1.5), sg * sg + sp * sp * eps));
    }
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// Exceedance calibration
// ---------------------------------------------------------------------------

ExceedanceFit exceedance_calibration(const std::vector<double>& deviations,
                                     double scale, int n_h,
                                     double h_lo_quantile,
                                     double h_hi_quantile) {
  if (deviations.size() < 10) throw std::runtime_error("too few deviations");
  if (!(scale > 0)) throw std::invalid_argument("scale must be positive");
  std::vector<double> mags;
  mags.reserve(deviations.size());
  for (double d : deviations) mags.push_back(std::abs(d));
  std::sort(mags.begin(), mags.end());
  auto quantile = [&](double q) {
    const double pos = q * double(mags.size() - 1);
    const std::size_t i = std::size_t(pos);
    const double w = pos - double(i);
    return i + 1 < mags.size() ? mags[i] * (1 - w) + mags[i + 1] * w
                               : mags.back();
  };
  const double h_lo = quantile(h_lo_quantile);
  const double h_hi = quantile(h_hi_quantile);
  if (!(h_hi > h_lo && h_lo > 0)) {
    throw std::runtime_error("insufficient spread in deviations");
  }

  ExceedanceFit fit;
  fit.scale = scale;
  std::vector<double> xs, ys;
  const double n_total = double(mags.size());
  for (int i = 0; i < n_h; ++i) {
    // Grid linear in h^2, matching the expected log-linearity variable.
    const double hsq =
        h_lo * h_lo + (h_hi * h_hi - h_lo * h_lo) * i / (n_h - 1);
    const double h = std::sqrt(hsq);
    const auto above = mags.end() - std::upper_bound(mags.begin(), mags.end(), h);
    const double p = double(above) / n_total;
    fit.curve.push_back({h, p});
    if (above >= 3) {
      xs.push_back(hsq / (scale * scale));
      ys.push_back(std::log(p));
    }
  }
  if (xs.size() < 3) {
    throw std::runtime_error("fewer than 3 nonzero exceedance points");
  }
  // Plain least squares of log p against h^2/scale^2.
  const std::size_t n = xs.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  fit.kappa_hat = -sxy / sxx;
  fit.C_hat = std::exp(my - (sxy / sxx) * mx);
  fit.r_squared = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.points_used = int(n);
  return fit;
}

BoundParams calibrated_bound_params(const ExceedanceFit& fit) {
  BoundParams params;
  params.kappa = fit.kappa_hat;
  params.C = fit.C_hat;
  return params;
}

// ---------------------------------------------------------------------------
// Martingale tail bound
// ---------------------------------------------------------------------------

double bernstein_bound(double h, const std::vector<double>& variances,
                       const std::vector<double>& gammas) {
  if (variances.size() != gammas.size() || variances.empty()) {
    throw std::invalid_argument("variances and gammas must match");
  }
  double gamma_sum = 0;
  for (double g : gammas) {
    if (g < 0 || g > 1) throw std::invalid_argument("gamma outside [0,1]");
    gamma_sum += g;
  }
  if (std::abs(gamma_sum - 1.0) > 1e-12) {
    throw std::invalid_argument("gammas must sum to 1");
  }
  double bound = 0;
  for (std::size_t i = 0; i < variances.size(); ++i) {
    if (!(variances[i] > 0)) throw std::invalid_argument("variance must be > 0");
    bound += 2 * std::exp(-gammas[i] * h * h / (2 * variances[i]));
  }
  return bound;
}

std::vector<BernsteinMcRow> bernstein_mc_check(const BernsteinMcSpec& spec) {
  const int n_steps = int(std::llround(spec.t / spec.dt));
  std::vector<double> sups(std::size_t(spec.n_paths));
  const int n = spec.n_paths;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    rng::Stream stream(spec.seed, std::uint64_t(i));
    double w = 0, sup = 0;
    const double sd = std::sqrt(spec.dt);
    for (int k = 0; k < n_steps; ++k) {
      w += sd * stream.normal();
      sup = std::max(sup, std::abs(w));
    }
    sups[std::size_t(i)] = sup;
  }
  std::sort(sups.begin(), sups.end());

  std::vector<BernsteinMcRow> rows;
  for (double f : spec.h_factors) {
    BernsteinMcRow row;
    row.h = f * std::sqrt(spec.t);
    row.bound = bernstein_bound(row.h, {spec.t}, {1.0});
    const auto above =
        sups.end() - std::lower_bound(sups.begin(), sups.end(), row.h);
    row.empirical = double(above) / double(spec.n_paths);
    row.std_error =
        std::sqrt(std::max(row.empirical * (1 - row.empirical), 1e-12) /
                  double(spec.n_paths));
    row.dominated = row.empirical <= row.bound + 3 * row.std_error;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Exponential-kernel scaling check
// ---------------------------------------------------------------------------

namespace {

struct KernelProblem {
  double eps, nu;

  double a(double u) const {
    return -(std::sqrt(std::abs(u)) + std::cbrt(eps));
  }
  // Antiderivative of a.
  double A(double u) const {
    const double cube = std::cbrt(eps) * u;
    return u <= 0 ? (2.0 / 3.0) * std::pow(-u, 1.5) - cube
                  : -(2.0 / 3.0) * std::pow(u, 1.5) - cube;
  }
  double integrand(double s, double r) const {
    return std::exp((A(s) - A(r)) / eps) * std::pow(std::abs(a(r)), nu);
  }
};

double adaptive_simpson(const KernelProblem& prob, double s, double lo,
                        double hi, double f_lo, double f_mid, double f_hi,
                        double tol, int depth) {
  const double mid = (lo + hi) / 2;
  const double lm = (lo + mid) / 2, rm = (mid + hi) / 2;
  const double f_lm = prob.integrand(s, lm), f_rm = prob.integrand(s, rm);
  const double whole = (hi - lo) / 6 * (f_lo + 4 * f_mid + f_hi);
  const double left = (mid - lo) / 6 * (f_lo + 4 * f_lm + f_mid);
  const double right = (hi - mid) / 6 * (f_mid + 4 * f_rm + f_hi);
  const double sum = left + right;
  if (depth <= 0) return sum;
  if (std::abs(sum - whole) <= 15 * tol) return sum + (sum - whole) / 15;
  return adaptive_simpson(prob, s, lo, mid, f_lo, f_lm, f_mid, tol / 2,
                          depth - 1) +
         adaptive_simpson(prob, s, mid, hi, f_mid, f_rm, f_hi, tol / 2,
                          depth - 1);
}

double kernel_integral(const KernelProblem& prob, double s0, double s) {
  // The exponential kernel concentrates in a layer of width eps/|a(s)|
  // below r = s (|a| only grows to the left, so the exponent is bounded by
  // -|a(s)|(s-r)/eps). Truncating 45 e-foldings out keeps the tail below
  // 1e-19 of the peak contribution.
  const double layer = prob.eps / std::abs(prob.a(s));
  const double lo = std::max(s0, s - 45 * layer);
  const double f_lo = prob.integrand(s, lo);
  const double mid = (lo + s) / 2;
  const double f_mid = prob.integrand(s, mid);
  const double f_hi = prob.integrand(s, s);
  // Tolerance relative to the expected integral scale.
  const double tol = 1e-9 * f_hi * layer;
  return adaptive_simpson(prob, s, lo, s, f_lo, f_mid, f_hi, tol, 40);
}

}  // namespace

ScalingCheckReport kernel_scaling_check(const std::vector<double>& nus,
                                       const std::vector<double>& eps_grid,
                                       double s0) {
  ScalingCheckReport rep;
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (double nu : nus) {
    if (nu < -1) throw std::invalid_argument("nu must be >= -1");
    for (double eps : eps_grid) {
      const KernelProblem prob{eps, nu};
      const double e23 = std::pow(eps, 2.0 / 3.0);
      for (double s : {-0.5, -e23, 0.0, e23}) {
        ScalingCheckRow row;
        row.nu = nu;
        row.eps = eps;
        row.s = s;
        row.integral = kernel_integral(prob, s0, s);
        if (!std::isfinite(row.integral)) {
          throw std::runtime_error("kernel quadrature failed");
        }
        // Laplace asymptotics of the kernel: substituting
        // w = -alpha(s,r)/eps turns the integral into
        // eps * Int e^(-w) |a(r(w))|^(nu-1) dw with |a(r(w))| ~ |a(s)|,
        // so the comparison scale is eps |a(s)|^(nu-1). (For the pure
        // power a(r) = -|r|^(1/2), nu = 1, s = 0 the integral is exactly
        // eps, eps-independent against this scale.)
        row.formula = eps * std::pow(std::abs(prob.a(s)), nu - 1);
        row.ratio = row.integral / row.formula;
        rep.rows.push_back(row);
        lo = std::min(lo, row.ratio);
        hi = std::max(hi, row.ratio);
      }
    }
  }
  rep.ratio_max_over_min = hi / lo;
  return rep;
}

// ---------------------------------------------------------------------------
// Saturation model
// ---------------------------------------------------------------------------

SaturationModel saturation_predict(const std::vector<double>& pi_det,
                                   double mu, double sigma, double sigma_p,
                                   double eps,
                                   std::optional<int> k_star_choice) {
  if (!(mu > 0 && mu < 1)) throw std::invalid_argument("mu must be in (0,1)");
  if (pi_det.size() < 2) throw std::invalid_argument("table too short");

  SaturationModel model;
  model.pi_det = pi_det;
  model.k_star_low = int(std::ceil(1.0 / std::sqrt(mu)));
  const double noise = sigma + sigma_p;
  model.k_star_high =
      (noise > 0 && noise < 1)
          ? int(std::ceil(std::sqrt(std::abs(std::log(noise)) / mu)))
          : model.k_star_low;
  const int k_mid = (model.k_star_low + model.k_star_high) / 2;
  model.k_star = std::clamp(k_star_choice.value_or(k_mid), model.k_star_low,
                            model.k_star_high);
  if (model.k_star >= int(pi_det.size())) {
    throw std::invalid_argument("table must cover the saturation sector");
  }

  for (std::size_t k = 0; k + 1 < pi_det.size(); ++k) {
    if (pi_det[k + 1] > pi_det[k]) model.pi_det_monotone = false;
  }

  // Fixed point of the deterministic map: nearest integer crossing of
  // Pi_det(k) = k.
  int best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pi_det.size(); ++k) {
    const double gap = std::abs(pi_det[k] - double(k));
    if (gap < best_gap) {
      best_gap = gap;
      best = int(k);
    }
  }
  model.k_det = best;
  model.n_det = double(model.k_det);

  const double pi_at_star = pi_det[std::size_t(model.k_star)];
  model.fixed_point = std::max(model.k_det, int(std::llround(pi_at_star)));
  model.n_stoch = model.k_det < model.k_star
                      ? model.n_det
                      : 0.5 * (pi_at_star + model.k_star);

  // Fluctuations mask the small oscillations when k^2 mu >=
  // log(mu^(1/4) eps^(3/4) / sigma), evaluated in the operating sector.
  if (sigma > 0) {
    const double rhs =
        std::log(std::pow(mu, 0.25) * std::pow(eps, 0.75) / sigma);
    model.masked =
        double(model.fixed_point) * double(model.fixed_point) * mu >= rhs;
  }
  return model;
}

}  // namespace mmo::analysis
