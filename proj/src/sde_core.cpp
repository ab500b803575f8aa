#include "mmo/sde_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "mmo/io.hpp"

namespace mmo::sde {

Vec3 drift(const FastSlowModel& model, const State& state) {
  const Vec3 v{model.f(state) / model.eps, model.g1(state), model.g2(state)};
  if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z)) {
    throw std::runtime_error("model '" + model.id +
                             "' produced a non-finite drift");
  }
  return v;
}

State em_step_with_increments(const FastSlowModel& model, const State& state,
                              const NoiseIntensities& noise, double dt,
                              const double* dw) {
  const Vec3 v = drift(model, state);
  State next{state.x + v.x * dt, state.y + v.y * dt, state.z + v.z * dt};
  if (dw == nullptr) return next;

  double row[kMaxBrownianDim];
  const double fast_scale = noise.sigma / std::sqrt(model.eps);
  if (fast_scale != 0) {
    model.F(state, row);
    double acc = 0;
    for (int j = 0; j < model.k_bm; ++j) acc += row[j] * dw[j];
    next.x += fast_scale * acc;
  }
  if (noise.sigma_p != 0) {
    model.G1(state, row);
    double acc = 0;
    for (int j = 0; j < model.k_bm; ++j) acc += row[j] * dw[j];
    next.y += noise.sigma_p * acc;
    model.G2(state, row);
    acc = 0;
    for (int j = 0; j < model.k_bm; ++j) acc += row[j] * dw[j];
    next.z += noise.sigma_p * acc;
  }
  return next;
}

State em_step(const FastSlowModel& model, const State& state,
              const NoiseIntensities& noise, double dt, rng::Stream& stream) {
  if (noise.zero()) return em_step_with_increments(model, state, noise, dt, nullptr);
  double dw[kMaxBrownianDim];
  const double sd = std::sqrt(dt);
  for (int j = 0; j < model.k_bm; ++j) dw[j] = sd * stream.normal();
  return em_step_with_increments(model, state, noise, dt, dw);
}

State rk4_step(const FastSlowModel& model, const State& state, double dt) {
  auto shifted = [](const State& p, const Vec3& k, double h) {
    return State{p.x + h * k.x, p.y + h * k.y, p.z + h * k.z};
  };
  const Vec3 k1 = drift(model, state);
  const Vec3 k2 = drift(model, shifted(state, k1, dt / 2));
  const Vec3 k3 = drift(model, shifted(state, k2, dt / 2));
  const Vec3 k4 = drift(model, shifted(state, k3, dt));
  return State{state.x + dt / 6 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x),
               state.y + dt / 6 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y),
               state.z + dt / 6 * (k1.z + 2 * k2.z + 2 * k3.z + k4.z)};
}

void validate_config(const FastSlowModel& model, const SolverConfig& config) {
  const double dt = config.effective_dt(model);
  if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
  if (!(config.t_max > 0)) throw std::invalid_argument("t_max must be positive");
  // Resolve the 1/eps stiffness of the fast drift.
  if (model.eps < 1.0 && dt > model.eps / 10.0 * (1 + 1e-12)) {
    throw std::invalid_argument("dt must not exceed eps/10 for eps < 1");
  }
  if (model.k_bm < 1 || model.k_bm > kMaxBrownianDim) {
    throw std::invalid_argument("k_bm out of range");
  }
}

namespace {

Trajectory run_and_record(const FastSlowModel& model, const State& state0,
                          const NoiseIntensities& noise,
                          const SolverConfig& config) {
  if (!config.domain.contains(state0)) {
    throw std::invalid_argument("initial state outside the domain box");
  }
  Trajectory traj;
  traj.seed = config.seed;
  traj.stream = config.stream;
  traj.dt = config.effective_dt(model);
  traj.model_id = model.id;
  traj.times.reserve(std::size_t(config.t_max / traj.dt) + 2);
  traj.times.push_back(0);
  traj.states.push_back(state0);
  auto result = integrate_observe(
      model, state0, noise, config,
      [&](double, const State&, double s1, const State& p1) {
        traj.times.push_back(s1);
        traj.states.push_back(p1);
        return true;
      });
  if (result.escaped) {
    traj.escaped = true;
    traj.escape_time = result.last_time;
  }
  return traj;
}

}  // namespace

Trajectory integrate_det(const FastSlowModel& model, const State& state0,
                         const SolverConfig& config) {
  SolverConfig det = config;
  det.scheme = Scheme::rk4_deterministic;
  return run_and_record(model, state0, NoiseIntensities{}, det);
}

Trajectory integrate_sde(const FastSlowModel& model, const State& state0,
                         const NoiseIntensities& noise,
                         const SolverConfig& config) {
  SolverConfig em = config;
  em.scheme = Scheme::euler_maruyama;
  return run_and_record(model, state0, noise, em);
}

namespace {

Mat3 drift_jacobian_fd(const FastSlowModel& model, const State& state) {
  Mat3 jac;
  const double base = 1e-6;
  const double steps[3] = {base * (1 + std::abs(state.x)),
                           base * (1 + std::abs(state.y)),
                           base * (1 + std::abs(state.z))};
  for (int c = 0; c < 3; ++c) {
    State plus = state, minus = state;
    double* pc = c == 0 ? &plus.x : (c == 1 ? &plus.y : &plus.z);
    double* mc = c == 0 ? &minus.x : (c == 1 ? &minus.y : &minus.z);
    *pc += steps[c];
    *mc -= steps[c];
    const double inv = 1.0 / (2 * steps[c]);
    jac(0, c) = (model.f(plus) - model.f(minus)) * inv;
    jac(1, c) = (model.g1(plus) - model.g1(minus)) * inv;
    jac(2, c) = (model.g2(plus) - model.g2(minus)) * inv;
  }
  return jac;
}

}  // namespace

ASeries linearize(const FastSlowModel& model, const Trajectory& trajectory) {
  ASeries series;
  series.eps = model.eps;
  series.times = trajectory.times;
  series.mats.reserve(trajectory.size());
  for (const State& p : trajectory.states) {
    Mat3 jac = model.jacobian ? model.jacobian(p) : drift_jacobian_fd(model, p);
    // Block normalization eps*zeta' = A zeta: slow rows carry a factor eps.
    for (int c = 0; c < 3; ++c) {
      jac(1, c) *= model.eps;
      jac(2, c) *= model.eps;
    }
    series.mats.push_back(jac);
  }
  return series;
}

namespace {

// Piecewise-linear interpolation of A(s) between trajectory samples.
Mat3 interp_a(const ASeries& series, double s) {
  const auto& t = series.times;
  if (s <= t.front()) return series.mats.front();
  if (s >= t.back()) return series.mats.back();
  const auto it = std::upper_bound(t.begin(), t.end(), s);
  const std::size_t i = std::size_t(it - t.begin());
  const double w = (s - t[i - 1]) / (t[i] - t[i - 1]);
  return series.mats[i - 1] * (1 - w) + series.mats[i] * w;
}

constexpr double kOverflowCap = 1e300;

// One RK4 step of eps U' = A(s) U.
bool principal_step(const ASeries& series, double s, double h, Mat3& u) {
  const double inv_eps = 1.0 / series.eps;
  const Mat3 k1 = interp_a(series, s) * u * inv_eps;
  const Mat3 k2 = interp_a(series, s + h / 2) * (u + k1 * (h / 2)) * inv_eps;
  const Mat3 k3 = interp_a(series, s + h / 2) * (u + k2 * (h / 2)) * inv_eps;
  const Mat3 k4 = interp_a(series, s + h) * (u + k3 * h) * inv_eps;
  u = u + (k1 + k2 * 2 + k3 * 2 + k4) * (h / 6);
  return u.max_abs() < kOverflowCap;
}

}  // namespace

PrincipalSolution principal_solution(const ASeries& series, double r,
                                     const std::vector<double>& s_grid) {
  if (series.times.size() < 2) {
    throw std::invalid_argument("A-series needs at least two samples");
  }
  const double lo = series.times.front();
  const double hi = series.times.back();
  auto in_span = [&](double s) { return s >= lo - 1e-12 && s <= hi + 1e-12; };
  if (!in_span(r)) throw std::invalid_argument("anchor r outside trajectory span");
  for (double s : s_grid) {
    if (!in_span(s)) throw std::invalid_argument("target s outside trajectory span");
  }

  PrincipalSolution sol;
  sol.r_anchor = r;
  sol.times = s_grid;
  sol.mats.resize(s_grid.size());

  // Base step at the trajectory's resolution; direction per target.
  const double base_h = series.times[1] - series.times[0];
  for (std::size_t k = 0; k < s_grid.size(); ++k) {
    Mat3 u = Mat3::identity();
    const double target = s_grid[k];
    const double span = target - r;
    const int n = std::max(1, int(std::ceil(std::abs(span) / base_h)));
    const double h = span / n;
    double s = r;
    bool ok = true;
    if (span != 0) {
      for (int i = 0; i < n && ok; ++i) {
        ok = principal_step(series, s, h, u);
        s += h;
      }
    }
    if (!ok) {
      sol.overflowed = true;
      for (auto& v : u.m) v = std::clamp(v, -kOverflowCap, kOverflowCap);
    }
    sol.mats[k] = u;
  }
  return sol;
}

Mat3 principal_matrix(const ASeries& series, double r, double s,
                      bool* overflowed) {
  const PrincipalSolution sol = principal_solution(series, r, {s});
  if (overflowed) *overflowed = sol.overflowed;
  return sol.mats.front();
}

Mat3 diffusion_matrix(const FastSlowModel& model, const State& state) {
  double rows[3][kMaxBrownianDim];
  model.F(state, rows[0]);
  model.G1(state, rows[1]);
  model.G2(state, rows[2]);
  Mat3 d;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < model.k_bm; ++k) s += rows[i][k] * rows[j][k];
      d(i, j) = s;
    }
  return d;
}

namespace {

// Eigenvalues of a symmetric 3x3 by the trigonometric method.
std::array<double, 3> sym_eigs(const Mat3& a) {
  const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
  const double q = (a(0, 0) + a(1, 1) + a(2, 2)) / 3;
  if (p1 < 1e-300) return {a(0, 0), a(1, 1), a(2, 2)};
  const double p2 = (a(0, 0) - q) * (a(0, 0) - q) +
                    (a(1, 1) - q) * (a(1, 1) - q) +
                    (a(2, 2) - q) * (a(2, 2) - q) + 2 * p1;
  const double p = std::sqrt(p2 / 6);
  Mat3 b = a;
  for (int i = 0; i < 3; ++i) b(i, i) -= q;
  b = b * (1 / p);
  const double r = std::clamp(b.det() / 2, -1.0, 1.0);
  const double phi = std::acos(r) / 3;
  const double e1 = q + 2 * p * std::cos(phi);
  const double e3 = q + 2 * p * std::cos(phi + 2 * 3.14159265358979323846 / 3);
  return {e1, q * 3 - e1 - e3, e3};
}

}  // namespace

DiffusionCheck check_diffusion(const FastSlowModel& model, const Box& box,
                               int samples, std::uint64_t seed) {
  DiffusionCheck out;
  out.samples = samples;
  out.min_eig = std::numeric_limits<double>::infinity();
  out.max_eig = -std::numeric_limits<double>::infinity();
  rng::Stream stream(seed, 0);
  for (int i = 0; i < samples; ++i) {
    State p{box.lo.x + (box.hi.x - box.lo.x) * stream.uniform(),
            box.lo.y + (box.hi.y - box.lo.y) * stream.uniform(),
            box.lo.z + (box.hi.z - box.lo.z) * stream.uniform()};
    const Mat3 d = diffusion_matrix(model, p);
    if (!is_psd(d, 1e-10 * (1 + d.max_abs()))) ++out.psd_violations;
    const auto eigs = sym_eigs(d);
    for (double e : eigs) {
      out.min_eig = std::min(out.min_eig, e);
      out.max_eig = std::max(out.max_eig, e);
    }
  }
  if (model.ellipticity) {
    out.ellipticity_ok = out.min_eig >= model.ellipticity->first - 1e-10 &&
                         out.max_eig <= model.ellipticity->second + 1e-10;
  }
  return out;
}

void trajectory_to_csv(const Trajectory& trajectory, const std::string& path) {
  std::string body = "s,x,y,z\n";
  body.reserve(trajectory.size() * 80 + 16);
  char line[160];
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const State& p = trajectory.states[i];
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n",
                  trajectory.times[i], p.x, p.y, p.z);
    body += line;
  }
  io::write_file_atomic(path, body);
}

}  // namespace mmo::sde
