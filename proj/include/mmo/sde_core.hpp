#ifndef MMO_SDE_CORE_HPP
#define MMO_SDE_CORE_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mmo/linalg.hpp"
#include "mmo/rng.hpp"

namespace mmo::sde {

struct State {
  double x = 0, y = 0, z = 0;  // one fast, two slow variables

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

struct Box {
  Vec3 lo{-4, -10, -20};
  Vec3 hi{4, 10, 10};

  bool contains(const State& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y &&
           p.z >= lo.z && p.z <= hi.z;
  }
};

struct NoiseIntensities {
  double sigma = 0;    // fast-variable intensity
  double sigma_p = 0;  // slow-variable intensity

  bool zero() const { return sigma == 0.0 && sigma_p == 0.0; }
};

constexpr int kMaxBrownianDim = 8;

using DriftFn = std::function<double(const State&)>;
// Writes k_bm diffusion-row entries into out.
using DiffusionRowFn = std::function<void(const State&, double* out)>;

// The slow-timescale system
//   dx = (f/eps) ds + (sigma/sqrt(eps)) F dW
//   dy = g1 ds      + sigma_p G1 dW
//   dz = g2 ds      + sigma_p G2 dW
// with one k_bm-dimensional Brownian motion shared by all three rows.
struct FastSlowModel {
  std::string id;
  double eps = 1.0;
  int k_bm = 1;
  DriftFn f, g1, g2;
  DiffusionRowFn F, G1, G2;
  // Analytic Jacobian of the drift (f,g1,g2); finite differences when absent.
  std::function<Mat3(const State&)> jacobian;
  // Declared eigenvalue range [c_minus, c_plus] of the diffusion matrix.
  std::optional<std::pair<double, double>> ellipticity;
};

enum class Scheme { euler_maruyama, rk4_deterministic };

struct SolverConfig {
  double dt = 0;  // zero means eps/20
  double t_max = 10;
  Scheme scheme = Scheme::euler_maruyama;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  Box domain;

  double effective_dt(const FastSlowModel& model) const {
    return dt > 0 ? dt : model.eps / 20.0;
  }
};

struct Trajectory {
  std::vector<double> times;  // strictly increasing, slow timescale
  std::vector<State> states;
  bool escaped = false;
  double escape_time = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  double dt = 0;
  std::string model_id;

  const State& back() const { return states.back(); }
  std::size_t size() const { return times.size(); }
};

// Slow-timescale drift (dx/ds carries the 1/eps factor). Throws on
// non-finite model output.
Vec3 drift(const FastSlowModel& model, const State& state);

// One Euler-Maruyama step with externally supplied Brownian increments
// dW[0..k_bm), each ~ N(0, dt).
State em_step_with_increments(const FastSlowModel& model, const State& state,
                              const NoiseIntensities& noise, double dt,
                              const double* dw);

// One Euler-Maruyama step; the same Brownian increment vector feeds all
// three rows, so cross-variable noise correlations are preserved.
State em_step(const FastSlowModel& model, const State& state,
              const NoiseIntensities& noise, double dt, rng::Stream& stream);

State rk4_step(const FastSlowModel& model, const State& state, double dt);

// Streaming integration: observer(s0, p0, s1, p1) is called after every
// accepted step and may return false to stop. Domain escape stops the loop
// before the escaping state is handed to the observer.
struct StepLoopResult {
  double last_time = 0;
  State last_state;
  bool escaped = false;
  bool stopped_by_observer = false;
};

void validate_config(const FastSlowModel& model, const SolverConfig& config);

template <typename Observer>
StepLoopResult integrate_observe(const FastSlowModel& model,
                                 const State& state0,
                                 const NoiseIntensities& noise,
                                 const SolverConfig& config,
                                 Observer&& observer) {
  validate_config(model, config);
  const double dt = config.effective_dt(model);
  rng::Stream rng(config.seed, config.stream);
  const bool stochastic =
      config.scheme == Scheme::euler_maruyama && !noise.zero();

  StepLoopResult out;
  out.last_time = 0;
  out.last_state = state0;
  double s = 0;
  State p = state0;
  while (s < config.t_max - 1e-15 * config.t_max) {
    const double h = std::min(dt, config.t_max - s);
    State q;
    if (config.scheme == Scheme::rk4_deterministic) {
      q = rk4_step(model, p, h);
    } else if (stochastic) {
      q = em_step(model, p, noise, h, rng);
    } else {
      // Zero noise: the Euler-Maruyama step reduces to explicit Euler.
      q = em_step_with_increments(model, p, noise, h, nullptr);
    }
    const double s1 = s + h;
    if (!config.domain.contains(q)) {
      out.escaped = true;
      out.last_time = s;
      out.last_state = p;
      return out;
    }
    if (!observer(s, p, s1, q)) {
      out.stopped_by_observer = true;
      out.last_time = s1;
      out.last_state = q;
      return out;
    }
    s = s1;
    p = q;
  }
  out.last_time = s;
  out.last_state = p;
  return out;
}

// RK4 on the noise-free field.
Trajectory integrate_det(const FastSlowModel& model, const State& state0,
                         const SolverConfig& config);

// Euler-Maruyama; bit-for-bit reproducible for fixed (seed, stream, dt,
// t_max). Domain escape is recorded in the trajectory, not thrown.
Trajectory integrate_sde(const FastSlowModel& model, const State& state0,
                         const NoiseIntensities& noise,
                         const SolverConfig& config);

// Time series of the linearization A(s) = d(f, eps*g1, eps*g2)/d(x,y,z)
// along a deterministic trajectory, normalized so that eps * zeta' = A zeta.
struct ASeries {
  std::vector<double> times;
  std::vector<Mat3> mats;
  double eps = 1;
};

ASeries linearize(const FastSlowModel& model, const Trajectory& trajectory);

// Principal solution U(s,r) of eps U' = A(s) U, U(r,r) = I, sampled on
// s_grid. Entries beyond 1e300 saturate the overflow flag (expected along
// repelling stretches); consumers must check it.
struct PrincipalSolution {
  double r_anchor = 0;
  std::vector<double> times;
  std::vector<Mat3> mats;
  bool overflowed = false;

  // Blocks of U in the (fast | slow,slow) partition.
  static double block_xx(const Mat3& u) { return u(0, 0); }
  static Vec2 block_xe(const Mat3& u) { return {u(0, 1), u(0, 2)}; }
  static Vec2 block_ex(const Mat3& u) { return {u(1, 0), u(2, 0)}; }
  static double block_ex_norm(const Mat3& u) {
    return std::sqrt(u(1, 0) * u(1, 0) + u(2, 0) * u(2, 0));
  }
};

PrincipalSolution principal_solution(const ASeries& series, double r,
                                     const std::vector<double>& s_grid);

// Convenience: U(s,r) for a single target time.
Mat3 principal_matrix(const ASeries& series, double r, double s,
                      bool* overflowed = nullptr);

// Samples the diffusion matrix D = (F;G)(F;G)^T at random states in the box
// and reports PSD violations plus the eigenvalue range when the model
// declares ellipticity bounds.
struct DiffusionCheck {
  int samples = 0;
  int psd_violations = 0;
  double min_eig = 0;
  double max_eig = 0;
  bool ellipticity_ok = true;
};

Mat3 diffusion_matrix(const FastSlowModel& model, const State& state);
DiffusionCheck check_diffusion(const FastSlowModel& model, const Box& box,
                               int samples, std::uint64_t seed);

// CSV export: header "s,x,y,z", 17 significant digits, LF line endings.
void trajectory_to_csv(const Trajectory& trajectory, const std::string& path);

}  // namespace mmo::sde

#endif  // MMO_SDE_CORE_HPP
