#ifndef MMO_ANALYSIS_HPP
#define MMO_ANALYSIS_HPP

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmo/sections.hpp"
#include "mmo/sde_core.hpp"

namespace mmo::analysis {

// ---------------------------------------------------------------------------
// Monte-Carlo ensembles over one section-to-section transition.
// Realization i draws from stream (base_seed, stream_offset + i); results are
// independent of thread count and accumulation order.
// ---------------------------------------------------------------------------

struct EnsembleSpec {
  std::function<sde::FastSlowModel(double eps)> model_for_eps;
  double eps = 0.01;
  sde::State start;
  sections::Section target;
  std::string source_id;  // bookkeeping only
  sde::NoiseIntensities noise;
  int n_realizations = 100;
  std::uint64_t base_seed = 1;
  std::uint64_t stream_offset = 0;
  double dt_factor = 1.0 / 20.0;  // dt = eps * dt_factor
  double t_max = 50;
  sde::Box domain;

  sde::SolverConfig solver(double dt_eps) const {
    sde::SolverConfig c;
    c.dt = dt_eps * dt_factor;
    c.t_max = t_max;
    c.seed = base_seed;
    c.domain = domain;
    return c;
  }
};

struct Deviation {
  Vec3 d;
  sections::HitStatus status = sections::HitStatus::timeout;
};

struct EnsembleResult {
  sections::HitRecord reference;  // deterministic hit
  std::vector<Deviation> deviations;
  int n_timeout = 0;
  int n_escape = 0;
  bool degraded = false;  // more than 20% of runs failed
  double eps = 0;
  double sigma = 0, sigma_p = 0;
};

EnsembleResult run_ensemble(const EnsembleSpec& spec);
// Plain-loop reference used to pin down the parallel path bit-for-bit.
EnsembleResult run_ensemble_serial(const EnsembleSpec& spec);

struct SpreadStats {
  Vec3 mean;
  Vec3 stddev;  // unbiased, per coordinate
  int n_effective = 0;
  int n_escape = 0;
  int n_timeout = 0;
  bool degraded = false;
};

// Throws when fewer than two effective realizations are available.
SpreadStats spreading_stats(const EnsembleResult& ensemble);

// ---------------------------------------------------------------------------
// Scaling sweeps and log-log fits.
// ---------------------------------------------------------------------------

struct SlopeFit {
  double slope = 0;
  double intercept = 0;
  double r_squared = 0;
  std::string coordinate;
  double grid_lo = 0, grid_hi = 0;
  int points_used = 0;
};

SlopeFit fit_loglog(const std::vector<double>& xs,
                    const std::vector<double>& ys,
                    const std::string& coordinate);

struct SweepPoint {
  double value = 0;  // sigma or eps
  SpreadStats stats;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::vector<SlopeFit> fits;  // per in-plane coordinate of the target
};

std::vector<double> log_grid(double lo, double hi, int n);

// Noise sweep at fixed eps; grid entries are (sigma, sigma_p) pairs.
SweepResult sweep_noise(const EnsembleSpec& spec,
                        const std::vector<std::pair<double, double>>& grid);

// Epsilon sweep at fixed noise; the model and dt are rebuilt per grid point.
SweepResult sweep_epsilon(const EnsembleSpec& spec,
                          const std::vector<double>& eps_grid);

void sweep_to_csv(const SweepResult& sweep, const std::string& path);
std::string fits_to_json(const std::vector<SlopeFit>& fits);

// ---------------------------------------------------------------------------
// Fluctuation-size predictions per transition (orders of magnitude).
// ---------------------------------------------------------------------------

enum class Transition {
  s2_to_s3,
  s3_to_s4,
  s4_to_s4p,   // approach of the regular fold
  s4p_to_s5,   // jump past the regular fold
  s5_to_s6,
  s6_to_s1,
  s1_to_s1p,   // approach of the folded node
  s1p_to_s1pp, // passage of the folded node (needs mu)
  s1pp_to_s2,  // escape from the folded node
};

Transition transition_from_string(const std::string& name);
std::string to_string(Transition t);

struct OrderPrediction {
  std::optional<double> dx, dy, dz;
};

OrderPrediction predicted_order(Transition t, double sigma, double sigma_p,
                                double eps, double mu = 0);

// ---------------------------------------------------------------------------
// Probability-bound evaluators. Each returns the literal right-hand side of
// the corresponding deviation estimate; values above 1 are vacuous and are
// returned as-is. The constants kappa, C, h0 are calibration outputs, not
// model inputs.
// ---------------------------------------------------------------------------

struct BoundParams {
  double kappa = 1.0;
  double C = 1.0;
  double h0 = 1.0;
  double gamma = 1.0;  // exponent of the |log sigma| prefactor
};

enum class BoundId {
  slow_segment,       // deviations over O(1) slow time near attracting sheets
  fold_approach,      // approach of the regular fold
  fold_escape,        // jump past the regular fold
  node_approach,      // approach of the folded node, s <= -sqrt(eps)
  node_neighborhood,  // oscillation region of the folded node
  node_escape,        // escape from the folded node
  global_return,      // full S2 -> S1 composition
  inner_sector,       // local map for inner sectors
  outer_entry,        // outer sectors: probability of early escape
  outer_z_tail,       // outer sectors: tail of the exit z-coordinate
  outer_y_interval,   // outer sectors: concentration of y around an interval
};

BoundId bound_from_string(const std::string& name);

struct BoundArgs {
  std::optional<double> h, h1, h2;
  std::optional<double> sigma, sigma_p;
  std::optional<double> eps, mu;
  std::optional<double> s;  // current slow time (magnitude, node-relative)
  std::optional<double> z;  // threshold for the outer z-tail bound
  std::optional<double> theta_span;  // elapsed time of the estimate window
};

double eval_bound(BoundId id, const BoundArgs& args, const BoundParams& params);

// ---------------------------------------------------------------------------
// Empirical exceedance calibration: fits log P{|deviation| > h} against
// h^2 / scale^2, returning kappa_hat = -slope and the fit quality.
// ---------------------------------------------------------------------------

struct ExceedanceFit {
  double kappa_hat = 0;
  double C_hat = 1;  // exp(intercept): prefactor that makes the fitted
                     // bound tight on the sampled exceedance curve
  double r_squared = 0;
  double scale = 0;
  int points_used = 0;
  std::vector<std::pair<double, double>> curve;  // (h, empirical probability)
};

ExceedanceFit exceedance_calibration(const std::vector<double>& deviations,
                                     double scale, int n_h = 12,
                                     double h_lo_quantile = 0.5,
                                     double h_hi_quantile = 0.995);

// Constants fitted from data, never asserted a priori: kappa from the
// exceedance slope, C from the matching prefactor.
BoundParams calibrated_bound_params(const ExceedanceFit& fit);

// ---------------------------------------------------------------------------
// Martingale tail bound  P{sup_s ||M_s|| >= h} <= 2 sum_i e^(-gamma_i h^2 / 2 V_i)
// and its Monte-Carlo domination check on simulated Brownian suprema.
// ---------------------------------------------------------------------------

double bernstein_bound(double h, const std::vector<double>& variances,
                       const std::vector<double>& gammas);

struct BernsteinMcSpec {
  int n_paths = 10000;
  double t = 1.0;
  double dt = 1e-3;
  std::vector<double> h_factors = {0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4};  // h = f*sqrt(t)
  std::uint64_t seed = 2024;
};

struct BernsteinMcRow {
  double h = 0;
  double bound = 0;
  double empirical = 0;
  double std_error = 0;  // binomial
  bool dominated = true;  // empirical <= bound + 3 se
};

std::vector<BernsteinMcRow> bernstein_mc_check(const BernsteinMcSpec& spec);

// ---------------------------------------------------------------------------
// Quadrature check of the exponential-kernel scaling
//   Int_{s0}^{s} e^(alpha(s,r)/eps) |a(r)|^nu dr  ~  eps |a(s)|^(nu-1)
// with a(s) = -(|s|^(1/2) + eps^(1/3)). The nu = 0 case is the one the
// deviation estimates rest on; the evaluator reports the ratio of the
// quadrature value to the asymptotic scale across (nu, eps, s).
// ---------------------------------------------------------------------------

struct ScalingCheckRow {
  double nu = 0, eps = 0, s = 0;
  double integral = 0;
  double formula = 0;
  double ratio = 0;
};

struct ScalingCheckReport {
  std::vector<ScalingCheckRow> rows;
  double ratio_max_over_min = 0;
};

ScalingCheckReport kernel_scaling_check(const std::vector<double>& nus,
                                       const std::vector<double>& eps_grid,
                                       double s0 = -1.0);

// ---------------------------------------------------------------------------
// Saturation model for the sector-to-sector map: the stochastic map follows
// the deterministic one below the saturation sector k* and freezes at
// Pi_det(k*) above it.
// ---------------------------------------------------------------------------

struct SaturationModel {
  std::vector<double> pi_det;  // Pi_det(k), k = 0..n-1
  int k_star = 0;
  int k_star_low = 0, k_star_high = 0;
  int k_det = 0;        // fixed point of the deterministic map
  int fixed_point = 0;  // max(k_det, Pi_det(k*))
  double n_stoch = 0;
  double n_det = 0;
  bool masked = false;          // fluctuations dominate the small oscillations
  bool pi_det_monotone = true;  // warning flag when not decreasing
};

SaturationModel saturation_predict(const std::vector<double>& pi_det,
                                   double mu, double sigma, double sigma_p,
                                   double eps,
                                   std::optional<int> k_star_choice = {});

}  // namespace mmo::analysis

#endif  // MMO_ANALYSIS_HPP
