#ifndef MMO_FOLD_LOCAL_HPP
#define MMO_FOLD_LOCAL_HPP

#include <string>
#include <vector>

#include "mmo/sde_core.hpp"

namespace mmo::fold {

// Blown-up first-approximation system at a regular fold:
//   dx~/dtheta = theta + x~^2,
// obtained from eps dx/dy = y + x^2 by y = eps^(2/3) theta, x = eps^(1/3) x~.
struct RiccatiPoint {
  double x_t = 0;
  double theta = 0;
};

struct RiccatiPath {
  std::vector<RiccatiPoint> points;
  bool blew_up = false;  // |x~| passed 1e6; the jump leaves the local chart
};

RiccatiPath riccati_flow(double x_t0, double theta0, double theta_end,
                         double step = 1e-4);

// theta value of the distinguished solution at x~, seeded by the x~ -> -inf
// expansion theta = -x~^2 - 1/(2 x~) at x~ = -seed_x and integrated forward
// as dtheta/dx~ = 1/(theta + x~^2).
double riccati_theta_of_x(double seed_x, double x, double step = 1e-3);

struct AsymptoteResult {
  double theta_star = 0;
  double spread = 0;  // max pairwise difference of the per-seed estimates
  std::vector<double> seeds;
  std::vector<double> estimates;  // theta(X) + 1/X per seed
};

// Horizontal asymptote of the distinguished Riccati solution, Richardson
// extrapolated over the seed values. Throws when the per-seed estimates
// disagree by more than 1e-3.
AsymptoteResult riccati_asymptote(const std::vector<double>& seeds = {10, 20,
                                                                      40});

// Local fold model x' = (y + x^2 + cubic_x * x^3)/eps, y' = g1_hat,
// z' = g2_hat on the slow timescale, with unit diffusion directions.
struct FoldNormalFormParams {
  double eps = 1e-2;
  double sigma = 0, sigma_p = 0;
  double g1_hat = 1.0;
  double g2_hat = 0.0;
  double cubic_x = 0.0;  // optional higher-order toggle
};

sde::FastSlowModel fold_normal_form_model(const FoldNormalFormParams& params);

// eps-scaling study of the deterministic fold passage from s0:
//  - x at the fold (s=0) divided by eps^(1/3);
//  - sup over s in [-0.5, -eps^(2/3)] of dist(P(s), {y=-x^2}) * |s|^(1/2)/eps,
//    the distance taken normal to the critical parabola.
struct FoldScalingPoint {
  double eps = 0;
  double x_at_fold_over_cbrt = 0;
  double sup_dist_ratio = 0;
  double dist_at_quarter = 0;  // dist to the parabola at s = -0.25
};

struct FoldScalingReport {
  std::vector<FoldScalingPoint> points;
  double band_x_ratio = 0;     // max/min of x_at_fold_over_cbrt
  double band_dist_ratio = 0;  // max/min of sup_dist_ratio
};

FoldScalingReport fold_passage_scaling(const std::vector<double>& eps_grid,
                                       double s0 = -1.0);

// Report JSON: {"theta_star":..., "seeds":[...], "ratios_by_eps":[...]}
std::string fold_report_json(const AsymptoteResult& asym,
                             const FoldScalingReport& scaling);

}  // namespace mmo::fold

#endif  // MMO_FOLD_LOCAL_HPP
