#ifndef MMO_KOPER_HPP
#define MMO_KOPER_HPP

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "mmo/sde_core.hpp"

namespace mmo::koper {

// eps1 * x' = y - x^3 + 3x
//        y' = k x - 2(y + lambda) + z
//        z' = eps2 (lambda + y - z)
struct KoperParams {
  double k = -10;
  double lambda = -7;
  double eps1 = 0.01;
  double eps2 = 1.0;
};

// Constant diffusion rows (F; G1; G2); scaled by sigma/sqrt(eps) resp.
// sigma_p inside the integrator.
struct NoiseMatrix {
  Mat3 m;

  // The correlated benchmark matrix used by all bundled experiments.
  static NoiseMatrix standard() {
    NoiseMatrix n;
    n.m.m = {1.0, 0.5, 0.2, 0.5, 1.0, 0.3, 0.2, 0.3, 1.0};
    return n;
  }
  bool is_standard() const;
};

double critical_manifold_y(double x);  // y = c(x) = x^3 - 3x

// x on the requested branch of the critical manifold with c(x) = y:
// branch +1 is x >= 1, -1 is x <= -1, 0 the middle sheet.
double critical_branch_x(double y, int branch);

struct FoldLine {
  double x, y;  // parametrized by z
};
// (L+, L-) = ({x=+1, y=-2}, {x=-1, y=+2})
std::pair<FoldLine, FoldLine> fold_lines();

sde::FastSlowModel koper_model(const KoperParams& params, const NoiseMatrix& m);

// Desingularized slow flow on the critical manifold (time reversed on the
// repelling sheet |x| < 1).
Vec2 slow_flow(const KoperParams& params, double x, double z);

enum class SingularityKind { node, focus, saddle };

struct FoldedSingularity {
  double x = 0, z = 0;
  std::complex<double> eig_strong, eig_weak;  // |strong| >= |weak|
  SingularityKind kind = SingularityKind::focus;
  std::optional<double> mu;  // weak/strong ratio, real same-sign pairs only
  std::optional<int> k_mu;   // secondary-canard count, folded nodes only
  bool k_mu_boundary = false;  // 1/mu within tolerance of an odd integer
  bool on_upper_fold = true;   // L+ vs L-
};

std::vector<FoldedSingularity> folded_singularities(const KoperParams& params);

// Local frame at the L+ folded node used to count rotations of full-model
// trajectories: deviation from the weak-eigendirection line through (x*,z*).
struct NodeFrame {
  double x_star = 0, z_star = 0;
  double slope_x_per_z = 0;  // weak direction in the (x,z) chart
  double mu = 0;

  double deviation(const sde::State& p) const {
    return (p.x - x_star) - (p.z - z_star) * slope_x_per_z;
  }
};

NodeFrame node_frame(const KoperParams& params);

struct AssumptionsReport {
  // min |df/dx| over grid points away from the folds (normal hyperbolicity)
  double min_abs_fast_linearization = 0;
  // min |normal switching product| along L- over the z grid
  double min_normal_switching_lminus = 0;
  // |g1| at the L+ folded singularity (switching failure, exact 0)
  double g1_at_upper_singularity = 0;
  // min |transversal slow-flow component| on the two drop curves
  double min_drop_transversality = 0;
  double fold_nondegeneracy = 0;  // |d2f/dx2| at x = +-1
  std::vector<std::string> violations;
};

AssumptionsReport check_assumptions(const KoperParams& params,
                                    const sde::Box& box, int grid_n = 64);

// (x,y,z,lambda) -> (-x,-y,-z,-lambda) maps solutions to solutions.
sde::State symmetry_map(const sde::State& p);
KoperParams symmetry_map(const KoperParams& params);

// Parameter files: {"k":..., "lambda":..., "eps1":..., "eps2":..., "M":[[...]]}
std::string params_to_json(const KoperParams& params, const NoiseMatrix& m);
std::pair<KoperParams, NoiseMatrix> params_from_json(const std::string& text);

}  // namespace mmo::koper

#endif  // MMO_KOPER_HPP
