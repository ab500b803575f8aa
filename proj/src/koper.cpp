#include "mmo/koper.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace mmo::koper {

bool NoiseMatrix::is_standard() const {
  const NoiseMatrix ref = standard();
  for (int i = 0; i < 9; ++i)
    if (m.m[i] != ref.m.m[i]) return false;
  return true;
}

double critical_manifold_y(double x) { return x * x * x - 3 * x; }

double critical_branch_x(double y, int branch) {
  if (branch != -1 && branch != 0 && branch != 1) {
    throw std::invalid_argument("branch must be -1, 0 or +1");
  }
  double x = branch == 0 ? 0.0 : branch * 1.5;
  for (int i = 0; i < 200; ++i) {
    const double f = critical_manifold_y(x) - y;
    const double fp = 3 * x * x - 3;
    if (std::abs(fp) < 1e-12) break;
    const double next = x - f / fp;
    if (std::abs(next - x) < 1e-15 * (1 + std::abs(x))) {
      x = next;
      break;
    }
    x = next;
  }
  if (std::abs(critical_manifold_y(x) - y) > 1e-10) {
    throw std::runtime_error("no critical-manifold point on this branch");
  }
  return x;
}

std::pair<FoldLine, FoldLine> fold_lines() {
  return {FoldLine{1.0, -2.0}, FoldLine{-1.0, 2.0}};
}

sde::FastSlowModel koper_model(const KoperParams& params,
                               const NoiseMatrix& noise) {
  if (!(params.eps1 > 0) || !(params.eps2 > 0)) {
    throw std::invalid_argument("eps1 and eps2 must be positive");
  }
  const double k = params.k, lambda = params.lambda, eps2 = params.eps2;
  const Mat3 m = noise.m;

  sde::FastSlowModel model;
  model.id = "koper";
  model.eps = params.eps1;
  model.k_bm = 3;
  model.f = [](const sde::State& p) { return p.y - p.x * p.x * p.x + 3 * p.x; };
  model.g1 = [k, lambda](const sde::State& p) {
    return k * p.x - 2 * (p.y + lambda) + p.z;
  };
  model.g2 = [lambda, eps2](const sde::State& p) {
    return eps2 * (lambda + p.y - p.z);
  };
  model.F = [m](const sde::State&, double* out) {
    out[0] = m(0, 0); out[1] = m(0, 1); out[2] = m(0, 2);
  };
  model.G1 = [m](const sde::State&, double* out) {
    out[0] = m(1, 0); out[1] = m(1, 1); out[2] = m(1, 2);
  };
  model.G2 = [m](const sde::State&, double* out) {
    out[0] = m(2, 0); out[1] = m(2, 1); out[2] = m(2, 2);
  };
  model.jacobian = [k, eps2](const sde::State& p) {
    Mat3 jac;
    jac.m = {3 - 3 * p.x * p.x, 1, 0, k, -2, 1, 0, eps2, -eps2};
    return jac;
  };
  if (noise.is_standard()) {
    // Eigenvalue range of D = M M^T for the benchmark matrix, with margin.
    model.ellipticity = std::pair<double, double>{0.1, 3.5};
  }
  return model;
}

Vec2 slow_flow(const KoperParams& params, double x, double z) {
  const double cx = critical_manifold_y(x);
  const double dx = params.k * x - 2 * (cx + params.lambda) + z;
  const double dz = (3 * x * x - 3) * (params.lambda + cx - z);
  return {dx, dz};
}

namespace {

FoldedSingularity classify(const KoperParams& params, bool upper) {
  FoldedSingularity s;
  s.on_upper_fold = upper;
  s.x = upper ? 1.0 : -1.0;
  s.z = 2 * params.lambda + (upper ? -4 - params.k : 4 + params.k);

  // Linearization [[k,1],[6(2+k-+lambda),0]] of the desingularized slow flow.
  const double c = 6 * (2 + params.k + (upper ? -params.lambda : params.lambda));
  const auto eigs = eig2(params.k, 1.0, c, 0.0);
  auto e0 = eigs[0], e1 = eigs[1];
  if (std::abs(e0) < std::abs(e1)) std::swap(e0, e1);
  s.eig_strong = e0;
  s.eig_weak = e1;

  const double real_tol = 1e-10;
  const bool real = std::abs(e0.imag()) <= real_tol * (1 + std::abs(e0)) &&
                    std::abs(e1.imag()) <= real_tol * (1 + std::abs(e1));
  if (!real) {
    s.kind = SingularityKind::focus;
    return s;
  }
  const double rs = e0.real(), rw = e1.real();
  if (rs * rw < 0) {
    s.kind = SingularityKind::saddle;
    return s;
  }
  s.kind = SingularityKind::node;
  if (rs != 0) {
    const double mu = rw / rs;
    s.mu = mu;
    if (mu > 0 && mu < 1) {
      // 2k+1 < 1/mu < 2k+3 determines the secondary-canard count.
      const double q = (1.0 / mu - 1.0) / 2.0;
      s.k_mu = int(std::floor(q));
      s.k_mu_boundary = std::abs(q - std::round(q)) < 1e-9;
    }
  }
  return s;
}

}  // namespace

std::vector<FoldedSingularity> folded_singularities(const KoperParams& params) {
  return {classify(params, true), classify(params, false)};
}

NodeFrame node_frame(const KoperParams& params) {
  const FoldedSingularity s = classify(params, true);
  if (s.kind != SingularityKind::node || !s.mu) {
    throw std::runtime_error("upper folded singularity is not a node");
  }
  NodeFrame frame;
  frame.x_star = s.x;
  frame.z_star = s.z;
  frame.mu = *s.mu;
  // Weak eigenvector of [[k,1],[c,0]]: (1, rho_w - k) in the (x,z) chart.
  frame.slope_x_per_z = 1.0 / (s.eig_weak.real() - params.k);
  return frame;
}

AssumptionsReport check_assumptions(const KoperParams& params,
                                    const sde::Box& box, int grid_n) {
  AssumptionsReport rep;
  const double fold_margin = 0.1;

  // Normal hyperbolicity of the three sheets away from the folds.
  rep.min_abs_fast_linearization = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid_n; ++i) {
    const double x = box.lo.x + (box.hi.x - box.lo.x) * i / grid_n;
    if (std::abs(std::abs(x) - 1.0) < fold_margin) continue;
    const double a = 3 - 3 * x * x;
    rep.min_abs_fast_linearization =
        std::min(rep.min_abs_fast_linearization, std::abs(a));
    const bool attracting = std::abs(x) > 1;
    if ((attracting && a >= 0) || (!attracting && a <= 0)) {
      rep.violations.push_back("fast linearization has wrong sign at x=" +
                               std::to_string(x));
    }
  }

  // Normal switching along L-: (df/dy, df/dz).(g1,g2) = g1(-1, 2, z).
  rep.min_normal_switching_lminus = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid_n; ++i) {
    const double z = box.lo.z + (box.hi.z - box.lo.z) * i / grid_n;
    const double g1 = -params.k - 2 * (2 + params.lambda) + z;
    rep.min_normal_switching_lminus =
        std::min(rep.min_normal_switching_lminus, std::abs(g1));
    if (std::abs(g1) < 1e-9) {
      rep.violations.push_back("normal switching vanishes on L- at z=" +
                               std::to_string(z));
    }
  }

  // Switching failure at the L+ folded singularity (must be exactly 0).
  {
    const auto sing = classify(params, true);
    rep.g1_at_upper_singularity =
        params.k * sing.x - 2 * (critical_manifold_y(sing.x) + params.lambda) +
        sing.z;
  }

  // Drop curves are {x=-2} on the left sheet and {x=+2} on the right sheet;
  // transversality of the slow flow is the x-component of the
  // desingularized field there.
  rep.min_drop_transversality = std::numeric_limits<double>::infinity();
  for (double xd : {-2.0, 2.0}) {
    for (int i = 0; i <= grid_n; ++i) {
      const double z = box.lo.z + (box.hi.z - box.lo.z) * i / grid_n;
      const double dx = slow_flow(params, xd, z).a;
      rep.min_drop_transversality =
          std::min(rep.min_drop_transversality, std::abs(dx));
      if (std::abs(dx) < 1e-9) {
        rep.violations.push_back("slow flow tangent to drop curve x=" +
                                 std::to_string(xd) + " at z=" +
                                 std::to_string(z));
      }
    }
  }

  rep.fold_nondegeneracy = 6.0;  // |d2f/dx2| = |-6x| at x = +-1
  return rep;
}

sde::State symmetry_map(const sde::State& p) { return {-p.x, -p.y, -p.z}; }

KoperParams symmetry_map(const KoperParams& params) {
  KoperParams q = params;
  q.lambda = -params.lambda;
  return q;
}

std::string params_to_json(const KoperParams& params, const NoiseMatrix& m) {
  nlohmann::json j;
  j["k"] = params.k;
  j["lambda"] = params.lambda;
  j["eps1"] = params.eps1;
  j["eps2"] = params.eps2;
  j["M"] = {{m.m(0, 0), m.m(0, 1), m.m(0, 2)},
            {m.m(1, 0), m.m(1, 1), m.m(1, 2)},
            {m.m(2, 0), m.m(2, 1), m.m(2, 2)}};
  return j.dump(2) + "\n";
}

std::pair<KoperParams, NoiseMatrix> params_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  KoperParams params;
  params.k = j.at("k").get<double>();
  params.lambda = j.at("lambda").get<double>();
  params.eps1 = j.at("eps1").get<double>();
  params.eps2 = j.value("eps2", 1.0);
  NoiseMatrix m = NoiseMatrix::standard();
  if (j.contains("M")) {
    const auto& rows = j.at("M");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m.m(r, c) = rows.at(r).at(c).get<double>();
  }
  return {params, m};
}

}  // namespace mmo::koper
