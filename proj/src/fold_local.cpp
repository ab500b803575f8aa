#include "mmo/fold_local.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace mmo::fold {

namespace {

constexpr double kBlowUp = 1e6;

double rk4_scalar(double x, double t, double h, double (*f)(double, double)) {
  const double k1 = f(x, t);
  const double k2 = f(x + h / 2 * k1, t + h / 2);
  const double k3 = f(x + h / 2 * k2, t + h / 2);
  const double k4 = f(x + h * k3, t + h);
  return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
}

double riccati_rhs(double x, double theta) { return theta + x * x; }

// Inverted form for the distinguished solution: theta as a function of x~.
double inverse_rhs(double theta, double x) { return 1.0 / (theta + x * x); }

}  // namespace

RiccatiPath riccati_flow(double x_t0, double theta0, double theta_end,
                         double step) {
  if (!(step > 0)) throw std::invalid_argument("step must be positive");
  RiccatiPath path;
  double x = x_t0, theta = theta0;
  path.points.push_back({x, theta});
  const int n = int(std::ceil((theta_end - theta0) / step));
  for (int i = 0; i < n; ++i) {
    const double h = std::min(step, theta_end - theta);
    if (h <= 0) break;
    x = rk4_scalar(x, theta, h, riccati_rhs);
    theta += h;
    if (std::abs(x) > kBlowUp || !std::isfinite(x)) {
      path.blew_up = true;
      break;
    }
    path.points.push_back({x, theta});
  }
  return path;
}

double riccati_theta_of_x(double seed_x, double x, double step) {
  if (!(seed_x > 0)) throw std::invalid_argument("seed_x must be positive");
  double xi = -seed_x;
  // theta = -x~^2 - 1/(2 x~) + O(x~^-4) on the attracting branch.
  double theta = -xi * xi - 1.0 / (2 * xi);
  const int n = int(std::ceil((x - xi) / step));
  for (int i = 0; i < n; ++i) {
    const double h = std::min(step, x - xi);
    if (h <= 0) break;
    theta = rk4_scalar(theta, xi, h, inverse_rhs);
    xi += h;
  }
  return theta;
}

AsymptoteResult riccati_asymptote(const std::vector<double>& seeds) {
  if (seeds.size() < 2) throw std::invalid_argument("need at least two seeds");
  AsymptoteResult out;
  out.seeds = seeds;
  for (double X : seeds) {
    // theta(x~) = theta* - 1/x~ + O(x~^-3) on the outgoing branch.
    const double theta = riccati_theta_of_x(X, X, 5e-4);
    out.estimates.push_back(theta + 1.0 / X);
  }
  // Richardson step on the O(X^-3) remainder using the two largest seeds.
  const std::size_t n = out.estimates.size();
  const double ratio = seeds[n - 1] / seeds[n - 2];
  out.theta_star = out.estimates[n - 1] +
                   (out.estimates[n - 1] - out.estimates[n - 2]) /
                       (ratio * ratio * ratio - 1);
  for (double e : out.estimates) {
    out.spread = std::max(out.spread, std::abs(e - out.theta_star));
  }
  if (out.spread > 1e-3) {
    throw std::runtime_error("asymptote estimates did not stabilize");
  }
  return out;
}

sde::FastSlowModel fold_normal_form_model(const FoldNormalFormParams& params) {
  sde::FastSlowModel model;
  model.id = "fold_normal_form";
  model.eps = params.eps;
  model.k_bm = 3;
  const double c3 = params.cubic_x;
  model.f = [c3](const sde::State& p) {
    return p.y + p.x * p.x + c3 * p.x * p.x * p.x;
  };
  model.g1 = [g = params.g1_hat](const sde::State&) { return g; };
  model.g2 = [g = params.g2_hat](const sde::State&) { return g; };
  model.F = [](const sde::State&, double* out) {
    out[0] = 1; out[1] = 0; out[2] = 0;
  };
  model.G1 = [](const sde::State&, double* out) {
    out[0] = 0; out[1] = 1; out[2] = 0;
  };
  model.G2 = [](const sde::State&, double* out) {
    out[0] = 0; out[1] = 0; out[2] = 1;
  };
  model.jacobian = [c3](const sde::State& p) {
    Mat3 jac;
    jac.m = {2 * p.x + 3 * c3 * p.x * p.x, 1, 0, 0, 0, 0, 0, 0, 0};
    return jac;
  };
  return model;
}

namespace {

// Distance from a point to the critical parabola {y = -x^2}, via the
// normalized residual |y + x^2| / ||grad(y + x^2)||.
double parabola_distance(double x, double y) {
  return std::abs(y + x * x) / std::sqrt(1 + 4 * x * x);
}

}  // namespace

FoldScalingReport fold_passage_scaling(const std::vector<double>& eps_grid,
                                       double s0) {
  if (!(s0 < 0)) throw std::invalid_argument("s0 must be negative");
  FoldScalingReport rep;
  for (double eps : eps_grid) {
    FoldNormalFormParams params;
    params.eps = eps;
    const auto model = fold_normal_form_model(params);

    // Start on the attracting branch x = -sqrt(-y) at y = s0; with
    // g1_hat = 1 the slow coordinate is y(s) = s.
    sde::SolverConfig config;
    config.dt = eps / 40;
    config.t_max = -s0;
    config.domain.lo = {-10, -10, -10};
    config.domain.hi = {10, 10, 10};
    sde::State start{-std::sqrt(-s0), s0, 0};

    FoldScalingPoint pt;
    pt.eps = eps;
    const double window_hi = -std::pow(eps, 2.0 / 3.0);
    double sup_ratio = 0;
    double dist_quarter = 0;
    sde::State at_fold = start;
    sde::integrate_observe(
        model, start, sde::NoiseIntensities{}, config,
        [&](double, const sde::State&, double s1, const sde::State& p1) {
          const double s = s0 + s1;  // slow time relative to the fold
          if (s >= -0.5 && s <= window_hi) {
            const double d = parabola_distance(p1.x, p1.y);
            sup_ratio = std::max(d * std::sqrt(-s) / eps, sup_ratio);
          }
          if (std::abs(s + 0.25) < config.dt) {
            dist_quarter = parabola_distance(p1.x, p1.y);
          }
          at_fold = p1;
          return true;
        });
    pt.x_at_fold_over_cbrt = at_fold.x / std::cbrt(eps);
    pt.sup_dist_ratio = sup_ratio;
    pt.dist_at_quarter = dist_quarter;
    rep.points.push_back(pt);
  }

  auto band = [](auto&& get, const std::vector<FoldScalingPoint>& pts) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (const auto& p : pts) {
      const double v = std::abs(get(p));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    return hi / lo;
  };
  rep.band_x_ratio =
      band([](const FoldScalingPoint& p) { return p.x_at_fold_over_cbrt; },
           rep.points);
  rep.band_dist_ratio =
      band([](const FoldScalingPoint& p) { return p.sup_dist_ratio; },
           rep.points);
  return rep;
}

std::string fold_report_json(const AsymptoteResult& asym,
                             const FoldScalingReport& scaling) {
  nlohmann::json j;
  j["theta_star"] = asym.theta_star;
  j["seeds"] = asym.seeds;
  j["estimates"] = asym.estimates;
  nlohmann::json ratios = nlohmann::json::array();
  for (const auto& p : scaling.points) {
    ratios.push_back({{"eps", p.eps},
                      {"x_at_fold_over_cbrt_eps", p.x_at_fold_over_cbrt},
                      {"sup_dist_ratio", p.sup_dist_ratio}});
  }
  j["ratios_by_eps"] = ratios;
  j["band_x_ratio"] = scaling.band_x_ratio;
  j["band_dist_ratio"] = scaling.band_dist_ratio;
  return j.dump(2) + "\n";
}

}  // namespace mmo::fold
