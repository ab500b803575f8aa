#include "mmo/folded_node.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "mmo/io.hpp"

namespace mmo::fnode {

FnParams FnParams::from_original(double mu, double eps, double sigma,
                                 double sigma_p) {
  FnParams p;
  p.mu = mu;
  p.eps = eps;
  p.sigma_bar = sigma_bar_of(sigma, eps);
  p.sigma_bar_p = sigma_bar_of(sigma_p, eps);
  return p;
}

ZoomedState zoom_in(const sde::State& p, double eps) {
  const double rt = std::sqrt(eps);
  return {p.x / rt, p.y / eps, p.z / rt};
}

sde::State zoom_out(const ZoomedState& p, double eps) {
  const double rt = std::sqrt(eps);
  return {p.xb * rt, p.yb * eps, p.zb * rt};
}

double sigma_bar_of(double sigma, double eps) {
  return sigma * std::pow(eps, -0.75);
}

Vec2 weak_canard(double zb, double mu) { return {-zb, zb * zb - mu / 2}; }

Vec2 strong_canard(double zb, double mu) {
  const double w = zb / mu;
  return {-w, w * w - 0.5};
}

namespace {

constexpr double kBlowUp = 1e6;

}  // namespace

FnPath fn_flow(const ZoomedState& start, double mu, double zb_end,
               const FnFlowOptions& options) {
  if (!(mu > 0)) throw std::invalid_argument("mu must be positive");
  const double rt_eps = std::sqrt(options.eps);
  auto rhs = [&](double zb, double xb, double yb, double& dx, double& dy) {
    dx = (2 * yb - 2 * xb * xb +
          rt_eps * options.corr_x_cubic * xb * xb * xb) /
         mu;
    dy = (-2 * (1 + mu) * xb - 2 * zb +
          rt_eps * options.corr_y_mixed * xb * yb) /
         mu;
  };

  FnPath path;
  double xb = start.xb, yb = start.yb, zb = start.zb;
  path.points.push_back({xb, yb, zb});
  const double step = mu * options.step_factor;
  while (zb < zb_end - 1e-15) {
    const double h = std::min(step, zb_end - zb);
    double k1x, k1y, k2x, k2y, k3x, k3y, k4x, k4y;
    rhs(zb, xb, yb, k1x, k1y);
    rhs(zb + h / 2, xb + h / 2 * k1x, yb + h / 2 * k1y, k2x, k2y);
    rhs(zb + h / 2, xb + h / 2 * k2x, yb + h / 2 * k2y, k3x, k3y);
    rhs(zb + h, xb + h * k3x, yb + h * k3y, k4x, k4y);
    xb += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
    yb += h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y);
    zb += h;
    if (std::abs(xb) > kBlowUp || std::abs(yb) > kBlowUp ||
        !std::isfinite(xb) || !std::isfinite(yb)) {
      path.blew_up = true;
      break;
    }
    path.points.push_back({xb, yb, zb});
  }
  return path;
}

double rectified_eta(double xb, double yb, double mu) {
  return yb - xb * xb + (1 + mu) / 2;
}

EtaMapResult eta_transition_map(double eta_star, double zb_star, double xb,
                                double mu, double alpha, double beta) {
  if (!(mu > 0 && mu < 1)) throw std::invalid_argument("mu must be in (0,1)");
  if (!(beta > 0 && beta < alpha && alpha <= 1)) {
    throw std::invalid_argument("need 0 < beta < alpha <= 1");
  }
  EtaMapResult out;
  out.precondition_ok = std::abs(eta_star) <= std::pow(mu, alpha) &&
                        std::abs(zb_star) <= std::pow(mu, beta);
  // Int_0^w exp(-u^2/2) du = sqrt(pi/2) erf(w/sqrt(2)).
  const double w = 2 * xb;
  const double gauss =
      std::sqrt(3.14159265358979323846 / 2) * std::erf(w / std::sqrt(2.0));
  out.eta = std::exp(2 * xb * xb) * (eta_star + zb_star * gauss);
  out.zb = zb_star - mu * xb / (1 + mu);
  return out;
}

double first_integral_K(double u1, double u2, double mu) {
  return (1 + 2 * (u2 - u1 * u1) / (1 + mu)) * std::exp(-2 * u2 / (1 + mu));
}

double first_integral_dK_dzb(double u1, double u2, double zb, double mu) {
  return -16 * zb * u1 * u1 * std::exp(-2 * u2 / (1 + mu)) / ((1 + mu) * mu);
}

std::vector<UvPoint> fn_variational_flow(double u1_0, double u2_0, double zb0,
                                         double zb_end, double mu,
                                         const FnVariationalOptions& options) {
  if (!(mu > 0)) throw std::invalid_argument("mu must be positive");
  auto rhs = [&](double zb, double u1, double u2, double& d1, double& d2) {
    const double zc = options.frozen_zb ? *options.frozen_zb : zb;
    d1 = (4 * zc * u1 + 2 * u2 - 2 * u1 * u1) / mu;
    d2 = (-2 * (1 + mu) * u1) / mu;
  };
  std::vector<UvPoint> path;
  double u1 = u1_0, u2 = u2_0, zb = zb0;
  path.push_back({u1, u2, zb});
  const double step = mu * options.step_factor;
  while (zb < zb_end - 1e-15) {
    const double h = std::min(step, zb_end - zb);
    double k11, k12, k21, k22, k31, k32, k41, k42;
    rhs(zb, u1, u2, k11, k12);
    rhs(zb + h / 2, u1 + h / 2 * k11, u2 + h / 2 * k12, k21, k22);
    rhs(zb + h / 2, u1 + h / 2 * k21, u2 + h / 2 * k22, k31, k32);
    rhs(zb + h, u1 + h * k31, u2 + h * k32, k41, k42);
    u1 += h / 6 * (k11 + 2 * k21 + 2 * k31 + k41);
    u2 += h / 6 * (k12 + 2 * k22 + 2 * k32 + k42);
    zb += h;
    if (!std::isfinite(u1) || !std::isfinite(u2) || std::abs(u1) > kBlowUp) {
      break;
    }
    path.push_back({u1, u2, zb});
  }
  return path;
}

FSolveInfo level_f_info(double t) {
  FSolveInfo out;
  if (t == 0) return out;  // f(0) = 0 exactly

  // Deep negative branch: f = -1 + w with w = e^(-1-2t^2)(1 + w + ...);
  // below the double-precision floor the residual is the analytic w itself.
  if (t <= -2.0) {
    const double log_w = -1 - 2 * t * t;
    if (log_w < -700) {
      out.f = -1.0;
      out.residual = 0.0;  // true root within one ulp of -1
      return out;
    }
    double w = std::exp(log_w);
    for (int i = 0; i < 50; ++i) {
      // Fixed point w = e^(w - 1 - 2t^2); converges since w << 1.
      const double next = std::exp(w + log_w);
      if (next == w) break;
      w = next;
      ++out.iterations;
    }
    out.f = w - 1.0;
    out.residual = std::abs(w - 1 - std::log(w) - 2 * t * t);
    return out;
  }

  // Newton on g(f) = f - log(1+f) - 2 t^2 with branch-aware seeding.
  double f;
  if (std::abs(t) < 0.5) {
    f = 2 * t + (4.0 / 3.0) * t * t;  // f = 2t + O(t^2) near 0
  } else if (t > 0) {
    f = 2 * t * t + std::log1p(2 * t * t);  // f ~ 2t^2 for large t
  } else {
    f = -1 + std::exp(-1 - 2 * t * t);
  }
  const double target = 2 * t * t;
  for (int i = 0; i < 100; ++i) {
    const double g = f - std::log1p(f) - target;
    out.residual = std::abs(g);
    if (out.residual < 1e-13) break;
    const double gp = f / (1 + f);
    double next = f - g / gp;
    // Keep iterates on the correct branch: f > 0 for t > 0, f in (-1,0)
    // for t < 0 (g is monotone on each branch).
    if (t > 0 && next <= 0) next = f / 2;
    if (t < 0) next = std::clamp(next, -1 + 1e-12 * (1 + f), -1e-300);
    f = next;
    ++out.iterations;
  }
  out.f = f;
  out.residual = std::abs(f - std::log1p(f) - target);
  if (out.residual >= 1e-12) {
    throw std::runtime_error("level_f did not converge at t=" +
                             std::to_string(t));
  }
  return out;
}

double level_f(double t) { return level_f_info(t).f; }

Vec2 level_to_uv(double K, double phi, double mu) {
  if (!(K > 0 && K <= 1)) throw std::invalid_argument("K must be in (0,1]");
  if (K == 1) return {0, 0};
  const double log_k = std::abs(std::log(K));
  const double u1 = std::sqrt((1 + mu) / 2 * log_k) * std::sin(phi);
  const double x_arg = std::sqrt(log_k / 2) * std::cos(phi);
  const double u2 = u1 * u1 + (1 + mu) / 2 * level_f(x_arg);
  return {u1, u2};
}

LevelCoords uv_to_level(double u1, double u2, double mu) {
  LevelCoords out;
  if (u1 == 0 && u2 == 0) {
    out.degenerate = true;
    return out;
  }
  out.K = first_integral_K(u1, u2, mu);
  if (!(out.K > 0) || out.K >= 1) {
    // K = 1 is the weak-canard level itself; the angle is undefined there.
    out.degenerate = out.K >= 1;
    if (!out.degenerate) throw std::runtime_error("state outside K > 0 region");
    return out;
  }
  const double log_k = std::abs(std::log(out.K));
  // Recover X from f via 2 X^2 = f - log(1+f), sign X = sign f.
  const double f = 2 * (u2 - u1 * u1) / (1 + mu);
  const double x_mag2 = (f - std::log1p(f)) / 2;
  const double x_arg = (f >= 0 ? 1 : -1) * std::sqrt(std::max(0.0, x_mag2));
  const double sin_phi = u1 / std::sqrt((1 + mu) / 2 * log_k);
  const double cos_phi = x_arg / std::sqrt(log_k / 2);
  out.phi = std::atan2(sin_phi, cos_phi);
  if (out.phi < 0) out.phi += 2 * 3.14159265358979323846;
  return out;
}

int halfturn_count(std::span<const double> u1, double hysteresis) {
  int count = 0;
  int sign = 0;
  for (double v : u1) {
    if (std::abs(v) <= hysteresis) continue;
    const int s = v > 0 ? 1 : -1;
    if (sign != 0 && s != sign) ++count;
    sign = s;
  }
  return count;
}

CanardInfo sector_from_halfturns(int halfturns, double mu, double noise_sum,
                                 double c0) {
  if (!(mu > 0 && mu < 1)) throw std::invalid_argument("mu must be in (0,1)");
  CanardInfo info;
  info.halfturns = halfturns;
  info.sector_k = halfturns >= 1 ? (halfturns - 1) / 2 : 0;
  info.k_star_low = int(std::ceil(1.0 / std::sqrt(mu)));
  if (noise_sum > 0 && noise_sum < 1) {
    info.k_star_high =
        int(std::ceil(std::sqrt(std::abs(std::log(noise_sum)) / mu)));
  } else {
    info.k_star_high = info.k_star_low;
  }
  info.classification = info.sector_k <= c0 * info.k_star_low
                            ? SectorClass::inner
                            : SectorClass::outer;
  return info;
}

CanardInfo rotation_sector(const FnPath& path, double mu, double noise_sum,
                           double c0, double hysteresis) {
  std::vector<double> u1;
  u1.reserve(path.points.size());
  for (const auto& p : path.points) {
    u1.push_back(p.xb - weak_canard(p.zb, mu).a);
  }
  return sector_from_halfturns(halfturn_count(u1, hysteresis), mu, noise_sum,
                               c0);
}

void sector_scan_to_csv(const std::vector<SectorScanRow>& rows,
                        const std::string& path) {
  std::string body = "z_start,sector,halfturns,classification\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%.17g,%d,%d,%s\n", r.z_start, r.sector,
                  r.halfturns,
                  r.classification == SectorClass::inner ? "inner" : "outer");
    body += line;
  }
  io::write_file_atomic(path, body);
}

}  // namespace mmo::fnode
