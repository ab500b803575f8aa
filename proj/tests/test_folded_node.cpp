#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmo/folded_node.hpp"

using namespace mmo;

namespace {
constexpr double kMu = 0.0685;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

TEST_CASE("zoom maps are exact inverses") {
  const double eps = 0.01;
  const sde::State p{0.1, 0.01, 0.1};
  const auto zoomed = fnode::zoom_in(p, eps);
  CHECK(zoomed.xb == doctest::Approx(1.0));
  CHECK(zoomed.yb == doctest::Approx(1.0));
  CHECK(zoomed.zb == doctest::Approx(1.0));
  const auto back = fnode::zoom_out(zoomed, eps);
  CHECK(back.x == doctest::Approx(p.x).epsilon(1e-14));
  CHECK(back.y == doctest::Approx(p.y).epsilon(1e-14));
  CHECK(back.z == doctest::Approx(p.z).epsilon(1e-14));

  // Intensity map sigma_bar = eps^(-3/4) sigma.
  CHECK(fnode::sigma_bar_of(1e-3, 0.01) ==
        doctest::Approx(0.0316227766).epsilon(1e-8));
}

TEST_CASE("singular canards") {
  const auto weak0 = fnode::weak_canard(0, kMu);
  CHECK(weak0.a == 0.0);
  CHECK(weak0.b == -kMu / 2);

  const auto strong = fnode::strong_canard(kMu, kMu);
  CHECK(strong.a == doctest::Approx(-1.0));
  CHECK(strong.b == doctest::Approx(0.5));

  // The weak canard is an exact orbit of the zoomed flow.
  const auto w = fnode::weak_canard(-1.0, kMu);
  const auto path = fnode::fn_flow({w.a, w.b, -1.0}, kMu, 1.0);
  REQUIRE(!path.blew_up);
  double dev = 0;
  for (const auto& p : path.points) {
    dev = std::max(dev, std::abs(p.xb - fnode::weak_canard(p.zb, kMu).a));
  }
  CHECK(dev < 1e-8);
}

TEST_CASE("zoomed flow symmetry under (xb,zb) -> (-xb,-zb)") {
  // If (xb, yb)(zb) solves the flow, so does (-xb(-zb), yb(-zb)).
  const auto w = fnode::weak_canard(-1.0, kMu);
  const auto fwd = fnode::fn_flow({w.a + 0.1, w.b, -1.0}, kMu, 1.0);
  REQUIRE(!fwd.blew_up);
  const auto& end = fwd.points.back();
  const auto mirrored = fnode::fn_flow({-end.xb, end.yb, -1.0}, kMu, 1.0);
  REQUIRE(!mirrored.blew_up);
  const auto& back = mirrored.points.back();
  CHECK(back.xb == doctest::Approx(-(w.a + 0.1)).epsilon(1e-5));
  CHECK(back.yb == doctest::Approx(w.b).epsilon(1e-5));
}

TEST_CASE("generic funnel orbits twist around the weak canard") {
  // Just outside the strong canard one half-turn is still picked up.
  const auto s = fnode::strong_canard(-1.0, kMu);
  const auto outer = fnode::fn_flow({s.a, s.b + 0.01, -1.0}, kMu, 1.5);
  const auto outer_info = fnode::rotation_sector(outer, kMu);
  CHECK(outer_info.halfturns >= 1);

  // The funnel side picks up several twists.
  const auto funnel = fnode::fn_flow({s.a, s.b - 0.01, -1.0}, kMu, 1.5);
  const auto funnel_info = fnode::rotation_sector(funnel, kMu);
  CHECK(funnel_info.halfturns >= 3);

  // Orbits released right next to the weak canard rotate the most.
  const auto w = fnode::weak_canard(-1.0, kMu);
  const auto deep = fnode::fn_flow({w.a + 0.1, w.b, -1.0}, kMu, 1.5);
  const auto deep_info = fnode::rotation_sector(deep, kMu);
  CHECK(deep_info.halfturns >= 15);
  CHECK(deep_info.halfturns <= 19);
}

TEST_CASE("correction toggle perturbs the zoomed flow smoothly") {
  const auto w = fnode::weak_canard(-1.0, kMu);
  const fnode::ZoomedState start{w.a + 0.05, w.b, -1.0};
  const auto base = fnode::fn_flow(start, kMu, 0.5);

  fnode::FnFlowOptions off;
  off.eps = 0.01;  // eps set but coefficients zero: identical flow
  const auto same = fnode::fn_flow(start, kMu, 0.5, off);
  REQUIRE(same.points.size() == base.points.size());
  CHECK(same.points.back().xb == base.points.back().xb);

  fnode::FnFlowOptions on;
  on.eps = 0.01;
  on.corr_x_cubic = 1.0;
  on.corr_y_mixed = 0.5;
  const auto corrected = fnode::fn_flow(start, kMu, 0.5, on);
  const double shift =
      std::abs(corrected.points.back().xb - base.points.back().xb);
  CHECK(shift > 0);
  CHECK(shift < 1.0);  // sqrt(eps)-sized influence, not a regime change

  fnode::FnFlowOptions vanish = on;
  vanish.eps = 0;  // corrections scale with sqrt(eps)
  const auto reduced = fnode::fn_flow(start, kMu, 0.5, vanish);
  CHECK(reduced.points.back().xb == base.points.back().xb);
}

TEST_CASE("rectified coordinate and the leading-order eta map") {
  CHECK(fnode::rectified_eta(0.0, 0.25, kMu) ==
        doctest::Approx(0.25 + (1 + kMu) / 2));

  // eta* = zb* = 0 stays on eta = 0; the base point is exact.
  const auto zero = fnode::eta_transition_map(0.0, 0.0, 0.7, 0.01);
  CHECK(zero.eta == 0.0);
  const auto base = fnode::eta_transition_map(3e-3, 0.0, 0.0, 0.01);
  CHECK(base.eta == 3e-3);
  CHECK(base.precondition_ok);

  // Precondition flag: |eta*| <= mu^alpha, |zb*| <= mu^beta.
  const auto viol = fnode::eta_transition_map(0.5, 0.5, 0.0, 0.01);
  CHECK(!viol.precondition_ok);

  // Against direct integration of the rectified system (via the zoomed
  // flow) for mu = 1e-3: sup-norm relative agreement within 5%.
  const double mu = 1e-3;
  const double eta0 = 0.5e-3, zb0 = 0.5e-2;
  const double yb0 = eta0 - (1 + mu) / 2;
  fnode::FnFlowOptions opt;
  opt.step_factor = 1.0 / 2000;
  const auto path =
      fnode::fn_flow({0, yb0, zb0}, mu, zb0 + 1.2 * mu / (1 + mu), opt);
  double max_num = 0, max_gap = 0;
  double zb_gap = 0;
  for (const auto& p : path.points) {
    if (p.xb < -1.0) break;
    const double eta_num = fnode::rectified_eta(p.xb, p.yb, mu);
    const auto mapped = fnode::eta_transition_map(eta0, zb0, p.xb, mu);
    max_num = std::max(max_num, std::abs(eta_num));
    max_gap = std::max(max_gap, std::abs(eta_num - mapped.eta));
    zb_gap = std::max(zb_gap, std::abs(p.zb - mapped.zb));
  }
  CHECK(max_gap / max_num < 0.05);
  CHECK(zb_gap < 0.05 * mu);  // zb drifts by about mu over the window
}

TEST_CASE("first integral of the deviation flow") {
  CHECK(fnode::first_integral_K(0, 0, kMu) == 1.0);
  CHECK(fnode::first_integral_dK_dzb(0.7, 0.2, 0.0, kMu) == 0.0);

  // Conserved when the zb coefficient is frozen at 0.
  fnode::FnVariationalOptions frozen;
  frozen.frozen_zb = 0.0;
  const auto path = fnode::fn_variational_flow(0.3, 0.1, 0.0, 1.0, kMu, frozen);
  const double k0 = fnode::first_integral_K(0.3, 0.1, kMu);
  double drift = 0;
  for (const auto& p : path) {
    drift = std::max(drift,
                     std::abs(fnode::first_integral_K(p.u1, p.u2, kMu) - k0));
  }
  CHECK(drift < 1e-8);

  // Central finite difference along the flow versus the closed form.
  const double d = 1e-6;
  fnode::FnVariationalOptions tiny;
  tiny.step_factor = d / kMu;
  const auto leg1 = fnode::fn_variational_flow(0.3, 0.1, 0.3, 0.3 + d, kMu, tiny);
  const auto mid = leg1.back();
  const auto leg2 =
      fnode::fn_variational_flow(mid.u1, mid.u2, mid.zb, mid.zb + d, kMu, tiny);
  const auto end = leg2.back();
  const double fd = kMu *
                    (fnode::first_integral_K(end.u1, end.u2, kMu) -
                     fnode::first_integral_K(0.3, 0.1, kMu)) /
                    (2 * d);
  const double an =
      kMu * fnode::first_integral_dK_dzb(mid.u1, mid.u2, mid.zb, kMu);
  CHECK(fd == doctest::Approx(an).epsilon(1e-6));

  // Sign structure: K shrinks for zb > 0 and grows for zb < 0 while u1 != 0.
  const auto grow = fnode::fn_variational_flow(0.3, 0.1, -0.5, -0.1, kMu, {});
  CHECK(fnode::first_integral_K(grow.back().u1, grow.back().u2, kMu) >
        fnode::first_integral_K(0.3, 0.1, kMu));
  const auto shrink = fnode::fn_variational_flow(0.3, 0.1, 0.1, 0.5, kMu, {});
  CHECK(fnode::first_integral_K(shrink.back().u1, shrink.back().u2, kMu) <
        fnode::first_integral_K(0.3, 0.1, kMu));
}

TEST_CASE("delay symmetry of the first integral") {
  // K returns to its entry value at zb = -zb' up to
  // rho_1 = (mu + zb'^2) |log zb'|^(3/2).
  for (const double mu : {0.005, 0.02}) {
    for (const double z0 : {-0.2, -0.3}) {
      const auto uv = fnode::level_to_uv(0.9, 1.0, mu);
      fnode::FnVariationalOptions opt;
      opt.step_factor = 1.0 / 200;
      const auto path = fnode::fn_variational_flow(uv.a, uv.b, z0, 1.0, mu, opt);
      const double k0 = fnode::first_integral_K(uv.a, uv.b, mu);
      double tau = -1;
      for (const auto& p : path) {
        if (p.zb > 0 && fnode::first_integral_K(p.u1, p.u2, mu) <= k0) {
          tau = p.zb;
          break;
        }
      }
      REQUIRE(tau > 0);
      const double rho1 =
          (mu + z0 * z0) * std::pow(std::abs(std::log(std::abs(z0))), 1.5);
      CHECK(std::abs(tau + z0) < 0.5 * rho1);
    }
  }
}

TEST_CASE("implicit level function") {
  CHECK(fnode::level_f(0) == 0.0);
  CHECK(fnode::level_f(1e-6) / 1e-6 == doctest::Approx(2.0).epsilon(1e-5));

  // Stated bracket at t = -3: -1 + e^(-19) <= f <= -1 + e^(-19) + O(e^(-38)).
  const double f3 = fnode::level_f(-3);
  CHECK(f3 > -1.0);
  CHECK(f3 + 1 >= std::exp(-19.0));
  CHECK(f3 + 1 <= std::exp(-19.0) + 2 * std::exp(-38.0));

  // f(t) <= 2t^2 + O(t) for t >= 0.
  CHECK(fnode::level_f(5.0) < 2 * 25.0 + 10.0);

  double worst = 0;
  for (double t = -50; t <= 50; t += 0.25) {
    worst = std::max(worst, fnode::level_f_info(t).residual);
  }
  CHECK(worst < 1e-12);

  // Negative-branch bracket
  // -1 + e^(-1-2t^2) <= f(t) <= -1 + e^(-1-2t^2) + 2 e^(-2-4t^2),
  // up to the resolution of doubles near -1 (one ulp of 1).
  for (double t = -50; t <= -0.5; t += 0.25) {
    const double w = std::exp(-1 - 2 * t * t);
    const double f = fnode::level_f(t);
    REQUIRE(f + 1 >= w - 1e-15);
    REQUIRE(f + 1 <= w + 2 * w * w + 1e-15);
  }
}

TEST_CASE("level-curve parametrization round trip") {
  for (const double K : {0.1, 0.5, 0.9}) {
    for (const double phi : {0.0, kPi / 3, kPi, 3 * kPi / 2}) {
      const auto uv = fnode::level_to_uv(K, phi, kMu);
      const auto lc = fnode::uv_to_level(uv.a, uv.b, kMu);
      REQUIRE(!lc.degenerate);
      CHECK(std::abs(lc.K - K) < 1e-10);
      double dphi = std::remainder(lc.phi - phi, 2 * kPi);
      CHECK(std::abs(dphi) < 1e-10);

      // The parametrization reproduces the first integral exactly.
      CHECK(std::abs(fnode::first_integral_K(uv.a, uv.b, kMu) - K) < 1e-10);
    }
  }

  // phi = 0: u1 = 0 and u2 > 0 for K < 1.
  const auto axis = fnode::level_to_uv(0.5, 0.0, kMu);
  CHECK(axis.a == 0.0);
  CHECK(axis.b > 0.0);

  // Degenerate origin.
  const auto origin = fnode::uv_to_level(0, 0, kMu);
  CHECK(origin.degenerate);
  CHECK(origin.K == 1.0);
}

TEST_CASE("angle advances monotonically inside K >= 10|zb|") {
  const auto uv0 = fnode::level_to_uv(0.5, 0.3, kMu);
  const auto path = fnode::fn_variational_flow(uv0.a, uv0.b, -0.02, 0.02, kMu, {});
  double prev_phi = 0;
  bool first = true;
  double min_lower = 1e9, max_upper = 0;
  int decreases = 0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto lc = fnode::uv_to_level(path[i].u1, path[i].u2, kMu);
    if (lc.degenerate || lc.K < 10 * std::abs(path[i].zb)) continue;
    if (!first) {
      double d = std::remainder(lc.phi - prev_phi, 2 * kPi);
      if (d <= 0) ++decreases;
      const double dzb = path[i].zb - path[i - 1].zb;
      const double rate = kMu * d / dzb;
      const double lw = 1 + std::sqrt(std::abs(std::log(lc.K)));
      min_lower = std::min(min_lower, rate * lw);
      max_upper = std::max(max_upper, rate / lw);
    }
    prev_phi = lc.phi;
    first = false;
  }
  CHECK(decreases == 0);
  // Two-sided bound with calibrated constants.
  CHECK(min_lower > 0.4);
  CHECK(max_upper < 6.0);
}

TEST_CASE("half-turn counting") {
  // A path glued to the weak canard never leaves the hysteresis band.
  const std::vector<double> flat(100, 0.0);
  CHECK(fnode::halfturn_count(flat) == 0);

  // Synthetic focus with 7 sign changes -> sector 3.
  std::vector<double> wiggle;
  for (int i = 0; i < 8; ++i) wiggle.push_back(i % 2 == 0 ? 1.0 : -1.0);
  CHECK(fnode::halfturn_count(wiggle) == 7);
  const auto info = fnode::sector_from_halfturns(7, kMu);
  CHECK(info.sector_k == 3);

  // Chatter inside the band is ignored.
  const std::vector<double> chatter = {1.0, 1e-12, -1e-12, 5e-10, 1.0};
  CHECK(fnode::halfturn_count(chatter, 1e-9) == 0);

  // Inner/outer thresholds: ceil(1/sqrt(mu)) = 4 at mu = 0.0685.
  CHECK(info.k_star_low == 4);
  CHECK(fnode::sector_from_halfturns(5, kMu).classification ==
        fnode::SectorClass::inner);  // k = 2 <= 4
  CHECK(fnode::sector_from_halfturns(11, kMu).classification ==
        fnode::SectorClass::outer);  // k = 5 > 4
  const auto noisy = fnode::sector_from_halfturns(7, kMu, 1e-3);
  CHECK(noisy.k_star_high == 11);  // ceil(sqrt(|log 1e-3| / mu))
}

TEST_CASE("sector scan CSV") {
  std::vector<fnode::SectorScanRow> rows(2);
  rows[0] = {-9.0, 7, 15, fnode::SectorClass::outer};
  rows[1] = {-9.5, 1, 3, fnode::SectorClass::inner};
  fnode::sector_scan_to_csv(rows, "test_scan.csv");
  std::FILE* f = std::fopen("test_scan.csv", "rb");
  REQUIRE(f);
  char buf[256];
  REQUIRE(std::fgets(buf, sizeof buf, f));
  CHECK(std::string(buf) == "z_start,sector,halfturns,classification\n");
  REQUIRE(std::fgets(buf, sizeof buf, f));
  CHECK(std::string(buf) == "-9,7,15,outer\n");
  std::fclose(f);
  std::remove("test_scan.csv");
}
