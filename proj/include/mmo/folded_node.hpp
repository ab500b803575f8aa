#ifndef MMO_FOLDED_NODE_HPP
#define MMO_FOLDED_NODE_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmo/sde_core.hpp"

namespace mmo::fnode {

// Parameters of the folded-node normal form after the zoom
// x = sqrt(eps) xb, y = eps yb, z = sqrt(eps) zb. Noise intensities scale as
// sigma_bar = eps^(-3/4) sigma.
struct FnParams {
  double mu = 0.1;
  double eps = 0.01;
  double sigma_bar = 0, sigma_bar_p = 0;

  static FnParams from_original(double mu, double eps, double sigma,
                                double sigma_p);
};

struct ZoomedState {
  double xb = 0, yb = 0, zb = 0;
};

ZoomedState zoom_in(const sde::State& p, double eps);
sde::State zoom_out(const ZoomedState& p, double eps);
double sigma_bar_of(double sigma, double eps);  // eps^(-3/4) * sigma

// Singular canards of the zoomed flow: weak (xb, yb) = (-zb, zb^2 - mu/2),
// strong (xb, yb) = (-zb/mu, (zb/mu)^2 - 1/2).
Vec2 weak_canard(double zb, double mu);
Vec2 strong_canard(double zb, double mu);

// Zoomed flow in zb (which plays the role of time):
//   mu dxb/dzb = 2 yb - 2 xb^2 + sqrt(eps) * corr_x(xb,yb)
//   mu dyb/dzb = -2(1+mu) xb - 2 zb + sqrt(eps) * corr_y(xb,yb)
// The sqrt(eps) correction terms default to off; the coefficients expose the
// leading remainder shape (cubic in xb, mixed xb*yb) for cross-checks
// against full-model runs.
struct FnFlowOptions {
  double eps = 0.0;
  double corr_x_cubic = 0.0;  // adds corr * xb^3 to the xb equation
  double corr_y_mixed = 0.0;  // adds corr * xb*yb to the yb equation
  double step_factor = 1.0 / 50.0;  // step = mu * step_factor
};

struct FnPath {
  std::vector<ZoomedState> points;  // zb strictly increasing
  bool blew_up = false;
};

FnPath fn_flow(const ZoomedState& start, double mu, double zb_end,
               const FnFlowOptions& options = {});

// Rectified coordinate eta = yb - xb^2 + (1+mu)/2.
double rectified_eta(double xb, double yb, double mu);

// Leading-order transition map through the node region, anchored at xb = 0:
//   eta(xb) = e^(2 xb^2) [eta* + zb* Int_0^{2 xb} e^(-u^2/2) du]
//   zb(xb)  = zb* - mu xb / (1+mu)
// Valid for |eta*| <= mu^alpha, |zb*| <= mu^beta with 0 < beta < alpha <= 1;
// violations set a warning flag but the map is still evaluated.
struct EtaMapResult {
  double eta = 0;
  double zb = 0;
  bool precondition_ok = true;
};

EtaMapResult eta_transition_map(double eta_star, double zb_star, double xb,
                                double mu, double alpha = 1.0,
                                double beta = 0.5);

// First integral of the deviation-from-weak-canard system at zb = 0:
//   K(u1,u2) = [1 + 2(u2 - u1^2)/(1+mu)] exp(-2 u2/(1+mu)).
double first_integral_K(double u1, double u2, double mu);

// dK/dzb along the deviation flow; mu * (dK/dzb) equals
// -16 zb u1^2 exp(-2 u2/(1+mu)) / (1+mu).
double first_integral_dK_dzb(double u1, double u2, double zb, double mu);

// Deviation flow around the weak canard,
//   mu du1/dzb = 4 zb u1 + 2 u2 - 2 u1^2,
//   mu du2/dzb = -2(1+mu) u1.
// frozen_zb pins the zb coefficient (the K-conservation regime at 0).
struct FnVariationalOptions {
  std::optional<double> frozen_zb;
  double step_factor = 1.0 / 100.0;
};

struct UvPoint {
  double u1 = 0, u2 = 0, zb = 0;
};

std::vector<UvPoint> fn_variational_flow(double u1_0, double u2_0, double zb0,
                                         double zb_end, double mu,
                                         const FnVariationalOptions& options = {});

// Implicit function of the level-curve parametrization:
// log(1+f) = f - 2 t^2 with sign f = sign t.
double level_f(double t);

struct FSolveInfo {
  double f = 0;
  double residual = 0;
  int iterations = 0;
};
FSolveInfo level_f_info(double t);

// Level-curve coordinates (K, phi):
//   u1 = sqrt((1+mu)/2 |log K|) sin(phi)
//   u2 = u1^2 + (1+mu)/2 f(X),  X = sqrt(|log K|/2) cos(phi).
struct LevelCoords {
  double K = 1;
  double phi = 0;
  bool degenerate = false;  // origin u = (0,0): K = 1, phi undefined
};

Vec2 level_to_uv(double K, double phi, double mu);
LevelCoords uv_to_level(double u1, double u2, double mu);

// Sign-change counter with hysteresis: a new half-turn is registered only
// after the deviation leaves the band |u1| <= hysteresis on the other side.
int halfturn_count(std::span<const double> u1, double hysteresis = 1e-9);

enum class SectorClass { inner, outer };

struct CanardInfo {
  int sector_k = 0;
  int halfturns = 0;
  SectorClass classification = SectorClass::inner;
  int k_star_low = 0;   // ceil(1/sqrt(mu))
  int k_star_high = 0;  // ceil(sqrt(|log(sigma+sigma_p)|/mu)); low bound if 0
};

CanardInfo sector_from_halfturns(int halfturns, double mu,
                                 double noise_sum = 0, double c0 = 1.0);

// Sector of a zoomed path: half-turns are sign changes of the deviation
// u1 = xb - xb_weak(zb) along the path.
CanardInfo rotation_sector(const FnPath& path, double mu, double noise_sum = 0,
                           double c0 = 1.0, double hysteresis = 1e-9);

// Sector-scan CSV: z_start,sector,halfturns,classification
struct SectorScanRow {
  double z_start = 0;
  int sector = 0;
  int halfturns = 0;
  SectorClass classification = SectorClass::inner;
};
void sector_scan_to_csv(const std::vector<SectorScanRow>& rows,
                        const std::string& path);

}  // namespace mmo::fnode

#endif  // MMO_FOLDED_NODE_HPP
