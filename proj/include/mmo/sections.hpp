#ifndef MMO_SECTIONS_HPP
#define MMO_SECTIONS_HPP

#include <optional>
#include <string>
#include <vector>

#include "mmo/sde_core.hpp"

namespace mmo::sections {

enum class Axis { x, y };
enum class Direction { increasing, decreasing, either };

// Planar section {axis = level} bounded by a rectangle in the two remaining
// coordinates (in x,y,z order: axis=x -> (y,z), axis=y -> (x,z)).
struct Section {
  std::string id;
  Axis axis = Axis::x;
  double level = 0;
  double r1_lo = -1, r1_hi = 1;
  double r2_lo = -1, r2_hi = 1;
  Direction direction = Direction::either;

  double coord(const sde::State& p) const {
    return axis == Axis::x ? p.x : p.y;
  }
  std::pair<double, double> in_plane(const sde::State& p) const {
    return axis == Axis::x ? std::pair{p.y, p.z} : std::pair{p.x, p.z};
  }
  bool in_bounds(const sde::State& p) const {
    const auto [r1, r2] = in_plane(p);
    return r1 >= r1_lo && r1 <= r1_hi && r2 >= r2_lo && r2 <= r2_hi;
  }
  bool near_edge(const sde::State& p) const {
    const auto [r1, r2] = in_plane(p);
    const double m1 = 0.01 * (r1_hi - r1_lo);
    const double m2 = 0.01 * (r2_hi - r2_lo);
    return r1 < r1_lo + m1 || r1 > r1_hi - m1 || r2 < r2_lo + m2 ||
           r2 > r2_hi - m2;
  }
};

struct HitRecord {
  std::string section_id;
  double s = 0;
  sde::State state;
  std::size_t step_lo = 0, step_hi = 0;  // bracketing step indices
  double residual = 0;
  bool near_edge = false;
};

// Sections an excursion must traverse, in order, before a return counts.
using ReturnGuard = std::vector<std::string>;

inline double crossing_tolerance(double level) {
  return 1e-9 * (1 + std::abs(level));
}

// Crossing detection on one step pair: sign change respecting the declared
// direction, linear interpolation in s, then Newton refinement along the
// drift until the residual tolerance is met (a handful of iterations at
// most; the first one already gives O(dt^2) accuracy). Crossings outside the
// bounds rectangle are rejected and counted by the caller.
std::optional<HitRecord> detect_hit(const sde::FastSlowModel& model,
                                    double s0, const sde::State& p0,
                                    double s1, const sde::State& p1,
                                    const Section& section,
                                    std::size_t step_index = 0,
                                    int* out_of_bounds = nullptr);

enum class HitStatus { hit, timeout, escape };

struct FirstHitResult {
  HitStatus status = HitStatus::timeout;
  HitRecord hit;
  int out_of_bounds_crossings = 0;
  double elapsed = 0;            // slow time integrated
  sde::State last_state;         // final state (partial data on failure)
  sde::Trajectory path;          // filled only when keep_path is set
};

// Integrates (RK4 when noise is zero and det_scheme is requested, else
// Euler-Maruyama) until the first qualifying crossing. A start lying exactly
// on the section does not count as a hit.
FirstHitResult first_hit(const sde::FastSlowModel& model,
                         const sde::State& start,
                         const sde::NoiseIntensities& noise,
                         const Section& section, const sde::SolverConfig& config,
                         bool keep_path = false);

struct TransitionResult {
  FirstHitResult first;
  // Deviation from the supplied deterministic reference hit, when given.
  Vec3 deviation;
  bool has_deviation = false;
};

// first_hit plus experiment bookkeeping against a deterministic reference.
TransitionResult transition_map(const sde::FastSlowModel& model,
                                const sde::State& start,
                                const Section& target,
                                const sde::NoiseIntensities& noise,
                                const sde::SolverConfig& config,
                                const HitRecord* reference = nullptr);

// First return to `home` after the guard sections have been traversed in
// order. Re-crossings of home before the guard is complete do not count.
FirstHitResult global_return(const sde::FastSlowModel& model,
                             const sde::State& start,
                             const std::vector<Section>& sections,
                             const std::string& home_id,
                             const ReturnGuard& guard,
                             const sde::NoiseIntensities& noise,
                             const sde::SolverConfig& config,
                             bool keep_path = false);

// Iterated return map: up to n consecutive guarded returns to home.
std::vector<HitRecord> iterate_returns(const sde::FastSlowModel& model,
                                       const sde::State& start,
                                       const std::vector<Section>& sections,
                                       const std::string& home_id,
                                       const ReturnGuard& guard,
                                       const sde::NoiseIntensities& noise,
                                       const sde::SolverConfig& config, int n);

// Section placements for the Koper experiments. Levels follow the standard
// setup (S2={x=0.5}, S3={y=-1.8}, S4={y=1.8}, S5={x=-0.5}, S6={y=1.8},
// S1={y=-1.8} on the returning branch); rectangles default to domain-box
// slices split at x=0 where two sections share a level.
std::vector<Section> default_koper_sections(const sde::Box& box);

const Section& find_section(const std::vector<Section>& sections,
                            const std::string& id);

ReturnGuard default_koper_guard();  // {S2, S4}

// Hit log CSV: section,s,x,y,z,residual
void hits_to_csv(const std::vector<HitRecord>& hits, const std::string& path);

std::string sections_to_json(const std::vector<Section>& sections);
std::vector<Section> sections_from_json(const std::string& text);

}  // namespace mmo::sections

#endif  // MMO_SECTIONS_HPP
