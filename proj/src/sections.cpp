#include "mmo/sections.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <json.hpp>

#include "mmo/io.hpp"

namespace mmo::sections {

namespace {

double drift_coord(const sde::FastSlowModel& model, const sde::State& p,
                   Axis axis) {
  const Vec3 v = sde::drift(model, p);
  return axis == Axis::x ? v.x : v.y;
}

sde::State advance_linear(const sde::FastSlowModel& model, const sde::State& p,
                          double h) {
  const Vec3 v = sde::drift(model, p);
  return {p.x + h * v.x, p.y + h * v.y, p.z + h * v.z};
}

}  // namespace

std::optional<HitRecord> detect_hit(const sde::FastSlowModel& model,
                                    double s0, const sde::State& p0,
                                    double s1, const sde::State& p1,
                                    const Section& section,
                                    std::size_t step_index,
                                    int* out_of_bounds) {
  const double c0 = section.coord(p0) - section.level;
  const double c1 = section.coord(p1) - section.level;
  // Strict sign change; a start exactly on the section is not a crossing,
  // and grazing steps (same side at both ends) never are.
  const bool crossed = (c0 < 0 && c1 >= 0) || (c0 > 0 && c1 <= 0);
  if (!crossed) return std::nullopt;
  const bool upward = c0 < 0;
  if (section.direction == Direction::increasing && !upward) return std::nullopt;
  if (section.direction == Direction::decreasing && upward) return std::nullopt;

  // Linear interpolation in s, then Newton along the drift.
  const double frac = c0 / (c0 - c1);
  double s = s0 + frac * (s1 - s0);
  sde::State p{p0.x + frac * (p1.x - p0.x), p0.y + frac * (p1.y - p0.y),
               p0.z + frac * (p1.z - p0.z)};
  const double tol = crossing_tolerance(section.level);
  double residual = section.coord(p) - section.level;
  for (int it = 0; it < 4 && std::abs(residual) >= tol; ++it) {
    const double slope = drift_coord(model, p, section.axis);
    if (slope == 0) break;
    const double ds = -residual / slope;
    p = advance_linear(model, p, ds);
    s += ds;
    residual = section.coord(p) - section.level;
  }

  if (!section.in_bounds(p)) {
    if (out_of_bounds) ++*out_of_bounds;
    return std::nullopt;
  }
  HitRecord rec;
  rec.section_id = section.id;
  rec.s = s;
  rec.state = p;
  rec.step_lo = step_index;
  rec.step_hi = step_index + 1;
  rec.residual = std::abs(residual);
  rec.near_edge = section.near_edge(p);
  return rec;
}

namespace {

// Deterministic runs ride on RK4, stochastic ones on Euler-Maruyama.
sde::SolverConfig scheme_for(const sde::NoiseIntensities& noise,
                             sde::SolverConfig config) {
  config.scheme = noise.zero() ? sde::Scheme::rk4_deterministic
                               : sde::Scheme::euler_maruyama;
  return config;
}

}  // namespace

FirstHitResult first_hit(const sde::FastSlowModel& model,
                         const sde::State& start,
                         const sde::NoiseIntensities& noise,
                         const Section& section, const sde::SolverConfig& raw,
                         bool keep_path) {
  const sde::SolverConfig config = scheme_for(noise, raw);
  FirstHitResult out;
  out.last_state = start;
  if (keep_path) {
    out.path.times.push_back(0);
    out.path.states.push_back(start);
    out.path.dt = config.effective_dt(model);
    out.path.seed = config.seed;
    out.path.stream = config.stream;
    out.path.model_id = model.id;
  }
  std::size_t step = 0;
  auto loop = sde::integrate_observe(
      model, start, noise, config,
      [&](double s0, const sde::State& p0, double s1, const sde::State& p1) {
        if (keep_path) {
          out.path.times.push_back(s1);
          out.path.states.push_back(p1);
        }
        auto hit = detect_hit(model, s0, p0, s1, p1, section, step,
                              &out.out_of_bounds_crossings);
        ++step;
        if (hit) {
          out.status = HitStatus::hit;
          out.hit = *hit;
          return false;
        }
        return true;
      });
  out.elapsed = loop.last_time;
  out.last_state = loop.last_state;
  if (loop.escaped) {
    out.status = HitStatus::escape;
    if (keep_path) {
      out.path.escaped = true;
      out.path.escape_time = loop.last_time;
    }
  } else if (out.status != HitStatus::hit) {
    out.status = HitStatus::timeout;
  }
  return out;
}

TransitionResult transition_map(const sde::FastSlowModel& model,
                                const sde::State& start,
                                const Section& target,
                                const sde::NoiseIntensities& noise,
                                const sde::SolverConfig& config,
                                const HitRecord* reference) {
  TransitionResult out;
  out.first = first_hit(model, start, noise, target, config);
  if (reference && out.first.status == HitStatus::hit) {
    const sde::State& h = out.first.hit.state;
    const sde::State& r = reference->state;
    out.deviation = {h.x - r.x, h.y - r.y, h.z - r.z};
    out.has_deviation = true;
  }
  return out;
}

namespace {

struct GuardedReturnObserver {
  const sde::FastSlowModel& model;
  const std::vector<const Section*> guard_sections;
  const Section* home;
  std::size_t guard_pos = 0;
  std::size_t step = 0;
  int out_of_bounds = 0;
  std::optional<HitRecord> result;

  bool operator()(double s0, const sde::State& p0, double s1,
                  const sde::State& p1) {
    if (guard_pos < guard_sections.size()) {
      if (detect_hit(model, s0, p0, s1, p1, *guard_sections[guard_pos], step,
                     nullptr)) {
        ++guard_pos;
      }
    } else {
      auto hit = detect_hit(model, s0, p0, s1, p1, *home, step, &out_of_bounds);
      if (hit) {
        result = *hit;
        ++step;
        return false;
      }
    }
    ++step;
    return true;
  }
};

}  // namespace

const Section& find_section(const std::vector<Section>& sections,
                            const std::string& id) {
  for (const auto& s : sections)
    if (s.id == id) return s;
  throw std::invalid_argument("unknown section id: " + id);
}

FirstHitResult global_return(const sde::FastSlowModel& model,
                             const sde::State& start,
                             const std::vector<Section>& sections,
                             const std::string& home_id,
                             const ReturnGuard& guard,
                             const sde::NoiseIntensities& noise,
                             const sde::SolverConfig& raw, bool keep_path) {
  if (guard.empty()) {
    throw std::invalid_argument("global return requires a non-empty guard");
  }
  const sde::SolverConfig config = scheme_for(noise, raw);
  const Section& home = find_section(sections, home_id);
  std::vector<const Section*> guards;
  guards.reserve(guard.size());
  for (const auto& id : guard) guards.push_back(&find_section(sections, id));

  GuardedReturnObserver obs{model, guards, &home, 0, 0, 0, std::nullopt};
  FirstHitResult out;
  if (keep_path) {
    out.path.times.push_back(0);
    out.path.states.push_back(start);
    out.path.dt = config.effective_dt(model);
    out.path.seed = config.seed;
    out.path.stream = config.stream;
    out.path.model_id = model.id;
  }
  auto loop = sde::integrate_observe(
      model, start, noise, config,
      [&](double s0, const sde::State& p0, double s1, const sde::State& p1) {
        if (keep_path) {
          out.path.times.push_back(s1);
          out.path.states.push_back(p1);
        }
        return obs(s0, p0, s1, p1);
      });

  out.elapsed = loop.last_time;
  out.last_state = loop.last_state;
  out.out_of_bounds_crossings = obs.out_of_bounds;
  if (obs.result) {
    out.status = HitStatus::hit;
    out.hit = *obs.result;
  } else if (loop.escaped) {
    out.status = HitStatus::escape;
  } else {
    out.status = HitStatus::timeout;
  }
  return out;
}

std::vector<HitRecord> iterate_returns(const sde::FastSlowModel& model,
                                       const sde::State& start,
                                       const std::vector<Section>& sections,
                                       const std::string& home_id,
                                       const ReturnGuard& guard,
                                       const sde::NoiseIntensities& noise,
                                       const sde::SolverConfig& config, int n) {
  std::vector<HitRecord> hits;
  hits.reserve(std::size_t(n));
  sde::State p = start;
  double t_origin = 0;
  sde::SolverConfig cfg = config;
  for (int i = 0; i < n; ++i) {
    // Continue the same noise realization: advance the stream per leg.
    cfg.stream = config.stream * 1000003u + std::uint64_t(i);
    auto r = global_return(model, p, sections, home_id, guard, noise, cfg);
    if (r.status != HitStatus::hit) break;
    HitRecord rec = r.hit;
    rec.s += t_origin;
    t_origin = rec.s;
    hits.push_back(rec);
    p = rec.state;
  }
  return hits;
}

std::vector<Section> default_koper_sections(const sde::Box& box) {
  std::vector<Section> v;
  auto ysec = [&](std::string id, double level, double x_lo, double x_hi,
                  Direction dir) {
    Section s;
    s.id = std::move(id);
    s.axis = Axis::y;
    s.level = level;
    s.r1_lo = x_lo;
    s.r1_hi = x_hi;
    s.r2_lo = box.lo.z;
    s.r2_hi = box.hi.z;
    s.direction = dir;
    return s;
  };
  auto xsec = [&](std::string id, double level, Direction dir) {
    Section s;
    s.id = std::move(id);
    s.axis = Axis::x;
    s.level = level;
    s.r1_lo = box.lo.y;
    s.r1_hi = box.hi.y;
    s.r2_lo = box.lo.z;
    s.r2_hi = box.hi.z;
    s.direction = dir;
    return s;
  };
  // S1 and S3 share the level y=-1.8 and are split by the x=0 plane.
  v.push_back(ysec("S1", -1.8, 0.0, box.hi.x, Direction::decreasing));
  v.push_back(xsec("S2", 0.5, Direction::decreasing));
  v.push_back(ysec("S3", -1.8, box.lo.x, 0.0, Direction::increasing));
  v.push_back(ysec("S4", 1.8, box.lo.x, 0.0, Direction::increasing));
  v.push_back(xsec("S5", -0.5, Direction::increasing));
  v.push_back(ysec("S6", 1.8, 0.0, box.hi.x, Direction::decreasing));
  return v;
}

ReturnGuard default_koper_guard() { return {"S2", "S4"}; }

void hits_to_csv(const std::vector<HitRecord>& hits, const std::string& path) {
  std::string body = "section,s,x,y,z,residual\n";
  char line[256];
  for (const auto& h : hits) {
    std::snprintf(line, sizeof line, "%s,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  h.section_id.c_str(), h.s, h.state.x, h.state.y, h.state.z,
                  h.residual);
    body += line;
  }
  io::write_file_atomic(path, body);
}

namespace {

nlohmann::json section_to_json_obj(const Section& s) {
  nlohmann::json j;
  j["id"] = s.id;
  j["axis"] = s.axis == Axis::x ? "x" : "y";
  j["level"] = s.level;
  j["r1"] = {s.r1_lo, s.r1_hi};
  j["r2"] = {s.r2_lo, s.r2_hi};
  j["direction"] = s.direction == Direction::increasing   ? "increasing"
                   : s.direction == Direction::decreasing ? "decreasing"
                                                          : "either";
  return j;
}

Section section_from_json_obj(const nlohmann::json& j) {
  Section s;
  s.id = j.at("id").get<std::string>();
  const auto axis = j.at("axis").get<std::string>();
  if (axis == "x") {
    s.axis = Axis::x;
  } else if (axis == "y") {
    s.axis = Axis::y;
  } else {
    throw std::invalid_argument("section axis must be x or y");
  }
  s.level = j.at("level").get<double>();
  s.r1_lo = j.at("r1").at(0).get<double>();
  s.r1_hi = j.at("r1").at(1).get<double>();
  s.r2_lo = j.at("r2").at(0).get<double>();
  s.r2_hi = j.at("r2").at(1).get<double>();
  const auto dir = j.value("direction", std::string("either"));
  s.direction = dir == "increasing"   ? Direction::increasing
                : dir == "decreasing" ? Direction::decreasing
                                      : Direction::either;
  if (!(s.r1_lo < s.r1_hi) || !(s.r2_lo < s.r2_hi)) {
    throw std::invalid_argument("degenerate section bounds");
  }
  return s;
}

}  // namespace

std::string sections_to_json(const std::vector<Section>& sections) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : sections) arr.push_back(section_to_json_obj(s));
  return arr.dump(2) + "\n";
}

std::vector<Section> sections_from_json(const std::string& text) {
  const auto arr = nlohmann::json::parse(text);
  std::vector<Section> v;
  for (const auto& j : arr) v.push_back(section_from_json_obj(j));
  return v;
}

}  // namespace mmo::sections
