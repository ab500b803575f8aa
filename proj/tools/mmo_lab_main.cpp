// mmo-lab: batch experiment front end. Recipes are JSON documents naming an
// operation plus its arguments; outputs are CSV/JSON artifacts written
// atomically together with a run manifest.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "mmo/analysis.hpp"
#include "mmo/fold_local.hpp"
#include "mmo/folded_node.hpp"
#include "mmo/io.hpp"
#include "mmo/koper.hpp"
#include "mmo/patterns.hpp"
#include "mmo/sde_core.hpp"
#include "mmo/sections.hpp"

using nlohmann::json;
using namespace mmo;

extern const std::map<std::string, std::string>& bundled_recipes();

namespace {

constexpr const char* kVersion = "mmo-lab 1.0.0";

struct RunContext {
  std::string out_dir;
  std::uint64_t base_seed = 1;
  std::vector<std::string> outputs;

  std::string path(const std::string& file) const {
    return (std::filesystem::path(out_dir) / file).string();
  }
  void wrote(const std::string& file) { outputs.push_back(file); }
};

struct RecipeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

koper::KoperParams params_of(const json& recipe) {
  koper::KoperParams p;
  if (!recipe.contains("params")) return p;
  const auto& j = recipe.at("params");
  p.k = j.value("k", p.k);
  p.lambda = j.value("lambda", p.lambda);
  p.eps1 = j.value("eps1", p.eps1);
  p.eps2 = j.value("eps2", p.eps2);
  return p;
}

koper::NoiseMatrix matrix_of(const json& recipe) {
  koper::NoiseMatrix m = koper::NoiseMatrix::standard();
  if (recipe.contains("params") && recipe.at("params").contains("M")) {
    const auto& rows = recipe.at("params").at("M");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m.m(r, c) = rows.at(r).at(c).get<double>();
  }
  return m;
}

sde::State state_of(const json& args, const char* key) {
  if (!args.contains(key)) throw RecipeError(std::string("missing ") + key);
  const auto& a = args.at(key);
  return {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
}

std::vector<double> grid_of(const json& args, const char* key) {
  if (!args.contains(key)) throw RecipeError(std::string("missing ") + key);
  const auto& g = args.at(key);
  return analysis::log_grid(g.at("min").get<double>(),
                            g.at("max").get<double>(),
                            g.at("points").get<int>());
}

std::vector<double> linear_grid_of(const json& args, const char* key) {
  if (!args.contains(key)) throw RecipeError(std::string("missing ") + key);
  const auto& g = args.at(key);
  const double lo = g.at("min").get<double>(), hi = g.at("max").get<double>();
  const int n = g.at("points").get<int>();
  std::vector<double> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(lo + (hi - lo) * i / std::max(1, n - 1));
  }
  return out;
}

analysis::EnsembleSpec ensemble_spec_of(const json& recipe, const json& args,
                                        const RunContext& ctx) {
  const auto kp = params_of(recipe);
  const auto m = matrix_of(recipe);
  analysis::EnsembleSpec spec;
  spec.model_for_eps = [kp, m](double eps) {
    auto p = kp;
    p.eps1 = eps;
    return koper::koper_model(p, m);
  };
  spec.eps = kp.eps1;
  spec.start = state_of(args, "start");
  const auto secs = sections::default_koper_sections(sde::Box{});
  spec.target =
      sections::find_section(secs, args.at("target").get<std::string>());
  spec.source_id = args.value("source", std::string{});
  spec.noise.sigma = args.value("sigma", 0.0);
  spec.noise.sigma_p = args.value("sigma_p", 0.0);
  spec.n_realizations = args.value("n_realizations", 100);
  spec.t_max = args.value("t_max", 50.0);
  spec.base_seed = ctx.base_seed;
  return spec;
}

json sweep_summary(const analysis::SweepResult& sweep) {
  json fits = json::array();
  for (const auto& f : sweep.fits) {
    fits.push_back({{"coordinate", f.coordinate},
                    {"slope", f.slope},
                    {"intercept", f.intercept},
                    {"r2", f.r_squared},
                    {"points_used", f.points_used}});
  }
  return {{"fits", fits}};
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

using OpRunner = std::function<json(const json& recipe, RunContext& ctx)>;

struct Op {
  std::string description;
  std::string args_help;
  OpRunner run;
};

json run_integrate(const json& recipe, RunContext& ctx) {
  const auto& args = recipe.at("args");
  const auto model = koper::koper_model(params_of(recipe), matrix_of(recipe));
  sde::SolverConfig config;
  config.t_max = args.value("t_max", 10.0);
  if (args.contains("dt")) config.dt = args.at("dt").get<double>();
  config.seed = ctx.base_seed;
  const sde::NoiseIntensities noise{args.value("sigma", 0.0),
                                    args.value("sigma_p", 0.0)};
  const auto start = state_of(args, "start");
  const auto traj = noise.zero()
                        ? sde::integrate_det(model, start, config)
                        : sde::integrate_sde(model, start, noise, config);
  sde::trajectory_to_csv(traj, ctx.path("trajectory.csv"));
  ctx.wrote("trajectory.csv");
  return {{"samples", traj.size()}, {"escaped", traj.escaped}};
}

json run_pattern(const json& recipe, RunContext& ctx) {
  const auto& args = recipe.at("args");
  const auto model = koper::koper_model(params_of(recipe), matrix_of(recipe));
  sde::SolverConfig config;
  config.t_max = args.value("t_max", 60.0);
  config.seed = ctx.base_seed;
  const sde::NoiseIntensities noise{args.value("sigma", 0.0),
                                    args.value("sigma_p", 0.0)};
  const auto start = state_of(args, "start");
  const auto traj = noise.zero()
                        ? sde::integrate_det(model, start, config)
                        : sde::integrate_sde(model, start, noise, config);

  auto cls =
      patterns::OscillationClassifier::for_noise(noise.sigma, noise.sigma_p);
  if (args.contains("prominence")) {
    cls.prominence = args.at("prominence").get<double>();
  }
  const auto events = patterns::classify_oscillations(traj, cls);
  const auto pat = patterns::extract_pattern(events);

  const std::string word =
      pat.periodic_word ? patterns::word_to_string(*pat.periodic_word) : "";
  io::write_file_atomic(ctx.path("pattern.txt"),
                        (word.empty() ? "(no periodic word)" : word) + "\n");
  ctx.wrote("pattern.txt");
  io::write_file_atomic(ctx.path("events.json"),
                        patterns::events_to_json(events));
  ctx.wrote("events.json");

  int laos = 0;
  for (const auto& ev : events) laos += ev.lao ? 1 : 0;
  return {{"word", word},
          {"n_events", events.size()},
          {"n_laos", laos},
          {"transient_skipped", pat.transient_skipped}};
}

json run_ensemble_op(const json& recipe, RunContext& ctx) {
  const auto spec = ensemble_spec_of(recipe, recipe.at("args"), ctx);
  const auto res = analysis::run_ensemble(spec);
  const auto stats = analysis::spreading_stats(res);

  std::string csv = "dx,dy,dz,status\n";
  char line[160];
  for (const auto& d : res.deviations) {
    const char* status = d.status == sections::HitStatus::hit ? "hit"
                         : d.status == sections::HitStatus::timeout
                             ? "timeout"
                             : "escape";
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%s\n", d.d.x, d.d.y,
                  d.d.z, status);
    csv += line;
  }
  io::write_file_atomic(ctx.path("deviations.csv"), csv);
  ctx.wrote("deviations.csv");

  json out = {{"std",
               {{"x", stats.stddev.x},
                {"y", stats.stddev.y},
                {"z", stats.stddev.z}}},
              {"mean",
               {{"x", stats.mean.x}, {"y", stats.mean.y}, {"z", stats.mean.z}}},
              {"n_effective", stats.n_effective},
              {"n_timeout", stats.n_timeout},
              {"n_escape", stats.n_escape},
              {"degraded", stats.degraded},
              {"reference",
               {{"s", res.reference.s},
                {"x", res.reference.state.x},
                {"y", res.reference.state.y},
                {"z", res.reference.state.z}}}};
  io::write_file_atomic(ctx.path("stats.json"), out.dump(2) + "\n");
  ctx.wrote("stats.json");
  return out;
}

json run_sweep_noise(const json& recipe, RunContext& ctx) {
  const auto& args = recipe.at("args");
  const auto spec = ensemble_spec_of(recipe, args, ctx);
  const auto values = grid_of(args, "grid");
  std::vector<std::pair<double, double>> grid;
  const double ratio = args.value("sigma_p_over_sigma", 1.0);
  for (double v : values) grid.emplace_back(v, ratio * v);
  const auto sweep = analysis::sweep_noise(spec, grid);
  analysis::sweep_to_csv(sweep, ctx.path("sweep.csv"));
  ctx.wrote("sweep.csv");
  io::write_file_atomic(ctx.path("fits.json"),
                        analysis::fits_to_json(sweep.fits));
  ctx.wrote("fits.json");
  return sweep_summary(sweep);
}

json run_sweep_epsilon(const json& recipe, RunContext& ctx) {
  const auto& args = recipe.at("args");
  const auto spec = ensemble_spec_of(recipe, args, ctx);
  const auto sweep = analysis::sweep_epsilon(spec, grid_of(args, "grid"));
  analysis::sweep_to_csv(sweep, ctx.path("sweep.csv"));
  ctx.wrote("sweep.csv");
  io::write_file_atomic(ctx.path("fits.json"),
                        analysis::fits_to_json(sweep.fits));
  ctx.wrote("fits.json");
  return sweep_summary(sweep);
}

json run_return_map(const json& recipe, RunContext& ctx) {
  const auto& args = recipe.at("args");
  const auto params = params_of(recipe);
  const auto model = koper::koper_model(params, matrix_of(recipe));
  const auto secs = sections::default_koper_sections(sde::Box{});
  const auto guard = sections::default_koper_guard();
  const sde::NoiseIntensities noise{args.value("sigma", 0.0),
                                    args.value("sigma_p", 0.0)};
  const int realizations = args.value("realizations", noise.zero() ? 1 : 10);
  const double x0 = koper::critical_branch_x(-1.8, +1);
  sde::SolverConfig config;
  config.t_max = args.value("t_max", 30.0);
  config.seed = ctx.base_seed;

  const auto zs = linear_grid_of(args, "z_grid");
  std::string csv = "z_n,realization,z_np1\n";
  int failures = 0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    for (int r = 0; r < realizations; ++r) {
      sde::SolverConfig c = config;
      c.stream = i * std::size_t(realizations) + std::size_t(r);
      const auto ret = sections::global_return(model, {x0, -1.8, zs[i]}, secs,
                                               "S1", guard, noise, c);
      if (ret.status != sections::HitStatus::hit) {
        ++failures;
        continue;
      }
      char line[96];
      std::snprintf(line, sizeof line, "%.17g,%d,%.17g\n", zs[i], r,
                    ret.hit.state.z);
      csv += line;
    }
  }
  io::write_file_atomic(ctx.path("return_map.csv"), csv);
  ctx.wrote("return_map.csv");
  return {{"points", zs.size()},
          {"realizations", realizations},
          {"failures", failures}};
}

json run_sector_scan(const json& recipe, RunContext& ctx) {
  const auto& args = recipe.at("args");
  const auto& g = args.at("z_grid");
  const auto scan = patterns::koper_sector_scan(
      params_of(recipe), g.at("min").get<double>(), g.at("max").get<double>(),
      g.at("points").get<int>(), args.value("hysteresis", 1e-9));
  fnode::sector_scan_to_csv(scan.rows, ctx.path("sector_scan.csv"));
  ctx.wrote("sector_scan.csv");
  json out = {{"max_sector", scan.max_sector},
              {"boundaries", scan.boundaries},
              {"core", {scan.core_lo, scan.core_hi}},
              {"x_start", scan.x_start}};
  io::write_file_atomic(ctx.path("boundaries.json"), out.dump(2) + "\n");
  ctx.wrote("boundaries.json");
  return out;
}

json run_sector_chain(const json& recipe, RunContext& ctx) {
  const auto& args = recipe.at("args");
  const auto params = params_of(recipe);
  const auto model = koper::koper_model(params, matrix_of(recipe));
  const auto frame = koper::node_frame(params);
  const auto secs = sections::default_koper_sections(sde::Box{});
  const auto guard = sections::default_koper_guard();
  const auto& s2 = sections::find_section(secs, "S2");
  const sde::NoiseIntensities noise{args.value("sigma", 0.0),
                                    args.value("sigma_p", 0.0)};
  const int n_returns = args.value("n_returns", 400);
  const double hysteresis = args.value(
      "hysteresis", std::max(1e-6, 2.5 * (noise.sigma + noise.sigma_p)));

  sde::State state{koper::critical_branch_x(-1.8, +1), -1.8,
                   args.value("z_start", -9.0)};
  sde::SolverConfig config;
  config.t_max = args.value("t_max", 30.0);
  config.seed = ctx.base_seed;

  // One sector label per return leg: rotations are counted on the kept path
  // up to its S2 crossing, so the label belongs to the same realization
  // that produced the next return point.
  std::vector<int> sectors;
  for (int n = 0; n < n_returns; ++n) {
    sde::SolverConfig c = config;
    c.stream = std::uint64_t(n);
    const auto leg = sections::global_return(model, state, secs, "S1", guard,
                                             noise, c, true);
    if (leg.status != sections::HitStatus::hit) break;
    std::vector<double> u1;
    for (const auto& p : leg.path.states) {
      if (p.x < s2.level) break;
      u1.push_back(frame.deviation(p));
    }
    const int halfturns = fnode::halfturn_count(u1, hysteresis);
    sectors.push_back(halfturns >= 1 ? (halfturns - 1) / 2 : 0);
    state = leg.hit.state;
  }
  if (sectors.size() < 2) throw std::runtime_error("no complete returns");

  const auto chain = patterns::sector_chain(sectors);
  patterns::chain_to_csv(chain, ctx.path("chain.csv"));
  ctx.wrote("chain.csv");
  const auto stationary = patterns::stationary_distribution(chain);

  std::vector<int> visits(chain.labels.size(), 0);
  for (int s : sectors) ++visits[std::size_t(s)];
  int modal = 0;
  for (std::size_t i = 0; i < visits.size(); ++i) {
    if (visits[i] > visits[std::size_t(modal)]) modal = int(i);
  }
  int modal_branching = 0;
  for (double v : chain.estimate[std::size_t(modal)]) {
    if (v > 0) ++modal_branching;
  }

  json out = {{"returns", sectors.size()},
              {"modal_sector", modal},
              {"modal_branching", modal_branching},
              {"stationary", stationary.pi},
              {"reducible", stationary.reducible}};
  io::write_file_atomic(ctx.path("stationary.json"), out.dump(2) + "\n");
  ctx.wrote("stationary.json");
  return out;
}

json run_singularities(const json& recipe, RunContext& ctx) {
  const auto sings = koper::folded_singularities(params_of(recipe));
  json arr = json::array();
  for (const auto& s : sings) {
    json j = {{"fold", s.on_upper_fold ? "L+" : "L-"},
              {"x", s.x},
              {"z", s.z},
              {"eig_strong", {s.eig_strong.real(), s.eig_strong.imag()}},
              {"eig_weak", {s.eig_weak.real(), s.eig_weak.imag()}},
              {"kind", s.kind == koper::SingularityKind::node     ? "node"
                       : s.kind == koper::SingularityKind::saddle ? "saddle"
                                                                  : "focus"}};
    if (s.mu) j["mu"] = *s.mu;
    if (s.k_mu) j["k_mu"] = *s.k_mu;
    arr.push_back(j);
  }
  json out = {{"singularities", arr}};
  io::write_file_atomic(ctx.path("singularities.json"), out.dump(2) + "\n");
  ctx.wrote("singularities.json");
  return out;
}

json run_assumptions(const json& recipe, RunContext& ctx) {
  const auto rep = koper::check_assumptions(params_of(recipe), sde::Box{});
  json out = {{"min_abs_fast_linearization", rep.min_abs_fast_linearization},
              {"min_normal_switching_lminus", rep.min_normal_switching_lminus},
              {"g1_at_upper_singularity", rep.g1_at_upper_singularity},
              {"min_drop_transversality", rep.min_drop_transversality},
              {"fold_nondegeneracy", rep.fold_nondegeneracy},
              {"violations", rep.violations}};
  io::write_file_atomic(ctx.path("assumptions.json"), out.dump(2) + "\n");
  ctx.wrote("assumptions.json");
  return out;
}

json run_fold_report(const json&, RunContext& ctx) {
  const auto asym = fold::riccati_asymptote();
  const auto scaling = fold::fold_passage_scaling({1e-2, 1e-3, 1e-4});
  const auto text = fold::fold_report_json(asym, scaling);
  io::write_file_atomic(ctx.path("fold_report.json"), text);
  ctx.wrote("fold_report.json");
  return json::parse(text);
}

json run_scaling_check(const json& recipe, RunContext& ctx) {
  const auto& args = recipe.value("args", json::object());
  std::vector<double> nus = args.value("nus", std::vector<double>{-1, 0, 1, 2});
  std::vector<double> eps =
      args.value("eps", std::vector<double>{1e-2, 1e-3, 1e-4, 1e-5});
  const auto rep = analysis::kernel_scaling_check(nus, eps);
  json rows = json::array();
  for (const auto& r : rep.rows) {
    rows.push_back(
        {{"nu", r.nu}, {"eps", r.eps}, {"s", r.s}, {"ratio", r.ratio}});
  }
  json out = {{"ratio_max_over_min", rep.ratio_max_over_min}, {"rows", rows}};
  io::write_file_atomic(ctx.path("scaling.json"), out.dump(2) + "\n");
  ctx.wrote("scaling.json");
  return out;
}

json run_bernstein(const json& recipe, RunContext& ctx) {
  const auto& args = recipe.value("args", json::object());
  analysis::BernsteinMcSpec spec;
  spec.n_paths = args.value("n_paths", 10000);
  spec.t = args.value("t", 1.0);
  spec.dt = args.value("dt", 1e-3);
  spec.seed = ctx.base_seed;
  const auto rows = analysis::bernstein_mc_check(spec);
  json arr = json::array();
  bool all = true;
  for (const auto& r : rows) {
    arr.push_back({{"h", r.h},
                   {"bound", r.bound},
                   {"empirical", r.empirical},
                   {"std_error", r.std_error},
                   {"dominated", r.dominated}});
    all = all && r.dominated;
  }
  json out = {{"rows", arr}, {"all_dominated", all}};
  io::write_file_atomic(ctx.path("bernstein.json"), out.dump(2) + "\n");
  ctx.wrote("bernstein.json");
  return out;
}

json run_table1(const json& recipe, RunContext& ctx) {
  const auto& args = recipe.at("args");
  const auto t = analysis::transition_from_string(
      args.at("transition").get<std::string>());
  const auto pred = analysis::predicted_order(
      t, args.at("sigma").get<double>(), args.at("sigma_p").get<double>(),
      args.at("eps").get<double>(), args.value("mu", 0.0));
  json out = {{"transition", args.at("transition")}};
  if (pred.dx) out["dx"] = *pred.dx;
  if (pred.dy) out["dy"] = *pred.dy;
  if (pred.dz) out["dz"] = *pred.dz;
  io::write_file_atomic(ctx.path("prediction.json"), out.dump(2) + "\n");
  ctx.wrote("prediction.json");
  return out;
}

const std::map<std::string, Op>& op_table() {
  static const std::map<std::string, Op> table = {
      {"integrate",
       {"Integrate one deterministic or stochastic trajectory",
        "start:[x,y,z], t_max, sigma, sigma_p, dt (optional)", run_integrate}},
      {"pattern",
       {"Classify oscillations and extract the periodic word",
        "start:[x,y,z], t_max, sigma, sigma_p, prominence (optional)",
        run_pattern}},
      {"ensemble",
       {"Monte-Carlo transition cloud with spreading statistics",
        "start:[x,y,z], target:S1..S6, sigma, sigma_p, n_realizations, t_max",
        run_ensemble_op}},
      {"sweep_noise",
       {"Noise-intensity sweep with log-log slope fits",
        "start, target, n_realizations, grid:{min,max,points}, "
        "sigma_p_over_sigma (optional)",
        run_sweep_noise}},
      {"sweep_epsilon",
       {"Timescale-separation sweep with log-log slope fits",
        "start, target, sigma, sigma_p, n_realizations, grid:{min,max,points}",
        run_sweep_epsilon}},
      {"return_map",
       {"Guarded first-return map on S1 over a grid of starting z",
        "z_grid:{min,max,points}, realizations, sigma, sigma_p, t_max",
        run_return_map}},
      {"sector_scan",
       {"Deterministic rotation-sector scan with boundary bisection",
        "z_grid:{min,max,points}, hysteresis (optional)", run_sector_scan}},
      {"sector_chain",
       {"Empirical sector-to-sector chain from iterated noisy returns",
        "z_start, n_returns, sigma, sigma_p, hysteresis, t_max",
        run_sector_chain}},
      {"singularities",
       {"Classify the folded singularities", "(none)", run_singularities}},
      {"assumptions",
       {"Verify the geometric assumptions on the domain box", "(none)",
        run_assumptions}},
      {"fold_report",
       {"Riccati asymptote plus fold-passage scaling report", "(none)",
        run_fold_report}},
      {"scaling_check",
       {"Quadrature check of the exponential-kernel scaling",
        "nus:[...], eps:[...] (optional)", run_scaling_check}},
      {"bernstein",
       {"Monte-Carlo domination check of the martingale tail bound",
        "n_paths, t, dt (optional)", run_bernstein}},
      {"predict_orders",
       {"Predicted fluctuation orders for one transition",
        "transition, sigma, sigma_p, eps, mu (for the node passage)",
        run_table1}},
  };
  return table;
}

// ---------------------------------------------------------------------------
// Embedded checks (--check)
// ---------------------------------------------------------------------------

bool run_checks(const json& recipe, const json& summary) {
  if (!recipe.contains("checks")) return true;
  bool ok = true;
  for (const auto& check : recipe.at("checks")) {
    const std::string type = check.at("type").get<std::string>();
    bool pass = false;
    std::string detail = "no matching summary entry";
    if (type == "slope") {
      const std::string coord = check.at("coordinate").get<std::string>();
      const double target = check.at("target").get<double>();
      const double tol = check.at("tol").get<double>();
      for (const auto& fit : summary.at("fits")) {
        if (fit.at("coordinate").get<std::string>() != coord) continue;
        const double slope = fit.at("slope").get<double>();
        pass = std::abs(slope - target) <= tol;
        detail = "slope(" + coord + ") = " + io::fmt17(slope) + " vs " +
                 io::fmt17(target) + " +- " + io::fmt17(tol);
      }
    } else if (type == "word") {
      const auto expect = check.at("expect").get<std::string>();
      const auto got = summary.at("word").get<std::string>();
      pass = got == expect;
      detail = "word '" + got + "' vs '" + expect + "'";
    } else if (type == "max_sector_le") {
      const int cap = check.at("value").get<int>();
      const int got = summary.at("max_sector").get<int>();
      pass = got <= cap;
      detail =
          "max sector " + std::to_string(got) + " <= " + std::to_string(cap);
    } else if (type == "dominated") {
      pass = summary.at("all_dominated").get<bool>();
      detail = "martingale bound domination";
    } else if (type == "modal_branching_ge") {
      const int want = check.at("value").get<int>();
      const int got = summary.at("modal_branching").get<int>();
      pass = got >= want;
      detail = "modal row branches to " + std::to_string(got) + " sectors";
    } else {
      throw RecipeError("unknown check type " + type);
    }
    std::printf("check %-20s %s  (%s)\n", type.c_str(), pass ? "PASS" : "FAIL",
                detail.c_str());
    ok = ok && pass;
  }
  return ok;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

int cmd_run(const std::string& recipe_arg, std::string out_dir, int threads,
            bool check) {
  // Resolve the argument: an existing file wins; otherwise a bundled name
  // (directory prefix and .json suffix are ignored).
  std::string text;
  if (std::filesystem::exists(recipe_arg)) {
    text = io::read_file(recipe_arg);
  } else {
    const std::string name = std::filesystem::path(recipe_arg).stem().string();
    const auto& bundled = bundled_recipes();
    const auto it = bundled.find(name);
    if (it == bundled.end()) {
      std::fprintf(stderr, "error: no such recipe file or bundled name: %s\n",
                   recipe_arg.c_str());
      return 2;
    }
    text = it->second;
  }

  json recipe;
  try {
    recipe = json::parse(text);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: malformed recipe JSON: %s\n", e.what());
    return 2;
  }

  std::string name;
  const Op* op = nullptr;
  try {
    name = recipe.at("name").get<std::string>();
    const auto op_name = recipe.at("operation").get<std::string>();
    const auto it = op_table().find(op_name);
    if (it == op_table().end()) {
      throw RecipeError("unknown operation " + op_name);
    }
    op = &it->second;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: invalid recipe: %s\n", e.what());
    return 2;
  }

#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  RunContext ctx;
  ctx.out_dir = out_dir.empty() ? ("out/" + name) : out_dir;
  ctx.base_seed = recipe.value("base_seed", std::uint64_t{1});

  const auto t0 = std::chrono::steady_clock::now();
  json summary;
  try {
    std::filesystem::create_directories(ctx.out_dir);
    summary = op->run(recipe, ctx);
  } catch (const RecipeError& e) {
    std::fprintf(stderr, "error: invalid recipe: %s\n", e.what());
    return 2;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: invalid recipe: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: run failed: %s\n", e.what());
    return 3;
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a(recipe.dump())));
  json manifest = {{"recipe_hash", hash},       {"tool_version", kVersion},
                   {"name", name},              {"base_seed", ctx.base_seed},
                   {"threads", threads},        {"wall_time_s", wall},
                   {"outputs", ctx.outputs}};
  io::write_file_atomic(ctx.path("manifest.json"), manifest.dump(2) + "\n");

  std::printf("%s: wrote %zu artifact(s) to %s (%.2fs)\n", name.c_str(),
              ctx.outputs.size() + 1, ctx.out_dir.c_str(), wall);
  std::printf("%s\n", summary.dump().c_str());

  if (check && !run_checks(recipe, summary)) return 4;
  return 0;
}

int cmd_list() {
  std::printf("bundled recipes:\n");
  for (const auto& [name, text] : bundled_recipes()) {
    std::string desc;
    try {
      desc = json::parse(text).value("description", std::string{});
    } catch (...) {
    }
    std::printf("  %-12s %s\n", name.c_str(), desc.c_str());
  }
  return 0;
}

int cmd_describe(const std::string& op_name) {
  const auto it = op_table().find(op_name);
  if (it == op_table().end()) {
    std::fprintf(stderr, "error: unknown operation %s\n", op_name.c_str());
    std::fprintf(stderr, "known operations:\n");
    for (const auto& [name, op] : op_table()) {
      std::fprintf(stderr, "  %-14s %s\n", name.c_str(),
                   op.description.c_str());
    }
    return 2;
  }
  std::printf("%s: %s\n", op_name.c_str(), it->second.description.c_str());
  std::printf("args: %s\n", it->second.args_help.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic fast-slow experiment runner"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string recipe, out_dir;
  int threads = 0;
  if (const char* env = std::getenv("MMO_LAB_THREADS")) threads = std::atoi(env);
  bool check = false;

  auto* run =
      app.add_subcommand("run", "Execute a recipe (file or bundled name)");
  run->add_option("recipe", recipe, "Recipe JSON file or bundled name")
      ->required();
  run->add_option("--out", out_dir, "Output directory (default out/<name>)");
  run->add_option("--threads", threads,
                  "Worker threads (default MMO_LAB_THREADS)");
  run->add_flag("--check", check, "Verify the recipe's embedded checks");

  auto* list = app.add_subcommand("list-recipes", "List bundled recipes");

  std::string op_name;
  auto* describe = app.add_subcommand("describe", "Describe an operation");
  describe->add_option("operation", op_name, "Operation name")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(recipe, out_dir, threads, check);
  if (list->parsed()) return cmd_list();
  if (describe->parsed()) return cmd_describe(op_name);
  return 2;
}
