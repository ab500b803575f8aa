// Benchmark: OpenMP ensemble kernels against the serial reference, plus the
// raw stepping and principal-solution throughput. Results must be
// bit-identical between the two paths; only wall time may differ.

#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mmo/analysis.hpp"
#include "mmo/koper.hpp"

using namespace mmo;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

analysis::EnsembleSpec bench_spec(int n) {
  koper::KoperParams kp;
  kp.k = -10;
  kp.lambda = -7;
  kp.eps1 = 0.01;
  kp.eps2 = 1.0;
  analysis::EnsembleSpec spec;
  spec.model_for_eps = [kp](double eps) {
    auto p = kp;
    p.eps1 = eps;
    return koper::koper_model(p, koper::NoiseMatrix::standard());
  };
  spec.start = {1.3, -1.8, -7.7};  // node passage: the longest transition
  const auto secs = sections::default_koper_sections(sde::Box{});
  spec.target = sections::find_section(secs, "S2");
  spec.noise = {0.01, 0.01};
  spec.n_realizations = n;
  spec.base_seed = 7;
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 800;
#ifdef _OPENMP
  const int threads = omp_get_max_threads();
#else
  const int threads = 1;
#endif
  std::printf("ensemble benchmark: %d realizations, %d thread(s)\n", n,
              threads);

  const auto spec = bench_spec(n);

  auto t0 = std::chrono::steady_clock::now();
  const auto serial = analysis::run_ensemble_serial(spec);
  const double t_serial = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const auto parallel = analysis::run_ensemble(spec);
  const double t_parallel = seconds_since(t0);

  bool identical = serial.deviations.size() == parallel.deviations.size();
  for (std::size_t i = 0; identical && i < serial.deviations.size(); ++i) {
    identical = serial.deviations[i].d.x == parallel.deviations[i].d.x &&
                serial.deviations[i].d.y == parallel.deviations[i].d.y &&
                serial.deviations[i].d.z == parallel.deviations[i].d.z;
  }

  std::printf("  serial reference : %8.3f s\n", t_serial);
  std::printf("  OpenMP kernel    : %8.3f s  (speedup %.2fx)\n", t_parallel,
              t_serial / t_parallel);
  std::printf("  results identical: %s\n", identical ? "yes" : "NO");

  // Raw stepping throughput.
  const auto model = spec.model_for_eps(0.01);
  sde::SolverConfig config;
  config.t_max = 50;
  config.seed = 1;
  t0 = std::chrono::steady_clock::now();
  const auto traj = sde::integrate_sde(model, {-2, -1.8, -8}, spec.noise, config);
  const double t_steps = seconds_since(t0);
  std::printf("  EM stepping      : %8.1f Msteps/s\n",
              double(traj.size()) / t_steps / 1e6);

  // Variational-solver throughput along a slow segment.
  config.t_max = 0.5;
  const auto det = sde::integrate_det(model, {-2, -1.8, -8}, config);
  const auto series = sde::linearize(model, det);
  t0 = std::chrono::steady_clock::now();
  const auto sol = sde::principal_solution(series, 0.0, {0.1, 0.2, 0.3, 0.4});
  const double t_prin = seconds_since(t0);
  std::printf("  principal solve  : %8.3f s for %zu targets%s\n", t_prin,
              sol.times.size(), sol.overflowed ? " (overflow flagged)" : "");

  return identical ? 0 : 1;
}
