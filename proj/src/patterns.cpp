#include "mmo/patterns.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <json.hpp>

#include "mmo/io.hpp"

namespace mmo::patterns {

namespace {

struct Extremum {
  double s;
  double value;
  bool is_max;
};

// Turning-point detection with a hysteresis band: a new extremum is accepted
// only once the series has moved away from it by at least `prominence`.
// The first turning point seen while the direction is still unknown is
// dropped (it has no established approach phase).
std::vector<Extremum> find_extrema(std::span<const double> times,
                                   std::span<const double> xs,
                                   double prominence) {
  std::vector<Extremum> out;
  if (xs.size() < 3) return out;

  double hi = xs[0], hi_s = times[0];
  double lo = xs[0], lo_s = times[0];
  int dir = 0;  // +1 tracking a maximum, -1 tracking a minimum
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const double v = xs[i];
    if (dir == 0) {
      if (v > hi) {
        hi = v;
        hi_s = times[i];
      }
      if (v < lo) {
        lo = v;
        lo_s = times[i];
      }
      if (hi - v >= prominence) {
        dir = -1;
        lo = v;
        lo_s = times[i];
      } else if (v - lo >= prominence) {
        dir = +1;
        hi = v;
        hi_s = times[i];
      }
    } else if (dir > 0) {
      if (v > hi) {
        hi = v;
        hi_s = times[i];
      } else if (hi - v >= prominence) {
        out.push_back({hi_s, hi, true});
        dir = -1;
        lo = v;
        lo_s = times[i];
      }
    } else {
      if (v < lo) {
        lo = v;
        lo_s = times[i];
      } else if (v - lo >= prominence) {
        out.push_back({lo_s, lo, false});
        dir = +1;
        hi = v;
        hi_s = times[i];
      }
    }
  }
  return out;
}

}  // namespace

std::vector<OscillationEvent> classify_oscillations(
    std::span<const double> times, std::span<const double> xs,
    const OscillationClassifier& classifier) {
  if (times.size() != xs.size()) throw std::invalid_argument("size mismatch");
  const auto extrema = find_extrema(times, xs, classifier.prominence);

  std::vector<OscillationEvent> events;
  for (std::size_t i = 0; i < extrema.size(); ++i) {
    if (!extrema[i].is_max) continue;
    OscillationEvent ev;
    ev.s = extrema[i].s;
    ev.peak = extrema[i].value;
    ev.trough_before = i > 0 ? extrema[i - 1].value : ev.peak;
    ev.trough_after = i + 1 < extrema.size() ? extrema[i + 1].value : ev.peak;
    // The rise phase of a relaxation excursion sweeps across both fold
    // lines; small oscillations near a fold stay on one side of the other
    // fold line. (The fall into the next excursion belongs to the next
    // event, so only the rise is attributed to this peak.)
    ev.lao = ev.peak >= classifier.fold_hi &&
             ev.trough_before <= classifier.fold_lo;
    events.push_back(ev);
  }
  return events;
}

std::vector<OscillationEvent> classify_oscillations(
    const sde::Trajectory& trajectory, const OscillationClassifier& classifier) {
  std::vector<double> xs(trajectory.states.size());
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = trajectory.states[i].x;
  return classify_oscillations(trajectory.times, xs, classifier);
}

namespace {

std::vector<MmoSymbol> run_length_encode(
    const std::vector<OscillationEvent>& events) {
  std::vector<MmoSymbol> symbols;
  std::size_t i = 0;
  // Start at the first LAO; a leading SAO run has no block to attach to.
  while (i < events.size() && !events[i].lao) ++i;
  while (i < events.size()) {
    MmoSymbol sym;
    while (i < events.size() && events[i].lao) {
      ++sym.L;
      ++i;
    }
    while (i < events.size() && !events[i].lao) {
      ++sym.s;
      ++i;
    }
    symbols.push_back(sym);
  }
  return symbols;
}

bool is_periodic_with(const std::vector<MmoSymbol>& word, std::size_t start,
                      std::size_t end, std::size_t period) {
  for (std::size_t i = start + period; i < end; ++i) {
    if (!(word[i] == word[i - period])) return false;
  }
  return true;
}

}  // namespace

std::vector<MmoSymbol> canonical_rotation(std::vector<MmoSymbol> word) {
  if (word.empty()) return word;
  auto less = [](const std::vector<MmoSymbol>& a,
                 const std::vector<MmoSymbol>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].L != b[i].L) return a[i].L < b[i].L;
      if (a[i].s != b[i].s) return a[i].s < b[i].s;
    }
    return false;
  };
  std::vector<MmoSymbol> best = word;
  for (std::size_t r = 1; r < word.size(); ++r) {
    std::rotate(word.begin(), word.begin() + 1, word.end());
    if (less(word, best)) best = word;
  }
  return best;
}

PatternResult extract_pattern(const std::vector<OscillationEvent>& events,
                              int max_transient) {
  PatternResult out;
  out.symbols = run_length_encode(events);
  if (out.symbols.empty()) return out;

  // The final symbol can be truncated by the end of the trajectory.
  const std::size_t usable = out.symbols.size() > 1 ? out.symbols.size() - 1
                                                    : out.symbols.size();
  for (int skip = 0; skip <= max_transient; ++skip) {
    const std::size_t start = std::size_t(skip);
    if (start >= usable) break;
    const std::size_t len = usable - start;
    // At least 3 full repetitions of the candidate period.
    for (std::size_t period = 1; period <= len / 3; ++period) {
      if (is_periodic_with(out.symbols, start, usable, period)) {
        std::vector<MmoSymbol> word(out.symbols.begin() + long(start),
                                    out.symbols.begin() + long(start + period));
        out.periodic_word = canonical_rotation(std::move(word));
        out.transient_skipped = skip;
        return out;
      }
    }
  }
  return out;
}

std::vector<int> per_lao_sao_counts(
    const std::vector<OscillationEvent>& events) {
  std::vector<int> counts;
  bool open = false;
  int saos = 0;
  for (const auto& ev : events) {
    if (ev.lao) {
      if (open) counts.push_back(saos);
      open = true;
      saos = 0;
    } else if (open) {
      ++saos;
    }
  }
  if (open) counts.push_back(saos);
  return counts;
}

std::string word_to_string(const std::vector<MmoSymbol>& word) {
  std::string out;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(word[i].L) + "^" + std::to_string(word[i].s);
  }
  return out;
}

std::string events_to_json(const std::vector<OscillationEvent>& events) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& ev : events) {
    arr.push_back({{"s", ev.s},
                   {"peak", ev.peak},
                   {"trough_before", ev.trough_before},
                   {"trough_after", ev.trough_after},
                   {"type", ev.lao ? "LAO" : "SAO"}});
  }
  return arr.dump(2) + "\n";
}

SectorChain sector_chain(const std::vector<int>& sector_sequence) {
  if (sector_sequence.size() < 2) {
    throw std::invalid_argument("need at least one transition");
  }
  int max_label = 0;
  for (int k : sector_sequence) {
    if (k < 0) throw std::invalid_argument("sector labels must be >= 0");
    max_label = std::max(max_label, k);
  }
  const std::size_t n = std::size_t(max_label) + 1;

  SectorChain chain;
  chain.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) chain.labels[i] = int(i);
  chain.counts.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i + 1 < sector_sequence.size(); ++i) {
    chain.counts[std::size_t(sector_sequence[i])]
                [std::size_t(sector_sequence[i + 1])] += 1.0;
  }
  chain.estimate.assign(n, std::vector<double>(n, 0.0));
  chain.row_has_data.assign(n, false);
  for (std::size_t r = 0; r < n; ++r) {
    double total = 0;
    for (double c : chain.counts[r]) total += c;
    if (total > 0) {
      chain.row_has_data[r] = true;
      for (std::size_t c = 0; c < n; ++c) {
        chain.estimate[r][c] = chain.counts[r][c] / total;
      }
    } else {
      // Absorbing-unknown: no data; treated as a self-loop by consumers.
      chain.estimate[r][r] = 1.0;
    }
  }
  return chain;
}

std::vector<int> sectors_from_values(const std::vector<double>& values,
                                     const std::vector<double>& boundaries) {
  std::vector<int> out;
  out.reserve(values.size());
  for (double v : values) {
    const auto it = std::upper_bound(boundaries.begin(), boundaries.end(), v);
    out.push_back(int(it - boundaries.begin()));
  }
  return out;
}

StationaryResult stationary_distribution(const SectorChain& chain) {
  const std::size_t n = chain.estimate.size();
  StationaryResult out;

  // Modal state: most visited overall.
  std::size_t modal = 0;
  double best = -1;
  for (std::size_t r = 0; r < n; ++r) {
    double visits = 0;
    for (std::size_t c = 0; c < n; ++c) visits += chain.counts[r][c];
    if (visits > best) {
      best = visits;
      modal = r;
    }
  }

  // Reachability from the modal state.
  std::vector<bool> reachable(n, false);
  std::vector<std::size_t> stack{modal};
  reachable[modal] = true;
  while (!stack.empty()) {
    const std::size_t r = stack.back();
    stack.pop_back();
    for (std::size_t c = 0; c < n; ++c) {
      if (chain.estimate[r][c] > 0 && !reachable[c]) {
        reachable[c] = true;
        stack.push_back(c);
      }
    }
  }
  // Reducible when some reachable state cannot return to the modal state.
  for (std::size_t r = 0; r < n && !out.reducible; ++r) {
    if (!reachable[r]) {
      out.reducible = true;
      break;
    }
  }
  std::vector<bool> co_reachable(n, false);
  stack.assign(1, modal);
  co_reachable[modal] = true;
  while (!stack.empty()) {
    const std::size_t c = stack.back();
    stack.pop_back();
    for (std::size_t r = 0; r < n; ++r) {
      if (chain.estimate[r][c] > 0 && !co_reachable[r]) {
        co_reachable[r] = true;
        stack.push_back(r);
      }
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (reachable[r] && !co_reachable[r]) out.reducible = true;
  }

  std::vector<double> pi(n, 0.0);
  pi[modal] = 1.0;
  std::vector<double> next(n, 0.0);
  const int max_iters = 1000000;
  for (out.iterations = 1; out.iterations <= max_iters; ++out.iterations) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      if (pi[r] == 0) continue;
      for (std::size_t c = 0; c < n; ++c) {
        next[c] += pi[r] * chain.estimate[r][c];
      }
    }
    // Lazy step keeps periodic chains convergent.
    double residual = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double mixed = 0.5 * pi[i] + 0.5 * next[i];
      residual = std::max(residual, std::abs(mixed - pi[i]));
      pi[i] = mixed;
    }
    if (residual < 5e-13) break;
    if (out.iterations == max_iters) {
      throw std::runtime_error("stationary distribution did not converge");
    }
  }
  out.pi = pi;
  return out;
}

fnode::CanardInfo node_passage_sector(const sde::FastSlowModel& model,
                                      const koper::NodeFrame& frame,
                                      const sections::Section& exit,
                                      const sde::State& start,
                                      const sde::NoiseIntensities& noise,
                                      const sde::SolverConfig& config,
                                      double hysteresis) {
  const auto run = sections::first_hit(model, start, noise, exit, config, true);
  std::vector<double> u1;
  u1.reserve(run.path.states.size());
  for (const auto& st : run.path.states) u1.push_back(frame.deviation(st));
  const int halfturns = fnode::halfturn_count(u1, hysteresis);
  return fnode::sector_from_halfturns(halfturns, frame.mu,
                                      noise.sigma + noise.sigma_p);
}

KoperSectorScan koper_sector_scan(const koper::KoperParams& params,
                                  double z_lo, double z_hi, int n_grid,
                                  double hysteresis, double t_max) {
  if (n_grid < 2) throw std::invalid_argument("need at least two grid points");
  const auto model = koper::koper_model(params, koper::NoiseMatrix::standard());
  const auto frame = koper::node_frame(params);
  const auto secs = sections::default_koper_sections(sde::Box{});
  const auto& exit = sections::find_section(secs, "S2");

  KoperSectorScan scan;
  scan.x_start = koper::critical_branch_x(-1.8, +1);
  sde::SolverConfig config;
  config.t_max = t_max;

  auto sector_at = [&](double z) {
    const sde::State start{scan.x_start, -1.8, z};
    return node_passage_sector(model, frame, exit, start, {}, config,
                               hysteresis);
  };

  for (int i = 0; i < n_grid; ++i) {
    const double z = z_lo + (z_hi - z_lo) * i / (n_grid - 1);
    const auto info = sector_at(z);
    fnode::SectorScanRow row;
    row.z_start = z;
    row.sector = info.sector_k;
    row.halfturns = info.halfturns;
    row.classification = info.classification;
    scan.rows.push_back(row);
    scan.max_sector = std::max(scan.max_sector, info.sector_k);
  }

  // Recover every boundary between grid points with differing counts;
  // coarse grids can step over several sectors at once, so recurse on the
  // intermediate counts before bisecting each single increment.
  struct BoundaryFinder {
    const std::function<int(double)>& count;
    std::vector<double>& out;
    int depth_budget;

    void locate(double lo, int s_lo, double hi, int s_hi) {
      if (s_lo == s_hi || hi - lo < 1e-11) return;
      if (std::abs(s_hi - s_lo) == 1 || depth_budget <= 0) {
        // One increment (or budget exhausted): plain bisection.
        double a = lo, b = hi;
        for (int it = 0; it < 45 && b - a > 1e-11; ++it) {
          const double mid = (a + b) / 2;
          if (count(mid) == s_lo) {
            a = mid;
          } else {
            b = mid;
          }
        }
        out.push_back((a + b) / 2);
        return;
      }
      const double mid = (lo + hi) / 2;
      const int s_mid = count(mid);
      --depth_budget;
      locate(lo, s_lo, mid, s_mid);
      locate(mid, s_mid, hi, s_hi);
      ++depth_budget;
    }
  };

  std::function<int(double)> count_fn = [&](double z) {
    return sector_at(z).sector_k;
  };
  BoundaryFinder finder{count_fn, scan.boundaries, 24};
  for (std::size_t i = 0; i + 1 < scan.rows.size(); ++i) {
    finder.locate(scan.rows[i].z_start, scan.rows[i].sector,
                  scan.rows[i + 1].z_start, scan.rows[i + 1].sector);
  }
  std::sort(scan.boundaries.begin(), scan.boundaries.end());

  // Extent of the maximal-rotation band.
  scan.core_lo = scan.core_hi = 0;
  bool found = false;
  for (const auto& row : scan.rows) {
    if (row.sector == scan.max_sector) {
      if (!found) scan.core_lo = row.z_start;
      scan.core_hi = row.z_start;
      found = true;
    }
  }
  return scan;
}

void chain_to_csv(const SectorChain& chain, const std::string& path) {
  std::string body;
  for (std::size_t i = 0; i < chain.labels.size(); ++i) {
    body += (i ? "," : "") + std::to_string(chain.labels[i]);
  }
  body += '\n';
  char cell[40];
  for (const auto& row : chain.estimate) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      std::snprintf(cell, sizeof cell, "%s%.17g", c ? "," : "", row[c]);
      body += cell;
    }
    body += '\n';
  }
  io::write_file_atomic(path, body);
}

}  // namespace mmo::patterns
