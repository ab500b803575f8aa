#ifndef MMO_PATTERNS_HPP
#define MMO_PATTERNS_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmo/folded_node.hpp"
#include "mmo/koper.hpp"
#include "mmo/sde_core.hpp"
#include "mmo/sections.hpp"

namespace mmo::patterns {

// One oscillation = one accepted local maximum of x(s). It counts as an LAO
// when its rise sweeps across both fold lines (peak above fold_hi after a
// trough below fold_lo); everything else is an SAO.
struct OscillationClassifier {
  double prominence = 1e-4;  // hysteresis band for extrema detection
  double fold_hi = 1.0;
  double fold_lo = -1.0;

  // Ties the amplitude floor to the noise level so oscillations masked by
  // fluctuations are dropped rather than miscounted. The factor is a
  // calibration knob; 2.5x the combined intensity separates real small
  // oscillations from noise excursions on the benchmark runs.
  static OscillationClassifier for_noise(double sigma, double sigma_p) {
    OscillationClassifier c;
    c.prominence = std::max(1e-4, 2.5 * (sigma + sigma_p));
    return c;
  }
};

struct OscillationEvent {
  double s = 0;       // time of the peak
  double peak = 0;
  double trough_before = 0;
  double trough_after = 0;
  bool lao = false;
};

std::vector<OscillationEvent> classify_oscillations(
    std::span<const double> times, std::span<const double> xs,
    const OscillationClassifier& classifier);

std::vector<OscillationEvent> classify_oscillations(
    const sde::Trajectory& trajectory, const OscillationClassifier& classifier);

// L consecutive LAOs followed by s consecutive SAOs.
struct MmoSymbol {
  int L = 0;
  int s = 0;

  bool operator==(const MmoSymbol&) const = default;
};

struct PatternResult {
  std::vector<MmoSymbol> symbols;
  // Minimal repeating word (canonical rotation) when one covers the symbol
  // sequence at least three times after dropping a transient prefix.
  std::optional<std::vector<MmoSymbol>> periodic_word;
  int transient_skipped = 0;
};

PatternResult extract_pattern(const std::vector<OscillationEvent>& events,
                              int max_transient = 4);

// SAO count following each LAO (decomposes L^s blocks into per-LAO counts).
std::vector<int> per_lao_sao_counts(const std::vector<OscillationEvent>& events);

std::string word_to_string(const std::vector<MmoSymbol>& word);  // "1^1 1^2"
std::vector<MmoSymbol> canonical_rotation(std::vector<MmoSymbol> word);
std::string events_to_json(const std::vector<OscillationEvent>& events);

// Empirical sector-to-sector chain from iterated returns.
struct SectorChain {
  std::vector<int> labels;                  // sector index per state
  std::vector<std::vector<double>> counts;  // transition counts
  std::vector<std::vector<double>> estimate;  // row-normalized
  std::vector<bool> row_has_data;
};

// Builds the chain from the sequence of visited sectors k_0, k_1, ...
SectorChain sector_chain(const std::vector<int>& sector_sequence);

// Convenience: map return coordinates to sectors via boundary values
// (boundaries[i] separates sector i from i+1, increasing).
std::vector<int> sectors_from_values(const std::vector<double>& values,
                                     const std::vector<double>& boundaries);

struct StationaryResult {
  std::vector<double> pi;
  bool reducible = false;  // restricted to the class reachable from the
                           // modal state
  int iterations = 0;
};

// Power iteration (with 1/2 lazy damping, which preserves the stationary
// vector and kills periodicity) from the modal state to residual 1e-12.
StationaryResult stationary_distribution(const SectorChain& chain);

void chain_to_csv(const SectorChain& chain, const std::string& path);

// ---------------------------------------------------------------------------
// Koper-specific sector machinery: rotation counting of full-model node
// passages, and empirical sector boundaries from a deterministic z-scan on
// the entry section (boundaries sit where the count increments).
// ---------------------------------------------------------------------------

// Rotation sector of one deterministic or stochastic passage from `start`
// to the exit section, counted as sign changes of the deviation from the
// weak-eigendirection line through the folded node.
fnode::CanardInfo node_passage_sector(const sde::FastSlowModel& model,
                                      const koper::NodeFrame& frame,
                                      const sections::Section& exit,
                                      const sde::State& start,
                                      const sde::NoiseIntensities& noise,
                                      const sde::SolverConfig& config,
                                      double hysteresis = 1e-9);

struct KoperSectorScan {
  std::vector<fnode::SectorScanRow> rows;
  std::vector<double> boundaries;  // z values where the count increments
  double x_start = 0;              // entry x (right branch at the S1 level)
  int max_sector = 0;
  double core_lo = 0, core_hi = 0;  // z-extent of the maximal-rotation band
};

KoperSectorScan koper_sector_scan(const koper::KoperParams& params,
                                  double z_lo, double z_hi, int n_grid,
                                  double hysteresis = 1e-9,
                                  double t_max = 30.0);

}  // namespace mmo::patterns

#endif  // MMO_PATTERNS_HPP
