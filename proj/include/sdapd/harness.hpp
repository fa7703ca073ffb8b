#pragma once

// Experiment orchestration: configuration files, paired illuminated/dark
// characterisation runs, bias search at a fixed efficiency or afterpulse
// target, and parallel parameter sweeps with order-restoring CSV output.

#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sdapd/analysis.hpp"
#include "sdapd/engine.hpp"
#include "sdapd/waveform.hpp"

namespace sdapd {

class KeyValueDocument;

struct BiasTarget {
  enum class Kind { spde, p_a };
  Kind kind = Kind::spde;
  double value = 0.0;
  double tolerance = 0.005;
};

struct BiasSearchOptions {
  double max_excess_v = 15.0;
  std::int64_t initial_gates = 4'000'000;
  std::int64_t max_gates = 1'000'000'000;
  int max_evaluations = 60;
};

enum class SweepAxis { gate_width, amplitude, temperature, flux, dc_bias };

const char* to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(std::string_view text);

struct SweepSpec {
  SweepAxis axis = SweepAxis::temperature;
  std::vector<double> values;
  RunConfig fixed;
  EstimatorOptions analysis;
  // Re-tunes v_dc on every row to hit this target.
  std::optional<BiasTarget> target;
  // Without a target: re-derives v_dc on every row so the gate peak sits
  // this far above breakdown.
  std::optional<double> hold_excess_v;
  int replicates = 1;
  BiasSearchOptions search;

  void validate() const;
  std::size_t row_count() const { return values.size() * static_cast<std::size_t>(replicates); }
};

// Everything one config file can describe.
struct ExperimentConfig {
  RunConfig run;
  EstimatorOptions analysis;
  // Gates in the dark reference run; 0 means the same as run.n_gates.
  std::int64_t dark_gates = 0;
  std::uint32_t bin_width_ps = 0;
  std::optional<BiasTarget> target;
  BiasSearchOptions search;
  std::optional<SweepSpec> sweep;
  WaveformConfig waveform;
  std::int64_t waveform_gates = 64;
  double threshold_mv = 5.0;
  std::vector<std::string> warnings;
};

// Sections: [device] (optionally "file = path" naming a device parameter
// file, resolved against base_dir), [gate] (optionally excess_v instead of
// v_dc_v), [optical], [run], [analysis], [search], [sweep], [waveform]. Unknown keys and
// sections are rejected with the line that holds them.
ExperimentConfig load_experiment(const KeyValueDocument& doc, const std::string& base_dir = ".");
ExperimentConfig load_experiment_file(const std::string& path);
ExperimentConfig parse_experiment(std::string_view text, const std::string& base_dir = ".");

struct Characterization {
  CharacterizationResult result;
  RunSummary illuminated;
  RunSummary dark;
  double v_dc_v = 0.0;
  double excess_v = 0.0;
  std::uint64_t seed = 0;
  std::int64_t n_gates = 0;

  // Mean avalanche charge of illuminated-run counts.
  double charge_per_count_c() const;
};

// Illuminated run at cfg.seed and dark run at derive_seed(cfg.seed, 1), both
// analysed with the given options.
Characterization characterize(const RunConfig& cfg, const EstimatorOptions& options = {},
                              std::int64_t dark_gates = 0);

struct BiasResult {
  double v_dc_v = 0.0;
  double excess_v = 0.0;
  Characterization at;
  int evaluations = 0;
};

// Bisection on v_dc over excess voltages [0, max_excess_v], reusing the
// template's seed at every bias. n_gates doubles until the estimate's sigma
// is at most tolerance/2. Throws InfeasibleTarget when the target lies
// outside the reachable range or the search does not converge.
BiasResult bias_search(const RunConfig& tmpl, const EstimatorOptions& options, const BiasTarget& target,
                       const BiasSearchOptions& search = {});

struct SweepRow {
  std::size_t index = 0;
  double value = 0.0;
  int replicate = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string note;
  Characterization at;
};

// Row index = value index * replicates + replicate; its seed is
// derive_seed(spec.fixed.seed, index).
RunConfig sweep_row_config(const SweepSpec& spec, std::size_t index);
SweepRow run_sweep_row(const SweepSpec& spec, std::size_t index);

// Runs every row on up to `workers` threads and hands rows to `emit` in
// index order. When `cancel` becomes true no new rows start; completed rows
// are still emitted, in index order. Returns the emitted rows.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, int workers,
                                const std::function<void(const SweepRow&)>& emit = {},
                                const std::atomic<bool>* cancel = nullptr);

std::string sweep_csv_header(const SweepSpec& spec);
std::string sweep_csv_row(const SweepRow& row);

// SDAPD_WORKERS if set and positive, else the hardware thread count.
int default_worker_count();

}  // namespace sdapd
