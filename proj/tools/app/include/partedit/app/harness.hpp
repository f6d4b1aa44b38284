#pragma once

#include "partedit/autoencoder.hpp"
#include "partedit/dataset.hpp"
#include "partedit/editor.hpp"
#include "partedit/metrics.hpp"

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

namespace partedit::app {

/// Source and target of the first triplet of every context in a split.
std::vector<ShapeParams> distinct_shapes(std::span<const Triplet> data, Split split);

/// Autoencoder training and held-out shapes (train and val splits).
struct ShapeSplits {
  std::vector<ShapeParams> train;
  std::vector<ShapeParams> holdout;
};
ShapeSplits autoencoder_shapes(std::span<const Triplet> data);

/// Latents of the distinct training shapes.
NeighborIndex build_neighbor_index(const Autoencoder& ae, std::span<const Triplet> data);

/// cfg with delta filled in from the training shapes when it is 0.
EditConfig resolve_edit_config(EditConfig cfg, std::span<const Triplet> data, double delta_fraction);

struct BenchmarkItem {
  std::uint32_t context_id = 0;
  ShapeParams source;
  std::string utterance;
};

/// First utterance of the first triplet of the first count test contexts.
std::vector<BenchmarkItem> benchmark_items(std::span<const Triplet> data, std::size_t count);

struct StepStats {
  std::size_t steps = 0;
  std::size_t unclipped = 0;
  /// Realized |dV| within [delta/2, 2 delta].
  std::size_t unclipped_within_two = 0;
  std::size_t within_two = 0;
  std::size_t clipped = 0;
  std::size_t degenerate = 0;
  std::size_t ascending = 0;
  /// max over unclipped steps of |eta |grad V . dir| - delta| / delta, from the trace.
  double worst_linearized_error = 0.0;

  void add(const EditTrace& trace, double delta);
};

struct EditBatchResult {
  std::vector<PepEntry> entries;
  std::vector<EditTrace> traces;
  StepStats stats;
  std::size_t valid = 0;
  std::size_t failed = 0;

  [[nodiscard]] PepAggregate pep() const { return aggregate(entries); }
  [[nodiscard]] double validity() const;
};

/// One edit per item; item i uses seed derive_seed(seed, i).
EditBatchResult run_edits(const EditInputs& in, std::span<const BenchmarkItem> items,
                          const EditConfig& cfg, const ValidityEnvelope& envelope, double swell,
                          std::uint64_t seed, bool keep_traces = false);

/// rounds[r] scores round r's output against the original source.
struct IterativeResult {
  std::vector<std::vector<PepEntry>> rounds;
  std::vector<std::size_t> valid;
};
IterativeResult run_iterative(const EditInputs& in, std::span<const BenchmarkItem> items,
                              const EditConfig& cfg, const ValidityEnvelope& envelope, double swell,
                              std::size_t rounds, std::uint64_t seed);

nlohmann::ordered_json step_stats_json(const StepStats& s);

double median(std::vector<double> v);

}  // namespace partedit::app
