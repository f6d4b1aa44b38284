#include "partedit/app/harness.hpp"

#include "partedit/nn.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace partedit::app {

std::vector<ShapeParams> distinct_shapes(std::span<const Triplet> data, Split split) {
  std::vector<ShapeParams> out;
  std::set<std::uint32_t> seen;
  for (const auto& t : data) {
    if (t.split != split || !seen.insert(t.context_id).second) continue;
    out.push_back(t.source);
    out.push_back(t.target);
  }
  return out;
}

ShapeSplits autoencoder_shapes(std::span<const Triplet> data) {
  return {distinct_shapes(data, Split::train), distinct_shapes(data, Split::val)};
}

NeighborIndex build_neighbor_index(const Autoencoder& ae, std::span<const Triplet> data) {
  const auto shapes = distinct_shapes(data, Split::train);
  return NeighborIndex(ae.encode_all(shapes));
}

EditConfig resolve_edit_config(EditConfig cfg, std::span<const Triplet> data, double delta_fraction) {
  if (cfg.delta == 0.0) {
    const auto shapes = distinct_shapes(data, Split::train);
    cfg.delta = default_delta(shapes) * (delta_fraction / 0.005);
  }
  cfg.validate();
  return cfg;
}

std::vector<BenchmarkItem> benchmark_items(std::span<const Triplet> data, std::size_t count) {
  std::vector<BenchmarkItem> out;
  std::set<std::uint32_t> seen;
  for (const auto& t : data) {
    if (out.size() == count) break;
    if (t.split != Split::test || t.utterances.empty() || !seen.insert(t.context_id).second) continue;
    out.push_back({t.context_id, t.source, t.utterances.front().text});
  }
  if (out.size() < count) {
    throw std::invalid_argument("test split has " + std::to_string(out.size()) + " contexts, " +
                                std::to_string(count) + " requested");
  }
  return out;
}

void StepStats::add(const EditTrace& trace, double delta) {
  for (std::size_t b = 1; b < trace.steps.size(); ++b) {
    const auto& st = trace.steps[b];
    ++steps;
    if (st.h >= trace.steps[b - 1].h) ++ascending;
    const double ratio = st.delta_v / delta;
    const bool within = ratio >= 0.5 && ratio <= 2.0;
    if (within) ++within_two;
    if (st.degenerate) {
      ++degenerate;
    } else if (st.clipped) {
      ++clipped;
    } else {
      ++unclipped;
      if (within) ++unclipped_within_two;
      const double predicted = st.eta * std::abs(st.directional);
      worst_linearized_error = std::max(worst_linearized_error, std::abs(predicted - delta) / delta);
    }
  }
}

double EditBatchResult::validity() const {
  const std::size_t n = entries.size();
  return n == 0 ? 0.0 : static_cast<double>(valid) / static_cast<double>(n);
}

EditBatchResult run_edits(const EditInputs& in, std::span<const BenchmarkItem> items,
                          const EditConfig& cfg, const ValidityEnvelope& envelope, double swell,
                          std::uint64_t seed, bool keep_traces) {
  EditBatchResult out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    const auto source = in.autoencoder.encode(item.source);
    auto trace = edit(in, source, item.source, item.utterance, cfg, nn::derive_seed(seed, i));
    if (trace.failed) ++out.failed;
    if (cfg.odessa_enabled) out.stats.add(trace, cfg.delta);
    const auto& final_params = trace.final_step().params;
    if (envelope.contains(final_params)) ++out.valid;
    out.entries.push_back(
        pep_entry(realize_shape(trace.source_params), realize_shape(final_params), item.utterance, swell));
    if (keep_traces) out.traces.push_back(std::move(trace));
  }
  return out;
}

IterativeResult run_iterative(const EditInputs& in, std::span<const BenchmarkItem> items,
                              const EditConfig& cfg, const ValidityEnvelope& envelope, double swell,
                              std::size_t rounds, std::uint64_t seed) {
  IterativeResult out;
  out.rounds.resize(rounds);
  out.valid.assign(rounds, 0);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    const auto source = in.autoencoder.encode(item.source);
    const auto traces =
        iterative_edit(in, source, item.source, item.utterance, cfg, rounds, nn::derive_seed(seed, i));
    const auto original = realize_shape(traces.front().source_params);
    for (std::size_t r = 0; r < rounds; ++r) {
      const auto& p = traces[r].final_step().params;
      if (envelope.contains(p)) ++out.valid[r];
      out.rounds[r].push_back(pep_entry(original, realize_shape(p), item.utterance, swell));
    }
  }
  return out;
}

nlohmann::ordered_json step_stats_json(const StepStats& s) {
  auto frac = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / b; };
  return {{"steps", s.steps},
          {"unclipped", s.unclipped},
          {"clipped", s.clipped},
          {"degenerate", s.degenerate},
          {"unclipped_within_two", frac(s.unclipped_within_two, s.unclipped)},
          {"all_within_two", frac(s.within_two, s.steps)},
          {"ascending", frac(s.ascending, s.steps)},
          {"worst_linearized_error", s.worst_linearized_error}};
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty list");
  if (std::any_of(v.begin(), v.end(), [](double x) { return std::isnan(x); })) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace partedit::app
