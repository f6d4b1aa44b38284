#pragma once

#include "partedit/shapeworld.hpp"

#include <iosfwd>
#include <optional>
#include <nlohmann/json.hpp>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace partedit {

/// Raised when an utterance names no part, so no relevant region exists.
class MetricUndefined : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Keyword classifier K(u): parts named by the words of the utterance.
std::vector<Part> classify_parts(std::string_view utterance);

inline constexpr double kDefaultSwell = 0.02;

/// Source boxes of the parts in K(u), each grown by swell on every face.
BoxSet relevant_region(const BoxSet& source, std::string_view utterance, double swell = kDefaultSwell);

/// |region_volume(edited) - region_volume(source)|: net signed change, then magnitude.
double delta_v(const BoxSet& region, const BoxSet& edited, const BoxSet& source);
/// Net change over all space.
double delta_v_whole(const BoxSet& edited, const BoxSet& source);

/// delta_v divided by the source volume inside the region; nullopt when that is zero.
std::optional<double> pct_change(const BoxSet& region, const BoxSet& edited, const BoxSet& source);

enum class PepFlag {
  none,
  no_part,          // K(u) empty
  zero_baseline,    // source has no volume in the relevant region
  no_change,        // whole-shape change is zero
  negative_infinity // relevant change is zero while the whole shape changed
};
std::string_view to_string(PepFlag f);

struct PepEntry {
  std::string utterance;
  double dv_whole = 0.0;
  double dv_relevant = 0.0;
  double w_whole = 0.0;
  double w_relevant = 0.0;
  /// Natural log; -inf for the negative_infinity flag, NaN for other flags.
  double pep = 0.0;
  PepFlag flag = PepFlag::none;

  [[nodiscard]] bool defined() const { return flag == PepFlag::none; }
};

PepEntry pep_entry(const BoxSet& source, const BoxSet& edited, std::string_view utterance,
                   double swell = kDefaultSwell);

class AggregationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PepAggregate {
  double mpep = 0.0;
  /// Mean whole-shape delta_v over defined entries.
  double mdv = 0.0;
  std::size_t defined = 0;
  std::size_t flagged = 0;
  std::size_t no_part = 0;
  std::size_t zero_baseline = 0;
  std::size_t no_change = 0;
  std::size_t negative_infinity = 0;
};

/// Means over unflagged entries; throws AggregationError when none is defined.
PepAggregate aggregate(std::span<const PepEntry> entries);

nlohmann::ordered_json pep_entry_to_json(const PepEntry& e);
nlohmann::ordered_json pep_aggregate_to_json(const PepAggregate& a, double swell);
/// One line per entry plus a trailing aggregate record (when any entry is defined).
void write_pep_report(std::ostream& out, std::span<const PepEntry> entries, double swell,
                      const nlohmann::ordered_json& extra = {});

}  // namespace partedit
