#include "partedit/metrics.hpp"

#include "partedit/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace partedit {

std::vector<Part> classify_parts(std::string_view utterance) {
  std::vector<Part> out;
  auto add = [&](Part p) {
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  };
  for (const auto& w : split_words(utterance)) {
    if (w == "leg" || w == "legs") {
      add(Part::legs);
    } else if (w == "seat") {
      add(Part::seat);
    } else if (w == "back" || w == "backrest") {
      add(Part::back);
    } else if (w == "arm" || w == "arms" || w == "armrest" || w == "armrests") {
      add(Part::armrests);
    }
  }
  return out;
}

BoxSet relevant_region(const BoxSet& source, std::string_view utterance, double swell) {
  const auto parts = classify_parts(utterance);
  if (parts.empty()) throw MetricUndefined("no part word in '" + std::string(utterance) + "'");
  return partedit::swell(select_parts(source, parts), swell);
}

double delta_v(const BoxSet& region, const BoxSet& edited, const BoxSet& source) {
  return std::abs(region_volume(edited, region) - region_volume(source, region));
}

double delta_v_whole(const BoxSet& edited, const BoxSet& source) {
  return std::abs(volume(edited) - volume(source));
}

std::optional<double> pct_change(const BoxSet& region, const BoxSet& edited, const BoxSet& source) {
  const double base = region_volume(source, region);
  if (!(base > 0.0)) return std::nullopt;
  return delta_v(region, edited, source) / base;
}

std::string_view to_string(PepFlag f) {
  switch (f) {
    case PepFlag::none:
      return "none";
    case PepFlag::no_part:
      return "no_part";
    case PepFlag::zero_baseline:
      return "zero_baseline";
    case PepFlag::no_change:
      return "no_change";
    case PepFlag::negative_infinity:
      return "negative_infinity";
  }
  return "?";
}

PepEntry pep_entry(const BoxSet& source, const BoxSet& edited, std::string_view utterance,
                   double swell) {
  PepEntry e;
  e.utterance = std::string(utterance);
  e.pep = std::numeric_limits<double>::quiet_NaN();
  e.dv_whole = delta_v_whole(edited, source);
  const double v_source = volume(source);
  e.w_whole = v_source > 0.0 ? e.dv_whole / v_source : 0.0;

  BoxSet region;
  try {
    region = relevant_region(source, utterance, swell);
  } catch (const MetricUndefined&) {
    e.flag = PepFlag::no_part;
    return e;
  }
  e.dv_relevant = delta_v(region, edited, source);
  const auto w_rel = pct_change(region, edited, source);
  if (!w_rel) {
    e.flag = PepFlag::zero_baseline;
    return e;
  }
  e.w_relevant = *w_rel;
  if (!(e.w_whole > 0.0)) {
    e.flag = PepFlag::no_change;
    return e;
  }
  if (!(e.w_relevant > 0.0)) {
    e.flag = PepFlag::negative_infinity;
    e.pep = -std::numeric_limits<double>::infinity();
    return e;
  }
  e.pep = std::log(e.w_relevant / e.w_whole);
  return e;
}

PepAggregate aggregate(std::span<const PepEntry> entries) {
  PepAggregate a;
  for (const auto& e : entries) {
    switch (e.flag) {
      case PepFlag::none:
        a.mpep += e.pep;
        a.mdv += e.dv_whole;
        ++a.defined;
        continue;
      case PepFlag::no_part:
        ++a.no_part;
        break;
      case PepFlag::zero_baseline:
        ++a.zero_baseline;
        break;
      case PepFlag::no_change:
        ++a.no_change;
        break;
      case PepFlag::negative_infinity:
        ++a.negative_infinity;
        break;
    }
    ++a.flagged;
  }
  if (a.defined == 0) {
    throw AggregationError("all " + std::to_string(entries.size()) + " PEP entries are flagged");
  }
  a.mpep /= static_cast<double>(a.defined);
  a.mdv /= static_cast<double>(a.defined);
  return a;
}

nlohmann::ordered_json pep_entry_to_json(const PepEntry& e) {
  nlohmann::ordered_json j;
  j["utterance"] = e.utterance;
  j["dv_whole"] = e.dv_whole;
  j["dv_relevant"] = e.dv_relevant;
  j["w_whole"] = e.w_whole;
  j["w_relevant"] = e.w_relevant;
  // JSON has no infinities or NaN; flagged entries carry null.
  if (e.defined()) {
    j["pep"] = e.pep;
  } else {
    j["pep"] = nullptr;
  }
  j["flag"] = to_string(e.flag);
  return j;
}

nlohmann::ordered_json pep_aggregate_to_json(const PepAggregate& a, double swell) {
  nlohmann::ordered_json j;
  j["record"] = "aggregate";
  j["mpep"] = a.mpep;
  j["mdv"] = a.mdv;
  j["defined"] = a.defined;
  j["flagged"] = a.flagged;
  j["flag_counts"] = {{"no_part", a.no_part},
                      {"zero_baseline", a.zero_baseline},
                      {"no_change", a.no_change},
                      {"negative_infinity", a.negative_infinity}};
  j["swell"] = swell;
  j["log_base"] = "e";
  j["delta_v_convention"] = "net signed change per region, then absolute value";
  return j;
}

void write_pep_report(std::ostream& out, std::span<const PepEntry> entries, double swell,
                      const nlohmann::ordered_json& extra) {
  for (const auto& e : entries) out << pep_entry_to_json(e).dump() << '\n';
  try {
    auto agg = pep_aggregate_to_json(aggregate(entries), swell);
    for (const auto& [k, v] : extra.items()) agg[k] = v;
    out << agg.dump() << '\n';
  } catch (const AggregationError& e) {
    nlohmann::ordered_json agg{{"record", "aggregate"}, {"error", e.what()}, {"swell", swell}};
    for (const auto& [k, v] : extra.items()) agg[k] = v;
    out << agg.dump() << '\n';
  }
}

}  // namespace partedit
