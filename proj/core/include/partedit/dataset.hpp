#pragma once

#include "partedit/shapeworld.hpp"
#include "partedit/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace partedit {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Split { train, val, test };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct Utterance {
  std::string text;
  std::vector<TokenId> tokens;
  std::uint32_t context_id = 0;
  std::uint32_t labeler_id = 0;
  Part part = Part::legs;
  Attribute attribute = Attribute::length;
  Direction direction = Direction::increase;
};

/// One labeler's description of one source/target pair.
struct Triplet {
  std::uint32_t context_id = 0;
  std::uint32_t labeler_id = 0;
  ShapeParams source;
  ShapeParams target;
  std::vector<Utterance> utterances;
  Split split = Split::train;
};

struct DatasetConfig {
  std::size_t contexts = 5000;
  /// Probability that a pair differs along 2 or 3 axes instead of 1.
  double multi_axis_fraction = 0.6;
  /// Probability that a second labeler also describes the pair.
  double second_labeler_probability = 0.5;
  double factor_min = 1.3;
  double factor_max = 1.8;
  double chair_fraction = 0.7;
  double arms_probability = 0.5;
  std::uint32_t labeler_pool = 40;
  double adverb_probability = 0.25;

  void validate() const;
};

/// A source shape as the generator draws it: active parameters uniform in range.
ShapeParams sample_shape(const DatasetConfig& cfg, std::mt19937_64& rng);

/// Deterministic for a seed; each context draws from its own derived stream.
std::vector<Triplet> generate_dataset(const DatasetConfig& cfg, std::uint64_t seed);

/// Template sentence for one axis change, e.g. "the legs are longer".
std::string describe_change(Part part, Attribute attribute, Direction direction);

/// Parameter change sign of target vs source agrees with every utterance.
bool ground_truth_consistent(const Triplet& t);

// Line-delimited JSON, one triplet per line. Lines carrying a "record" key
// (headers, summaries) are skipped on read.
void write_dataset(std::ostream& out, const std::vector<Triplet>& triplets);
std::vector<Triplet> read_dataset(std::istream& in);
std::vector<Triplet> load_dataset(const std::filesystem::path& path);

}  // namespace partedit
