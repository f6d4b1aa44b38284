#include "partedit/dataset.hpp"

#include "partedit/json_io.hpp"
#include "partedit/nn.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

namespace partedit {

namespace {

struct Wording {
  std::vector<std::string_view> nouns;
  std::vector<std::string_view> increase;
  std::vector<std::string_view> decrease;
};

Wording wording_for(Part part, Attribute attribute) {
  Wording w;
  switch (part) {
    case Part::legs:
      w.nouns = {"legs"};
      break;
    case Part::seat:
      w.nouns = {"seat"};
      break;
    case Part::back:
      w.nouns = {"back", "backrest"};
      break;
    case Part::armrests:
      w.nouns = {"armrests", "arms"};
      break;
  }
  switch (attribute) {
    case Attribute::thickness:
      w.increase = {"thicker"};
      w.decrease = part == Part::legs ? std::vector<std::string_view>{"thinner", "skinnier"}
                                      : std::vector<std::string_view>{"thinner"};
      break;
    case Attribute::width:
      w.increase = {"wider", "broader"};
      w.decrease = {"narrower"};
      break;
    case Attribute::length:
      if (part == Part::legs) {
        w.increase = {"longer", "taller"};
        w.decrease = {"shorter"};
      } else if (part == Part::seat) {
        w.increase = {"deeper", "longer"};
        w.decrease = {"shallower", "shorter"};
      } else {
        w.increase = {"taller", "higher"};
        w.decrease = {"shorter", "lower"};
      }
      break;
  }
  return w;
}

bool plural(std::string_view noun) { return noun.back() == 's'; }

template <class T>
const T& pick(const std::vector<T>& options, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, options.size() - 1);
  return options[dist(rng)];
}

std::string phrase(Part part, Attribute attribute, Direction direction, std::string_view adverb,
                   std::mt19937_64* rng) {
  const Wording w = wording_for(part, attribute);
  const auto& comparatives = direction == Direction::increase ? w.increase : w.decrease;
  const std::string_view noun = rng ? pick(w.nouns, *rng) : w.nouns.front();
  const std::string_view comparative = rng ? pick(comparatives, *rng) : comparatives.front();
  std::string text = "the ";
  text += noun;
  text += plural(noun) ? " are " : " is ";
  if (!adverb.empty()) {
    text += adverb;
    text += ' ';
  }
  text += comparative;
  return text;
}

ShapeParams sample_source(const DatasetConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ShapeParams p;
  p.category = unit(rng) < cfg.chair_fraction ? Category::chair : Category::table;
  p.has_back = p.category == Category::chair;
  p.has_arms = p.category == Category::chair && unit(rng) < cfg.arms_probability;
  const auto& b = bounds_for(p.category);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    const double mid = 0.5 * (b[i].min + b[i].max);
    const double u = unit(rng);
    p.values[i] = param_active(p, static_cast<Param>(i)) ? b[i].min + u * (b[i].max - b[i].min)
                                                         : mid;
  }
  return p;
}

}  // namespace

ShapeParams sample_shape(const DatasetConfig& cfg, std::mt19937_64& rng) { return sample_source(cfg, rng); }

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidityError("unknown split '" + std::string(s) + "'");
}

void DatasetConfig::validate() const {
  if (contexts < 10) throw ConfigError("dataset.contexts must be at least 10");
  auto unit_interval = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  unit_interval(multi_axis_fraction, "dataset.multi_axis_fraction");
  unit_interval(second_labeler_probability, "dataset.second_labeler_probability");
  unit_interval(chair_fraction, "dataset.chair_fraction");
  unit_interval(arms_probability, "dataset.arms_probability");
  unit_interval(adverb_probability, "dataset.adverb_probability");
  if (!(factor_min > 1.0 && factor_max >= factor_min)) {
    throw ConfigError("dataset factors need 1 < factor_min <= factor_max");
  }
  for (Category c : {Category::chair, Category::table}) {
    for (const auto& r : bounds_for(c)) {
      if (r.max / r.min < factor_max) {
        throw ConfigError("dataset.factor_max exceeds the span of a parameter range");
      }
    }
  }
  if (labeler_pool < 2) throw ConfigError("dataset.labeler_pool must be at least 2");
}

std::string describe_change(Part part, Attribute attribute, Direction direction) {
  return phrase(part, attribute, direction, {}, nullptr);
}

std::vector<Triplet> generate_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto n = static_cast<std::uint32_t>(cfg.contexts);

  // Split assignment: a seeded permutation of context ids, 80/10/10.
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0U);
  std::mt19937_64 split_rng(nn::derive_seed(seed, 0xC0FFEE));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::vector<Split> split_of(n);
  const std::size_t n_train = (static_cast<std::size_t>(n) * 8) / 10;
  const std::size_t n_val = static_cast<std::size_t>(n) / 10;
  for (std::size_t i = 0; i < n; ++i) {
    split_of[order[i]] = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
  }

  std::vector<Triplet> out;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::uint32_t c = 0; c < n; ++c) {
    std::mt19937_64 rng(nn::derive_seed(seed, c));
    ShapeParams source = sample_source(cfg, rng);
    auto axes = active_axes(source);
    std::size_t n_axes = 1;
    if (unit(rng) < cfg.multi_axis_fraction) n_axes = unit(rng) < 0.5 ? 2 : 3;
    n_axes = std::min(n_axes, axes.size());
    std::shuffle(axes.begin(), axes.end(), rng);
    axes.resize(n_axes);

    ShapeParams target = source;
    std::vector<Direction> directions;
    const auto& bounds = bounds_for(source.category);
    for (const auto& axis : axes) {
      const auto i = static_cast<std::size_t>(axis.param);
      const Direction dir = unit(rng) < 0.5 ? Direction::increase : Direction::decrease;
      const double factor = cfg.factor_min + unit(rng) * (cfg.factor_max - cfg.factor_min);
      // Resample the source value inside the interval where the edit stays in range.
      const double lo = dir == Direction::increase ? bounds[i].min : bounds[i].min * factor;
      const double hi = dir == Direction::increase ? bounds[i].max / factor : bounds[i].max;
      source.values[i] = lo + unit(rng) * (hi - lo);
      target.values[i] = dir == Direction::increase ? source.values[i] * factor
                                                    : source.values[i] / factor;
      target.values[i] = std::clamp(target.values[i], bounds[i].min, bounds[i].max);
      directions.push_back(dir);
    }
    // Unchanged parameters of the target mirror the (possibly resampled) source.
    for (std::size_t i = 0; i < kParamCount; ++i) {
      const bool changed = std::any_of(axes.begin(), axes.end(), [&](const EditAxis& ax) {
        return static_cast<std::size_t>(ax.param) == i;
      });
      if (!changed) target.values[i] = source.values[i];
    }

    std::vector<std::uint32_t> labelers;
    std::uniform_int_distribution<std::uint32_t> who(0, cfg.labeler_pool - 1);
    labelers.push_back(who(rng));
    if (unit(rng) < cfg.second_labeler_probability) {
      std::uint32_t second = who(rng);
      while (second == labelers.front()) second = who(rng);
      labelers.push_back(second);
    }

    for (std::uint32_t labeler : labelers) {
      Triplet t;
      t.context_id = c;
      t.labeler_id = labeler;
      t.source = source;
      t.target = target;
      t.split = split_of[c];
      std::vector<std::size_t> mention(axes.size());
      std::iota(mention.begin(), mention.end(), std::size_t{0});
      std::shuffle(mention.begin(), mention.end(), rng);
      for (std::size_t a : mention) {
        std::string_view adverb;
        if (unit(rng) < cfg.adverb_probability) adverb = unit(rng) < 0.5 ? "much" : "slightly";
        Utterance u;
        u.text = phrase(axes[a].part, axes[a].attribute, directions[a], adverb, &rng);
        u.tokens = tokenize(u.text);
        u.context_id = c;
        u.labeler_id = labeler;
        u.part = axes[a].part;
        u.attribute = axes[a].attribute;
        u.direction = directions[a];
        t.utterances.push_back(std::move(u));
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

bool ground_truth_consistent(const Triplet& t) {
  for (const auto& u : t.utterances) {
    const auto axis = find_axis(u.part, u.attribute);
    if (!axis) return false;
    const double delta = t.target.get(axis->param) - t.source.get(axis->param);
    if (u.direction == Direction::increase ? !(delta > 0.0) : !(delta < 0.0)) return false;
  }
  return true;
}

void write_dataset(std::ostream& out, const std::vector<Triplet>& triplets) {
  for (const auto& t : triplets) out << triplet_to_json(t).dump() << '\n';
}

std::vector<Triplet> read_dataset(std::istream& in) {
  std::vector<Triplet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("record")) continue;
      out.push_back(triplet_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw ValidityError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Triplet> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidityError("cannot open dataset " + path.string());
  return read_dataset(in);
}

}  // namespace partedit
