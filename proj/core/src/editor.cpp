#include "partedit/editor.hpp"

#include "partedit/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace partedit {

namespace {

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2) return v[mid];
  const double hi = v[mid];
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

NeighborIndex::NeighborIndex(std::vector<LatentCode> codes) : codes_(std::move(codes)) {
  if (codes_.empty()) throw std::invalid_argument("neighbor index needs at least one code");
  dim_ = codes_.front().size();
  for (const auto& c : codes_) {
    if (c.size() != dim_) throw std::invalid_argument("neighbor index codes differ in dimension");
  }
}

std::vector<std::size_t> NeighborIndex::nearest(std::span<const double> query, std::size_t count) const {
  if (query.size() != dim_) throw std::invalid_argument("query dimension does not match the index");
  if (count == 0) throw std::invalid_argument("neighbour count must be positive");
  if (count > codes_.size()) {
    throw std::invalid_argument("requested " + std::to_string(count) + " neighbours from an index of " +
                                std::to_string(codes_.size()));
  }
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(codes_.size());
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double diff = codes_[i][j] - query[j];
      d2 += diff * diff;
    }
    if (d2 == 0.0) continue;
    cand.emplace_back(d2, i);
  }
  if (count > cand.size()) {
    throw std::invalid_argument("only " + std::to_string(cand.size()) +
                                " neighbours remain after excluding duplicates of the query");
  }
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(count), cand.end());
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = cand[i].second;
  return out;
}

ad::Tensor NeighborIndex::get_nearest(std::span<const double> query, std::size_t count) const {
  const auto idx = nearest(query, count);
  std::vector<double> q;
  q.reserve(count * dim_);
  for (std::size_t i : idx) q.insert(q.end(), codes_[i].begin(), codes_[i].end());
  return ad::Tensor::constant({count, dim_}, std::move(q));
}

void EditConfig::validate() const {
  if (neighbors == 0) throw ConfigError("edit.neighbors must be at least 1");
  if (!(gamma > 0.0)) throw ConfigError("edit.gamma must be positive");
  if (!(delta > 0.0)) throw ConfigError("edit.delta must be positive");
  if (!(fixed_step > 0.0)) throw ConfigError("edit.fixed_step must be positive");
  if (!(eta_cap_factor > 0.0)) throw ConfigError("edit.eta_cap_factor must be positive");
}

double default_delta(std::span<const ShapeParams> training_shapes) {
  if (training_shapes.empty()) throw std::invalid_argument("default_delta needs training shapes");
  double total = 0.0;
  for (const auto& p : training_shapes) total += shape_volume(p);
  return 0.005 * total / static_cast<double>(training_shapes.size());
}

OdessaStep odessa(std::span<const double> grad_v, std::span<const double> direction, double delta,
                  double eta_cap) {
  if (grad_v.size() != direction.size()) throw std::invalid_argument("odessa: dimension mismatch");
  OdessaStep out;
  for (std::size_t i = 0; i < grad_v.size(); ++i) out.directional += grad_v[i] * direction[i];
  const double mag = std::abs(out.directional);
  if (mag == 0.0) {
    out.eta = eta_cap;
    out.degenerate = true;
    return out;
  }
  out.eta = delta / mag;
  if (out.eta > eta_cap) {
    out.eta = eta_cap;
    out.clipped = true;
  }
  return out;
}

EditTrace edit(const EditInputs& in, std::span<const double> source, const ShapeParams& reference,
               std::string_view utterance, const EditConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t d = in.autoencoder.latent_dim();
  if (source.size() != d) throw std::invalid_argument("edit: source latent has wrong dimension");

  EditTrace trace;
  trace.utterance = std::string(utterance);
  trace.source.assign(source.begin(), source.end());
  trace.source_params = in.autoencoder.decode(source, reference);

  const std::vector<std::vector<TokenId>> seqs{tokenize(utterance)};
  const auto g = in.model.encode_tokens(seqs);
  const auto w = in.model.voting_weights(g);
  const auto s = ad::Tensor::row(source);

  // NSE: coordinates eps over the simplex rows; otherwise eps is s' - s itself.
  ad::Tensor q;
  std::size_t coords = d;
  if (cfg.nse_enabled) {
    // Rows q_j - s: eps interpolates between the source and each neighbour.
    const auto neighbors = in.index.get_nearest(source, cfg.neighbors);
    std::vector<std::size_t> rep(cfg.neighbors, 0);
    q = ad::sub(neighbors, ad::gather_rows(s, rep));
    coords = cfg.neighbors;
  }
  auto to_latent = [&](const ad::Tensor& eps) {
    return cfg.nse_enabled ? ad::add(s, ad::matmul(eps, q)) : ad::add(s, eps);
  };

  std::mt19937_64 rng(nn::derive_seed(seed, 0xED17));
  std::normal_distribution<double> noise(0.0, cfg.gamma);
  std::vector<double> eps(coords);
  for (double& e : eps) e = noise(rng);

  auto record = [&](std::size_t step, const ad::Tensor& latent, double h_before, double h) {
    EditStep st;
    st.step = step;
    st.epsilon = eps;
    st.latent.assign(latent.values().begin(), latent.values().end());
    st.h_before = h_before;
    st.h = h;
    st.params = in.autoencoder.decode(st.latent, reference);
    st.volume = in.autoencoder.decoded_volume_value(st.latent, reference);
    return st;
  };

  auto current = to_latent(ad::Tensor::row(eps));
  const double h0 = in.model.similarity(s, current, g, w).item();
  trace.steps.push_back(record(0, current, h0, h0));
  if (!std::isfinite(h0)) throw EditError(0, "alignment is not finite at initialization");

  std::vector<double> etas;
  bool any_gradient = false;
  for (std::size_t b = 1; b <= cfg.steps; ++b) {
    auto eps_var = ad::Tensor::variable({1, coords}, eps);
    const auto latent = to_latent(eps_var);
    const auto h = in.model.similarity(s, latent, g, w);
    h.backward();
    // No accumulated gradient (zero-difference convention) counts as a zero gradient.
    std::vector<double> step_dir(coords, 0.0);
    if (eps_var.has_grad()) step_dir.assign(eps_var.grad().begin(), eps_var.grad().end());
    if (!all_finite(step_dir)) throw EditError(b, "gradient of the alignment is not finite");
    const bool zero_grad = std::all_of(step_dir.begin(), step_dir.end(), [](double v) { return v == 0.0; });
    any_gradient = any_gradient || !zero_grad;

    double eta = cfg.fixed_step;
    OdessaStep os;
    if (cfg.odessa_enabled && !zero_grad) {
      // Latent-space direction of the step: (d eps)^T Q, or d eps without NSE.
      std::vector<double> direction = step_dir;
      if (cfg.nse_enabled) {
        const auto dir = ad::matmul(ad::Tensor::row(step_dir), q);
        direction.assign(dir.values().begin(), dir.values().end());
      }
      const std::vector<double> lat(latent.values().begin(), latent.values().end());
      const auto grad_v = in.autoencoder.decoded_volume_gradient(lat, reference);
      const double cap = etas.empty() ? std::numeric_limits<double>::infinity()
                                      : cfg.eta_cap_factor * median(etas);
      os = odessa(grad_v, direction, cfg.delta, cap);
      if (os.degenerate && !std::isfinite(os.eta)) os.eta = 0.0;
      eta = os.eta;
      if (!os.clipped && !os.degenerate) etas.push_back(eta);
    }
    if (zero_grad) eta = 0.0;
    for (std::size_t i = 0; i < coords; ++i) eps[i] += eta * step_dir[i];

    current = to_latent(ad::Tensor::row(eps));
    const double h_after = in.model.similarity(s, current, g, w).item();
    if (!std::isfinite(h_after) || !all_finite(current.values())) {
      throw EditError(b, "edited latent is not finite");
    }
    EditStep st = record(b, current, h.item(), h_after);
    st.eta = eta;
    st.directional = os.directional;
    st.clipped = os.clipped;
    st.degenerate = os.degenerate || zero_grad;
    st.delta_v = std::abs(st.volume - trace.steps.back().volume);
    trace.steps.push_back(std::move(st));
  }
  if (cfg.steps > 0 && !any_gradient) {
    trace.failed = true;
    trace.failure = "alignment gradient vanished at every step";
  }
  return trace;
}

std::vector<EditTrace> iterative_edit(const EditInputs& in, std::span<const double> source,
                                      const ShapeParams& reference, std::string_view utterance,
                                      const EditConfig& cfg, std::size_t rounds, std::uint64_t seed) {
  std::vector<EditTrace> out;
  LatentCode current(source.begin(), source.end());
  for (std::size_t r = 0; r < rounds; ++r) {
    out.push_back(edit(in, current, reference, utterance, cfg, r == 0 ? seed : nn::derive_seed(seed, r)));
    current = out.back().final_step().latent;
  }
  return out;
}

nlohmann::ordered_json edit_step_to_json(const EditStep& s) {
  nlohmann::ordered_json j;
  j["step"] = s.step;
  j["epsilon"] = s.epsilon;
  j["latent"] = s.latent;
  j["h_before"] = s.h_before;
  j["h"] = s.h;
  j["eta"] = s.eta;
  j["directional"] = s.directional;
  j["clipped"] = s.clipped;
  j["degenerate"] = s.degenerate;
  j["delta_v"] = s.delta_v;
  j["volume"] = s.volume;
  j["params"] = params_to_json(s.params);
  return j;
}

void write_edit_trace(std::ostream& out, const EditTrace& trace) {
  for (const auto& s : trace.steps) out << edit_step_to_json(s).dump() << '\n';
}

}  // namespace partedit
