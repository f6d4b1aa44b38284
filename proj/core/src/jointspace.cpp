#include "partedit/jointspace.hpp"

#include "partedit/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

namespace partedit {

namespace {

// Deduplicates token sequences; index[i] is the row of sequence i in unique.
struct TextTable {
  std::vector<std::vector<TokenId>> unique;
  std::vector<std::size_t> index;

  std::size_t add(const std::vector<TokenId>& tokens) {
    auto it = rows.find(tokens);
    if (it != rows.end()) return it->second;
    const std::size_t r = unique.size();
    rows.emplace(tokens, r);
    unique.push_back(tokens);
    return r;
  }

 private:
  std::map<std::vector<TokenId>, std::size_t> rows;
};

ad::Tensor stack_latents(std::span<const LatentCode> codes, std::span<const std::size_t> which) {
  const std::size_t d = codes.empty() ? 0 : codes.front().size();
  std::vector<double> v;
  v.reserve(which.size() * d);
  for (std::size_t i : which) v.insert(v.end(), codes[i].begin(), codes[i].end());
  return ad::Tensor::constant({which.size(), d}, std::move(v));
}

const Utterance& at(std::span<const Triplet> data, UtteranceRef r) {
  return data[r.triplet].utterances[r.utterance];
}

}  // namespace

std::string_view to_string(MiningStrategy m) {
  switch (m) {
    case MiningStrategy::multiutterance:
      return "multiutterance";
    case MiningStrategy::shared_context:
      return "shared_context";
    case MiningStrategy::random:
      return "random";
  }
  return "?";
}

MiningStrategy mining_from_string(std::string_view s) {
  if (s == "multiutterance") return MiningStrategy::multiutterance;
  if (s == "shared_context") return MiningStrategy::shared_context;
  if (s == "random") return MiningStrategy::random;
  throw ConfigError("unknown mining strategy '" + std::string(s) + "'");
}

void JointSpaceConfig::validate() const {
  if (experts == 0) throw ConfigError("jointspace.experts must be positive");
  if (joint_dim == 0 || embed_dim == 0 || ff_dim == 0 || expert_hidden == 0) {
    throw ConfigError("jointspace dimensions must be positive");
  }
  if (max_tokens < 2) throw ConfigError("jointspace.max_tokens must be at least 2");
  if (heads == 0 || embed_dim % heads != 0) {
    throw ConfigError("jointspace.embed_dim must be divisible by jointspace.heads");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("jointspace.lambda must be >= 0");
  if (epochs == 0 || batch_size == 0) throw ConfigError("jointspace epochs and batch size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("jointspace.learning_rate must be positive");
}

JointSpaceModel::JointSpaceModel(const JointSpaceConfig& cfg, std::size_t latent_dim,
                                 std::uint64_t seed)
    : cfg_(cfg), latent_dim_(latent_dim), joint_dim_(cfg.joint_dim), max_tokens_(cfg.max_tokens) {
  cfg.validate();
  std::mt19937_64 rng(nn::derive_seed(seed, 0x7E47));
  const std::size_t e = cfg.embed_dim;
  token_embedding_ = nn::normal_parameter({vocabulary_size(), e}, 0.1, rng);
  position_embedding_ = nn::normal_parameter({cfg.max_tokens, e}, 0.1, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Layer layer;
    layer.q = nn::Linear(e, e, rng);
    layer.k = nn::Linear(e, e, rng);
    layer.v = nn::Linear(e, e, rng);
    layer.o = nn::Linear(e, e, rng);
    layer.ff1 = nn::Linear(e, cfg.ff_dim, rng);
    layer.ff2 = nn::Linear(cfg.ff_dim, e, rng);
    layers_.push_back(std::move(layer));
  }
  projection_ = nn::Linear(e, cfg.joint_dim, rng);

  std::mt19937_64 expert_rng(nn::derive_seed(seed, 0xE4E7));
  for (std::size_t i = 0; i < cfg.experts; ++i) {
    Expert ex;
    ex.l1 = nn::Linear(latent_dim, cfg.expert_hidden, expert_rng);
    ex.l2 = nn::Linear(cfg.expert_hidden, cfg.expert_hidden, expert_rng);
    ex.l3 = nn::Linear(cfg.expert_hidden, cfg.joint_dim, expert_rng);
    experts_.push_back(std::move(ex));
  }
  std::mt19937_64 vote_rng(nn::derive_seed(seed, 0x707E));
  voting_ = nn::Linear(cfg.joint_dim, cfg.experts, vote_rng);
  // tau = exp(0) = 1 at initialization.
  log_temperature_ = nn::constant_parameter({1, 1}, 0.0);
  metadata.seed = seed;
  metadata.mining = cfg.mining;
  metadata.lambda = cfg.lambda;
}

ad::Tensor JointSpaceModel::encode_tokens(std::span<const std::vector<TokenId>> sequences,
                                          std::size_t* truncated) const {
  std::vector<std::size_t> ids, positions, lengths, first_rows;
  for (const auto& seq : sequences) {
    if (seq.empty()) throw ad::DimensionError("encode_tokens: empty token sequence");
    const std::size_t n = std::min(seq.size(), max_tokens_);
    if (seq.size() > max_tokens_ && truncated) ++*truncated;
    first_rows.push_back(ids.size());
    for (std::size_t p = 0; p < n; ++p) {
      if (seq[p] >= vocabulary_size()) throw ad::DimensionError("encode_tokens: token id out of range");
      ids.push_back(seq[p]);
      positions.push_back(p);
    }
    lengths.push_back(n);
  }
  auto x = ad::add(ad::gather_rows(token_embedding_, ids), ad::gather_rows(position_embedding_, positions));
  for (const auto& layer : layers_) {
    const auto a = ad::layer_norm(x);
    const auto att = ad::segment_attention(layer.q(a), layer.k(a), layer.v(a), lengths, cfg_.heads);
    x = ad::add(x, layer.o(att));
    const auto b = ad::layer_norm(x);
    x = ad::add(x, layer.ff2(ad::tanh(layer.ff1(b))));
  }
  const auto first = ad::layer_norm(ad::gather_rows(x, first_rows));
  return ad::l2_normalize(projection_(first));
}

ad::Tensor JointSpaceModel::temperature() const { return ad::exp(log_temperature_); }

ad::Tensor JointSpaceModel::voting_weights(const ad::Tensor& g) const {
  return ad::softmax(voting_(g), temperature());
}

ad::Tensor JointSpaceModel::expert(std::size_t i, const ad::Tensor& x) const {
  const auto& ex = experts_.at(i);
  const auto h1 = ad::tanh(ex.l1(x));
  const auto h2 = ad::add(h1, ad::tanh(ex.l2(h1)));
  return ex.l3(h2);
}

ad::Tensor JointSpaceModel::fuse(const ad::Tensor& x, const ad::Tensor& w) const {
  if (w.cols() != experts_.size() || (w.rows() != x.rows() && w.rows() != 1)) {
    throw ad::DimensionError("fuse: weights " + ad::to_string(w.shape()) + " for " +
                             std::to_string(x.rows()) + " latents and " +
                             std::to_string(experts_.size()) + " experts");
  }
  ad::Tensor out;
  for (std::size_t i = 0; i < experts_.size(); ++i) {
    auto wi = ad::slice_cols(w, i, 1);
    // A single weight row applies to every latent.
    if (w.rows() == 1 && x.rows() != 1) {
      std::vector<std::size_t> rep(x.rows(), 0);
      wi = ad::gather_rows(wi, rep);
    }
    const auto term = ad::mul(expert(i, x), wi);
    out = out.defined() ? ad::add(out, term) : term;
  }
  return out;
}

ad::Tensor JointSpaceModel::similarity(const ad::Tensor& s, const ad::Tensor& t, const ad::Tensor& g,
                                       const ad::Tensor& w) const {
  const auto diff = ad::sub(fuse(t, w), fuse(s, w));
  if (g.rows() == 1 && diff.rows() != 1) {
    std::vector<std::size_t> rep(diff.rows(), 0);
    return ad::cosine_similarity(ad::gather_rows(g, rep), diff);
  }
  return ad::cosine_similarity(g, diff);
}

ad::Tensor JointSpaceModel::similarity(const ad::Tensor& s, const ad::Tensor& t,
                                       const ad::Tensor& g) const {
  return similarity(s, t, g, voting_weights(g));
}

std::vector<double> JointSpaceModel::encode_text(std::string_view text) const {
  const std::vector<std::vector<TokenId>> seqs{tokenize(text)};
  const auto g = encode_tokens(seqs);
  return {g.values().begin(), g.values().end()};
}

std::vector<double> JointSpaceModel::voting_weights(std::string_view text) const {
  const std::vector<std::vector<TokenId>> seqs{tokenize(text)};
  const auto w = voting_weights(encode_tokens(seqs));
  return {w.values().begin(), w.values().end()};
}

double JointSpaceModel::similarity(std::span<const double> s, std::span<const double> t,
                                   std::string_view text) const {
  const std::vector<std::vector<TokenId>> seqs{tokenize(text)};
  return similarity(ad::Tensor::row(s), ad::Tensor::row(t), encode_tokens(seqs)).item();
}

std::vector<nn::NamedParameter> JointSpaceModel::parameters() const {
  std::vector<nn::NamedParameter> out;
  out.push_back({"text.token_embedding", token_embedding_});
  out.push_back({"text.position_embedding", position_embedding_});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = "text.layer" + std::to_string(l);
    layers_[l].q.collect(p + ".q", out);
    layers_[l].k.collect(p + ".k", out);
    layers_[l].v.collect(p + ".v", out);
    layers_[l].o.collect(p + ".o", out);
    layers_[l].ff1.collect(p + ".ff1", out);
    layers_[l].ff2.collect(p + ".ff2", out);
  }
  projection_.collect("text.projection", out);
  for (std::size_t i = 0; i < experts_.size(); ++i) {
    const std::string p = "expert" + std::to_string(i);
    experts_[i].l1.collect(p + ".0", out);
    experts_[i].l2.collect(p + ".1", out);
    experts_[i].l3.collect(p + ".2", out);
  }
  voting_.collect("voting", out);
  out.push_back({"voting.log_temperature", log_temperature_});
  return out;
}

void JointSpaceModel::freeze() {
  auto fix = [](ad::Tensor& t) { t = t.detach(); };
  auto fix_linear = [&](nn::Linear& l) {
    fix(l.weight);
    fix(l.bias);
  };
  fix(token_embedding_);
  fix(position_embedding_);
  for (auto& layer : layers_) {
    for (nn::Linear* l : {&layer.q, &layer.k, &layer.v, &layer.o, &layer.ff1, &layer.ff2}) fix_linear(*l);
  }
  fix_linear(projection_);
  for (auto& ex : experts_) {
    for (nn::Linear* l : {&ex.l1, &ex.l2, &ex.l3}) fix_linear(*l);
  }
  fix_linear(voting_);
  fix(log_temperature_);
  frozen_ = true;
}

std::string JointSpaceModel::checkpoint_bytes() const {
  nlohmann::ordered_json h;
  h["kind"] = "jointspace";
  h["latent_dim"] = latent_dim_;
  h["experts"] = cfg_.experts;
  h["joint_dim"] = cfg_.joint_dim;
  h["embed_dim"] = cfg_.embed_dim;
  h["max_tokens"] = cfg_.max_tokens;
  h["layers"] = cfg_.layers;
  h["heads"] = cfg_.heads;
  h["ff_dim"] = cfg_.ff_dim;
  h["expert_hidden"] = cfg_.expert_hidden;
  h["vocabulary_size"] = vocabulary_size();
  h["mining"] = to_string(metadata.mining);
  h["lambda"] = metadata.lambda;
  h["seed"] = metadata.seed;
  h["epochs"] = metadata.epochs;
  h["best_epoch"] = metadata.best_epoch;
  h["best_val_accuracy"] = metadata.best_val_accuracy;
  h["truncated_utterances"] = metadata.truncated_utterances;
  h["batch_size"] = cfg_.batch_size;
  h["learning_rate"] = cfg_.learning_rate;
  if (!metadata.provenance.is_null()) h["provenance"] = metadata.provenance;
  return serialize_checkpoint(std::move(h), parameters());
}

JointSpaceModel JointSpaceModel::from_checkpoint(std::string_view bytes) {
  const auto data = parse_checkpoint(bytes);
  const auto& h = data.header;
  if (h.at("kind").get<std::string>() != "jointspace") {
    throw CheckpointError("checkpoint is not a joint-space model");
  }
  if (h.at("vocabulary_size").get<std::size_t>() != vocabulary_size()) {
    throw CheckpointError("checkpoint vocabulary size does not match this build");
  }
  JointSpaceConfig cfg;
  cfg.experts = h.at("experts").get<std::size_t>();
  cfg.joint_dim = h.at("joint_dim").get<std::size_t>();
  cfg.embed_dim = h.at("embed_dim").get<std::size_t>();
  cfg.max_tokens = h.at("max_tokens").get<std::size_t>();
  cfg.layers = h.at("layers").get<std::size_t>();
  cfg.heads = h.at("heads").get<std::size_t>();
  cfg.ff_dim = h.at("ff_dim").get<std::size_t>();
  cfg.expert_hidden = h.at("expert_hidden").get<std::size_t>();
  cfg.mining = mining_from_string(h.at("mining").get<std::string>());
  cfg.lambda = h.at("lambda").get<double>();
  cfg.batch_size = h.at("batch_size").get<std::size_t>();
  cfg.learning_rate = h.at("learning_rate").get<double>();
  cfg.epochs = std::max<std::size_t>(1, h.at("epochs").get<std::size_t>());
  JointSpaceModel model(cfg, h.at("latent_dim").get<std::size_t>(), h.at("seed").get<std::uint64_t>());
  model.metadata.epochs = h.at("epochs").get<std::size_t>();
  model.metadata.best_epoch = h.at("best_epoch").get<std::size_t>();
  model.metadata.best_val_accuracy = h.at("best_val_accuracy").get<double>();
  model.metadata.truncated_utterances = h.at("truncated_utterances").get<std::size_t>();
  if (h.contains("provenance")) model.metadata.provenance = h.at("provenance");
  load_weights(data, model.parameters());
  model.freeze();
  return model;
}

std::string JointSpaceModel::hash() const { return sha256_hex(checkpoint_bytes()); }

ad::Tensor loss_binary(const ad::Tensor& h) { return ad::mean(ad::softplus(ad::scale(h, -2.0))); }

double loss_binary_value(double h) { return std::log1p(std::exp(-2.0 * h)); }

ad::Tensor loss_ladis(const ad::Tensor& g, const ad::Tensor& mined) {
  if (mined.rows() == 0) return ad::Tensor::scalar(0.0);
  return ad::sum(ad::abs(ad::matmul(mined, ad::transpose(g))));
}

ContextIndex::ContextIndex(std::span<const Triplet> data) {
  for (std::size_t i = 0; i < data.size(); ++i) by_context_[data[i].context_id].push_back(i);
}

std::span<const std::size_t> ContextIndex::triplets_of(std::uint32_t context_id) const {
  auto it = by_context_.find(context_id);
  if (it == by_context_.end()) return {};
  return it->second;
}

std::vector<UtteranceRef> utterances_of(std::span<const Triplet> data, Split split) {
  std::vector<UtteranceRef> out;
  for (std::size_t t = 0; t < data.size(); ++t) {
    if (data[t].split != split) continue;
    for (std::size_t u = 0; u < data[t].utterances.size(); ++u) out.push_back({t, u});
  }
  return out;
}

std::vector<UtteranceRef> mine_independent(std::span<const Triplet> data, const ContextIndex& index,
                                           UtteranceRef u, MiningStrategy strategy,
                                           std::span<const UtteranceRef> batch) {
  const Utterance& self = at(data, u);
  std::vector<UtteranceRef> out;
  switch (strategy) {
    case MiningStrategy::multiutterance:
    case MiningStrategy::shared_context:
      for (std::size_t t : index.triplets_of(self.context_id)) {
        for (std::size_t i = 0; i < data[t].utterances.size(); ++i) {
          const UtteranceRef r{t, i};
          if (r == u) continue;
          const Utterance& other = data[t].utterances[i];
          if (strategy == MiningStrategy::multiutterance && other.labeler_id != self.labeler_id) continue;
          out.push_back(r);
        }
      }
      break;
    case MiningStrategy::random:
      for (const UtteranceRef& r : batch) {
        if (at(data, r).context_id != self.context_id) out.push_back(r);
      }
      break;
  }
  return out;
}

EncodedTriplets encode_triplets(const Autoencoder& ae, std::span<const Triplet> data) {
  std::vector<ShapeParams> sources, targets;
  sources.reserve(data.size());
  targets.reserve(data.size());
  for (const auto& t : data) {
    sources.push_back(t.source);
    targets.push_back(t.target);
  }
  return {ae.encode_all(sources), ae.encode_all(targets)};
}

std::vector<double> alignments(const JointSpaceModel& model, std::span<const Triplet> data,
                               const EncodedTriplets& latents, std::span<const UtteranceRef> items) {
  std::vector<double> out;
  out.reserve(items.size());
  constexpr std::size_t kChunk = 512;
  for (std::size_t begin = 0; begin < items.size(); begin += kChunk) {
    const std::size_t n = std::min(kChunk, items.size() - begin);
    TextTable texts;
    std::vector<std::size_t> trip;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = items[begin + i];
      texts.index.push_back(texts.add(at(data, r).tokens));
      trip.push_back(r.triplet);
    }
    const auto g_unique = model.encode_tokens(texts.unique);
    const auto g = ad::gather_rows(g_unique, texts.index);
    const auto h = model.similarity(stack_latents(latents.source, trip),
                                    stack_latents(latents.target, trip), g);
    out.insert(out.end(), h.values().begin(), h.values().end());
  }
  return out;
}

double evaluate_accuracy(const JointSpaceModel& model, std::span<const Triplet> data,
                         const EncodedTriplets& latents, Split split) {
  const auto items = utterances_of(data, split);
  if (items.empty()) return 0.0;
  const auto h = alignments(model, data, latents, items);
  // h(s,t,u) > h(t,s,u) = -h(s,t,u) exactly when h > 0.
  const auto correct = std::count_if(h.begin(), h.end(), [](double v) { return v > 0.0; });
  return static_cast<double>(correct) / static_cast<double>(h.size());
}

JointSpaceModel train_jointspace(std::span<const Triplet> data, const Autoencoder& ae,
                                 const JointSpaceConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto latents = encode_triplets(ae, data);
  const ContextIndex index(data);
  auto train_items = utterances_of(data, Split::train);
  if (train_items.empty()) throw TrainingError("joint-space training split is empty");

  JointSpaceModel model(cfg, ae.latent_dim(), seed);
  std::vector<ad::Tensor> params;
  for (const auto& p : model.parameters()) params.push_back(p.tensor);
  nn::Adam adam(params, {.learning_rate = cfg.learning_rate});

  std::vector<std::vector<double>> best;
  double best_acc = -1.0;
  std::size_t best_epoch = 0;
  std::size_t truncated = 0;
  std::mt19937_64 rng(nn::derive_seed(seed, 0x5B0FF1E));

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_items.begin(), train_items.end(), rng);
    for (std::size_t begin = 0; begin < train_items.size(); begin += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, train_items.size() - begin);
      const std::span<const UtteranceRef> batch(train_items.data() + begin, n);

      TextTable texts;
      std::vector<std::size_t> trip;
      for (const auto& r : batch) {
        texts.index.push_back(texts.add(at(data, r).tokens));
        trip.push_back(r.triplet);
      }
      // count[i][j]: how often unique text j appears in M(batch[i]).
      std::vector<std::vector<std::pair<std::size_t, double>>> mined(n);
      if (cfg.lambda > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
          for (const auto& r : mine_independent(data, index, batch[i], cfg.mining, batch)) {
            mined[i].emplace_back(texts.add(at(data, r).tokens), 1.0);
          }
        }
      }

      const auto g_unique = model.encode_tokens(texts.unique, epoch == 0 ? &truncated : nullptr);
      const auto g = ad::gather_rows(g_unique, texts.index);
      const auto h = model.similarity(stack_latents(latents.source, trip),
                                      stack_latents(latents.target, trip), g);
      auto loss = loss_binary(h);
      if (cfg.lambda > 0.0) {
        // Row i of |G G_unique^T| holds |g(u_i) . g(v)| for every unique text v.
        const std::size_t m = texts.unique.size();
        std::vector<double> counts(n * m, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          for (const auto& [j, c] : mined[i]) counts[i * m + j] += c;
        }
        const auto dots = ad::abs(ad::matmul(g, ad::transpose(g_unique)));
        const auto ladis = ad::scale(ad::sum(ad::mul(dots, ad::Tensor::constant({n, m}, std::move(counts)))),
                                     1.0 / static_cast<double>(n));
        loss = ad::add(loss, ad::scale(ladis, cfg.lambda));
      }
      if (!std::isfinite(loss.item())) {
        throw TrainingError("joint-space loss is not finite in epoch " + std::to_string(epoch));
      }
      adam.zero_grad();
      loss.backward();
      adam.step();
    }

    const double acc = evaluate_accuracy(model, data, latents, Split::val);
    if (acc > best_acc) {
      best_acc = acc;
      best_epoch = epoch;
      best.clear();
      for (const auto& p : params) best.emplace_back(p.values().begin(), p.values().end());
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].mutable_values();
    std::copy(best[i].begin(), best[i].end(), dst.begin());
  }
  model.metadata.epochs = cfg.epochs;
  model.metadata.best_epoch = best_epoch;
  model.metadata.best_val_accuracy = best_acc;
  model.metadata.truncated_utterances = truncated;
  model.freeze();
  return model;
}

ExpertActivationReport expert_activation_report(const JointSpaceModel& model,
                                                std::span<const Triplet> data) {
  // Adjective = the comparative word of the utterance (its last in-vocabulary word).
  TextTable texts;
  std::vector<std::string> adjective_of_text;
  std::vector<std::size_t> uses;
  for (const auto& t : data) {
    for (const auto& u : t.utterances) {
      const std::size_t before = texts.unique.size();
      const std::size_t r = texts.add(u.tokens);
      if (r == before) {
        const auto words = split_words(u.text);
        adjective_of_text.push_back(words.empty() ? std::string() : words.back());
        uses.push_back(0);
      }
      ++uses[r];
    }
  }
  ExpertActivationReport report;
  if (texts.unique.empty()) return report;
  const auto w = model.voting_weights(model.encode_tokens(texts.unique));
  const std::size_t k = model.experts();
  std::map<std::string, std::size_t> row_of;
  for (std::size_t r = 0; r < texts.unique.size(); ++r) {
    auto [it, inserted] = row_of.emplace(adjective_of_text[r], report.adjectives.size());
    if (inserted) {
      report.adjectives.push_back(adjective_of_text[r]);
      report.rows.emplace_back(k, 0.0);
      report.counts.push_back(0);
    }
    const std::size_t a = it->second;
    for (std::size_t i = 0; i < k; ++i) report.rows[a][i] += static_cast<double>(uses[r]) * w.at(r, i);
    report.counts[a] += uses[r];
  }
  double spec = 0.0;
  for (std::size_t a = 0; a < report.rows.size(); ++a) {
    for (double& v : report.rows[a]) v /= static_cast<double>(report.counts[a]);
    spec += *std::max_element(report.rows[a].begin(), report.rows[a].end());
  }
  report.specialization = spec / static_cast<double>(report.rows.size());
  return report;
}

OrthogonalityReport orthogonality_report(const JointSpaceModel& model, std::span<const Triplet> data) {
  TextTable texts;
  std::vector<const Utterance*> first_use;
  for (const auto& t : data) {
    for (const auto& u : t.utterances) {
      const std::size_t before = texts.unique.size();
      if (texts.add(u.tokens) == before) first_use.push_back(&u);
    }
  }
  OrthogonalityReport report;
  if (texts.unique.empty()) return report;
  const auto g = model.encode_tokens(texts.unique);
  const std::size_t j = model.joint_dim();
  std::unordered_map<const Utterance*, std::size_t> row;
  for (const auto& t : data) {
    for (const auto& u : t.utterances) {
      std::vector<TokenId> tokens = u.tokens;
      row[&u] = texts.add(tokens);
    }
  }
  auto abs_dot = [&](std::size_t a, std::size_t b) {
    double d = 0.0;
    for (std::size_t c = 0; c < j; ++c) d += g.at(a, c) * g.at(b, c);
    return std::abs(d);
  };
  auto bin = [](double v) {
    return std::min(OrthogonalityReport::kBins - 1,
                    static_cast<std::size_t>(v * static_cast<double>(OrthogonalityReport::kBins)));
  };

  const ContextIndex index(data);
  std::set<std::uint32_t> contexts;
  for (const auto& t : data) contexts.insert(t.context_id);
  for (std::uint32_t c : contexts) {
    std::vector<const Utterance*> us;
    for (std::size_t t : index.triplets_of(c)) {
      for (const auto& u : data[t].utterances) us.push_back(&u);
    }
    for (std::size_t a = 0; a < us.size(); ++a) {
      for (std::size_t b = a + 1; b < us.size(); ++b) {
        const double v = abs_dot(row[us[a]], row[us[b]]);
        if (us[a]->part != us[b]->part || us[a]->attribute != us[b]->attribute) {
          report.independent_mean += v;
          ++report.independent_pairs;
          ++report.independent_histogram[bin(v)];
        } else {
          report.same_axis_mean += v;
          ++report.same_axis_pairs;
          ++report.same_axis_histogram[bin(v)];
        }
      }
    }
  }
  if (report.independent_pairs) report.independent_mean /= static_cast<double>(report.independent_pairs);
  if (report.same_axis_pairs) report.same_axis_mean /= static_cast<double>(report.same_axis_pairs);

  for (std::size_t r = 0; r < texts.unique.size(); ++r) {
    EmbeddingRecord rec{first_use[r]->text, {}, first_use[r]->part, first_use[r]->attribute,
                        first_use[r]->direction};
    for (std::size_t c = 0; c < j; ++c) rec.vector.push_back(g.at(r, c));
    report.embeddings.push_back(std::move(rec));
  }
  return report;
}

}  // namespace partedit
