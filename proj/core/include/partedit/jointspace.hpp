#pragma once

#include "partedit/autodiff.hpp"
#include "partedit/autoencoder.hpp"
#include "partedit/dataset.hpp"
#include "partedit/nn.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace partedit {

enum class MiningStrategy { multiutterance, shared_context, random };

std::string_view to_string(MiningStrategy m);
MiningStrategy mining_from_string(std::string_view s);

struct JointSpaceConfig {
  std::size_t experts = 6;
  std::size_t joint_dim = 32;
  std::size_t embed_dim = 64;
  std::size_t max_tokens = 16;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ff_dim = 128;
  std::size_t expert_hidden = 64;
  /// Weight of the disentanglement term; 0 trains the binary loss alone.
  double lambda = 1.0;
  MiningStrategy mining = MiningStrategy::multiutterance;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;

  void validate() const;
};

struct JointSpaceMetadata {
  std::uint64_t seed = 0;
  MiningStrategy mining = MiningStrategy::multiutterance;
  double lambda = 1.0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::size_t truncated_utterances = 0;
  /// Free-form record written into the checkpoint header (config hash, run seed).
  nlohmann::ordered_json provenance;
};

/// Text encoder g, expert bank f_1..f_k and the temperature-scaled voting layer.
class JointSpaceModel {
 public:
  JointSpaceModel(const JointSpaceConfig& cfg, std::size_t latent_dim, std::uint64_t seed);

  [[nodiscard]] std::size_t experts() const { return experts_.size(); }
  [[nodiscard]] std::size_t joint_dim() const { return joint_dim_; }
  [[nodiscard]] std::size_t latent_dim() const { return latent_dim_; }
  [[nodiscard]] std::size_t max_tokens() const { return max_tokens_; }
  [[nodiscard]] const JointSpaceConfig& config() const { return cfg_; }

  /// Unit-norm rows g(u), one per token sequence. Sequences longer than
  /// max_tokens are truncated; truncated (if given) counts them.
  [[nodiscard]] ad::Tensor encode_tokens(std::span<const std::vector<TokenId>> sequences,
                                         std::size_t* truncated = nullptr) const;
  /// Softmax(Linear(g) / tau), one row of k weights per row of g.
  [[nodiscard]] ad::Tensor voting_weights(const ad::Tensor& g) const;
  /// Rows of f_i(x) for expert i.
  [[nodiscard]] ad::Tensor expert(std::size_t i, const ad::Tensor& x) const;
  /// Row r: sum_i w[r, i] f_i(x[r]).
  [[nodiscard]] ad::Tensor fuse(const ad::Tensor& x, const ad::Tensor& w) const;
  /// Row r: cossim(g[r], f(t[r]) - f(s[r])) with the fusion weights of g[r].
  [[nodiscard]] ad::Tensor similarity(const ad::Tensor& s, const ad::Tensor& t, const ad::Tensor& g) const;
  /// Same as similarity but with precomputed fusion weights.
  [[nodiscard]] ad::Tensor similarity(const ad::Tensor& s, const ad::Tensor& t, const ad::Tensor& g,
                                      const ad::Tensor& w) const;
  [[nodiscard]] ad::Tensor temperature() const;

  // Convenience forms for single utterances.
  [[nodiscard]] std::vector<double> encode_text(std::string_view text) const;
  [[nodiscard]] std::vector<double> voting_weights(std::string_view text) const;
  [[nodiscard]] double similarity(std::span<const double> s, std::span<const double> t,
                                  std::string_view text) const;

  [[nodiscard]] std::vector<nn::NamedParameter> parameters() const;
  void freeze();
  [[nodiscard]] bool frozen() const { return frozen_; }

  [[nodiscard]] std::string checkpoint_bytes() const;
  static JointSpaceModel from_checkpoint(std::string_view bytes);
  [[nodiscard]] std::string hash() const;

  JointSpaceMetadata metadata;

 private:
  struct Layer {
    nn::Linear q, k, v, o, ff1, ff2;
  };
  struct Expert {
    nn::Linear l1, l2, l3;
  };

  JointSpaceConfig cfg_;
  std::size_t latent_dim_;
  std::size_t joint_dim_;
  std::size_t max_tokens_;
  bool frozen_ = false;
  ad::Tensor token_embedding_;
  ad::Tensor position_embedding_;
  std::vector<Layer> layers_;
  nn::Linear projection_;
  std::vector<Expert> experts_;
  nn::Linear voting_;
  ad::Tensor log_temperature_;
};

/// L_binary = -log(e^h / (e^h + e^-h)) = log(1 + e^{-2h}); mean over rows of h.
ad::Tensor loss_binary(const ad::Tensor& h);
/// Closed form of the binary loss for a single alignment value.
double loss_binary_value(double h);
/// L_LADIS = sum over rows m of |g . m|; g is 1 x J, mined is n x J (n may be 0).
ad::Tensor loss_ladis(const ad::Tensor& g, const ad::Tensor& mined);

/// (triplet index, utterance index) into a dataset.
struct UtteranceRef {
  std::size_t triplet = 0;
  std::size_t utterance = 0;
  friend bool operator==(const UtteranceRef&, const UtteranceRef&) = default;
  friend auto operator<=>(const UtteranceRef&, const UtteranceRef&) = default;
};

/// Groups a dataset's triplets by context for mining.
class ContextIndex {
 public:
  explicit ContextIndex(std::span<const Triplet> data);
  [[nodiscard]] std::span<const std::size_t> triplets_of(std::uint32_t context_id) const;

 private:
  std::map<std::uint32_t, std::vector<std::size_t>> by_context_;
};

/// Every utterance of the given split, in dataset order.
std::vector<UtteranceRef> utterances_of(std::span<const Triplet> data, Split split);

/// M(u): multiutterance = same context and labeler; shared_context = same
/// context, any labeler; random = batch members from other contexts. u itself
/// is never included.
std::vector<UtteranceRef> mine_independent(std::span<const Triplet> data, const ContextIndex& index,
                                           UtteranceRef u, MiningStrategy strategy,
                                           std::span<const UtteranceRef> batch);

/// Source and target latents per triplet.
struct EncodedTriplets {
  std::vector<LatentCode> source;
  std::vector<LatentCode> target;
};
EncodedTriplets encode_triplets(const Autoencoder& ae, std::span<const Triplet> data);

/// Trains a fresh model, selecting the epoch with the best validation
/// accuracy. The returned model is frozen.
JointSpaceModel train_jointspace(std::span<const Triplet> data, const Autoencoder& ae,
                                 const JointSpaceConfig& cfg, std::uint64_t seed);

/// h(s, t, u) for every referenced utterance.
std::vector<double> alignments(const JointSpaceModel& model, std::span<const Triplet> data,
                               const EncodedTriplets& latents, std::span<const UtteranceRef> items);
/// Fraction of items with h(s, t, u) > h(t, s, u); ties count as wrong.
double evaluate_accuracy(const JointSpaceModel& model, std::span<const Triplet> data,
                         const EncodedTriplets& latents, Split split);

struct ExpertActivationReport {
  std::vector<std::string> adjectives;
  /// rows[a][i]: mean w_i(u) over utterances using adjective a.
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> counts;
  /// Mean over adjectives of the largest row entry.
  double specialization = 0.0;
};
ExpertActivationReport expert_activation_report(const JointSpaceModel& model,
                                                std::span<const Triplet> data);

struct EmbeddingRecord {
  std::string text;
  std::vector<double> vector;
  Part part;
  Attribute attribute;
  Direction direction;
};

struct OrthogonalityReport {
  static constexpr std::size_t kBins = 10;
  /// Pairs in one context that differ in part or attribute.
  double independent_mean = 0.0;
  std::size_t independent_pairs = 0;
  std::array<std::size_t, kBins> independent_histogram{};
  /// Pairs in one context describing the same part and attribute.
  double same_axis_mean = 0.0;
  std::size_t same_axis_pairs = 0;
  std::array<std::size_t, kBins> same_axis_histogram{};
  /// One record per distinct utterance text.
  std::vector<EmbeddingRecord> embeddings;
};
OrthogonalityReport orthogonality_report(const JointSpaceModel& model, std::span<const Triplet> data);

}  // namespace partedit
