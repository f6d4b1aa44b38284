#pragma once

#include "partedit/autodiff.hpp"
#include "partedit/nn.hpp"
#include "partedit/shapeworld.hpp"

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace partedit {

using LatentCode = std::vector<double>;

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AutoencoderConfig {
  std::size_t latent_dim = 32;
  std::size_t hidden = 64;
  std::size_t epochs = 250;
  std::size_t batch_size = 64;
  double learning_rate = 1e-2;
  double final_learning_rate = 5e-5;
  /// Held-out reconstruction MSE (normalized parameter units) required at the end.
  double target_mse = 1e-3;

  void validate() const;
};

struct AutoencoderMetadata {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t training_shapes = 0;
  double train_mse = 0.0;
  double holdout_mse = 0.0;
  /// Free-form record written into the checkpoint header (config hash, run seed).
  nlohmann::ordered_json provenance;
};

/// Frozen shape autoencoder: 3-layer encoder params -> latent and 3-layer
/// decoder latent -> params, each with a residual middle layer and a linear
/// skip path. Every continuous output is squashed into its category range.
class Autoencoder {
 public:
  static constexpr std::size_t kInputDim = kParamCount + 2;

  Autoencoder(std::size_t latent_dim, std::size_t hidden, std::uint64_t seed);

  [[nodiscard]] std::size_t latent_dim() const { return latent_dim_; }
  [[nodiscard]] std::size_t hidden() const { return hidden_; }

  [[nodiscard]] LatentCode encode(const ShapeParams& p) const;
  /// Row i is the latent of shapes[i].
  [[nodiscard]] std::vector<LatentCode> encode_all(std::span<const ShapeParams> shapes) const;

  /// Flags come from the decoder's hard-thresholded flag outputs.
  [[nodiscard]] ShapeParams decode(std::span<const double> latent) const;
  /// Flags and category are copied from reference and held fixed.
  [[nodiscard]] ShapeParams decode(std::span<const double> latent, const ShapeParams& reference) const;

  /// Differentiable decoded parameters (1 x 9, world units) for a 1 x d latent.
  [[nodiscard]] ad::Tensor decoded_params(const ad::Tensor& latent, Category category) const;
  /// Differentiable analytic volume of the decoded shape, flags from reference.
  [[nodiscard]] ad::Tensor decoded_volume(const ad::Tensor& latent, const ShapeParams& reference) const;
  [[nodiscard]] double decoded_volume_value(std::span<const double> latent,
                                            const ShapeParams& reference) const;
  /// Gradient of decoded_volume with respect to the latent.
  [[nodiscard]] std::vector<double> decoded_volume_gradient(std::span<const double> latent,
                                                            const ShapeParams& reference) const;

  [[nodiscard]] std::vector<nn::NamedParameter> parameters() const;
  /// Replaces every weight by a gradient-free constant; required before sharing.
  void freeze();
  [[nodiscard]] bool frozen() const { return frozen_; }

  [[nodiscard]] std::string checkpoint_bytes() const;
  static Autoencoder from_checkpoint(std::string_view bytes);
  [[nodiscard]] std::string hash() const;

  AutoencoderMetadata metadata;

  // Training-time building blocks.
  [[nodiscard]] ad::Tensor encode_features(const ad::Tensor& features) const;
  [[nodiscard]] ad::Tensor decoder_logits(const ad::Tensor& latent) const;
  static std::vector<double> features(const ShapeParams& p);
  static std::vector<double> normalized_targets(const ShapeParams& p);

 private:
  std::size_t latent_dim_;
  std::size_t hidden_;
  bool frozen_ = false;
  nn::Linear enc1_, enc2_, enc3_, enc_skip_;
  nn::Linear dec1_, dec2_, dec3_, dec_skip_;
};

/// Mean squared reconstruction error in normalized parameter units.
double reconstruction_mse(const Autoencoder& model, std::span<const ShapeParams> shapes);

/// Trains on shapes, checks the held-out MSE against cfg.target_mse, and
/// returns a frozen model. Throws TrainingError when the target is missed.
Autoencoder train_autoencoder(std::span<const ShapeParams> shapes,
                              std::span<const ShapeParams> holdout, const AutoencoderConfig& cfg,
                              std::uint64_t seed);

/// Per-category [1st, 99th] percentile envelope of every active parameter.
class ValidityEnvelope {
 public:
  ValidityEnvelope() = default;
  explicit ValidityEnvelope(std::span<const ShapeParams> shapes, double lower_percentile = 0.01,
                            double upper_percentile = 0.99);

  [[nodiscard]] bool contains(const ShapeParams& p) const;
  [[nodiscard]] const ParamBounds& limits(Category c) const;

 private:
  ParamBounds chair_{};
  ParamBounds table_{};
};

}  // namespace partedit
