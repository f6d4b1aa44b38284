#include "partedit/autoencoder.hpp"

#include "partedit/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace partedit {

namespace {

ad::Tensor bounds_row(Category c, bool want_min) {
  const auto& b = bounds_for(c);
  std::vector<double> v(kParamCount);
  for (std::size_t i = 0; i < kParamCount; ++i) v[i] = want_min ? b[i].min : b[i].max - b[i].min;
  return ad::Tensor::constant({1, kParamCount}, std::move(v));
}

ad::Tensor column(const ad::Tensor& t, Param p) {
  return ad::slice_cols(t, static_cast<std::size_t>(p), 1);
}

double percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace

void AutoencoderConfig::validate() const {
  if (latent_dim == 0 || hidden == 0) throw std::invalid_argument("autoencoder dims must be positive");
  if (epochs == 0 || batch_size == 0) throw std::invalid_argument("autoencoder epochs and batch size must be positive");
  if (!(learning_rate > 0.0) || !(final_learning_rate > 0.0)) {
    throw std::invalid_argument("autoencoder learning rates must be positive");
  }
}

Autoencoder::Autoencoder(std::size_t latent_dim, std::size_t hidden, std::uint64_t seed)
    : latent_dim_(latent_dim), hidden_(hidden) {
  std::mt19937_64 rng(nn::derive_seed(seed, 0xAE));
  enc1_ = nn::Linear(kInputDim, hidden, rng);
  enc2_ = nn::Linear(hidden, hidden, rng);
  enc3_ = nn::Linear(hidden, latent_dim, rng);
  dec1_ = nn::Linear(latent_dim, hidden, rng);
  dec2_ = nn::Linear(hidden, hidden, rng);
  dec3_ = nn::Linear(hidden, kInputDim, rng);
  enc_skip_ = nn::Linear(kInputDim, latent_dim, rng);
  dec_skip_ = nn::Linear(latent_dim, kInputDim, rng);
  metadata.seed = seed;
}

std::vector<double> Autoencoder::features(const ShapeParams& p) {
  const auto& b = bounds_for(p.category);
  std::vector<double> f(kInputDim);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    f[i] = 2.0 * (p.values[i] - b[i].min) / (b[i].max - b[i].min) - 1.0;
  }
  f[kParamCount] = p.has_arms ? 1.0 : -1.0;
  f[kParamCount + 1] = p.has_back ? 1.0 : -1.0;
  return f;
}

std::vector<double> Autoencoder::normalized_targets(const ShapeParams& p) {
  const auto& b = bounds_for(p.category);
  std::vector<double> t(kParamCount);
  for (std::size_t i = 0; i < kParamCount; ++i) t[i] = (p.values[i] - b[i].min) / (b[i].max - b[i].min);
  return t;
}

ad::Tensor Autoencoder::encode_features(const ad::Tensor& features) const {
  auto h = ad::tanh(enc1_(features));
  h = ad::add(h, ad::tanh(enc2_(h)));
  return ad::add(enc3_(h), enc_skip_(features));
}

ad::Tensor Autoencoder::decoder_logits(const ad::Tensor& latent) const {
  auto h = ad::tanh(dec1_(latent));
  h = ad::add(h, ad::tanh(dec2_(h)));
  return ad::add(dec3_(h), dec_skip_(latent));
}

LatentCode Autoencoder::encode(const ShapeParams& p) const {
  const auto z = encode_features(ad::Tensor::constant({1, kInputDim}, features(p)));
  return {z.values().begin(), z.values().end()};
}

std::vector<LatentCode> Autoencoder::encode_all(std::span<const ShapeParams> shapes) const {
  std::vector<LatentCode> out;
  out.reserve(shapes.size());
  constexpr std::size_t kChunk = 512;
  for (std::size_t begin = 0; begin < shapes.size(); begin += kChunk) {
    const std::size_t n = std::min(kChunk, shapes.size() - begin);
    std::vector<double> x;
    x.reserve(n * kInputDim);
    for (std::size_t i = 0; i < n; ++i) {
      const auto f = features(shapes[begin + i]);
      x.insert(x.end(), f.begin(), f.end());
    }
    const auto z = encode_features(ad::Tensor::constant({n, kInputDim}, std::move(x)));
    const auto v = z.values();
    for (std::size_t i = 0; i < n; ++i) {
      out.emplace_back(v.begin() + static_cast<std::ptrdiff_t>(i * latent_dim_),
                       v.begin() + static_cast<std::ptrdiff_t>((i + 1) * latent_dim_));
    }
  }
  return out;
}

ShapeParams Autoencoder::decode(std::span<const double> latent) const {
  const auto logits_t = decoder_logits(ad::Tensor::row(latent));
  const auto logits = logits_t.values();
  ShapeParams ref;
  ref.has_back = logits[kParamCount + 1] > 0.0;
  ref.has_arms = ref.has_back && logits[kParamCount] > 0.0;
  ref.category = ref.has_back ? Category::chair : Category::table;
  return decode(latent, ref);
}

ShapeParams Autoencoder::decode(std::span<const double> latent, const ShapeParams& reference) const {
  ShapeParams out = reference;
  const auto params = decoded_params(ad::Tensor::row(latent), reference.category);
  const auto p = params.values();
  std::copy(p.begin(), p.end(), out.values.begin());
  // Squashing keeps values inside the range; clamp away rounding at the ends.
  const auto& b = bounds_for(reference.category);
  for (std::size_t i = 0; i < kParamCount; ++i) out.values[i] = std::clamp(out.values[i], b[i].min, b[i].max);
  return out;
}

ad::Tensor Autoencoder::decoded_params(const ad::Tensor& latent, Category category) const {
  const auto logits = ad::slice_cols(decoder_logits(latent), 0, kParamCount);
  return ad::add(ad::mul(ad::sigmoid(logits), bounds_row(category, false)), bounds_row(category, true));
}

ad::Tensor Autoencoder::decoded_volume(const ad::Tensor& latent, const ShapeParams& reference) const {
  const auto p = decoded_params(latent, reference.category);
  const auto lh = column(p, Param::leg_height);
  const auto lt = column(p, Param::leg_thickness);
  const auto sw = column(p, Param::seat_width);
  const auto sd = column(p, Param::seat_depth);
  const auto st = column(p, Param::seat_thickness);
  auto v = ad::add(ad::scale(ad::mul(ad::mul(lt, lt), lh), 4.0), ad::mul(ad::mul(sw, sd), st));
  auto arm_depth = sd;
  if (reference.has_back) {
    const auto bh = column(p, Param::back_height);
    const auto bt = column(p, Param::back_thickness);
    v = ad::add(v, ad::mul(ad::mul(sw, bh), bt));
    arm_depth = ad::sub(sd, bt);
  }
  if (reference.has_arms) {
    const auto ah = column(p, Param::arm_height);
    const auto at = column(p, Param::arm_thickness);
    v = ad::add(v, ad::scale(ad::mul(ad::mul(at, ah), arm_depth), 2.0));
  }
  return v;
}

double Autoencoder::decoded_volume_value(std::span<const double> latent,
                                         const ShapeParams& reference) const {
  return decoded_volume(ad::Tensor::row(latent), reference).item();
}

std::vector<double> Autoencoder::decoded_volume_gradient(std::span<const double> latent,
                                                         const ShapeParams& reference) const {
  auto z = ad::Tensor::variable({1, latent.size()}, {latent.begin(), latent.end()});
  decoded_volume(z, reference).backward();
  if (!z.has_grad()) return std::vector<double>(latent.size(), 0.0);
  return {z.grad().begin(), z.grad().end()};
}

std::vector<nn::NamedParameter> Autoencoder::parameters() const {
  std::vector<nn::NamedParameter> out;
  enc1_.collect("encoder.0", out);
  enc2_.collect("encoder.1", out);
  enc3_.collect("encoder.2", out);
  dec1_.collect("decoder.0", out);
  dec2_.collect("decoder.1", out);
  dec3_.collect("decoder.2", out);
  enc_skip_.collect("encoder.skip", out);
  dec_skip_.collect("decoder.skip", out);
  return out;
}

void Autoencoder::freeze() {
  for (nn::Linear* layer : {&enc1_, &enc2_, &enc3_, &enc_skip_, &dec1_, &dec2_, &dec3_, &dec_skip_}) {
    layer->weight = layer->weight.detach();
    layer->bias = layer->bias.detach();
  }
  frozen_ = true;
}

std::string Autoencoder::checkpoint_bytes() const {
  nlohmann::ordered_json header;
  header["kind"] = "autoencoder";
  header["input_dim"] = kInputDim;
  header["latent_dim"] = latent_dim_;
  header["hidden"] = hidden_;
  header["seed"] = metadata.seed;
  header["epochs"] = metadata.epochs;
  header["training_shapes"] = metadata.training_shapes;
  header["train_mse"] = metadata.train_mse;
  header["holdout_mse"] = metadata.holdout_mse;
  if (!metadata.provenance.is_null()) header["provenance"] = metadata.provenance;
  return serialize_checkpoint(std::move(header), parameters());
}

Autoencoder Autoencoder::from_checkpoint(std::string_view bytes) {
  const auto data = parse_checkpoint(bytes);
  const auto& h = data.header;
  if (h.at("kind").get<std::string>() != "autoencoder") {
    throw CheckpointError("checkpoint is not an autoencoder");
  }
  Autoencoder model(h.at("latent_dim").get<std::size_t>(), h.at("hidden").get<std::size_t>(),
                    h.at("seed").get<std::uint64_t>());
  model.metadata.epochs = h.at("epochs").get<std::size_t>();
  model.metadata.training_shapes = h.at("training_shapes").get<std::size_t>();
  model.metadata.train_mse = h.at("train_mse").get<double>();
  model.metadata.holdout_mse = h.at("holdout_mse").get<double>();
  if (h.contains("provenance")) model.metadata.provenance = h.at("provenance");
  load_weights(data, model.parameters());
  model.freeze();
  return model;
}

std::string Autoencoder::hash() const { return sha256_hex(checkpoint_bytes()); }

double reconstruction_mse(const Autoencoder& model, std::span<const ShapeParams> shapes) {
  if (shapes.empty()) return 0.0;
  const auto latents = model.encode_all(shapes);
  double total = 0.0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto logits = ad::slice_cols(model.decoder_logits(ad::Tensor::row(latents[i])), 0, kParamCount);
    const auto pred_t = ad::sigmoid(logits);
    const auto pred = pred_t.values();
    const auto target = Autoencoder::normalized_targets(shapes[i]);
    for (std::size_t j = 0; j < kParamCount; ++j) total += (pred[j] - target[j]) * (pred[j] - target[j]);
  }
  return total / static_cast<double>(shapes.size() * kParamCount);
}

Autoencoder train_autoencoder(std::span<const ShapeParams> shapes,
                              std::span<const ShapeParams> holdout, const AutoencoderConfig& cfg,
                              std::uint64_t seed) {
  cfg.validate();
  if (shapes.size() < 1000) {
    throw TrainingError("autoencoder pretraining needs at least 1000 shapes, got " +
                        std::to_string(shapes.size()));
  }
  Autoencoder model(cfg.latent_dim, cfg.hidden, seed);
  std::vector<ad::Tensor> params;
  for (const auto& p : model.parameters()) params.push_back(p.tensor);
  nn::Adam adam(params, {.learning_rate = cfg.learning_rate});

  std::vector<std::vector<double>> feats;
  std::vector<std::vector<double>> targets;
  // Squared range/value ratio turns the normalized error into a relative one,
  // so thin parts are reconstructed as accurately (in percent) as large ones.
  std::vector<std::vector<double>> weights;
  for (const auto& s : shapes) {
    feats.push_back(Autoencoder::features(s));
    targets.push_back(Autoencoder::normalized_targets(s));
    const auto& b = bounds_for(s.category);
    std::vector<double> w(kParamCount, 1.0);
    for (std::size_t i = 0; i < kParamCount; ++i) {
      if (param_active(s, static_cast<Param>(i))) {
        const double r = (b[i].max - b[i].min) / s.values[i];
        w[i] = r * r;
      }
    }
    weights.push_back(std::move(w));
  }

  std::mt19937_64 rng(nn::derive_seed(seed, 0xB47C));
  std::vector<std::size_t> order(shapes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batches = (shapes.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(cfg.epochs * batches);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t n = std::min(cfg.batch_size, shapes.size() - begin);
      std::vector<double> x, y, f, w;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = order[begin + i];
        x.insert(x.end(), feats[idx].begin(), feats[idx].end());
        y.insert(y.end(), targets[idx].begin(), targets[idx].end());
        w.insert(w.end(), weights[idx].begin(), weights[idx].end());
        f.push_back(feats[idx][kParamCount] > 0 ? 1.0 : 0.0);
        f.push_back(feats[idx][kParamCount + 1] > 0 ? 1.0 : 0.0);
      }
      // Geometric learning-rate decay from learning_rate to final_learning_rate.
      const double progress = static_cast<double>(step++) / total_steps;
      adam.set_learning_rate(cfg.learning_rate *
                             std::pow(cfg.final_learning_rate / cfg.learning_rate, progress));

      const auto latent = model.encode_features(ad::Tensor::constant({n, Autoencoder::kInputDim}, std::move(x)));
      const auto logits = model.decoder_logits(latent);
      const auto recon = ad::sigmoid(ad::slice_cols(logits, 0, kParamCount));
      const auto diff = ad::sub(recon, ad::Tensor::constant({n, kParamCount}, std::move(y)));
      const auto mse = ad::mean(ad::mul(ad::mul(diff, diff), ad::Tensor::constant({n, kParamCount}, std::move(w))));
      // Binary cross-entropy with logits: softplus(z) - y z.
      const auto flag_logits = ad::slice_cols(logits, kParamCount, 2);
      const auto bce = ad::mean(ad::sub(ad::softplus(flag_logits),
                                        ad::mul(ad::Tensor::constant({n, 2}, std::move(f)), flag_logits)));
      const auto loss = ad::add(mse, ad::scale(bce, 0.01));
      if (!std::isfinite(loss.item())) {
        throw TrainingError("autoencoder loss diverged at epoch " + std::to_string(epoch));
      }
      adam.zero_grad();
      loss.backward();
      adam.step();
    }
  }

  model.metadata.epochs = cfg.epochs;
  model.metadata.training_shapes = shapes.size();
  model.freeze();
  model.metadata.train_mse = reconstruction_mse(model, shapes);
  model.metadata.holdout_mse = reconstruction_mse(model, holdout.empty() ? shapes : holdout);
  if (!(model.metadata.holdout_mse < cfg.target_mse)) {
    throw TrainingError("autoencoder did not converge: held-out MSE " +
                        std::to_string(model.metadata.holdout_mse) + " after " +
                        std::to_string(cfg.epochs) + " epochs");
  }
  return model;
}

ValidityEnvelope::ValidityEnvelope(std::span<const ShapeParams> shapes, double lower_percentile,
                                   double upper_percentile) {
  for (Category c : {Category::chair, Category::table}) {
    ParamBounds& env = c == Category::chair ? chair_ : table_;
    env = bounds_for(c);
    for (std::size_t i = 0; i < kParamCount; ++i) {
      std::vector<double> values;
      for (const auto& s : shapes) {
        if (s.category == c && param_active(s, static_cast<Param>(i))) values.push_back(s.values[i]);
      }
      if (values.empty()) continue;
      env[i] = {percentile(values, lower_percentile), percentile(std::move(values), upper_percentile)};
    }
  }
}

bool ValidityEnvelope::contains(const ShapeParams& p) const {
  const auto& env = limits(p.category);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (!param_active(p, static_cast<Param>(i))) continue;
    if (p.values[i] < env[i].min || p.values[i] > env[i].max) return false;
  }
  return true;
}

const ParamBounds& ValidityEnvelope::limits(Category c) const {
  return c == Category::chair ? chair_ : table_;
}

}  // namespace partedit
