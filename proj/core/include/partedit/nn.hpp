#pragma once

#include "partedit/autodiff.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace partedit::nn {

/// Named parameter tensor, in the order a model serializes its weights.
struct NamedParameter {
  std::string name;
  ad::Tensor tensor;
};

/// Mixes a base seed with a stream tag (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Variable of the given shape with N(0, stddev^2) entries.
ad::Tensor normal_parameter(ad::Shape shape, double stddev, std::mt19937_64& rng);
ad::Tensor constant_parameter(ad::Shape shape, double value);

struct Linear {
  ad::Tensor weight;  // in x out
  ad::Tensor bias;    // 1 x out

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

  [[nodiscard]] ad::Tensor operator()(const ad::Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedParameter>& out) const;
};

/// Deep copy of parameters as gradient-free constants.
std::vector<ad::Tensor> frozen_copies(const std::vector<NamedParameter>& params);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer over leaf variables.
class Adam {
 public:
  Adam(std::vector<ad::Tensor> params, AdamOptions options);

  void step();
  void zero_grad();
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  [[nodiscard]] double learning_rate() const { return options_.learning_rate; }

 private:
  std::vector<ad::Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::uint64_t steps_ = 0;
};

}  // namespace partedit::nn
