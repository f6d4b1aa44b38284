#include "partedit/nn.hpp"

#include <cmath>

namespace partedit::nn {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ad::Tensor normal_parameter(ad::Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(shape.size());
  for (double& v : values) v = dist(rng);
  return ad::Tensor::variable(shape, std::move(values));
}

ad::Tensor constant_parameter(ad::Shape shape, double value) {
  return ad::Tensor::variable(shape, std::vector<double>(shape.size(), value));
}

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(normal_parameter({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
      bias(constant_parameter({1, out}, 0.0)) {}

ad::Tensor Linear::operator()(const ad::Tensor& x) const {
  return ad::add(ad::matmul(x, weight), bias);
}

void Linear::collect(const std::string& prefix, std::vector<NamedParameter>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

std::vector<ad::Tensor> frozen_copies(const std::vector<NamedParameter>& params) {
  std::vector<ad::Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor.detach());
  return out;
}

Adam::Adam(std::vector<ad::Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    first_.emplace_back(p.size(), 0.0);
    second_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(options_.beta1, t);
  const double correction2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    const auto g = params_[i].grad();
    auto values = params_[i].mutable_values();
    auto& m = first_[i];
    auto& v = second_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g[j];
      v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      values[j] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace partedit::nn
