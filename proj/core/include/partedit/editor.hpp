#pragma once

#include "partedit/autoencoder.hpp"
#include "partedit/jointspace.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <nlohmann/json.hpp>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace partedit {

class EditError : public std::runtime_error {
 public:
  EditError(std::size_t step, const std::string& what)
      : std::runtime_error("edit step " + std::to_string(step) + ": " + what), step_(step) {}
  [[nodiscard]] std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Brute-force Euclidean nearest-neighbour search over training latents.
class NeighborIndex {
 public:
  NeighborIndex() = default;
  explicit NeighborIndex(std::vector<LatentCode> codes);

  [[nodiscard]] std::size_t size() const { return codes_.size(); }
  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] const std::vector<LatentCode>& codes() const { return codes_; }

  /// Indices of the count nearest codes, ascending by distance, ties by
  /// insertion order. Codes exactly equal to the query are skipped.
  /// Throws std::invalid_argument when fewer than count candidates exist.
  [[nodiscard]] std::vector<std::size_t> nearest(std::span<const double> query, std::size_t count) const;
  /// The neighbour simplex Q: one row per neighbour (count x dim).
  [[nodiscard]] ad::Tensor get_nearest(std::span<const double> query, std::size_t count) const;

 private:
  std::vector<LatentCode> codes_;
  std::size_t dim_ = 0;
};

struct EditConfig {
  std::size_t neighbors = 64;
  std::size_t steps = 50;
  /// Standard deviation of the initial simplex coordinates.
  double gamma = 0.01;
  /// Expected decoded volume change per step; resolve with default_delta.
  double delta = 0.0;
  bool nse_enabled = true;
  bool odessa_enabled = true;
  /// Step scale when odessa is disabled.
  double fixed_step = 0.01;
  /// Cap on the step scale as a multiple of the median of earlier steps.
  double eta_cap_factor = 10.0;

  void validate() const;
};

/// Half a percent of the mean training-shape volume.
double default_delta(std::span<const ShapeParams> training_shapes);

struct OdessaStep {
  double eta = 0.0;
  /// grad V . direction at the current iterate.
  double directional = 0.0;
  bool clipped = false;
  bool degenerate = false;
};

/// eta = delta / |grad_v . direction|, limited to eta_cap. A zero directional
/// derivative returns eta_cap with the degenerate flag.
OdessaStep odessa(std::span<const double> grad_v, std::span<const double> direction, double delta,
                  double eta_cap = std::numeric_limits<double>::infinity());

struct EditStep {
  std::size_t step = 0;
  /// Simplex coordinates (nse) or the raw latent offset s' - s (no nse).
  std::vector<double> epsilon;
  LatentCode latent;
  double h_before = 0.0;
  double h = 0.0;
  double eta = 0.0;
  /// grad V . (latent step direction) at the iterate the step started from.
  double directional = 0.0;
  bool clipped = false;
  bool degenerate = false;
  /// |V(s'_b) - V(s'_{b-1})| of the decoded shapes.
  double delta_v = 0.0;
  double volume = 0.0;
  ShapeParams params;
};

struct EditTrace {
  std::string utterance;
  LatentCode source;
  ShapeParams source_params;
  std::vector<EditStep> steps;
  /// Set when no step had a usable gradient.
  bool failed = false;
  std::string failure;

  [[nodiscard]] const EditStep& final_step() const { return steps.back(); }
};

struct EditInputs {
  const JointSpaceModel& model;
  const Autoencoder& autoencoder;
  const NeighborIndex& index;
};

/// Gradient ascent on h(s, s', u), s' = s + eps^T Q.
EditTrace edit(const EditInputs& in, std::span<const double> source, const ShapeParams& reference,
               std::string_view utterance, const EditConfig& cfg, std::uint64_t seed);

/// Chains edits: each round starts from the previous round's final latent,
/// with fresh neighbours and a fresh initial draw.
std::vector<EditTrace> iterative_edit(const EditInputs& in, std::span<const double> source,
                                      const ShapeParams& reference, std::string_view utterance,
                                      const EditConfig& cfg, std::size_t rounds, std::uint64_t seed);

nlohmann::ordered_json edit_step_to_json(const EditStep& s);
/// One line per step.
void write_edit_trace(std::ostream& out, const EditTrace& trace);

}  // namespace partedit
