#include "partedit/editor.hpp"
#include "support/random.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace partedit {
namespace {

using testing::normal_values;

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Residual norm of v after projecting onto the span of rows (modified Gram-Schmidt).
double residual_outside_span(std::vector<double> v, std::vector<std::vector<double>> rows) {
  std::vector<std::vector<double>> basis;
  for (auto& r : rows) {
    for (const auto& b : basis) {
      const double c = dot(r, b);
      for (std::size_t i = 0; i < r.size(); ++i) r[i] -= c * b[i];
    }
    const double n = std::sqrt(dot(r, r));
    if (n < 1e-10) continue;
    for (double& x : r) x /= n;
    basis.push_back(r);
  }
  for (const auto& b : basis) {
    const double c = dot(v, b);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * b[i];
  }
  return std::sqrt(dot(v, v));
}

TEST(NeighborIndex, NearestExample) {
  const NeighborIndex index({{0.0, 0.0}, {1.0, 0.0}, {3.0, 0.0}});
  const std::vector<double> q{0.9, 0.0};
  EXPECT_EQ(index.nearest(q, 2), (std::vector<std::size_t>{1, 0}));
  const auto rows = index.get_nearest(q, 2);
  ASSERT_EQ(rows.rows(), 2u);
  EXPECT_EQ(rows.at(0, 0), 1.0);
  EXPECT_EQ(rows.at(1, 0), 0.0);
}

TEST(NeighborIndex, ExactDuplicateOfQueryIsSkipped) {
  const NeighborIndex index({{0.0, 0.0}, {1.0, 0.0}, {3.0, 0.0}});
  EXPECT_EQ(index.nearest(std::vector<double>{1.0, 0.0}, 1), (std::vector<std::size_t>{0}));
  EXPECT_EQ(index.nearest(std::vector<double>{1.0, 0.0}, 2), (std::vector<std::size_t>{0, 2}));
}

TEST(NeighborIndex, TooManyRequestedIsArgumentError) {
  const NeighborIndex index({{0.0, 0.0}, {1.0, 0.0}, {3.0, 0.0}});
  EXPECT_THROW((void)index.nearest(std::vector<double>{0.5, 0.0}, 4), std::invalid_argument);
  EXPECT_THROW((void)index.nearest(std::vector<double>{1.0, 0.0}, 3), std::invalid_argument);
  EXPECT_THROW((void)index.nearest(std::vector<double>{1.0}, 1), std::invalid_argument);
}

TEST(NeighborIndex, MatchesExhaustiveScan) {
  std::mt19937_64 rng(4);
  std::vector<LatentCode> codes;
  for (int i = 0; i < 3000; ++i) codes.push_back(normal_values(32, rng));
  const NeighborIndex index(codes);
  for (int n = 0; n < 100; ++n) {
    // Half the queries sit on an indexed code.
    const auto q = n % 2 == 0 ? normal_values(32, rng) : codes[static_cast<std::size_t>(n) * 7];
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < 32; ++j) d2 += (codes[i][j] - q[j]) * (codes[i][j] - q[j]);
      if (codes[i] != q) all.emplace_back(d2, i);
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected;
    for (std::size_t i = 0; i < 64; ++i) expected.push_back(all[i].second);
    EXPECT_EQ(index.nearest(q, 64), expected) << "query " << n;
  }
}

TEST(Odessa, DirectSubstitution) {
  const std::vector<double> a{1.0, 0.5, -2.0};
  const std::vector<double> dir{2.0, 0.0, 0.0};
  const auto os = odessa(a, dir, 0.01);
  EXPECT_DOUBLE_EQ(os.directional, 2.0);
  EXPECT_DOUBLE_EQ(os.eta, 0.005);
  EXPECT_FALSE(os.clipped);
  EXPECT_FALSE(os.degenerate);
  // The sign of the directional derivative does not matter.
  EXPECT_DOUBLE_EQ(odessa(a, std::vector<double>{-2.0, 0.0, 0.0}, 0.01).eta, 0.005);
}

TEST(Odessa, InverseHomogeneousInDirection) {
  std::mt19937_64 rng(8);
  for (int n = 0; n < 100; ++n) {
    const auto g = normal_values(16, rng);
    auto d = normal_values(16, rng);
    const double eta = odessa(g, d, 0.02).eta;
    EXPECT_NEAR(eta * std::abs(dot(g, d)), 0.02, 1e-16);
    for (double& v : d) v *= 4.0;
    EXPECT_NEAR(odessa(g, d, 0.02).eta, eta / 4.0, 1e-15 * eta);
  }
}

TEST(Odessa, ZeroDirectionalIsDegenerateCap) {
  const auto os = odessa(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 3.0}, 0.01, 0.7);
  EXPECT_TRUE(os.degenerate);
  EXPECT_EQ(os.eta, 0.7);
  const auto clipped = odessa(std::vector<double>{1e-9, 0.0}, std::vector<double>{1.0, 0.0}, 0.01, 0.7);
  EXPECT_TRUE(clipped.clipped);
  EXPECT_EQ(clipped.eta, 0.7);
  EXPECT_THROW((void)odessa(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}, 0.01), std::invalid_argument);
}

class EditFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 600; ++i) shapes_.push_back(sample_shape(DatasetConfig{}, rng));
    ae_ = std::make_unique<Autoencoder>(32, 64, 11);
    ae_->freeze();
    model_ = std::make_unique<JointSpaceModel>(JointSpaceConfig{}, 32, 12);
    model_->freeze();
    index_ = std::make_unique<NeighborIndex>(ae_->encode_all(shapes_));
    cfg_.delta = default_delta(shapes_);
    cfg_.steps = 20;
  }
  static void TearDownTestSuite() {
    index_.reset();
    model_.reset();
    ae_.reset();
  }

  static EditInputs inputs() { return {*model_, *ae_, *index_}; }

  static EditTrace run(std::size_t i, const EditConfig& cfg, std::string_view text = "the legs are longer",
                       std::uint64_t seed = 1) {
    const auto& src = shapes_[i];
    return edit(inputs(), ae_->encode(src), src, text, cfg, seed);
  }

  static std::vector<ShapeParams> shapes_;
  static std::unique_ptr<Autoencoder> ae_;
  static std::unique_ptr<JointSpaceModel> model_;
  static std::unique_ptr<NeighborIndex> index_;
  static EditConfig cfg_;
};

std::vector<ShapeParams> EditFixture::shapes_;
std::unique_ptr<Autoencoder> EditFixture::ae_;
std::unique_ptr<JointSpaceModel> EditFixture::model_;
std::unique_ptr<NeighborIndex> EditFixture::index_;
EditConfig EditFixture::cfg_;

TEST_F(EditFixture, TraceShapeAndBookkeeping) {
  const auto trace = run(0, cfg_);
  ASSERT_EQ(trace.steps.size(), cfg_.steps + 1);
  EXPECT_FALSE(trace.failed);
  EXPECT_EQ(trace.utterance, "the legs are longer");
  for (std::size_t b = 0; b < trace.steps.size(); ++b) {
    const auto& st = trace.steps[b];
    EXPECT_EQ(st.step, b);
    EXPECT_EQ(st.epsilon.size(), cfg_.neighbors);
    EXPECT_NEAR(st.volume, volume(realize_shape(st.params)), 1e-14 * st.volume);
    EXPECT_NO_THROW(validate(st.params));
    if (b > 0) {
      EXPECT_DOUBLE_EQ(st.delta_v, std::abs(st.volume - trace.steps[b - 1].volume));
      EXPECT_NEAR(st.h_before, trace.steps[b - 1].h, 1e-12);
    }
  }
}

TEST_F(EditFixture, UnclippedStepsAreLinearizedExact) {
  std::size_t unclipped = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    const auto trace = run(i, cfg_);
    for (std::size_t b = 1; b < trace.steps.size(); ++b) {
      const auto& st = trace.steps[b];
      if (st.clipped || st.degenerate) continue;
      ++unclipped;
      EXPECT_NEAR(st.eta * std::abs(st.directional), cfg_.delta, 1e-14 * cfg_.delta);
    }
  }
  EXPECT_GT(unclipped, 400u);
}

TEST_F(EditFixture, ClippedStepsRespectTheCap) {
  for (std::size_t i = 0; i < 40; ++i) {
    const auto trace = run(i, cfg_);
    std::vector<double> earlier;
    for (std::size_t b = 1; b < trace.steps.size(); ++b) {
      const auto& st = trace.steps[b];
      if (!earlier.empty()) {
        auto sorted = earlier;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t m = sorted.size();
        const double median = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
        EXPECT_LE(st.eta, cfg_.eta_cap_factor * median * (1 + 1e-15));
        if (st.clipped) {
          EXPECT_DOUBLE_EQ(st.eta, cfg_.eta_cap_factor * median);
        }
      } else {
        EXPECT_FALSE(st.clipped);
      }
      if (!st.clipped && !st.degenerate) earlier.push_back(st.eta);
    }
  }
}

TEST_F(EditFixture, EditStaysInNeighbourSpan) {
  // With P < d the span is a proper subspace, so confinement is informative.
  EditConfig cfg = cfg_;
  cfg.neighbors = 8;
  for (std::size_t i = 0; i < 30; ++i) {
    const auto s = ae_->encode(shapes_[i]);
    const auto trace = edit(inputs(), s, shapes_[i], "the seat is wider", cfg, i);
    const auto nb = index_->get_nearest(s, cfg.neighbors);
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < nb.rows(); ++r) {
      std::vector<double> row(s.size());
      for (std::size_t c = 0; c < s.size(); ++c) row[c] = nb.at(r, c) - s[c];
      rows.push_back(row);
    }
    for (const auto& st : trace.steps) {
      std::vector<double> off(s.size());
      std::vector<double> rebuilt(s.size(), 0.0);
      for (std::size_t c = 0; c < s.size(); ++c) {
        off[c] = st.latent[c] - s[c];
        for (std::size_t r = 0; r < rows.size(); ++r) rebuilt[c] += st.epsilon[r] * rows[r][c];
      }
      EXPECT_LT(residual_outside_span(off, rows), 1e-9);
      for (std::size_t c = 0; c < s.size(); ++c) EXPECT_NEAR(off[c], rebuilt[c], 1e-12);
    }
  }
}

TEST_F(EditFixture, WithoutNseTheOffsetIsFree) {
  EditConfig cfg = cfg_;
  cfg.nse_enabled = false;
  const auto s = ae_->encode(shapes_[3]);
  const auto trace = run(3, cfg);
  EXPECT_EQ(trace.steps[1].epsilon.size(), s.size());
  for (const auto& st : trace.steps) {
    for (std::size_t c = 0; c < s.size(); ++c) EXPECT_NEAR(st.latent[c] - s[c], st.epsilon[c], 1e-12);
  }
}

TEST_F(EditFixture, WithoutOdessaStepIsFixed) {
  EditConfig cfg = cfg_;
  cfg.odessa_enabled = false;
  const auto trace = run(4, cfg);
  for (std::size_t b = 1; b < trace.steps.size(); ++b) {
    if (!trace.steps[b].degenerate) {
      EXPECT_EQ(trace.steps[b].eta, cfg.fixed_step);
    }
  }
}

TEST_F(EditFixture, VanishingInitialDrawKeepsSource) {
  // gamma small enough that s + eps^T Q rounds to s exactly.
  EditConfig cfg = cfg_;
  cfg.gamma = 1e-300;
  const auto s = ae_->encode(shapes_[5]);
  const auto trace = run(5, cfg);
  EXPECT_EQ(trace.steps[0].latent, s);
  EXPECT_EQ(trace.steps[0].h, 0.0);
  // h(s, s) carries no gradient, so every step is degenerate and the trace fails.
  EXPECT_TRUE(trace.failed);
  EXPECT_EQ(trace.final_step().latent, s);
  for (std::size_t b = 1; b < trace.steps.size(); ++b) EXPECT_TRUE(trace.steps[b].degenerate);
}

TEST_F(EditFixture, ZeroStepsReturnsInitialState) {
  EditConfig cfg = cfg_;
  cfg.steps = 0;
  const auto trace = run(6, cfg);
  ASSERT_EQ(trace.steps.size(), 1u);
  EXPECT_FALSE(trace.failed);
  EXPECT_EQ(trace.final_step().latent, run(6, cfg_).steps[0].latent);
}

TEST_F(EditFixture, DeterministicForSeed) {
  const auto a = run(7, cfg_, "the back is thicker", 42);
  const auto b = run(7, cfg_, "the back is thicker", 42);
  std::ostringstream ja, jb;
  write_edit_trace(ja, a);
  write_edit_trace(jb, b);
  EXPECT_EQ(ja.str(), jb.str());
  EXPECT_NE(run(7, cfg_, "the back is thicker", 43).final_step().latent, a.final_step().latent);
}

TEST_F(EditFixture, SingleRoundIterativeEqualsEdit) {
  const auto& src = shapes_[8];
  const auto s = ae_->encode(src);
  const auto rounds = iterative_edit(inputs(), s, src, "the legs are longer", cfg_, 1, 9);
  ASSERT_EQ(rounds.size(), 1u);
  const auto single = edit(inputs(), s, src, "the legs are longer", cfg_, 9);
  std::ostringstream a, b;
  write_edit_trace(a, rounds[0]);
  write_edit_trace(b, single);
  EXPECT_EQ(a.str(), b.str());
}

TEST_F(EditFixture, IterativeRoundsChainLatents) {
  const auto& src = shapes_[9];
  const auto rounds = iterative_edit(inputs(), ae_->encode(src), src, "the legs are longer", cfg_, 3, 5);
  ASSERT_EQ(rounds.size(), 3u);
  for (std::size_t r = 1; r < rounds.size(); ++r) EXPECT_EQ(rounds[r].source, rounds[r - 1].final_step().latent);
}

TEST_F(EditFixture, InvalidInputsAreRejected) {
  EditConfig cfg = cfg_;
  cfg.delta = 0.0;
  EXPECT_THROW(run(0, cfg), ConfigError);
  EXPECT_THROW(edit(inputs(), std::vector<double>(5, 0.0), shapes_[0], "the legs are longer", cfg_, 1),
               std::invalid_argument);
  cfg = cfg_;
  cfg.neighbors = index_->size() + 1;
  EXPECT_THROW(run(0, cfg), std::invalid_argument);
}

TEST(DefaultDelta, HalfPercentOfMeanVolume) {
  const std::vector<ShapeParams> shapes{midpoint_chair(), midpoint_table()};
  const double mean = 0.5 * (shape_volume(shapes[0]) + shape_volume(shapes[1]));
  EXPECT_NEAR(default_delta(shapes), 0.005 * mean, 1e-18);
  EXPECT_THROW(default_delta({}), std::invalid_argument);
}

}  // namespace
}  // namespace partedit
