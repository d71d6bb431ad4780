#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gaitpac/checkpoint.hpp"
#include "gaitpac/policy.hpp"
#include "gaitpac/rng.hpp"

namespace gaitpac {
namespace {

Eigen::VectorXd some_input() { return (Eigen::VectorXd(6) << 0.3, 1.1, -0.4, 0.2, 1.7, -0.9).finished(); }

TEST(ParamCount, NetworkHas689Parameters) { EXPECT_EQ(param_count(PolicyArch{6, {10, 20}, 19}), 689u); }

TEST(ParamCount, SmallArchitectures) {
  EXPECT_EQ(param_count(PolicyArch{1, {}, 1}), 2u);
  EXPECT_EQ(param_count(PolicyArch{6, {10}, 19}), 279u);
}

TEST(Forward, ZeroWeightsGiveUniformScores) {
  const Eigen::VectorXd s = forward(PolicyParams{}, some_input());
  ASSERT_EQ(s.size(), 19);
  for (Eigen::Index i = 0; i < 19; ++i) EXPECT_NEAR(s[i], 1.0 / 19.0, 1e-15);
}

TEST(Forward, ScoresSumToOne) {
  Stream rng(3);
  for (int t = 0; t < 50; ++t) {
    const PolicyParams w(PolicyArch{}, 3.0 * standard_normal(689, rng));
    const Eigen::VectorXd s = forward(w, standard_normal(6, rng));
    EXPECT_NEAR(s.sum(), 1.0, 1e-12);
    // large logit gaps underflow to exactly zero
    EXPECT_GE(s.minCoeff(), 0.0);
  }
}

TEST(Forward, OutputBiasClosedForm) {
  const PolicyParams w = constant_policy(PolicyArch{}, 0, 10.0);
  const Eigen::VectorXd s = forward(w, some_input());
  const double e10 = std::exp(10.0);
  EXPECT_NEAR(s[0], e10 / (e10 + 18.0), 1e-15);
  EXPECT_NEAR(s[5], 1.0 / (e10 + 18.0), 1e-15);
}

TEST(Forward, RejectsNonFiniteOrMisSizedInput) {
  Eigen::VectorXd bad = some_input();
  bad[2] = std::nan("");
  EXPECT_THROW(forward(PolicyParams{}, bad), InvalidParameter);
  EXPECT_THROW(forward(PolicyParams{}, Eigen::VectorXd::Zero(5)), InvalidParameter);
}

// Hand-built evaluation of the documented flat layout.
TEST(Forward, MatchesExplicitLayerByLayerEvaluation) {
  const PolicyArch arch{2, {3}, 2};
  ASSERT_EQ(param_count(arch), 17u);
  Eigen::VectorXd w(17);
  for (int i = 0; i < 17; ++i) w[i] = 0.1 * (i - 8);
  const Eigen::Vector2d x(0.7, -1.3);
  // W1 (3x2 row-major) = w[0..5], b1 = w[6..8], W2 (2x3) = w[9..14], b2 = w[15..16]
  double h[3];
  for (int r = 0; r < 3; ++r) {
    const double z = w[2 * r] * x[0] + w[2 * r + 1] * x[1] + w[6 + r];
    h[r] = z >= 0 ? z : std::exp(z) - 1.0;
  }
  double logit[2];
  for (int r = 0; r < 2; ++r) logit[r] = w[9 + 3 * r] * h[0] + w[10 + 3 * r] * h[1] + w[11 + 3 * r] * h[2] + w[15 + r];
  const double z = std::exp(logit[0]) + std::exp(logit[1]);
  const Eigen::VectorXd s = forward(PolicyParams(arch, w), x);
  EXPECT_NEAR(s[0], std::exp(logit[0]) / z, 1e-14);
  EXPECT_NEAR(s[1], std::exp(logit[1]) / z, 1e-14);
}

TEST(Forward, SmallWeightPerturbationGivesSmallChange) {
  Stream rng(8);
  PolicyParams w(PolicyArch{}, standard_normal(689, rng));
  const Eigen::VectorXd base = forward(w, some_input());
  for (int k : {0, 100, 300, 688}) {
    PolicyParams v = w;
    v.weights[k] += 1e-6;
    EXPECT_LT((forward(v, some_input()) - base).lpNorm<Eigen::Infinity>(), 1e-5);
  }
}

TEST(Softmax, ShiftInvariant) {
  Stream rng(4);
  const Eigen::VectorXd z = standard_normal(19, rng);
  const Eigen::VectorXd a = softmax(z);
  const Eigen::VectorXd b = softmax((z.array() + 123.4).matrix());
  EXPECT_LT((a - b).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_EQ(select_primitive(a), select_primitive(b));
}

TEST(SelectPrimitive, UniformPicksFirst) { EXPECT_EQ(select_primitive(Eigen::VectorXd::Constant(19, 1.0 / 19)), 0u); }

TEST(SelectPrimitive, PicksPeak) {
  Eigen::VectorXd s = Eigen::VectorXd::Constant(19, 0.01);
  s[12] = 0.8;
  EXPECT_EQ(select_primitive(s), 12u);
}

TEST(SelectPrimitive, TieGoesToLowestIndex) {
  Eigen::VectorXd s = Eigen::VectorXd::Constant(19, 0.01);
  s[3] = s[7] = 0.4;
  EXPECT_EQ(select_primitive(s), 3u);
}

TEST(SelectPrimitive, InvariantUnderIncreasingTransforms) {
  Stream rng(6);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd s = softmax(standard_normal(19, rng));
    const Eigen::VectorXd logs = s.array().log().matrix();
    const Eigen::VectorXd cubes = (s.array().cube() * 5.0 - 2.0).matrix();
    EXPECT_EQ(select_primitive(s), select_primitive(logs));
    EXPECT_EQ(select_primitive(s), select_primitive(cubes));
  }
}

TEST(SampleWeights, AntitheticPairAveragesToMean) {
  Stream rng(5);
  PolicyDistribution d{standard_normal(689, rng), 0.3 * standard_normal(689, rng)};
  const AntitheticSample s = sample_weights(d, rng);
  EXPECT_LT((0.5 * (s.plus + s.minus) - d.mean).lpNorm<Eigen::Infinity>(), 1e-15);
  EXPECT_LT((s.plus - d.mean - d.sigma().cwiseProduct(s.eps)).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(SampleWeights, ZeroSigmaCollapsesToMean) {
  Stream rng(9);
  PolicyDistribution d{standard_normal(689, rng), Eigen::VectorXd::Constant(689, -2000.0)};
  const AntitheticSample s = sample_weights(d, rng);
  EXPECT_EQ(s.plus, d.mean);
  EXPECT_EQ(s.minus, d.mean);
}

TEST(SampleWeights, StandardDistributionHasUnitVariance) {
  const std::size_t dim = 8;
  const PolicyDistribution d = PolicyDistribution::standard(dim);
  Stream rng(derive_key(21, 0, Purpose::kPerturbation));
  const int n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim), sq = Eigen::VectorXd::Zero(dim);
  for (int i = 0; i < n; ++i) {
    const auto s = sample_weights(d, rng);
    sum += s.plus;
    sq += s.plus.cwiseProduct(s.plus);
  }
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd var = sq / n - mean.cwiseProduct(mean);
  for (std::size_t k = 0; k < dim; ++k) {
    EXPECT_GE(var[static_cast<Eigen::Index>(k)], 0.98);
    EXPECT_LE(var[static_cast<Eigen::Index>(k)], 1.02);
  }
}

TEST(PolicyParams, RejectsWrongLength) {
  EXPECT_THROW(PolicyParams(PolicyArch{}, Eigen::VectorXd::Zero(688)), InvalidParameter);
}

TEST(Checkpoint, WeightLayoutRoundTripsExactly) {
  Stream rng(13);
  Checkpoint ck;
  ck.kind = CheckpointKind::kDistribution;
  ck.config_hash = 0x0123456789abcdefULL;
  ck.range_begin = 5;
  ck.range_end = 105;
  ck.vectors = {standard_normal(689, rng), standard_normal(689, rng)};
  std::stringstream ss;
  write_checkpoint(ss, ck);
  EXPECT_EQ(ss.str().size(), 8 + 4 * 7 + 8 * 5 + 2 * 689 * 8u);
  const Checkpoint back = read_checkpoint(ss);
  EXPECT_EQ(back.kind, ck.kind);
  EXPECT_EQ(back.arch, ck.arch);
  EXPECT_EQ(back.config_hash, ck.config_hash);
  EXPECT_EQ(back.range_begin, 5u);
  EXPECT_EQ(back.range_end, 105u);
  ASSERT_EQ(back.vectors.size(), 2u);
  EXPECT_EQ(back.vectors[0], ck.vectors[0]);
  EXPECT_EQ(back.vectors[1], ck.vectors[1]);
  const PolicyDistribution d = distribution_from(back);
  EXPECT_EQ(d.mean, ck.vectors[0]);
}

TEST(Checkpoint, RejectsCorruptInput) {
  std::stringstream bad("NOTACKPT........");
  EXPECT_THROW(read_checkpoint(bad), FormatError);
  Checkpoint ck;
  ck.vectors = {Eigen::VectorXd::Zero(689)};
  std::stringstream ss;
  write_checkpoint(ss, ck);
  std::string bytes = ss.str();
  bytes.resize(bytes.size() - 8);
  std::stringstream cut(bytes);
  EXPECT_THROW(read_checkpoint(cut), FormatError);
  ck.vectors = {Eigen::VectorXd::Zero(10)};
  std::stringstream out;
  EXPECT_THROW(write_checkpoint(out, ck), FormatError);
}

}  // namespace
}  // namespace gaitpac
