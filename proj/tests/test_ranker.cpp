// Copyright 2026 The GeoForge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "geoforge/ranker/vase.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

namespace geoforge::ranker {
namespace {

TowerConfig tiny_config() {
  TowerConfig c;
  c.pin_input_dim = 6 + 5 + 1;
  c.query_input_dim = 5 + 1;
  c.hidden = {7, 5};
  c.output = 4;
  c.dropout = 0.3;
  return c;
}

std::vector<float> random_vec(Rng& rng, std::size_t d) {
  std::vector<float> v(d);
  for (auto& x : v) x = float(rng.normal());
  return v;
}

RankerTriplet random_triplet(Rng& rng, std::size_t dv, std::size_t dt) {
  return {{random_vec(rng, dv), random_vec(rng, dt), float(rng.uniform())},
          {random_vec(rng, dt), float(rng.uniform())},
          {random_vec(rng, dt), float(rng.uniform())}};
}

/// Unit vector at angle acos(c) from e0 in the (e0, e1) plane.
DenseVector at_cosine(double c, std::size_t dim = 8) {
  std::vector<float> v(dim, 0.0f);
  v[0] = float(c);
  v[1] = float(std::sqrt(1.0 - c * c));
  return DenseVector(v, true);
}

TEST(MarginLoss, HandComputedValues) {
  const DenseVector pin = at_cosine(1.0);
  EXPECT_DOUBLE_EQ(margin_loss(pin, at_cosine(1.0), at_cosine(0.0), 0.95), 0.0);
  EXPECT_NEAR(margin_loss(pin, at_cosine(0.5), at_cosine(0.5), 0.95), 0.95, 1e-7);
  EXPECT_NEAR(margin_loss(pin, at_cosine(0.6), at_cosine(0.0), 0.95), 0.35, 1e-7);
}

TEST(MarginLoss, ZeroExactlyWhenSeparatedByMargin) {
  Rng rng(5);
  std::size_t zero = 0, positive = 0;
  for (int t = 0; t < 10000; ++t) {
    const auto pin = l2_normalized(random_vec(rng, 16));
    // Pull the positive toward the pin for half the draws so both sides occur.
    auto pos = random_vec(rng, 16);
    if (t % 2 == 0) {
      for (std::size_t i = 0; i < 16; ++i) pos[i] = pos[i] * 0.05f + pin[i];
    }
    pos = l2_normalized(pos);
    const auto neg = l2_normalized(random_vec(rng, 16));
    const double loss = margin_loss(pin, pos, neg, 0.95);
    const double separation = dot(pin, pos) - dot(pin, neg);
    ASSERT_EQ(loss == 0.0, separation >= 0.95) << "draw " << t;
    if (loss == 0.0) {
      ++zero;
    } else {
      ASSERT_GT(loss, 0.0);
      ++positive;
    }
  }
  EXPECT_GT(zero, 100u);
  EXPECT_GT(positive, 100u);
}

TEST(TowerConfig, WidthMultiplier) {
  const auto c = TowerConfig{}.scaled(0.125);
  EXPECT_EQ(c.hidden, (std::vector<std::size_t>{64, 48, 32}));
  EXPECT_EQ(c.output, 16u);
  EXPECT_EQ(c.pin_input_dim, 1797u);
  EXPECT_EQ(c.query_input_dim, 769u);
  EXPECT_THROW(TowerConfig{}.scaled(0.0), ConfigError);
}

TEST(TowerConfig, Validation) {
  TowerConfig c;
  c.hidden.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = TowerConfig{};
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TowerConfig{};
  c.margin = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Features, QueryLengthNormalization) {
  EXPECT_FLOAT_EQ(length_norm_score("boho bedroom"), 2.0f / 16.0f);
  EXPECT_FLOAT_EQ(length_norm_score(""), 0.0f);
  EXPECT_FLOAT_EQ(length_norm_score("a b c d e f g h i j k l m n o p q r s t"), 1.0f);
  PinFeatures p{{1, 2}, {3}, 0.5f};
  EXPECT_EQ(p.concat(), (std::vector<float>{1, 2, 3, 0.5f}));
}

TEST(Tower, EvalIsDeterministicAndUnitNorm) {
  const auto cfg = tiny_config();
  Tower t(cfg.pin_input_dim, cfg.hidden, cfg.output, 3);
  Rng rng(4);
  Matrix x(10, Eigen::Index(cfg.pin_input_dim));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Rng a(1), b(2);
  const Matrix y1 = t.forward(x, Mode::kEval, cfg.dropout, a).output;
  const Matrix y2 = t.forward(x, Mode::kEval, cfg.dropout, b).output;
  EXPECT_EQ(y1, y2);
  for (Eigen::Index i = 0; i < y1.rows(); ++i) EXPECT_NEAR(y1.row(i).norm(), 1.0, 1e-6);
}

TEST(Tower, NoDropoutMeansTrainEqualsEval) {
  const auto cfg = tiny_config();
  Tower t(cfg.pin_input_dim, cfg.hidden, cfg.output, 3);
  Rng rng(4);
  Matrix x(5, Eigen::Index(cfg.pin_input_dim));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Rng a(1);
  EXPECT_EQ(t.forward(x, Mode::kTrain, 0.0, a).output, t.encode(x));
  Rng b(1);
  EXPECT_NE(t.forward(x, Mode::kTrain, 0.5, b).output, t.encode(x));
}

TEST(Tower, DropoutMaskIsSeededAndInverted) {
  Tower t(32, {200}, 8, 3);
  Matrix x = Matrix::Ones(50, 32);
  Rng a(9), b(9);
  const auto c1 = t.forward(x, Mode::kTrain, 0.25, a);
  const auto c2 = t.forward(x, Mode::kTrain, 0.25, b);
  EXPECT_EQ(c1.output, c2.output);
  ASSERT_EQ(c1.masks.size(), 1u);
  const Matrix& m = c1.masks[0];
  std::size_t kept = 0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double v = m.data()[i];
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15);
    kept += v != 0.0;
  }
  EXPECT_NEAR(double(kept) / double(m.size()), 0.75, 0.02);
}

TEST(Tower, LayerNormStandardizesHiddenActivations) {
  Tower t(12, {40}, 4, 3);
  Rng rng(8);
  Matrix x(6, 12);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Rng unused(0);
  const auto c = t.forward(x, Mode::kEval, 0.0, unused);
  for (Eigen::Index i = 0; i < 6; ++i) {
    const auto row = c.xhat[0].row(i);
    const double mean = row.mean();
    const double var = (row.array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-3);
  }
}

TEST(Tower, RejectsWrongDimensionAndZeroOutput) {
  Tower t(6, {4}, 3, 3);
  EXPECT_THROW(t.encode(Matrix::Ones(1, 5)), DimensionError);
  t.weights.back().setZero();
  t.biases.back().setZero();
  EXPECT_THROW(t.encode(Matrix::Ones(1, 6)), ZeroNormError);
}

std::uint64_t region_of(const RankerStep& s) {
  test::RegionHash h;
  for (const auto* c : {&s.pin_cache, &s.query_cache}) {
    for (const auto& z : c->pre) {
      for (Eigen::Index i = 0; i < z.size(); ++i) h.add(z.data()[i] > 0.0);
    }
  }
  for (bool a : s.active) h.add(a);
  return h.h;
}

TEST(RankerObjective, GradientMatchesFiniteDifferences) {
  const auto cfg = tiny_config();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RankerModel m(cfg, seed);
    Rng rng(1000 + seed);
    std::vector<RankerTriplet> ts{random_triplet(rng, 6, 5), random_triplet(rng, 6, 5)};
    const auto batch = TripletBatch::from(std::vector<const RankerTriplet*>{&ts[0], &ts[1]}, cfg);
    const std::uint64_t mask_seed = 77 + seed;
    const auto step = ranker_objective(m, batch, Mode::kTrain, mask_seed);
    ASSERT_GT(step.loss, 0.0);

    std::vector<double*> params;
    m.pin_tower.for_each_parameter([&](double& p) { params.push_back(&p); });
    m.query_tower.for_each_parameter([&](double& p) { params.push_back(&p); });
    auto analytic = Tower::flatten(step.pin);
    const auto q = Tower::flatten(step.query);
    analytic.insert(analytic.end(), q.begin(), q.end());
    ASSERT_EQ(params.size(), analytic.size());

    const auto r = test::check_gradient(params, analytic, [&] {
      const auto s = ranker_objective(m, batch, Mode::kTrain, mask_seed);
      return test::Probe{s.loss, region_of(s)};
    });
    EXPECT_LT(r.max_relative_error, 1e-3) << "seed " << seed;
    EXPECT_GT(r.checked, params.size() / 2) << "seed " << seed;
    worst = std::max(worst, r.max_relative_error);
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(RankerObjective, ZeroGradientWhenAllSatisfied) {
  auto cfg = tiny_config();
  cfg.margin = 1e-9;
  RankerModel m(cfg, 1);
  Rng rng(2);
  auto t = random_triplet(rng, 6, 5);
  const auto batch = TripletBatch::from(std::vector<const RankerTriplet*>{&t}, cfg);
  auto s = ranker_objective(m, batch, Mode::kEval, 0);
  if (s.active[0]) {
    std::swap(t.positive, t.negative);
    s = ranker_objective(m, TripletBatch::from(std::vector<const RankerTriplet*>{&t}, cfg), Mode::kEval, 0);
  }
  ASSERT_FALSE(s.active[0]);
  EXPECT_EQ(s.loss, 0.0);
  EXPECT_EQ(Tower::squared_norm(s.pin) + Tower::squared_norm(s.query), 0.0);
}

SeparableTripletConfig small_separable() {
  SeparableTripletConfig c;
  c.visual_dim = 96;
  c.text_dim = 64;
  c.separation = 0.5;
  return c;
}

TowerConfig small_ranker(const SeparableTripletConfig& s) {
  Dims d;
  d.visual = s.visual_dim;
  d.text = s.text_dim;
  auto c = TowerConfig::for_dims(d).scaled(0.125);
  c.epochs = 10;
  return c;
}

TEST(TrainRanker, SeparableTripletsReachHighCorrectRank) {
  const auto sc = small_separable();
  const auto train = separable_triplets(sc, 2000, 1);
  const auto eval = separable_triplets(sc, 1000, 2);
  const auto cfg = small_ranker(sc);
  const auto r = train_ranker(train, cfg, 7);
  EXPECT_GE(correct_rank(r.model, eval), 0.97);
  EXPECT_LT(r.log.back().loss, r.log.front().loss);
  EXPECT_EQ(r.log.size(), cfg.epochs * 32);
}

TEST(TrainRanker, UntrainedIsNearChance) {
  const auto sc = small_separable();
  const auto eval = separable_triplets(sc, 2000, 2);
  auto cfg = small_ranker(sc);
  cfg.epochs = 0;
  const auto r = train_ranker(separable_triplets(sc, 10, 1), cfg, 7);
  EXPECT_TRUE(r.log.empty());
  const double cr = correct_rank(r.model, eval);
  EXPECT_GE(cr, 0.4);
  EXPECT_LE(cr, 0.6);
}

TEST(TrainRanker, SameSeedSameWeights) {
  const auto sc = small_separable();
  const auto train = separable_triplets(sc, 300, 1);
  const auto cfg = small_ranker(sc);
  EXPECT_EQ(train_ranker(train, cfg, 3).model, train_ranker(train, cfg, 3).model);
  EXPECT_FALSE(train_ranker(train, cfg, 3).model == train_ranker(train, cfg, 4).model);
}

TEST(TrainRanker, RejectsBadInput) {
  const auto cfg = tiny_config();
  EXPECT_THROW(train_ranker({}, cfg, 1), InvalidArgument);
  Rng rng(1);
  auto t = random_triplet(rng, 6, 5);
  t.negative = t.positive;
  EXPECT_THROW(train_ranker({t}, cfg, 1), InvalidArgument);
  auto wrong = random_triplet(rng, 6, 4);
  EXPECT_THROW(train_ranker({wrong}, cfg, 1), DimensionError);
}

TEST(Score, BoundedAndDeterministic) {
  RankerModel m(tiny_config(), 2);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto t = random_triplet(rng, 6, 5);
    const double s = score(m, t.pin, t.positive);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
    EXPECT_EQ(s, score(m, t.pin, t.positive));
  }
}

TEST(CorrectRank, TiesFailAndOrderDoesNotMatter) {
  const std::vector<double> ones(4, 1.0), minus(4, -1.0);
  EXPECT_EQ(correct_rank(ones, minus), 1.0);
  EXPECT_EQ(correct_rank(ones, ones), 0.0);
  EXPECT_THROW(correct_rank(std::vector<double>{}, std::vector<double>{}), InvalidArgument);

  RankerModel m(tiny_config(), 2);
  Rng rng(3);
  std::vector<RankerTriplet> ts;
  for (int i = 0; i < 40; ++i) ts.push_back(random_triplet(rng, 6, 5));
  ts[0].negative = ts[0].positive;
  const double base = correct_rank(m, ts);
  auto shuffled = ts;
  rng.shuffle(std::span(shuffled));
  EXPECT_EQ(correct_rank(m, shuffled), base);
  EXPECT_EQ(correct_rank(m, std::vector<RankerTriplet>{ts[0]}), 0.0);
}

TEST(RankAnnotations, OrderingAndTies) {
  std::vector<RankedAnnotation> scored{{"banana bread", 0.5}, {"apple pie", 0.5}, {"zucchini", 0.9}, {"kale", 0.1}};
  auto top = order_annotations(scored, 10);
  ASSERT_EQ(top.size(), 4u);
  EXPECT_EQ(top[0].text, "zucchini");
  EXPECT_EQ(top[1].text, "apple pie");
  EXPECT_EQ(top[2].text, "banana bread");
  EXPECT_EQ(order_annotations(scored, 1).front().text, "zucchini");

  auto transformed = scored;
  for (auto& s : transformed) s.score = std::exp(3.0 * s.score) + 2.0;
  auto top2 = order_annotations(transformed, 10);
  for (std::size_t i = 0; i < top.size(); ++i) EXPECT_EQ(top[i].text, top2[i].text);
}

TEST(RankAnnotations, UsesModelScores) {
  RankerModel m(tiny_config(), 2);
  Rng rng(3);
  const auto t = random_triplet(rng, 6, 5);
  std::vector<AnnotationCandidate> cands;
  for (int i = 0; i < 6; ++i) cands.push_back({"q" + std::to_string(i), {random_vec(rng, 5), 0.25f}});
  const auto ranked = rank_annotations(m, t.pin, cands, 3);
  ASSERT_EQ(ranked.size(), 3u);
  for (const auto& r : ranked) {
    const auto it = std::find_if(cands.begin(), cands.end(), [&](const auto& c) { return c.text == r.text; });
    EXPECT_NEAR(r.score, score(m, t.pin, it->features), 1e-12);
  }
  EXPECT_GE(ranked[0].score, ranked[1].score);
  EXPECT_TRUE(rank_annotations(m, t.pin, {}, 3).empty());
}

TEST(RankerCheckpoint, RoundTripAndKindCheck) {
  test::TempDir dir;
  RankerModel m(tiny_config(), 5);
  save_ranker(m, dir.path / "ranker.ckpt");
  const auto back = load_ranker(dir.path / "ranker.ckpt");
  // Stored as float32, so compare after one round of rounding.
  const auto again = ranker_from_checkpoint(ranker_checkpoint(back));
  EXPECT_EQ(back, again);
  EXPECT_EQ(back.config.hidden, m.config.hidden);
  EXPECT_DOUBLE_EQ(back.config.dropout, m.config.dropout);
  Rng rng(1);
  const auto t = random_triplet(rng, 6, 5);
  EXPECT_NEAR(score(back, t.pin, t.positive), score(m, t.pin, t.positive), 1e-5);

  auto ck = ranker_checkpoint(m);
  ck.kind = "encoder/PinCLIP";
  EXPECT_THROW(ranker_from_checkpoint(ck), FormatError);
}

}  // namespace
}  // namespace geoforge::ranker
