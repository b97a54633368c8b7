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
#include <filesystem>
#include <fstream>

#include "geoforge/core/corpus.hpp"
#include "geoforge/core/rng.hpp"
#include "geoforge/core/synthetic.hpp"
#include "geoforge/core/text.hpp"
#include "geoforge/core/vector_math.hpp"
#include "test_util.hpp"

namespace geoforge {
namespace {

TEST(VectorMath, NormalizeThreeFour) {
  auto v = l2_normalize(DenseVector{3.0f, 4.0f});
  EXPECT_NEAR(v[0], 0.6, 1e-7);
  EXPECT_NEAR(v[1], 0.8, 1e-7);
  EXPECT_TRUE(v.normalized);
  EXPECT_NEAR(l2_norm(v.values), 1.0, 1e-6);
}

TEST(VectorMath, NormalizeIsIdempotentOnUnitVectors) {
  DenseVector e{0.0f, 1.0f, 0.0f};
  EXPECT_EQ(l2_normalize(e).values, e.values);
}

TEST(VectorMath, NormalizeZeroVectorThrows) {
  EXPECT_THROW(l2_normalize(DenseVector{0.0f, 0.0f}), ZeroNormError);
}

TEST(VectorMath, CosineBasics) {
  DenseVector a = l2_normalize(DenseVector{1.0f, 2.0f, 3.0f});
  DenseVector neg = a;
  for (auto& x : neg.values) x = -x;
  EXPECT_NEAR(cosine(a, a), 1.0, 1e-7);
  EXPECT_NEAR(cosine(a, neg), -1.0, 1e-7);
  EXPECT_DOUBLE_EQ(cosine(DenseVector{1.0f, 0.0f}, DenseVector{0.0f, 1.0f}), 0.0);
  EXPECT_THROW(cosine(DenseVector{1.0f}, DenseVector{1.0f, 0.0f}), DimensionError);
}

TEST(VectorMath, CosineIsSymmetricAndBounded) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> a(9), b(9);
    for (auto& x : a) x = float(rng.normal());
    for (auto& x : b) x = float(rng.normal());
    const double ab = cosine(std::span<const float>(a), std::span<const float>(b));
    const double ba = cosine(std::span<const float>(b), std::span<const float>(a));
    EXPECT_EQ(ab, ba);
    EXPECT_LE(std::abs(ab), 1.0);
  }
}

TEST(Text, SlugAndTokens) {
  EXPECT_EQ(slugify("Sage Green Monochrome Look"), "sage-green-monochrome-look");
  EXPECT_EQ(slugify("  --Fall   Nails!! 2026 "), "fall-nails-2026");
  EXPECT_EQ(tokenize("Boho, wedding-ARCH"), (std::vector<std::string>{"boho", "wedding", "arch"}));
}

TEST(Text, HashedEmbeddingIsUnitAndDeterministic) {
  auto a = hashed_text_embedding("sage green blazer", 768);
  auto b = hashed_text_embedding("Sage  green BLAZER", 768);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NEAR(l2_norm(a.values), 1.0, 1e-6);
  EXPECT_THROW(hashed_text_embedding("  !! ", 768), ZeroNormError);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  EXPECT_NE(derive_seed(1, SeedOffset::kIndex), derive_seed(1, SeedOffset::kRanker));
}

TEST(Synthetic, ThemeVocabulariesAreDisjoint) {
  std::map<std::string, std::string> owner;
  auto claim = [&](const synthetic::Theme& t) {
    std::vector<std::string> words = tokenize(t.core);
    for (auto* e : t.extras) words.push_back(e);
    for (const auto& w : words) {
      auto [it, fresh] = owner.emplace(w, t.core);
      EXPECT_TRUE(fresh || it->second == t.core) << w << " shared by " << it->second << " and " << t.core;
    }
  };
  for (const auto& t : synthetic::kThemes) claim(t);
  for (const auto& t : synthetic::kHeldOutThemes) claim(t);
}

class CorpusIo : public ::testing::Test {
 protected:
  test::TempDir dir;
  Dims dims{4, 3, 2};

  PinRecord pin(Signature s, std::size_t dv = 4) {
    PinRecord p;
    p.signature = s;
    p.visual_embedding = std::vector<float>(dv, 0.5f);
    p.text_embedding = {0.1f, 0.2f, 0.3f};
    p.perception_score = 0.25f;
    p.title = "t\"itle " + std::to_string(s);
    p.category = "home";
    return p;
  }

  std::filesystem::path write_manifest(const std::vector<PinRecord>& pins) {
    std::vector<std::string> lines;
    for (const auto& p : pins) lines.push_back(to_jsonl(p));
    write_lines(dir.path / "pins.jsonl", lines);
    write_text(dir.path / "manifest.txt", "pins=pins.jsonl\nd_v=4\nd_t=3\nranker_dim=2\nseed=9\n");
    return dir.path / "manifest.txt";
  }
};

TEST_F(CorpusIo, LoadsValidPins) {
  auto c = load_corpus(write_manifest({pin(1), pin(2), pin(3)}));
  ASSERT_EQ(c.pins.size(), 3u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.pin(2).title, "t\"itle 2");
}

TEST_F(CorpusIo, RejectsWrongDimensionWithLineNumber) {
  try {
    load_corpus(write_manifest({pin(1), pin(2, 3)}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find(":2:"), std::string::npos) << what;
    EXPECT_NE(what.find("visual_embedding"), std::string::npos) << what;
    EXPECT_NE(what.find("expected 4"), std::string::npos) << what;
  }
}

TEST_F(CorpusIo, RejectsDuplicateSignature) {
  EXPECT_THROW(load_corpus(write_manifest({pin(42), pin(42)})), DuplicateIdError);
}

TEST_F(CorpusIo, MalformedLineReportsLine) {
  write_manifest({pin(1)});
  std::ofstream(dir.path / "pins.jsonl", std::ios::app) << "{not json\n";
  try {
    load_corpus(dir.path / "manifest.txt");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST_F(CorpusIo, ManifestRejectsUnknownKeysAndMissingFiles) {
  write_text(dir.path / "m1.txt", "pins=pins.jsonl\nbogus=1\n");
  write_manifest({pin(1)});
  EXPECT_THROW(parse_manifest(dir.path / "m1.txt"), ParseError);
  write_text(dir.path / "m2.txt", "pins=nope.jsonl\n");
  EXPECT_THROW(parse_manifest(dir.path / "m2.txt"), ConfigError);
}

TEST(CorpusRoundTrip, SaveLoadSaveIsBitIdentical) {
  synthetic::GeneratorConfig cfg;
  cfg.num_pins = 60;
  cfg.dims = {32, 24, 8};
  cfg.seed = 5;
  const Corpus c = synthetic::generate_corpus(cfg);
  test::TempDir a, b;
  auto m = save_corpus(c, a.path);
  const Corpus back = load_corpus(a.path / "manifest.txt");
  EXPECT_EQ(back.pins, c.pins);
  EXPECT_EQ(back.queries, c.queries);
  EXPECT_EQ(back.engagement, c.engagement);
  EXPECT_EQ(back.candidates, c.candidates);
  save_corpus(back, b.path);
  for (const char* f : {"pins.jsonl", "queries.jsonl", "engagement.jsonl", "labels.jsonl"}) {
    EXPECT_EQ(read_text(a.path / f), read_text(b.path / f)) << f;
  }
}

TEST(CorpusRoundTrip, SameSeedSameCorpus) {
  synthetic::GeneratorConfig cfg;
  cfg.num_pins = 40;
  cfg.dims = {16, 16, 8};
  auto a = synthetic::generate_corpus(cfg);
  auto b = synthetic::generate_corpus(cfg);
  EXPECT_EQ(a.pins, b.pins);
  EXPECT_EQ(a.engagement, b.engagement);
  cfg.seed = 43;
  EXPECT_NE(synthetic::generate_corpus(cfg).pins, a.pins);
}

}  // namespace
}  // namespace geoforge
