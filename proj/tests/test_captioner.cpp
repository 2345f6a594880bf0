#include <gtest/gtest.h>

#include <functional>
#include <sstream>

#include "oracles.hpp"
#include "semcoh/semcoh.hpp"
#include "test_util.hpp"

using namespace semcoh;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no semcoh::Error thrown";
  return ErrorCode::io;
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

/// Random clustered captions with embeddings; cluster c holds sizes[c] images.
struct RandomInstance {
  Clustering clustering;
  CaptionSet captions;
  EmbeddingMatrix emb;
  std::vector<std::vector<double>> rows;
  std::vector<int> cls;

  RandomInstance(const std::vector<std::size_t>& sizes, std::size_t dim, std::uint64_t seed) {
    Xoshiro256ss rng(seed);
    std::vector<std::pair<std::string, ClusterId>> assign;
    std::vector<std::string> ids;
    std::vector<float> values;
    for (std::size_t c = 0; c < sizes.size(); ++c) {
      for (std::size_t i = 0; i < sizes[c]; ++i) {
        const std::string id = "img_" + std::to_string(c) + "_" + std::to_string(i);
        assign.emplace_back(id, static_cast<ClusterId>(c * 3 + 1));
        ids.push_back(id);
        captions.add(id, "caption " + id);
        rows.emplace_back();
        for (std::size_t d = 0; d < dim; ++d) {
          const float v = static_cast<float>(rng.normal() + (d == c % dim ? 2.0 : 0.0));
          values.push_back(v);
          rows.back().push_back(v);
        }
        cls.push_back(static_cast<int>(c));
      }
    }
    clustering = Clustering::from_assignment(assign);
    emb = EmbeddingMatrix(ids, dim, values);
  }
};

}  // namespace

TEST(Tokenize, LowercasesAndSplitsOnAsciiPunctuation) {
  EXPECT_EQ(tokenize("A red-Fire truck, parked."), (std::vector<std::string>{"a", "red", "fire", "truck", "parked"}));
  EXPECT_EQ(tokenize("café au lait"), (std::vector<std::string>{"café", "au", "lait"}));
  EXPECT_EQ(tokenize("Ünïcode"), (std::vector<std::string>{"Ünïcode"}));  // non-ASCII bytes keep their case
  EXPECT_TRUE(tokenize("  ...  ").empty());
}

TEST(RougeL, MatchesRecursiveLcsOracle) {
  Xoshiro256ss rng(5);
  const std::vector<std::string> vocab{"a", "dog", "runs", "on", "the", "grass", "red", "ball"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string x, y;
    for (std::size_t i = rng.uniform_index(9); i > 0; --i) x += vocab[rng.uniform_index(vocab.size())] + " ";
    for (std::size_t i = rng.uniform_index(9); i > 0; --i) y += vocab[rng.uniform_index(vocab.size())] + " ";
    EXPECT_NEAR(rouge_l_f1(x, y), oracle::rouge_l_f1(split_words(x), split_words(y)), 1e-15) << x << "|" << y;
  }
  EXPECT_EQ(rouge_l_f1("", "a dog"), 0.0);
  EXPECT_EQ(rouge_l_f1("The dog.", "the DOG"), 1.0);
}

TEST(CaptionObjective, AcceleratedScoresMatchNaiveDoubleLoop) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Xoshiro256ss rng(seed * 31);
    std::vector<std::size_t> sizes(2 + rng.uniform_index(4));
    for (auto& s : sizes) s = 1 + rng.uniform_index(6);
    const RandomInstance inst(sizes, 3 + rng.uniform_index(6), seed);
    const auto index = build_index(inst.captions, inst.emb, inst.clustering);
    for (bool excl : {false, true}) {
      SelectionOptions opt;
      opt.intra_divisor = excl ? IntraDivisor::excluding_self : IntraDivisor::class_size;
      const auto scores = score_candidates(index, opt);
      const auto ref = oracle::caption_objective(inst.rows, inst.cls, excl);
      ASSERT_EQ(scores.size(), ref.size());
      for (std::size_t i = 0; i < scores.size(); ++i) {
        EXPECT_NEAR(scores[i].intra, ref[i].first, 1e-12);
        EXPECT_NEAR(scores[i].inter, ref[i].second, 1e-12);
        EXPECT_NEAR(scores[i].score, ref[i].first - ref[i].second, 1e-12);
      }
      opt.use_negative_term = false;
      const auto intra_only = score_candidates(index, opt);
      for (std::size_t i = 0; i < scores.size(); ++i) EXPECT_NEAR(intra_only[i].score, ref[i].first, 1e-12);
    }
  }
}

TEST(CaptionObjective, RougeScoresMatchNaiveDoubleLoop) {
  const std::vector<std::pair<std::string, ClusterId>> assign{{"a", 0}, {"b", 0}, {"c", 0}, {"d", 1}, {"e", 1}};
  const std::vector<std::string> texts{"a red fire truck", "a fire engine", "red truck on road", "a small dog",
                                       "dog on grass"};
  CaptionSet captions;
  for (std::size_t i = 0; i < assign.size(); ++i) captions.add(assign[i].first, texts[i]);
  const auto clustering = Clustering::from_assignment(assign);
  const auto indexed = clustered_captions(captions, clustering);
  const auto scores = score_candidates_rouge(indexed, 2);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    double intra = 0, inter = 0;
    std::size_t same = 0, other = 0;
    for (std::size_t j = 0; j < texts.size(); ++j) {
      const double d = 1.0 - oracle::rouge_l_f1(split_words(texts[i]), split_words(texts[j]));
      if (assign[i].second == assign[j].second) {
        if (j != i) intra += d;
        ++same;
      } else {
        inter += d;
        ++other;
      }
    }
    EXPECT_NEAR(scores[i].intra, intra / same, 1e-15);
    EXPECT_NEAR(scores[i].inter, inter / other, 1e-15);
  }
}

TEST(Selection, NegativeTermChangesTheWinner) {
  // Class 0 captions along angles 0, 20, 40 degrees; class 1 at 90 degrees.
  // The medoid (20) wins without the negative term; with it, the caption
  // farthest from class 1 (0 degrees) wins.
  auto at = [](double deg) {
    const double r = deg * 3.14159265358979323846 / 180.0;
    return std::vector<float>{static_cast<float>(std::cos(r)), static_cast<float>(std::sin(r))};
  };
  std::vector<float> values;
  for (double deg : {0.0, 20.0, 40.0, 90.0}) {
    const auto v = at(deg);
    values.insert(values.end(), v.begin(), v.end());
  }
  const EmbeddingMatrix emb({"p0", "p20", "p40", "q"}, 2, values);
  const auto clustering = Clustering::from_assignment({{"p0", 0}, {"p20", 0}, {"p40", 0}, {"q", 1}});
  CaptionSet captions;
  for (const auto& id : emb.ids()) captions.add(id, "text " + id);
  const auto index = build_index(captions, emb, clustering);
  EXPECT_EQ(select_descriptions(index).find(0)->source_image_id, "p0");
  SelectionOptions opt;
  opt.use_negative_term = false;
  EXPECT_EQ(select_descriptions(index, opt).find(0)->source_image_id, "p20");
  EXPECT_EQ(select_descriptions(index).find(1)->source_image_id, "q");
}

TEST(Selection, TiesGoToTheSmallestImageId) {
  const EmbeddingMatrix emb({"z", "m", "a", "o"}, 2, {1, 0, 1, 0, 1, 0, 0, 1});
  const auto clustering = Clustering::from_assignment({{"z", 0}, {"m", 0}, {"a", 0}, {"o", 1}});
  CaptionSet captions;
  for (const auto& id : emb.ids()) captions.add(id, "same words");
  EXPECT_EQ(select_descriptions(build_index(captions, emb, clustering)).find(0)->source_image_id, "a");
  EXPECT_EQ(select_descriptions_rouge(captions, clustering).find(0)->source_image_id, "a");
}

TEST(Selection, SingletonAndSingleClusterEdges) {
  const EmbeddingMatrix emb({"a", "b"}, 2, {1, 0, 0, 1});
  CaptionSet captions;
  captions.add("a", "alpha");
  captions.add("b", "beta");
  const auto one = Clustering::from_assignment({{"a", 0}, {"b", 0}});
  const auto d = select_descriptions(build_index(captions, emb, one));
  EXPECT_TRUE(d.find(0)->inter_undefined);
  EXPECT_NEAR(d.find(0)->intra, 0.5, 1e-15);  // distance 1 over |S_c| = 2
  const auto two = Clustering::from_assignment({{"a", 0}, {"b", 1}});
  const auto s = select_descriptions(build_index(captions, emb, two));
  EXPECT_EQ(s.find(0)->intra, 0.0);
  EXPECT_NEAR(s.find(0)->score, -1.0, 1e-15);
}

TEST(Selection, Errors) {
  const auto clustering = Clustering::from_assignment({{"a", 0}, {"b", 1}});
  CaptionSet captions;
  captions.add("a", "alpha");
  captions.add("b", "beta");
  EXPECT_EQ(code_of([&] { build_index(captions, EmbeddingMatrix({"a", "b"}, 2, {1, 0, 0, 0}), clustering); }),
            ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { build_index(captions, EmbeddingMatrix({"a"}, 2, {1, 0}), clustering); }),
            ErrorCode::missing);
  CaptionSet partial;
  partial.add("a", "alpha");
  EXPECT_EQ(code_of([&] { select_descriptions_rouge(partial, clustering); }), ErrorCode::missing);
  EXPECT_EQ(code_of([&] { partial.add("c", ""); }), ErrorCode::invalid_argument);
}

TEST(Uniqueness, CountsAndRanking) {
  DescriptionSet d;
  const std::vector<std::string> texts{"a dog", "the dog", "a dog", "cat", "a dog", "cat"};
  for (std::size_t i = 0; i < texts.size(); ++i) d.add({static_cast<ClusterId>(i), texts[i], "x", 0, 0, 0, false});
  const auto r = uniqueness_stats(d, default_stopwords(), 2);
  EXPECT_EQ(r.classes, 6u);
  EXPECT_EQ(r.unique, 3u);
  EXPECT_EQ(r.unique_without_stopwords, 2u);  // "a dog" and "the dog" collapse
  ASSERT_EQ(r.most_common.size(), 2u);
  EXPECT_EQ(r.most_common[0], (std::pair<std::string, std::size_t>{"a dog", 3}));
  EXPECT_EQ(r.most_common[1], (std::pair<std::string, std::size_t>{"cat", 2}));
}

TEST(DescriptionFiles, RoundTripAndErrors) {
  testutil::TempDir dir("desc");
  DescriptionSet d;
  d.add({4, "a \"quoted\" caption", "img_4", -0.25, 0.5, 0.75, false});
  d.add({1, "solo", "img_1", 0.0, 0.0, 0.0, true});
  write_descriptions(dir / "d.jsonl", d);
  const auto back = load_descriptions(dir / "d.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.find(4)->text, "a \"quoted\" caption");
  EXPECT_EQ(back.find(4)->score, -0.25);
  EXPECT_TRUE(back.find(1)->inter_undefined);
  EXPECT_EQ(back.ordered().front()->cluster_id, 1);
  EXPECT_EQ(code_of([&] { d.add({4, "again", "x", 0, 0, 0, false}); }), ErrorCode::duplicate_id);
  testutil::write_file(dir / "bad.jsonl", "{\"cluster_id\": 1}\n");
  EXPECT_EQ(code_of([&] { load_descriptions(dir / "bad.jsonl"); }), ErrorCode::parse);
}
