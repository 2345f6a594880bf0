#include <gtest/gtest.h>

#include <functional>

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

/// Two images per class over K = 3 classes.
RetrievalSet small_set() {
  return RetrievalSet({{0, "a0", {0.6, 0.3, 0.1}},
                       {0, "a1", {0.2, 0.5, 0.3}},
                       {1, "b0", {0.1, 0.8, 0.1}},
                       {1, "b1", {0.5, 0.4, 0.1}},
                       {2, "c0", {0.4, 0.4, 0.2}},
                       {2, "c1", {0.0, 0.0, 1.0}}});
}

}  // namespace

TEST(ClassRank, TiesFavourTheSmallerClassId) {
  const std::vector<double> p{0.25, 0.5, 0.25, 0.0};
  EXPECT_EQ(class_rank(p, 1), 0u);
  EXPECT_EQ(class_rank(p, 0), 1u);
  EXPECT_EQ(class_rank(p, 2), 2u);  // tied with class 0, which has the smaller id
  EXPECT_EQ(class_rank(p, 3), 3u);
}

TEST(TopK, HandCountsAndSubsets) {
  const auto set = small_set();
  // Ranks of the source class: a0 0, a1 2, b0 0, b1 1, c0 2, c1 0.
  EXPECT_DOUBLE_EQ(topk_accuracy(set, 1), 3.0 / 6.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(set, 2), 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(set, 3), 1.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(set, 1, std::vector<std::size_t>{1}), 0.5);
  EXPECT_DOUBLE_EQ(topk_accuracy(set, 2, std::vector<std::size_t>{1, 2}), 0.75);
  EXPECT_EQ(code_of([&] { topk_accuracy(set, 0); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { topk_accuracy(set, 4); }), ErrorCode::invalid_argument);
}

TEST(BinaryPreference, ConvergesToPairwiseWinRate) {
  const auto set = small_set();
  // Exhaustive win rate over every (positive, negative) pair of the same class.
  std::size_t wins = 0, pairs = 0;
  for (const auto& pos : set.images()) {
    for (const auto& neg : set.images()) {
      if (neg.class_id == pos.class_id) continue;
      wins += pos.probs[pos.class_id] > neg.probs[pos.class_id];
      ++pairs;
    }
  }
  const double exact = static_cast<double>(wins) / static_cast<double>(pairs);
  const double est = binary_preference(set, 3, 20000);
  // 120000 Bernoulli trials: standard error below 0.0015.
  EXPECT_NEAR(est, exact, 0.01);
  EXPECT_EQ(binary_preference(set, 3, 50), binary_preference(set, 3, 50));
}

TEST(BinaryPreference, TiesCountAsFailures) {
  const RetrievalSet tied({{0, "a", {0.5, 0.5}}, {1, "b", {0.5, 0.5}}});
  EXPECT_EQ(binary_preference(tied, 1, 10), 0.0);
  const RetrievalSet perfect({{0, "a", {1.0, 0.0}}, {1, "b", {0.0, 1.0}}});
  EXPECT_EQ(binary_preference(perfect, 1, 10), 1.0);
}

TEST(BinaryPreference, Errors) {
  const auto set = small_set();
  EXPECT_EQ(code_of([&] { binary_preference(set, 1, 0); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { binary_preference(RetrievalSet({{0, "a", {1.0, 0.0}}}), 1); }),
            ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { binary_preference(set, 1, 1, std::vector<std::size_t>{7}); }), ErrorCode::missing);
}

TEST(RetrievalSet, Validation) {
  using V = std::vector<RetrievedImage>;
  EXPECT_EQ(code_of([] { RetrievalSet(V{}); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([] { RetrievalSet(V{{0, "a", {}}}); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([] { RetrievalSet(V{{0, "a", {1.0, 0.0}}, {1, "b", {1.0}}}); }), ErrorCode::mismatch);
  EXPECT_EQ(code_of([] { RetrievalSet(V{{0, "a", {1.5, -0.5}}}); }), ErrorCode::non_finite);
  EXPECT_EQ(code_of([] { RetrievalSet(V{{0, "a", {NAN, 1.0}}}); }), ErrorCode::non_finite);
  EXPECT_EQ(code_of([] { RetrievalSet(V{{0, "a", {0.5, 0.4}}}); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([] { RetrievalSet(V{{2, "a", {0.5, 0.5}}}); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([] { RetrievalSet(V{{0, "a", {1, 0}}, {0, "b", {1, 0}}, {1, "c", {0, 1}}}); }),
            ErrorCode::mismatch);
}

TEST(RetrievalSet, LoadsJsonLines) {
  testutil::TempDir dir("retrieval");
  testutil::write_file(dir / "r.jsonl",
                       "{\"class_id\": 0, \"image_id\": \"x\", \"probs\": [0.9, 0.1]}\n\n"
                       "{\"class_id\": 1, \"image_id\": \"y\", \"probs\": [0.2, 0.8]}\n");
  const auto set = load_retrieval(dir / "r.jsonl");
  EXPECT_EQ(set.num_classes(), 2u);
  EXPECT_EQ(topk_accuracy(set, 1), 1.0);
  testutil::write_file(dir / "bad.jsonl", "{\"class_id\": 0}\n");
  EXPECT_EQ(code_of([&] { load_retrieval(dir / "bad.jsonl"); }), ErrorCode::parse);
  EXPECT_EQ(code_of([&] { load_retrieval(dir / "missing.jsonl"); }), ErrorCode::io);
}
