#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "semcoh/semcoh.hpp"
#include "test_util.hpp"

using namespace semcoh;
using testutil::TempDir;
using testutil::write_file;

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

}  // namespace

TEST(Clustering, KeepsOriginalIdsAndDenseIndex) {
  const auto c = Clustering::from_assignment({{"a", 40}, {"b", 7}, {"c", 40}, {"d", 12}});
  EXPECT_EQ(c.size(), 4u);
  EXPECT_EQ(c.num_clusters(), 3u);
  EXPECT_EQ(c.original_ids(), (std::vector<ClusterId>{40, 7, 12}));
  EXPECT_EQ(c.labels(), (std::vector<int>{0, 1, 0, 2}));
  EXPECT_EQ(c.sorted_cluster_ids(), (std::vector<ClusterId>{7, 12, 40}));
  EXPECT_EQ(c.cluster_of(*c.handle("c")), 40);
  EXPECT_EQ(*c.dense_index(12), 2);
  EXPECT_FALSE(c.dense_index(5).has_value());
  EXPECT_EQ(c.members()[0], (std::vector<std::size_t>{0, 2}));
}

TEST(Clustering, RejectsDuplicatesAndNegativeIds) {
  EXPECT_EQ(code_of([] { Clustering::from_assignment({{"a", 1}, {"a", 2}}); }), ErrorCode::duplicate_id);
  EXPECT_EQ(code_of([] { Clustering::from_assignment({{"a", -1}}); }), ErrorCode::invalid_argument);
}

TEST(Clustering, CsvRoundTripAndErrorsCarryLineNumbers) {
  TempDir tmp("corpus");
  write_file(tmp / "c.csv", "image_id,cluster_id\nimg,one,3\nb,4\r\n\nc,3\n");
  const auto c = load_clustering(tmp / "c.csv", true);
  // The id may contain commas: the split is at the last comma.
  EXPECT_TRUE(c.handle("img,one").has_value());
  EXPECT_EQ(c.cluster_of(*c.handle("b")), 4);
  write_clustering(tmp / "out.csv", c);
  EXPECT_EQ(load_clustering(tmp / "out.csv"), c);

  write_file(tmp / "bad.csv", "a,1\nb,x\n");
  try {
    load_clustering(tmp / "bad.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse);
    EXPECT_NE(std::string(e.what()).find("bad.csv:2"), std::string::npos);
  }
  write_file(tmp / "dup.csv", "a,1\na,2\n");
  EXPECT_EQ(code_of([&] { load_clustering(tmp / "dup.csv"); }), ErrorCode::duplicate_id);
  write_file(tmp / "empty.csv", "\n");
  EXPECT_EQ(code_of([&] { load_clustering(tmp / "empty.csv"); }), ErrorCode::parse);
  EXPECT_EQ(code_of([&] { load_clustering(tmp / "missing.csv"); }), ErrorCode::io);
}

TEST(LabelMap, LoadsAndValidates) {
  TempDir tmp("labels");
  write_file(tmp / "names.csv", "n01,dog, small\nn02,cat\n");
  write_file(tmp / "labels.csv", "a,n01\nb,n02\n");
  const auto map = load_labelmap(tmp / "labels.csv", tmp / "names.csv");
  EXPECT_EQ(map.num_labels(), 2u);
  EXPECT_EQ(map.names.at("n01"), "dog, small");
  EXPECT_EQ(map.labels.at("b"), "n02");

  write_file(tmp / "labels2.csv", "a,n09\n");
  EXPECT_EQ(code_of([&] { load_labelmap(tmp / "labels2.csv", tmp / "names.csv"); }), ErrorCode::missing);
  write_file(tmp / "labels3.csv", "a,n01\na,n02\n");
  EXPECT_EQ(code_of([&] { load_labelmap(tmp / "labels3.csv", tmp / "names.csv"); }), ErrorCode::duplicate_id);
}

TEST(Embeddings, BinaryRoundTripIsExact) {
  TempDir tmp("emb");
  const EmbeddingMatrix m({"x", "y"}, 3, {1.5f, -2.0f, 0.1f, 3.25f, 1e-30f, -0.0f});
  write_embeddings(tmp / "m.emb", tmp / "m.ids", m);
  const auto bytes = testutil::read_file(tmp / "m.emb");
  ASSERT_EQ(bytes.size(), 12u + 6 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "EMB1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 2u);  // rows, little endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3u);  // dim
  const auto back = load_embeddings(tmp / "m.emb", tmp / "m.ids");
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.row(1)[0], 3.25f);
  EXPECT_EQ(*back.find("y"), 1u);
}

TEST(Embeddings, RejectsBadInput) {
  TempDir tmp("emb-bad");
  const float nan = std::numeric_limits<float>::quiet_NaN();
  EXPECT_EQ(code_of([&] { EmbeddingMatrix({"x"}, 2, {1.0f, nan}); }), ErrorCode::non_finite);
  EXPECT_EQ(code_of([] { EmbeddingMatrix({"x", "x"}, 1, {1.0f, 2.0f}); }), ErrorCode::duplicate_id);
  EXPECT_EQ(code_of([] { EmbeddingMatrix({"x"}, 2, {1.0f}); }), ErrorCode::mismatch);

  write_embeddings(tmp / "m.emb", tmp / "m.ids", EmbeddingMatrix({"x", "y"}, 1, {1.0f, 2.0f}));
  write_file(tmp / "short.ids", "x\n");
  EXPECT_EQ(code_of([&] { load_embeddings(tmp / "m.emb", tmp / "short.ids"); }), ErrorCode::mismatch);
  write_file(tmp / "bad.emb", "EMB2xxxxxxxx");
  EXPECT_EQ(code_of([&] { load_embeddings(tmp / "bad.emb", tmp / "m.ids"); }), ErrorCode::parse);
  auto truncated = testutil::read_file(tmp / "m.emb");
  truncated.pop_back();
  write_file(tmp / "trunc.emb", truncated);
  EXPECT_EQ(code_of([&] { load_embeddings(tmp / "trunc.emb", tmp / "m.ids"); }), ErrorCode::parse);
}

TEST(Captions, JsonlRoundTripAndErrors) {
  TempDir tmp("captions");
  CaptionSet set;
  set.add("a", "a dog \"quoted\"");
  set.add("b", "caf\xc3\xa9 scene");
  write_captions(tmp / "c.jsonl", set);
  const auto back = load_captions(tmp / "c.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(*back.find("a"), "a dog \"quoted\"");
  EXPECT_EQ(back.entries(), set.entries());

  write_file(tmp / "bad.jsonl", "{\"image_id\":\"a\",\"caption\":\"x\"}\n{oops\n");
  try {
    load_captions(tmp / "bad.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse);
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos);
  }
  write_file(tmp / "dup.jsonl", "{\"image_id\":\"a\",\"caption\":\"x\"}\n{\"image_id\":\"a\",\"caption\":\"y\"}\n");
  EXPECT_EQ(code_of([&] { load_captions(tmp / "dup.jsonl"); }), ErrorCode::duplicate_id);
  write_file(tmp / "empty.jsonl", "{\"image_id\":\"a\",\"caption\":\"\"}\n");
  EXPECT_EQ(code_of([&] { load_captions(tmp / "empty.jsonl"); }), ErrorCode::invalid_argument);
}

TEST(Manifest, ResolvesInsideRootOnly) {
  TempDir tmp("manifest");
  write_file(tmp / "root/images/a.svg", "<svg/>");
  write_file(tmp / "outside.txt", "secret");
  fs::create_symlink(tmp / "outside.txt", tmp / "root/images/link.svg");
  write_file(tmp / "root/manifest.csv", "a,images/a.svg\nl,images/link.svg\n");
  const auto m = load_manifest(tmp / "root/manifest.csv");
  ASSERT_TRUE(m.resolve("a").has_value());
  EXPECT_EQ(testutil::read_file(*m.resolve("a")), "<svg/>");
  EXPECT_FALSE(m.resolve("l").has_value());
  EXPECT_FALSE(m.resolve("zzz").has_value());

  EXPECT_EQ(code_of([&] { ImageManifest(tmp.path(), {{"x", "../etc/passwd"}}); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { ImageManifest(tmp.path(), {{"x", "/etc/passwd"}}); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([&] { ImageManifest(tmp.path(), {{"x", "a"}, {"x", "b"}}); }), ErrorCode::duplicate_id);
}

TEST(Validation, ReportsEachGap) {
  CorpusBundle b;
  b.clustering = Clustering::from_assignment({{"a", 0}, {"b", 0}, {"c", 1}});
  b.manifest = ImageManifest(".", {{"a", "a.jpg"}, {"b", "b.jpg"}});
  b.features = EmbeddingMatrix({"a", "b", "c"}, 1, {1, 2, 3});
  CaptionSet caps;
  caps.add("a", "x");
  caps.add("b", "y");
  b.captions = caps;
  b.caption_embeddings = EmbeddingMatrix({"a"}, 1, {1});
  LabelMap labels;
  labels.names = {{"n1", "one"}};
  labels.labels = {{"a", "n1"}, {"ghost", "n1"}};
  b.labels = labels;

  ValidationRequirements req;
  req.captions = true;
  const auto report = validate_corpus(b, req);
  std::map<std::string, std::pair<Severity, std::size_t>> seen;
  for (const auto& i : report.issues) seen[i.check] = {i.severity, i.count};
  EXPECT_EQ(seen.at("clustered_missing_from_manifest"), std::make_pair(Severity::error, std::size_t{1}));
  EXPECT_EQ(seen.at("clustered_missing_captions"), std::make_pair(Severity::error, std::size_t{1}));
  EXPECT_EQ(seen.at("captions_missing_embeddings"), std::make_pair(Severity::error, std::size_t{1}));
  EXPECT_EQ(seen.at("labels_reference_unknown_images"), std::make_pair(Severity::warning, std::size_t{1}));
  EXPECT_EQ(seen.at("clustered_unlabeled"), std::make_pair(Severity::warning, std::size_t{2}));
  EXPECT_FALSE(seen.contains("clustered_missing_features"));
  EXPECT_EQ(report.errors(), 3u);
  EXPECT_EQ(report.to_json()["summary"]["in_manifest"], 2);

  CorpusBundle bare;
  bare.clustering = b.clustering;
  ValidationRequirements need_all{true, true, true, true};
  EXPECT_EQ(validate_corpus(bare, need_all).errors(), 3u);  // manifest, features, captions absent
  EXPECT_EQ(validate_corpus(bare).errors(), 0u);
}

TEST(ToyCorpus, ShapeAndConsistency) {
  const auto toy = make_toy_corpus();
  EXPECT_EQ(toy.clustering.size(), 600u);
  EXPECT_EQ(toy.clustering.num_clusters(), 20u);
  for (const auto& m : toy.clustering.members()) EXPECT_EQ(m.size(), 30u);
  EXPECT_EQ(toy.labels.num_labels(), 25u);
  EXPECT_EQ(toy.features.rows(), 600u);
  EXPECT_EQ(toy.captions.size(), 600u);
  CorpusBundle b;
  b.clustering = toy.clustering;
  b.features = toy.features;
  b.captions = toy.captions;
  b.caption_embeddings = toy.caption_embeddings;
  b.labels = toy.labels;
  EXPECT_EQ(validate_corpus(b, {false, true, true, true}).issues.size(), 0u);
  // Same seed, same corpus.
  EXPECT_EQ(make_toy_corpus().features, toy.features);
}

TEST(Prng, KnownSplitmixValuesAndRanges) {
  // splitmix64 reference outputs for seed 0.
  std::uint64_t s = 0;
  EXPECT_EQ(splitmix64_next(s), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(splitmix64_next(s), 0x6E789E6AA1B965F4ULL);
  Xoshiro256ss rng(42);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = rng.uniform_index(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  auto a = Xoshiro256ss::stream(5, 1), b = Xoshiro256ss::stream(5, 2), a2 = Xoshiro256ss::stream(5, 1);
  EXPECT_NE(a.next(), b.next());
  EXPECT_EQ(Xoshiro256ss::stream(5, 1).next(), a2.next());
}

TEST(Numeric, PairwiseSumAndEntropy) {
  std::vector<double> v(1000, 0.1);
  EXPECT_NEAR(pairwise_sum(v), 100.0, 1e-12);
  EXPECT_EQ(pairwise_sum(std::vector<double>{}), 0.0);
  const std::vector<std::size_t> counts{2, 2};
  EXPECT_NEAR(entropy_from_counts(counts, 4.0), std::log(2.0), 1e-15);
}

TEST(Provenance, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  TempDir tmp("prov");
  write_file(tmp / "in.txt", "abc");
  write_file(tmp / "out.txt", "result");
  write_provenance(tmp / "out.txt", "unit", 9, {tmp / "in.txt"});
  const auto meta = json::parse(testutil::read_file(tmp / "out.txt.meta.json"));
  EXPECT_EQ(meta["seed"], 9);
  EXPECT_EQ(meta["inputs"][0]["sha256"], "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(meta["version"], std::string(kToolVersion));
}
