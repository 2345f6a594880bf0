#pragma once

// Synthetic corpus for demos and end-to-end checks: 600 images in 20
// clusters of 30, 25 ground-truth labels with varying purity, 16-d features,
// templated captions with 32-d caption embeddings, and tiny SVG images.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "semcoh/captioner.hpp"
#include "semcoh/corpus.hpp"
#include "semcoh/prng.hpp"
#include "semcoh/study_config.hpp"
#include "semcoh/task_forge.hpp"

namespace semcoh {

struct ToyCorpus {
  Clustering clustering;
  LabelMap labels;
  EmbeddingMatrix features;
  CaptionSet captions;
  EmbeddingMatrix caption_embeddings;
  std::vector<std::pair<std::string, std::string>> images;  // (image_id, svg)
};

struct ToyOptions {
  std::size_t clusters = 20;
  std::size_t per_cluster = 30;
  std::size_t labels = 25;
  std::size_t feature_dim = 16;
  std::size_t caption_dim = 32;
  std::uint64_t seed = 2024;
};

inline ToyCorpus make_toy_corpus(const ToyOptions& opt = {}) {
  static const char* kObjects[] = {"dog",   "cat",    "boat",   "car",    "bird",    "horse",   "tree",
                                   "house", "bridge", "flower", "guitar", "pizza",   "clock",   "train",
                                   "chair", "bottle", "kite",   "tennis racket", "umbrella", "surfboard"};
  static const char* kAdjectives[] = {"small", "large", "red", "white", "old", "brown"};
  static const char* kContexts[] = {"in the grass", "on a street", "near the water", "in a room", "under the sky"};
  constexpr std::size_t kObjectCount = sizeof kObjects / sizeof *kObjects;

  Xoshiro256ss rng(opt.seed);
  ToyCorpus toy;
  const std::size_t n = opt.clusters * opt.per_cluster;

  std::vector<std::vector<double>> feature_centers(opt.clusters, std::vector<double>(opt.feature_dim));
  std::vector<std::vector<double>> caption_centers(opt.clusters, std::vector<double>(opt.caption_dim));
  for (auto& c : feature_centers) {
    for (auto& v : c) v = 3.0 * rng.normal();
  }
  for (auto& c : caption_centers) {
    for (auto& v : c) v = rng.normal();
  }

  for (std::size_t l = 0; l < opt.labels; ++l) {
    char id[32];
    std::snprintf(id, sizeof id, "n%03zu", l);
    toy.labels.names.emplace(id, std::string("label ") + std::to_string(l));
  }

  std::vector<std::pair<std::string, ClusterId>> rows;
  std::vector<std::string> ids;
  std::vector<float> feats, caps;
  std::vector<std::size_t> rank_in_cluster(opt.clusters, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % opt.clusters;
    const std::size_t r = rank_in_cluster[c]++;
    char id[32];
    std::snprintf(id, sizeof id, "img_%04zu", i);
    ids.emplace_back(id);
    rows.emplace_back(id, static_cast<ClusterId>(c));

    // Purity varies with c: 0, 4, 8, 12 or 16 off-label members of 30.
    const bool off_label = r < (c % 5) * 4;
    const std::size_t label = off_label ? rng.uniform_index(opt.labels) : c % opt.labels;
    char label_id[32];
    std::snprintf(label_id, sizeof label_id, "n%03zu", label);
    toy.labels.labels.emplace(id, label_id);

    for (std::size_t j = 0; j < opt.feature_dim; ++j) {
      feats.push_back(static_cast<float>(feature_centers[c][j] + rng.normal()));
    }
    // Every fifth caption is generic and sits near the global mean.
    const bool generic = rng.uniform_index(5) == 0;
    std::string caption;
    if (generic) {
      caption = std::string("a picture of something ") + kContexts[rng.uniform_index(5)];
    } else {
      caption = std::string("a ") + kAdjectives[rng.uniform_index(6)] + " " + kObjects[c % kObjectCount] + " " +
                kContexts[rng.uniform_index(5)];
    }
    toy.captions.add(id, caption);
    for (std::size_t j = 0; j < opt.caption_dim; ++j) {
      const double base = generic ? 0.0 : caption_centers[c][j];
      caps.push_back(static_cast<float>(base + 0.4 * rng.normal() + (generic ? 0.05 : 0.0)));
    }

    char svg[256];
    std::snprintf(svg, sizeof svg,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"96\" height=\"96\">"
                  "<rect width=\"96\" height=\"96\" fill=\"hsl(%zu,60%%,55%%)\"/>"
                  "<text x=\"8\" y=\"56\" font-size=\"20\">%zu/%zu</text></svg>",
                  (c * 360) / opt.clusters, c, r);
    toy.images.emplace_back(id, svg);
  }
  toy.clustering = Clustering::from_assignment(rows);
  toy.features = EmbeddingMatrix(ids, opt.feature_dim, std::move(feats));
  toy.caption_embeddings = EmbeddingMatrix(ids, opt.caption_dim, std::move(caps));
  return toy;
}

/// Default study over every toy cluster.
inline StudyConfig toy_study_config(const ToyCorpus& toy, std::uint64_t seed = 7) {
  StudyConfig cfg;
  cfg.study_id = "toy";
  cfg.seed = seed;
  cfg.selected_classes = toy.clustering.sorted_cluster_ids();
  return cfg;
}

/// Writes a study directory: corpus/ inputs, images, and study.toml.
inline void write_toy_study(const fs::path& dir, const ToyCorpus& toy, const StudyConfig& cfg) {
  const auto corpus = dir / "corpus";
  fs::create_directories(corpus / "images");
  std::vector<std::pair<std::string, fs::path>> entries;
  for (const auto& [id, svg] : toy.images) {
    const auto rel = fs::path("images") / (id + ".svg");
    auto out = detail::open_output(corpus / rel);
    out << svg;
    entries.emplace_back(id, rel);
  }
  write_manifest(corpus / "manifest.csv", ImageManifest(corpus, entries));
  write_clustering(corpus / "clustering.csv", toy.clustering);
  write_labelmap(corpus / "labels.csv", corpus / "label_names.csv", toy.labels, toy.clustering.ids());
  write_embeddings(corpus / "features.emb", corpus / "features.ids", toy.features);
  write_captions(corpus / "captions.jsonl", toy.captions);
  write_embeddings(corpus / "caption_emb.emb", corpus / "caption_emb.ids", toy.caption_embeddings);
  write_study_config(dir / "study.toml", cfg);
}

}  // namespace semcoh
