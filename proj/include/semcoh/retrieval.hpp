#pragma once

// Describability proxy from externally retrieved images: a description is
// good when images found with it are classified back into its class.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "semcoh/corpus.hpp"
#include "semcoh/errors.hpp"
#include "semcoh/prng.hpp"

namespace semcoh {

struct RetrievedImage {
  std::size_t class_id = 0;  // the class whose description retrieved it
  std::string image_id;
  std::vector<double> probs;  // over the K unsupervised classes
};

class RetrievalSet {
 public:
  RetrievalSet() = default;

  explicit RetrievalSet(std::vector<RetrievedImage> images) : images_(std::move(images)) {
    if (images_.empty()) throw Error(ErrorCode::invalid_argument, "empty retrieval set");
    num_classes_ = images_.front().probs.size();
    if (num_classes_ == 0) throw Error(ErrorCode::invalid_argument, "empty probability vector");
    for (std::size_t i = 0; i < images_.size(); ++i) {
      const auto& img = images_[i];
      if (img.probs.size() != num_classes_) {
        throw Error(ErrorCode::mismatch, "probability vector of " + img.image_id + " has length " +
                                             std::to_string(img.probs.size()) + ", expected " +
                                             std::to_string(num_classes_));
      }
      double sum = 0.0;
      for (double p : img.probs) {
        if (!std::isfinite(p) || p < 0.0) throw Error(ErrorCode::non_finite, "invalid probability for " + img.image_id);
        sum += p;
      }
      if (std::fabs(sum - 1.0) > 1e-6) {
        throw Error(ErrorCode::invalid_argument, "probabilities of " + img.image_id + " do not sum to 1");
      }
      if (img.class_id >= num_classes_) {
        throw Error(ErrorCode::invalid_argument, "class id " + std::to_string(img.class_id) + " out of range");
      }
      by_class_[img.class_id].push_back(i);
    }
    const std::size_t per_class = by_class_.begin()->second.size();
    for (const auto& [cls, members] : by_class_) {
      if (members.size() != per_class) {
        throw Error(ErrorCode::mismatch, "class " + std::to_string(cls) + " has " + std::to_string(members.size()) +
                                             " retrieved images, expected " + std::to_string(per_class));
      }
    }
  }

  std::size_t num_classes() const noexcept { return num_classes_; }
  const std::vector<RetrievedImage>& images() const noexcept { return images_; }
  /// Image indices per class that has retrievals.
  const std::map<std::size_t, std::vector<std::size_t>>& by_class() const noexcept { return by_class_; }

 private:
  std::vector<RetrievedImage> images_;
  std::size_t num_classes_ = 0;
  std::map<std::size_t, std::vector<std::size_t>> by_class_;
};

/// JSONL `{"class_id": c, "image_id": "...", "probs": [...]}`.
inline RetrievalSet load_retrieval(const fs::path& path) {
  std::vector<RetrievedImage> images;
  const auto lines = detail::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    try {
      const auto j = json::parse(lines[i]);
      images.push_back({j.at("class_id").get<std::size_t>(), j.at("image_id").get<std::string>(),
                        j.at("probs").get<std::vector<double>>()});
    } catch (const json::exception&) {
      throw Error(ErrorCode::parse, detail::location(path, i + 1) + ": malformed retrieval line");
    }
  }
  return RetrievalSet(std::move(images));
}

namespace detail {

/// Classes to score: the subset, or every class with retrievals.
inline std::vector<std::size_t> scored_classes(const RetrievalSet& set,
                                               const std::optional<std::vector<std::size_t>>& subset) {
  std::vector<std::size_t> out;
  if (!subset) {
    for (const auto& [cls, _] : set.by_class()) out.push_back(cls);
    return out;
  }
  for (auto cls : *subset) {
    if (!set.by_class().contains(cls)) {
      throw Error(ErrorCode::missing, "class " + std::to_string(cls) + " has no retrieved images");
    }
    out.push_back(cls);
  }
  return out;
}

}  // namespace detail

/// Rank of `cls` in a probability vector: classes with a higher probability,
/// or an equal one and a smaller id, come first.
inline std::size_t class_rank(const std::vector<double>& probs, std::size_t cls) {
  std::size_t rank = 0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] > probs[cls] || (probs[j] == probs[cls] && j < cls)) ++rank;
  }
  return rank;
}

/// Fraction of retrieved images whose source class ranks within the top k.
/// With a class subset this is the recall R@k over those classes.
inline double topk_accuracy(const RetrievalSet& set, std::size_t k,
                            const std::optional<std::vector<std::size_t>>& subset = std::nullopt) {
  if (k < 1) throw Error(ErrorCode::invalid_argument, "k must be >= 1");
  if (k > set.num_classes()) {
    throw Error(ErrorCode::invalid_argument, "k = " + std::to_string(k) + " exceeds K = " + std::to_string(set.num_classes()));
  }
  std::size_t hits = 0, total = 0;
  for (auto cls : detail::scored_classes(set, subset)) {
    for (auto i : set.by_class().at(cls)) {
      ++total;
      if (class_rank(set.images()[i].probs, cls) < k) ++hits;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

/// For every retrieved positive of class c, draw negatives uniformly from the
/// images retrieved for the other classes; a trial succeeds iff
/// p_c(positive) > p_c(negative). Ties fail.
inline double binary_preference(const RetrievalSet& set, std::uint64_t seed, std::size_t trials_per_positive = 1,
                                const std::optional<std::vector<std::size_t>>& subset = std::nullopt) {
  if (set.by_class().size() < 2) throw Error(ErrorCode::invalid_argument, "binary preference needs >= 2 classes");
  if (trials_per_positive < 1) throw Error(ErrorCode::invalid_argument, "trials_per_positive must be >= 1");
  Xoshiro256ss rng(seed);
  std::size_t wins = 0, trials = 0;
  std::vector<std::size_t> negatives;
  for (auto cls : detail::scored_classes(set, subset)) {
    negatives.clear();
    for (const auto& [other, members] : set.by_class()) {
      if (other != cls) negatives.insert(negatives.end(), members.begin(), members.end());
    }
    for (auto pos : set.by_class().at(cls)) {
      const double p_pos = set.images()[pos].probs[cls];
      for (std::size_t t = 0; t < trials_per_positive; ++t) {
        const auto neg = negatives[rng.uniform_index(negatives.size())];
        if (p_pos > set.images()[neg].probs[cls]) ++wins;
        ++trials;
      }
    }
  }
  return trials == 0 ? 0.0 : static_cast<double>(wins) / static_cast<double>(trials);
}

}  // namespace semcoh
