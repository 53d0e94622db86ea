#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nl2flow/catalog.hpp"

namespace nl2flow {

struct TrainingPair {
  std::string utterance;
  std::string label;

  bool operator==(const TrainingPair&) const = default;
};

struct ScoredLabel {
  std::string label;
  double score = 0.0;

  bool operator==(const ScoredLabel&) const = default;
};

/// Ranked labels (score descending, ties by label) and whether the best
/// score reached the model threshold.
struct Classification {
  std::vector<ScoredLabel> ranked;
  bool matched = false;

  /// Top label when matched.
  std::optional<std::string> top() const;

  bool operator==(const Classification&) const = default;
};

nlohmann::json to_json(const Classification& c);
Classification classification_from_json(const nlohmann::json& j);

/// Utterance -> stage classifier. Implementations must be safe to call
/// concurrently.
class Classifier {
public:
  virtual ~Classifier() = default;
  virtual Classification classify(std::string_view text) const = 0;
};

/// Sparse vector as (token, weight) pairs sorted by token.
using SparseVector = std::vector<std::pair<std::string, double>>;

struct Exemplar {
  SparseVector vector;  // unit length
  std::string label;
};

/// Lexical nearest-neighbour model: tf-idf weighted bag of words, cosine
/// similarity against every training utterance.
struct ClassifierModel {
  static constexpr double kDefaultThreshold = 0.25;

  std::map<std::string, double, std::less<>> idf;
  double unseen_idf = 1.0;  // weight for query tokens absent from training
  std::vector<Exemplar> exemplars;
  double threshold = kDefaultThreshold;
};

/// Lowercases and splits on non-alphanumerics; numerals are kept.
std::vector<std::string> tokenize(std::string_view text);

/// Throws Error on an empty training set, or on a label missing from
/// `catalog` when one is given.
ClassifierModel train(std::span<const TrainingPair> pairs, const Catalog* catalog = nullptr,
                      double threshold = ClassifierModel::kDefaultThreshold);

Classification classify(const ClassifierModel& model, std::string_view text);

class LexicalClassifier final : public Classifier {
public:
  explicit LexicalClassifier(ClassifierModel model) : model_(std::move(model)) {}

  Classification classify(std::string_view text) const override { return nl2flow::classify(model_, text); }
  const ClassifierModel& model() const noexcept { return model_; }

private:
  ClassifierModel model_;
};

/// Client for a classifier service: POST {base}/classify with {"text": ...},
/// answered by {"ranked": [{"label", "score"}], "matched": bool}.
class RemoteClassifier final : public Classifier {
public:
  explicit RemoteClassifier(std::string base_url, int timeout_seconds = 30);
  ~RemoteClassifier() override;

  Classification classify(std::string_view text) const override;

private:
  std::string base_url_;
  int timeout_seconds_;
};

/// Stages whose name or synonym occurs in `text` as a whole word,
/// case-insensitively. Underscores in a keyword match '_' or whitespace.
std::set<std::string> keyword_scan(const Catalog& catalog, std::string_view text);

/// Either a JSON array of {utterance, label} or tab-separated
/// "label<TAB>utterance" lines ('#' starts a comment).
std::vector<TrainingPair> load_training_pairs(const std::filesystem::path& path);
std::vector<TrainingPair> parse_training_pairs(std::string_view text, std::string_view source);

}  // namespace nl2flow
