#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "scope3/corpus.hpp"
#include "scope3/encoder.hpp"
#include "scope3/features.hpp"
#include "scope3/random_forest.hpp"
#include "scope3/taxonomy.hpp"

namespace scope3 {

enum class Family { zeroshot, classical, finetuned };

Family parse_family(std::string_view name);
std::string_view to_string(Family family);

enum class ScoreKind { similarity, probability };

struct ScoredLabel {
  std::string label;
  double score = 0.0;

  friend bool operator==(const ScoredLabel&, const ScoredLabel&) = default;
};

/// Ranked output of a classifier. topk is sorted by non-increasing score with
/// ties broken by ascending class code; label and score mirror topk[0].
struct Prediction {
  std::string label;
  double score = 0.0;
  ScoreKind kind = ScoreKind::probability;
  std::vector<ScoredLabel> topk;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Ranks `scores` (one per label) into a Prediction keeping the best `k`
/// entries (all when k == 0).
Prediction rank_scores(std::span<const std::string> labels, const Eigen::VectorXd& scores, ScoreKind kind,
                       std::size_t k = 0);

struct ModelMetadata {
  Family family = Family::classical;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::string data_fingerprint;
  std::string taxonomy_hash;
  nlohmann::json extra = nlohmann::json::object();
};

/// Prediction contract shared by the three families. Models are immutable
/// once built; predict() is safe to call concurrently.
class ClassifierModel {
 public:
  virtual ~ClassifierModel() = default;

  Family family() const { return metadata_.family; }
  const std::vector<std::string>& label_set() const { return labels_; }
  const ModelMetadata& metadata() const { return metadata_; }

  /// Throws InputError when the text is empty after normalization.
  Prediction predict(std::string_view text) const;
  /// Output order equals input order.
  std::vector<Prediction> predict_batch(std::span<const std::string> texts) const;

  /// Writes manifest.json plus family-specific weight files into `dir`.
  void save(const std::filesystem::path& dir) const;

 protected:
  ClassifierModel(std::vector<std::string> labels, ModelMetadata metadata)
      : labels_(std::move(labels)), metadata_(std::move(metadata)) {}

  virtual Prediction predict_normalized(const std::string& text) const = 0;
  virtual void save_weights(const std::filesystem::path& dir) const = 0;

  std::vector<std::string> labels_;
  ModelMetadata metadata_;
};

/// Reopens a model directory written by ClassifierModel::save().
std::unique_ptr<ClassifierModel> load_model(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Zero-shot semantic similarity

class ZeroShotModel final : public ClassifierModel {
 public:
  /// `class_vectors` holds one embedding per label (columns, label order).
  ZeroShotModel(std::shared_ptr<const SentenceEncoder> provider, TextMode mode, std::vector<std::string> labels,
                Eigen::MatrixXd class_vectors, ModelMetadata metadata);

  TextMode mode() const { return mode_; }
  const Eigen::MatrixXd& class_vectors() const { return class_vectors_; }
  const SentenceEncoder& provider() const { return *provider_; }

  /// Ranks classes by cosine similarity to an already computed embedding.
  /// Throws DomainError for a zero embedding.
  Prediction predict_embedding(const Eigen::VectorXd& embedding) const;

 protected:
  Prediction predict_normalized(const std::string& text) const override;
  void save_weights(const std::filesystem::path& dir) const override;

 private:
  std::shared_ptr<const SentenceEncoder> provider_;
  TextMode mode_;
  Eigen::MatrixXd class_vectors_;
};

/// Embeds class_text(cls, mode) once per class. Throws StateError for
/// description mode with an uncomposed class and ProviderError naming the
/// class when embedding fails.
std::unique_ptr<ZeroShotModel> zeroshot_build(std::shared_ptr<const SentenceEncoder> provider, const Taxonomy& tax,
                                              TextMode mode);

inline Prediction zeroshot_predict(const ZeroShotModel& model, std::string_view text) { return model.predict(text); }

// ---------------------------------------------------------------------------
// Classical: feature vectorizer + random forest

enum class FeatureKind { tfidf, word_average };

FeatureKind parse_feature_kind(std::string_view name);
std::string_view to_string(FeatureKind kind);

/// Text -> feature vector step stored inside classical models.
class FeaturePipeline {
 public:
  explicit FeaturePipeline(TfidfModel tfidf) : impl_(std::move(tfidf)) {}
  explicit FeaturePipeline(std::shared_ptr<const WordVectors> words) : impl_(std::move(words)) {}

  FeatureKind kind() const { return impl_.index() == 0 ? FeatureKind::tfidf : FeatureKind::word_average; }
  std::size_t dimension() const;
  FeatureVector transform(std::string_view text) const;

  const TfidfModel& tfidf() const { return std::get<TfidfModel>(impl_); }
  const WordVectors& word_vectors() const { return *std::get<std::shared_ptr<const WordVectors>>(impl_); }

 private:
  std::variant<TfidfModel, std::shared_ptr<const WordVectors>> impl_;
};

struct ClassicalConfig {
  FeatureKind features = FeatureKind::tfidf;
  ForestConfig forest;
};

class ClassicalModel final : public ClassifierModel {
 public:
  ClassicalModel(FeaturePipeline pipeline, RandomForest forest, std::vector<std::string> labels,
                 ModelMetadata metadata);

  const FeaturePipeline& pipeline() const { return pipeline_; }
  const RandomForest& forest() const { return forest_; }

 protected:
  Prediction predict_normalized(const std::string& text) const override;
  void save_weights(const std::filesystem::path& dir) const override;

 private:
  FeaturePipeline pipeline_;
  RandomForest forest_;
};

/// Trains the forest on precomputed features. The label set is the
/// taxonomy's codes. Throws InputError on length mismatch, unknown labels or
/// fewer than two distinct labels.
std::unique_ptr<ClassicalModel> classical_train(FeaturePipeline pipeline, std::span<const FeatureVector> features,
                                                std::span<const std::string> labels, const Taxonomy& tax,
                                                const ForestConfig& config);

/// Fits the feature pipeline on the training texts (TF-IDF) or uses `words`
/// (word_average), then trains the forest.
std::unique_ptr<ClassicalModel> train_classical(std::span<const LabeledExample> train, const Taxonomy& tax,
                                                const ClassicalConfig& config,
                                                std::shared_ptr<const WordVectors> words = nullptr);

// ---------------------------------------------------------------------------
// Fine-tuned encoder

/// Hyperparameters for encoder fine-tuning. The grid explored for max_length
/// is {64, 128, 256, 512} and for learning_rate {5e-5, 5e-6}.
struct TrainingConfig {
  int max_length = 512;
  double learning_rate = 5e-5;
  int epochs = 20;
  int batch_size = 32;
  std::uint64_t seed = 42;
  int early_stopping_patience = 5;

  nlohmann::json to_json() const;
  bool on_grid() const;
};

class FinetunedModel final : public ClassifierModel {
 public:
  FinetunedModel(std::shared_ptr<const MiniEncoder> encoder, LinearHead head, int max_length,
                 std::vector<std::string> labels, ModelMetadata metadata);

  const MiniEncoder& encoder() const { return *encoder_; }
  const LinearHead& head() const { return head_; }
  int max_length() const { return max_length_; }

  /// Mean cross-entropy on labeled examples, computed exactly as during
  /// training.
  double loss(std::span<const LabeledExample> examples) const;

 protected:
  Prediction predict_normalized(const std::string& text) const override;
  void save_weights(const std::filesystem::path& dir) const override;

 private:
  std::shared_ptr<const MiniEncoder> encoder_;
  LinearHead head_;
  int max_length_;
};

struct FinetuneOutput {
  std::unique_ptr<FinetunedModel> model;
  std::vector<EpochLog> log;
};

/// Resolves `encoder_id` ("mini:<checkpoint>"), attaches a head sized to the
/// taxonomy, trains, and returns the checkpoint with the lowest validation
/// loss together with the full learning curve.
FinetuneOutput finetune(std::string_view encoder_id, std::span<const LabeledExample> train,
                        std::span<const LabeledExample> validation, const Taxonomy& tax,
                        const TrainingConfig& config);

/// `epoch,train_loss,validation_loss` CSV.
std::string epoch_log_csv(std::span<const EpochLog> log);
std::vector<EpochLog> parse_epoch_log_csv(const std::string& text);

}  // namespace scope3
