#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "scope3/features.hpp"
#include "scope3/hash.hpp"
#include "scope3/text.hpp"

namespace scope3 {

/// One row of a learning curve.
struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

/// Miniature text encoder: a bag of word and hashed character-trigram
/// embeddings, mean pooled, followed by a dense tanh pooler. The pooler
/// output is the sentence representation used for similarity and as the
/// input of classification heads.
template <typename Scalar>
class BasicMiniEncoder {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicMiniEncoder() = default;

  /// Randomly initialized encoder over `words` plus `buckets` subword slots.
  BasicMiniEncoder(std::vector<std::string> words, int dim, int buckets, std::uint64_t seed)
      : words_(std::move(words)), dim_(dim), buckets_(buckets) {
    if (dim <= 0 || buckets <= 0) throw RangeError("encoder dimension and bucket count must be positive");
    index_words();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> emb(0.0, 0.1);
    std::normal_distribution<double> dense(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    embeddings = Matrix(dim, piece_count());
    for (Eigen::Index j = 0; j < embeddings.cols(); ++j)
      for (Eigen::Index i = 0; i < embeddings.rows(); ++i) embeddings(i, j) = static_cast<Scalar>(emb(rng));
    pool_weight = Matrix(dim, dim);
    for (Eigen::Index j = 0; j < dim; ++j)
      for (Eigen::Index i = 0; i < dim; ++i) pool_weight(i, j) = static_cast<Scalar>(dense(rng));
    pool_bias = Vector::Zero(dim);
  }

  /// Zero-filled parameters of the right shapes, for checkpoint loading.
  static BasicMiniEncoder zeros(std::vector<std::string> words, int dim, int buckets) {
    BasicMiniEncoder e;
    e.words_ = std::move(words);
    e.dim_ = dim;
    e.buckets_ = buckets;
    e.index_words();
    e.embeddings = Matrix::Zero(dim, e.piece_count());
    e.pool_weight = Matrix::Zero(dim, dim);
    e.pool_bias = Vector::Zero(dim);
    return e;
  }

  int dimension() const { return dim_; }
  int buckets() const { return buckets_; }
  const std::vector<std::string>& words() const { return words_; }
  Eigen::Index piece_count() const { return static_cast<Eigen::Index>(words_.size()) + buckets_; }

  long word_id(std::string_view word) const {
    auto it = word_index_.find(std::string(word));
    return it == word_index_.end() ? -1 : it->second;
  }

  /// Piece ids of the normalized text: per token, its word id (when in
  /// vocabulary) followed by its hashed character trigrams of "<token>".
  /// At most `max_length` pieces are kept.
  std::vector<int> pieces(std::string_view text, int max_length) const {
    std::vector<int> out;
    for (const auto& token : normalized_tokens(text)) {
      append_token_pieces(token, out);
      if (static_cast<int>(out.size()) >= max_length) break;
    }
    if (static_cast<int>(out.size()) > max_length) out.resize(static_cast<std::size_t>(max_length));
    return out;
  }

  void append_token_pieces(const std::string& token, std::vector<int>& out) const {
    if (long w = word_id(token); w >= 0) out.push_back(static_cast<int>(w));
    std::string marked = "<" + token + ">";
    for (std::size_t i = 0; i + 3 <= marked.size(); ++i) {
      auto h = fnv1a(std::string_view(marked).substr(i, 3));
      out.push_back(static_cast<int>(words_.size() + h % static_cast<std::uint64_t>(buckets_)));
    }
  }

  /// Mean of the piece embeddings (zero for no pieces).
  Vector pooled_input(std::span<const int> piece_ids) const {
    Vector x = Vector::Zero(dim_);
    if (piece_ids.empty()) return x;
    for (int p : piece_ids) x += embeddings.col(p);
    return x / static_cast<Scalar>(piece_ids.size());
  }

  /// Parameter-free layer normalization applied to the pooled input.
  static Vector layer_norm(const Vector& x) {
    Scalar mean = x.mean();
    Vector centered = x.array() - mean;
    Scalar inv = Scalar(1) / std::sqrt(centered.squaredNorm() / static_cast<Scalar>(x.size()) + kLayerNormEps);
    return centered * inv;
  }

  Vector encode(std::span<const int> piece_ids) const {
    return (pool_weight * layer_norm(pooled_input(piece_ids)) + pool_bias).array().tanh().matrix();
  }

  static constexpr Scalar kLayerNormEps = Scalar(1e-5);

  Vector encode(std::string_view text, int max_length) const {
    auto ids = pieces(text, max_length);
    return encode(std::span<const int>(ids));
  }

  /// Word rows of the embedding table as word2vec-style vectors.
  WordVectors word_vectors(std::string source) const {
    Eigen::MatrixXd vectors =
        embeddings.leftCols(static_cast<Eigen::Index>(words_.size())).template cast<double>();
    return WordVectors(words_, std::move(vectors), std::move(source));
  }

  Matrix embeddings;   // dim x piece_count
  Matrix pool_weight;  // dim x dim
  Vector pool_bias;    // dim

 private:
  void index_words() {
    word_index_.clear();
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!word_index_.emplace(words_[i], static_cast<long>(i)).second) {
        throw ValidationError("encoder vocabulary has duplicate word '" + words_[i] + "'");
      }
    }
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, long> word_index_;
  int dim_ = 0;
  int buckets_ = 0;
};

using MiniEncoder = BasicMiniEncoder<float>;

/// Linear classification head over encoder outputs.
template <typename Scalar>
struct BasicLinearHead {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Matrix weight;  // classes x dim
  Vector bias;    // classes
};

using LinearHead = BasicLinearHead<float>;

void save_encoder(const MiniEncoder& encoder, const std::filesystem::path& path);
MiniEncoder load_encoder(const std::filesystem::path& path);

void save_head(const LinearHead& head, const std::filesystem::path& path);
LinearHead load_head(const std::filesystem::path& path);

/// Masked-word pretraining settings.
struct PretrainConfig {
  int dim = 384;
  int buckets = 4096;
  int epochs = 30;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_length = 64;
  std::uint64_t seed = 13;
};

/// Pretrains a MiniEncoder on unlabeled sentences: every in-vocabulary word
/// of every sentence is, once per epoch, removed from its sentence and
/// predicted from the encoding of the rest (softmax over the vocabulary).
/// The vocabulary is every token of the normalized texts. Per-epoch mean
/// losses are appended to `log` (validation_loss repeats the train loss).
MiniEncoder pretrain_encoder(std::span<const std::string> texts, const PretrainConfig& config,
                             std::vector<EpochLog>* log = nullptr);

/// Splits taxonomy-style prose into sentences on '.', ';' and newlines.
std::vector<std::string> split_sentences(std::string_view text);

/// Fine-tuning settings for a sequence-classification head on a MiniEncoder.
struct FinetuneOptions {
  int max_length = 512;
  double learning_rate = 5e-5;
  int epochs = 20;
  int batch_size = 32;
  int early_stopping_patience = 5;
  std::uint64_t seed = 42;
};

/// Examples already mapped to piece ids and class indices.
struct EncodedExample {
  std::vector<int> pieces;
  int target = 0;
};

struct FinetuneResult {
  MiniEncoder encoder;
  LinearHead head;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
};

/// Trains encoder + a freshly initialized head with AdamW (no weight decay)
/// under a linearly decaying learning rate, evaluates validation loss after
/// every epoch, stops after `early_stopping_patience` epochs without
/// improvement and returns the parameters of the epoch with the lowest
/// validation loss.
FinetuneResult finetune_encoder(const MiniEncoder& pretrained, int class_count, std::span<const EncodedExample> train,
                                std::span<const EncodedExample> validation, const FinetuneOptions& options);

/// Mean cross-entropy of (encoder, head) on the examples. This is the exact
/// computation used for the validation column of the fine-tuning log.
double mean_classification_loss(const MiniEncoder& encoder, const LinearHead& head,
                                 std::span<const EncodedExample> examples);

/// Parameter-shaped gradient of the mean cross-entropy, from the same
/// backward pass fine-tuning uses.
struct ClassificationGradient {
  double loss = 0.0;
  MiniEncoder::Matrix embeddings;
  MiniEncoder::Matrix pool_weight;
  MiniEncoder::Vector pool_bias;
  LinearHead::Matrix head_weight;
  LinearHead::Vector head_bias;
};

ClassificationGradient classification_gradient(const MiniEncoder& encoder, const LinearHead& head,
                                               std::span<const EncodedExample> examples);

/// Softmax class probabilities for one piece sequence.
Eigen::VectorXd classify_pieces(const MiniEncoder& encoder, const LinearHead& head, std::span<const int> pieces);

/// SentenceEncoder adapter; id() is "mini:<source>".
class MiniEncoderProvider final : public SentenceEncoder {
 public:
  MiniEncoderProvider(std::shared_ptr<const MiniEncoder> encoder, std::string source, int max_length = 512)
      : encoder_(std::move(encoder)), source_(std::move(source)), max_length_(max_length) {}

  int dimension() const override { return encoder_->dimension(); }
  std::string id() const override { return "mini:" + source_; }
  FeatureVector embed(std::string_view text) const override {
    return encoder_->encode(text, max_length_).template cast<double>();
  }
  const MiniEncoder& encoder() const { return *encoder_; }

 private:
  std::shared_ptr<const MiniEncoder> encoder_;
  std::string source_;
  int max_length_;
};

}  // namespace scope3
