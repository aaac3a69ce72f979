#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "scope3/common.hpp"

namespace scope3 {

using FeatureVector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Cosine similarity

/// dot(u, v) / (|u| |v|), clamped to [-1, 1]. Works on any Eigen vector
/// expression of matching scalar type. Throws DomainError for mismatched
/// sizes or a zero-norm operand.
template <typename DerivedU, typename DerivedV>
typename DerivedU::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedU>& u,
                                            const Eigen::MatrixBase<DerivedV>& v) {
  using Scalar = typename DerivedU::Scalar;
  static_assert(std::is_same_v<Scalar, typename DerivedV::Scalar>, "cosine_similarity: scalar types differ");
  if (u.size() != v.size()) throw DomainError("cosine_similarity: dimension mismatch");
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (!(nu > Scalar(0)) || !(nv > Scalar(0))) throw DomainError("cosine_similarity: zero-norm vector");
  Scalar s = u.dot(v) / (nu * nv);
  if (s > Scalar(1)) s = Scalar(1);
  if (s < Scalar(-1)) s = Scalar(-1);
  return s;
}

// ---------------------------------------------------------------------------
// TF-IDF

/// Smoothed-idf TF-IDF: idf(t) = ln((1 + N) / (1 + df(t))) + 1, raw term
/// counts, L2-normalized output. Vocabulary columns are in lexicographic
/// term order.
class TfidfModel {
 public:
  TfidfModel() = default;
  TfidfModel(std::vector<std::string> terms, Eigen::VectorXd idf, std::size_t doc_count);

  std::size_t dimension() const { return terms_.size(); }
  std::size_t doc_count() const { return doc_count_; }
  const std::vector<std::string>& terms() const { return terms_; }
  const Eigen::VectorXd& idf() const { return idf_; }
  /// Column of `term`, or -1 when out of vocabulary.
  long column(std::string_view term) const;

  FeatureVector transform(std::string_view text) const;

  nlohmann::json to_json() const;
  static TfidfModel from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, long> index_;
  Eigen::VectorXd idf_;
  std::size_t doc_count_ = 0;
};

/// Vocabulary is every whitespace token of the normalized texts. Throws
/// InputError when there are no texts or no tokens at all.
TfidfModel fit_tfidf(std::span<const std::string> texts);

inline FeatureVector tfidf_transform(const TfidfModel& model, std::string_view text) {
  return model.transform(text);
}

// ---------------------------------------------------------------------------
// Embedding providers

enum class EmbeddingKind { word, sentence };

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dimension() const = 0;
  virtual EmbeddingKind kind() const = 0;
  /// Configuration string that reopens an equivalent provider.
  virtual std::string id() const = 0;
};

/// Token -> vector table in the word2vec text format (`count dim` header,
/// then `token v1 ... vd` per line).
class WordVectors final : public EmbeddingProvider {
 public:
  WordVectors(std::vector<std::string> tokens, Eigen::MatrixXd vectors, std::string source = "memory");

  static WordVectors load(const std::filesystem::path& path);
  std::string to_text() const;

  int dimension() const override { return static_cast<int>(vectors_.rows()); }
  EmbeddingKind kind() const override { return EmbeddingKind::word; }
  std::string id() const override { return "word2vec:" + source_; }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  /// Column index of token, or -1.
  long find(std::string_view token) const;
  auto vector(long index) const { return vectors_.col(index); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, long> index_;
  Eigen::MatrixXd vectors_;  // dimension x tokens
  std::string source_;
};

class SentenceEncoder : public EmbeddingProvider {
 public:
  EmbeddingKind kind() const override { return EmbeddingKind::sentence; }
  /// Dense embedding of length dimension(). Must be deterministic.
  virtual FeatureVector embed(std::string_view text) const = 0;
};

struct AveragedEmbedding {
  FeatureVector values;
  /// True when no token was in vocabulary; values is then all zeros.
  bool all_oov = false;
};

/// Arithmetic mean of the in-vocabulary token vectors of the normalized text.
AveragedEmbedding average_word_embeddings(const WordVectors& provider, std::string_view text);

/// provider.embed(text) with the output length checked. Provider failures
/// are rethrown as ProviderError carrying `text_id`.
FeatureVector embed_sentence(const SentenceEncoder& provider, std::string_view text, std::string_view text_id = {});

/// Embeds every text; chunks may run concurrently, output order matches
/// input order.
std::vector<FeatureVector> embed_batch(const SentenceEncoder& provider, std::span<const std::string> texts);

/// Hashed bag of words plus character trigrams, signed feature hashing into
/// `dim` buckets, L2-normalized. Needs no checkpoint. Id: "hashing:<dim>".
class HashingEncoder final : public SentenceEncoder {
 public:
  explicit HashingEncoder(int dim = 512);
  int dimension() const override { return dim_; }
  std::string id() const override { return "hashing:" + std::to_string(dim_); }
  FeatureVector embed(std::string_view text) const override;

 private:
  int dim_;
};

/// Mean of word vectors as a sentence embedding. All-OOV text embeds to the
/// zero vector. Id: "wordavg:<source>".
class WordAverageEncoder final : public SentenceEncoder {
 public:
  explicit WordAverageEncoder(std::shared_ptr<const WordVectors> words);
  int dimension() const override { return words_->dimension(); }
  std::string id() const override;
  FeatureVector embed(std::string_view text) const override;

 private:
  std::shared_ptr<const WordVectors> words_;
};

/// Resolves a sentence-provider configuration string:
///   "hashing:<dim>"       HashingEncoder
///   "mini:<checkpoint>"   pretrained MiniEncoder checkpoint file
///   "wordavg:<file>"      averaged word2vec-format vectors
/// Throws ProviderError for anything else or an unreadable checkpoint.
std::shared_ptr<const SentenceEncoder> open_sentence_encoder(std::string_view spec);

}  // namespace scope3
