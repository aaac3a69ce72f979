#include "scope3/features.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "scope3/csv.hpp"
#include "scope3/encoder.hpp"
#include "scope3/hash.hpp"
#include "scope3/parallel.hpp"
#include "scope3/text.hpp"

namespace scope3 {

TfidfModel::TfidfModel(std::vector<std::string> terms, Eigen::VectorXd idf, std::size_t doc_count)
    : terms_(std::move(terms)), idf_(std::move(idf)), doc_count_(doc_count) {
  if (static_cast<Eigen::Index>(terms_.size()) != idf_.size()) throw ValidationError("tfidf: idf length differs from vocabulary size");
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (!index_.emplace(terms_[i], static_cast<long>(i)).second) throw ValidationError("tfidf: duplicate term " + terms_[i]);
  }
}

long TfidfModel::column(std::string_view term) const {
  auto it = index_.find(std::string(term));
  return it == index_.end() ? -1 : it->second;
}

FeatureVector TfidfModel::transform(std::string_view text) const {
  if (terms_.empty()) throw StateError("tfidf model is not fitted");
  FeatureVector v = FeatureVector::Zero(static_cast<Eigen::Index>(terms_.size()));
  for (const auto& token : normalized_tokens(text)) {
    long c = column(token);
    if (c >= 0) v(c) += 1.0;
  }
  v = v.cwiseProduct(idf_);
  double n = v.norm();
  if (n > 0.0) v /= n;
  return v;
}

nlohmann::json TfidfModel::to_json() const {
  nlohmann::json j;
  j["format"] = "scope3.tfidf";
  j["version"] = 1;
  j["doc_count"] = doc_count_;
  j["vocabulary"] = terms_;
  j["idf"] = std::vector<double>(idf_.data(), idf_.data() + idf_.size());
  return j;
}

TfidfModel TfidfModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "scope3.tfidf" || j.value("version", 0) != 1) {
    throw ParseError("tfidf model: unsupported format or version");
  }
  auto terms = j.at("vocabulary").get<std::vector<std::string>>();
  auto idf = j.at("idf").get<std::vector<double>>();
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(idf.data(), static_cast<Eigen::Index>(idf.size()));
  return TfidfModel(std::move(terms), std::move(v), j.at("doc_count").get<std::size_t>());
}

TfidfModel fit_tfidf(std::span<const std::string> texts) {
  if (texts.empty()) throw InputError("fit_tfidf: no documents");
  std::map<std::string, std::size_t> df;
  for (const auto& text : texts) {
    auto tokens = normalized_tokens(text);
    std::set<std::string> unique(tokens.begin(), tokens.end());
    for (const auto& t : unique) ++df[t];
  }
  if (df.empty()) throw InputError("fit_tfidf: corpus has no tokens");
  const double n = static_cast<double>(texts.size());
  std::vector<std::string> terms;
  Eigen::VectorXd idf(static_cast<Eigen::Index>(df.size()));
  Eigen::Index i = 0;
  for (const auto& [term, count] : df) {
    terms.push_back(term);
    idf(i++) = std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0;
  }
  return TfidfModel(std::move(terms), std::move(idf), texts.size());
}

WordVectors::WordVectors(std::vector<std::string> tokens, Eigen::MatrixXd vectors, std::string source)
    : tokens_(std::move(tokens)), vectors_(std::move(vectors)), source_(std::move(source)) {
  if (static_cast<Eigen::Index>(tokens_.size()) != vectors_.cols()) throw ValidationError("word vectors: token count differs from matrix");
  if (vectors_.rows() <= 0) throw ValidationError("word vectors: dimension must be positive");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<long>(i)).second) {
      throw ValidationError("word vectors: duplicate token '" + tokens_[i] + "'");
    }
  }
}

long WordVectors::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

WordVectors WordVectors::load(const std::filesystem::path& path) {
  std::istringstream in(csv::read_text(path));
  std::string source = path.string();
  std::size_t count = 0;
  long dim = 0;
  std::string header;
  if (!std::getline(in, header)) throw ParseError(source + ": line 1: missing header");
  {
    std::istringstream hs(header);
    if (!(hs >> count >> dim) || dim <= 0) throw ParseError(source + ": line 1: expected 'count dim' header");
  }
  std::vector<std::string> tokens;
  Eigen::MatrixXd vectors(dim, static_cast<Eigen::Index>(count));
  std::string line;
  std::size_t lineno = 1;
  while (tokens.size() < count && std::getline(in, line)) {
    ++lineno;
    auto fields = tokenize(line);
    if (fields.empty()) continue;
    if (static_cast<long>(fields.size()) != dim + 1) {
      throw ParseError(source + ": line " + std::to_string(lineno) + ": expected " + std::to_string(dim + 1) + " fields");
    }
    auto col = static_cast<Eigen::Index>(tokens.size());
    for (long d = 0; d < dim; ++d) {
      if (!parse_double(fields[static_cast<std::size_t>(d + 1)], vectors(d, col))) {
        throw ParseError(source + ": line " + std::to_string(lineno) + ": bad number");
      }
    }
    tokens.push_back(fields[0]);
  }
  if (tokens.size() != count) throw ParseError(source + ": header promises " + std::to_string(count) + " vectors");
  return WordVectors(std::move(tokens), std::move(vectors), source);
}

std::string WordVectors::to_text() const {
  std::string out = std::to_string(tokens_.size()) + " " + std::to_string(vectors_.rows()) + "\n";
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += tokens_[i];
    for (Eigen::Index d = 0; d < vectors_.rows(); ++d) {
      out.push_back(' ');
      out += format_double(vectors_(d, static_cast<Eigen::Index>(i)));
    }
    out.push_back('\n');
  }
  return out;
}

AveragedEmbedding average_word_embeddings(const WordVectors& provider, std::string_view text) {
  if (provider.kind() != EmbeddingKind::word) throw ProviderError("average_word_embeddings needs a word provider");
  AveragedEmbedding out{FeatureVector::Zero(provider.dimension()), true};
  std::size_t hits = 0;
  for (const auto& token : normalized_tokens(text)) {
    long i = provider.find(token);
    if (i < 0) continue;
    out.values += provider.vector(i);
    ++hits;
  }
  if (hits > 0) {
    out.values /= static_cast<double>(hits);
    out.all_oov = false;
  }
  return out;
}

FeatureVector embed_sentence(const SentenceEncoder& provider, std::string_view text, std::string_view text_id) {
  FeatureVector v;
  try {
    v = provider.embed(text);
  } catch (const std::exception& e) {
    throw ProviderError("provider " + provider.id() + " failed on " +
                        (text_id.empty() ? std::string("input") : "'" + std::string(text_id) + "'") + ": " + e.what());
  }
  if (v.size() != provider.dimension()) {
    throw ProviderError("provider " + provider.id() + " returned " + std::to_string(v.size()) +
                        " values, expected " + std::to_string(provider.dimension()));
  }
  return v;
}

std::vector<FeatureVector> embed_batch(const SentenceEncoder& provider, std::span<const std::string> texts) {
  std::vector<FeatureVector> out(texts.size());
  parallel_for(texts.size(), [&](std::size_t i) { out[i] = embed_sentence(provider, texts[i], "#" + std::to_string(i)); });
  return out;
}

HashingEncoder::HashingEncoder(int dim) : dim_(dim) {
  if (dim <= 0) throw ProviderError("hashing encoder dimension must be positive");
}

FeatureVector HashingEncoder::embed(std::string_view text) const {
  FeatureVector v = FeatureVector::Zero(dim_);
  auto bump = [&](std::string_view feature, double weight) {
    auto h = fnv1a(feature);
    double sign = (h >> 63) ? -1.0 : 1.0;
    v(static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_))) += sign * weight;
  };
  for (const auto& token : normalized_tokens(text)) {
    bump("w:" + token, 1.0);
    std::string marked = "<" + token + ">";
    for (std::size_t i = 0; i + 3 <= marked.size(); ++i) bump("c:" + marked.substr(i, 3), 0.5);
  }
  double n = v.norm();
  if (n > 0.0) v /= n;
  return v;
}

WordAverageEncoder::WordAverageEncoder(std::shared_ptr<const WordVectors> words) : words_(std::move(words)) {
  if (!words_) throw ProviderError("word-average encoder needs word vectors");
}

std::string WordAverageEncoder::id() const {
  std::string inner = words_->id();
  return "wordavg:" + inner.substr(inner.find(':') + 1);
}

FeatureVector WordAverageEncoder::embed(std::string_view text) const {
  return average_word_embeddings(*words_, text).values;
}

std::shared_ptr<const SentenceEncoder> open_sentence_encoder(std::string_view spec) {
  auto colon = spec.find(':');
  std::string kind(spec.substr(0, colon));
  std::string arg = colon == std::string_view::npos ? "" : std::string(spec.substr(colon + 1));
  if (kind == "hashing") {
    int dim = 512;
    if (!arg.empty()) {
      auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), dim);
      if (ec != std::errc() || ptr != arg.data() + arg.size()) throw ProviderError("bad hashing dimension in '" + std::string(spec) + "'");
    }
    return std::make_shared<HashingEncoder>(dim);
  }
  if (kind == "mini" && !arg.empty()) {
    try {
      auto enc = std::make_shared<const MiniEncoder>(load_encoder(arg));
      return std::make_shared<MiniEncoderProvider>(std::move(enc), arg);
    } catch (const ProviderError&) {
      throw;
    } catch (const Error& e) {
      throw ProviderError("cannot open encoder checkpoint for '" + std::string(spec) + "': " + e.what());
    }
  }
  if (kind == "wordavg" && !arg.empty()) {
    try {
      return std::make_shared<WordAverageEncoder>(std::make_shared<const WordVectors>(WordVectors::load(arg)));
    } catch (const ProviderError&) {
      throw;
    } catch (const Error& e) {
      throw ProviderError("cannot open word vectors for '" + std::string(spec) + "': " + e.what());
    }
  }
  throw ProviderError("unresolvable encoder id '" + std::string(spec) +
                      "' (expected hashing:<dim>, mini:<checkpoint> or wordavg:<file>)");
}

}  // namespace scope3
