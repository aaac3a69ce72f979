#include "scope3/encoder.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "scope3/common.hpp"

namespace scope3 {

namespace {

using Matrix = MiniEncoder::Matrix;
using Vector = MiniEncoder::Vector;

constexpr char kEncoderMagic[8] = {'S', '3', 'M', 'I', 'N', 'I', 'E', '1'};
constexpr char kHeadMagic[8] = {'S', '3', 'H', 'E', 'A', 'D', '0', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& source) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ProviderError(source + ": truncated checkpoint");
  return v;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
}

void read_matrix(std::istream& in, Matrix& m, const std::string& source) {
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
  if (!in) throw ProviderError(source + ": truncated checkpoint");
}

void read_vector(std::istream& in, Vector& v, const std::string& source) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!in) throw ProviderError(source + ": truncated checkpoint");
}

void check_magic(std::istream& in, const char (&magic)[8], const std::string& source) {
  char buf[8];
  in.read(buf, 8);
  if (!in || std::memcmp(buf, magic, 8) != 0) throw ProviderError(source + ": not a recognised checkpoint");
}

// AdamW without weight decay; one moment pair per parameter tensor.
template <typename P>
struct AdamSlot {
  P m;
  P v;
  explicit AdamSlot(const P& like) : m(P::Zero(like.rows(), like.cols())), v(P::Zero(like.rows(), like.cols())) {}
};

class Adam {
 public:
  void begin_step(double lr) {
    ++t_;
    double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    step_size_ = static_cast<float>(lr * std::sqrt(c2) / c1);
    eps_hat_ = static_cast<float>(kEps * std::sqrt(c2));
  }

  template <typename P, typename G>
  void update(P& param, const G& grad, AdamSlot<P>& slot) const {
    update_range(param.data(), grad.data(), slot.m.data(), slot.v.data(), param.size());
  }

  // Lazy variant for the embedding table: only columns that received a
  // gradient this step are touched, moments of the others stay frozen.
  void update_columns(Matrix& param, const Matrix& grad, AdamSlot<Matrix>& slot, std::span<const int> cols) const {
    const Eigen::Index rows = param.rows();
    for (int c : cols) {
      update_range(param.col(c).data(), grad.col(c).data(), slot.m.col(c).data(), slot.v.col(c).data(), rows);
    }
  }

 private:
  // Single fused pass over contiguous storage.
  void update_range(float* p, const float* g, float* m, float* v, Eigen::Index n) const {
    for (Eigen::Index i = 0; i < n; ++i) {
      m[i] = kBeta1f * m[i] + (1.0f - kBeta1f) * g[i];
      v[i] = kBeta2f * v[i] + (1.0f - kBeta2f) * g[i] * g[i];
      p[i] -= step_size_ * m[i] / (std::sqrt(v[i]) + eps_hat_);
    }
  }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  static constexpr float kBeta1f = 0.9f;
  static constexpr float kBeta2f = 0.999f;
  long t_ = 0;
  float step_size_ = 0.0f;
  float eps_hat_ = 0.0f;
};

struct Gradients {
  Matrix embeddings;
  Matrix pool_weight;
  Vector pool_bias;
  Matrix head_weight;
  Vector head_bias;
  std::vector<int> touched;

  Gradients(const MiniEncoder& enc, const LinearHead& head)
      : embeddings(Matrix::Zero(enc.embeddings.rows(), enc.embeddings.cols())),
        pool_weight(Matrix::Zero(enc.pool_weight.rows(), enc.pool_weight.cols())),
        pool_bias(Vector::Zero(enc.pool_bias.size())),
        head_weight(Matrix::Zero(head.weight.rows(), head.weight.cols())),
        head_bias(Vector::Zero(head.bias.size())) {}

  void clear_embeddings() {
    for (int p : touched) embeddings.col(p).setZero();
    touched.clear();
  }

  void finish_touched() {
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  }
};

struct Optimizer {
  Adam adam;
  AdamSlot<Matrix> embeddings;
  AdamSlot<Matrix> pool_weight;
  AdamSlot<Vector> pool_bias;
  AdamSlot<Matrix> head_weight;
  AdamSlot<Vector> head_bias;

  Optimizer(const MiniEncoder& enc, const LinearHead& head)
      : embeddings(enc.embeddings),
        pool_weight(enc.pool_weight),
        pool_bias(enc.pool_bias),
        head_weight(head.weight),
        head_bias(head.bias) {}

  void step(MiniEncoder& enc, LinearHead& head, const Gradients& g, double lr) {
    adam.begin_step(lr);
    adam.update_columns(enc.embeddings, g.embeddings, embeddings, g.touched);
    adam.update(enc.pool_weight, g.pool_weight, pool_weight);
    adam.update(enc.pool_bias, g.pool_bias, pool_bias);
    adam.update(head.weight, g.head_weight, head_weight);
    adam.update(head.bias, g.head_bias, head_bias);
  }
};

// Layer-normalized mean-pooled inputs, one column per example. `inv_std`
// receives the per-column normalization factors for the backward pass.
Matrix pooled_batch(const MiniEncoder& enc, std::span<const EncodedExample* const> batch, Vector* inv_std = nullptr) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  Matrix x(enc.dimension(), b);
  if (inv_std) inv_std->resize(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    Vector raw = enc.pooled_input(batch[static_cast<std::size_t>(i)]->pieces);
    raw.array() -= raw.mean();
    float inv = 1.0f / std::sqrt(raw.squaredNorm() / static_cast<float>(raw.size()) + MiniEncoder::kLayerNormEps);
    x.col(i) = raw * inv;
    if (inv_std) (*inv_std)(i) = inv;
  }
  return x;
}

/// Column-wise softmax cross-entropy. Writes probabilities into `logits` and
/// returns the summed negative log-likelihood in double precision.
double softmax_xent(Matrix& logits, std::span<const EncodedExample* const> batch) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    auto col = logits.col(i);
    float max = col.maxCoeff();
    col.array() = (col.array() - max).exp();
    double sum = col.template cast<double>().sum();
    double p_target = static_cast<double>(col(batch[static_cast<std::size_t>(i)]->target)) / sum;
    loss -= std::log(std::max(p_target, std::numeric_limits<double>::min()));
    col /= static_cast<float>(sum);
  }
  return loss;
}

// dst = a * b^T. Small batches go through rank-1 updates, which skip GEMM
// packing and the zero fill of the result.
void accumulate_outer(Matrix& dst, const Matrix& a, const Matrix& b) {
  if (a.cols() > 8) {
    dst.noalias() = a * b.transpose();
    return;
  }
  dst.noalias() = a.col(0) * b.col(0).transpose();
  for (Eigen::Index i = 1; i < a.cols(); ++i) dst.noalias() += a.col(i) * b.col(i).transpose();
}

double forward_loss(const MiniEncoder& enc, const LinearHead& head, std::span<const EncodedExample* const> batch) {
  Matrix x = pooled_batch(enc, batch);
  Matrix h = ((enc.pool_weight * x).colwise() + enc.pool_bias).array().tanh().matrix();
  Matrix logits = (head.weight * h).colwise() + head.bias;
  return softmax_xent(logits, batch);
}

double forward_backward(const MiniEncoder& enc, const LinearHead& head, std::span<const EncodedExample* const> batch,
                        Gradients& g) {
  const auto b = static_cast<float>(batch.size());
  Vector inv_std;
  Matrix x = pooled_batch(enc, batch, &inv_std);
  Matrix h = ((enc.pool_weight * x).colwise() + enc.pool_bias).array().tanh().matrix();
  Matrix probs = (head.weight * h).colwise() + head.bias;
  double loss = softmax_xent(probs, batch);

  Matrix& dlogits = probs;
  for (std::size_t i = 0; i < batch.size(); ++i) dlogits(batch[i]->target, static_cast<Eigen::Index>(i)) -= 1.0f;
  dlogits /= b;

  accumulate_outer(g.head_weight, dlogits, h);
  g.head_bias = dlogits.rowwise().sum();
  Matrix dpre = ((head.weight.transpose() * dlogits).array() * (1.0f - h.array().square())).matrix();
  accumulate_outer(g.pool_weight, dpre, x);
  g.pool_bias = dpre.rowwise().sum();
  Matrix dx = enc.pool_weight.transpose() * dpre;
  const auto d = static_cast<float>(x.rows());
  for (Eigen::Index i = 0; i < dx.cols(); ++i) {
    float mean_dy = dx.col(i).sum() / d;
    float mean_dyx = dx.col(i).dot(x.col(i)) / d;
    dx.col(i) = inv_std(i) * (dx.col(i).array() - mean_dy - x.col(i).array() * mean_dyx).matrix();
  }

  g.clear_embeddings();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& pieces = batch[i]->pieces;
    if (pieces.empty()) continue;
    Vector share = dx.col(static_cast<Eigen::Index>(i)) / static_cast<float>(pieces.size());
    for (int p : pieces) {
      g.embeddings.col(p) += share;
      g.touched.push_back(p);
    }
  }
  g.finish_touched();
  return loss;
}

LinearHead init_head(int classes, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.02);
  LinearHead head;
  head.weight = Matrix(classes, dim);
  for (Eigen::Index j = 0; j < head.weight.cols(); ++j)
    for (Eigen::Index i = 0; i < head.weight.rows(); ++i) head.weight(i, j) = static_cast<float>(dist(rng));
  head.bias = Vector::Zero(classes);
  return head;
}

/// One pass over `data` in the given order; returns mean training loss.
double run_epoch(MiniEncoder& enc, LinearHead& head, Optimizer& opt, Gradients& g,
                 const std::vector<const EncodedExample*>& order, int batch_size, double base_lr, long& step,
                 long total_steps) {
  double loss = 0.0;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    std::span<const EncodedExample* const> batch(order.data() + start, end - start);
    loss += forward_backward(enc, head, batch, g);
    double lr = base_lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
    opt.step(enc, head, g, lr);
    ++step;
  }
  return loss / static_cast<double>(order.size());
}

}  // namespace

void save_encoder(const MiniEncoder& encoder, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write encoder checkpoint: " + path.string());
  out.write(kEncoderMagic, 8);
  write_pod<std::int32_t>(out, encoder.dimension());
  write_pod<std::int32_t>(out, encoder.buckets());
  write_pod<std::int64_t>(out, static_cast<std::int64_t>(encoder.words().size()));
  for (const auto& w : encoder.words()) {
    write_pod<std::int32_t>(out, static_cast<std::int32_t>(w.size()));
    out.write(w.data(), static_cast<std::streamsize>(w.size()));
  }
  write_matrix(out, encoder.embeddings);
  write_matrix(out, encoder.pool_weight);
  write_matrix(out, encoder.pool_bias);
  if (!out) throw ResourceError("write failed: " + path.string());
}

MiniEncoder load_encoder(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string source = path.string();
  if (!in) throw ProviderError("cannot open encoder checkpoint: " + source);
  check_magic(in, kEncoderMagic, source);
  auto dim = read_pod<std::int32_t>(in, source);
  auto buckets = read_pod<std::int32_t>(in, source);
  auto n_words = read_pod<std::int64_t>(in, source);
  if (dim <= 0 || buckets <= 0 || n_words < 0) throw ProviderError(source + ": corrupt header");
  std::vector<std::string> words;
  words.reserve(static_cast<std::size_t>(n_words));
  for (std::int64_t i = 0; i < n_words; ++i) {
    auto len = read_pod<std::int32_t>(in, source);
    if (len < 0 || len > 4096) throw ProviderError(source + ": corrupt vocabulary");
    std::string w(static_cast<std::size_t>(len), '\0');
    in.read(w.data(), len);
    words.push_back(std::move(w));
  }
  auto enc = MiniEncoder::zeros(std::move(words), dim, buckets);
  read_matrix(in, enc.embeddings, source);
  read_matrix(in, enc.pool_weight, source);
  read_vector(in, enc.pool_bias, source);
  return enc;
}

void save_head(const LinearHead& head, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write head weights: " + path.string());
  out.write(kHeadMagic, 8);
  write_pod<std::int32_t>(out, static_cast<std::int32_t>(head.weight.rows()));
  write_pod<std::int32_t>(out, static_cast<std::int32_t>(head.weight.cols()));
  write_matrix(out, head.weight);
  write_matrix(out, head.bias);
  if (!out) throw ResourceError("write failed: " + path.string());
}

LinearHead load_head(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string source = path.string();
  if (!in) throw ProviderError("cannot open head weights: " + source);
  check_magic(in, kHeadMagic, source);
  auto rows = read_pod<std::int32_t>(in, source);
  auto cols = read_pod<std::int32_t>(in, source);
  if (rows <= 0 || cols <= 0) throw ProviderError(source + ": corrupt header");
  LinearHead head;
  head.weight = Matrix(rows, cols);
  head.bias = Vector(rows);
  read_matrix(in, head.weight, source);
  read_vector(in, head.bias, source);
  return head;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    auto t = trim(current);
    if (!t.empty()) out.push_back(std::move(t));
    current.clear();
  };
  for (char c : text) {
    if (c == '.' || c == ';' || c == '\n') {
      flush();
    } else {
      current.push_back(c);
    }
  }
  flush();
  return out;
}

MiniEncoder pretrain_encoder(std::span<const std::string> texts, const PretrainConfig& config,
                             std::vector<EpochLog>* log) {
  if (config.epochs < 1 || config.batch_size < 1 || config.max_length < 1) {
    throw RangeError("pretraining epochs, batch size and max length must be positive");
  }
  std::vector<std::vector<std::string>> sentences;
  std::set<std::string> vocab;
  for (const auto& t : texts) {
    auto tokens = normalized_tokens(t);
    vocab.insert(tokens.begin(), tokens.end());
    if (tokens.size() >= 2) sentences.push_back(std::move(tokens));
  }
  if (sentences.empty()) throw InputError("pretraining needs at least one sentence with two or more tokens");

  MiniEncoder enc(std::vector<std::string>(vocab.begin(), vocab.end()), config.dim, config.buckets, config.seed);
  std::vector<EncodedExample> instances;
  for (const auto& tokens : sentences) {
    for (std::size_t masked = 0; masked < tokens.size(); ++masked) {
      EncodedExample ex;
      ex.target = static_cast<int>(enc.word_id(tokens[masked]));
      for (std::size_t j = 0; j < tokens.size(); ++j) {
        if (j != masked) enc.append_token_pieces(tokens[j], ex.pieces);
      }
      if (static_cast<int>(ex.pieces.size()) > config.max_length) ex.pieces.resize(config.max_length);
      instances.push_back(std::move(ex));
    }
  }

  // The output head predicts the removed word over the vocabulary.
  LinearHead out = init_head(static_cast<int>(vocab.size()), config.dim, config.seed + 1);
  Optimizer opt(enc, out);
  Gradients g(enc, out);
  std::mt19937_64 rng(config.seed + 2);
  std::vector<const EncodedExample*> order;
  for (const auto& ex : instances) order.push_back(&ex);
  long steps_per_epoch = static_cast<long>((order.size() + config.batch_size - 1) / config.batch_size);
  long total = steps_per_epoch * config.epochs;
  long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss = run_epoch(enc, out, opt, g, order, config.batch_size, config.learning_rate, step, total);
    if (log) log->push_back({epoch, loss, loss});
  }
  return enc;
}

double mean_classification_loss(const MiniEncoder& encoder, const LinearHead& head,
                                 std::span<const EncodedExample> examples) {
  if (examples.empty()) throw InputError("mean_classification_loss: no examples");
  constexpr std::size_t kChunk = 256;
  std::vector<const EncodedExample*> ptrs;
  for (const auto& e : examples) ptrs.push_back(&e);
  double loss = 0.0;
  for (std::size_t start = 0; start < ptrs.size(); start += kChunk) {
    std::size_t end = std::min(ptrs.size(), start + kChunk);
    loss += forward_loss(encoder, head, std::span<const EncodedExample* const>(ptrs.data() + start, end - start));
  }
  return loss / static_cast<double>(examples.size());
}

ClassificationGradient classification_gradient(const MiniEncoder& encoder, const LinearHead& head,
                                               std::span<const EncodedExample> examples) {
  if (examples.empty()) throw InputError("classification_gradient: no examples");
  std::vector<const EncodedExample*> batch;
  for (const auto& e : examples) batch.push_back(&e);
  Gradients g(encoder, head);
  ClassificationGradient out;
  out.loss = forward_backward(encoder, head, batch, g) / static_cast<double>(batch.size());
  out.embeddings = std::move(g.embeddings);
  out.pool_weight = std::move(g.pool_weight);
  out.pool_bias = std::move(g.pool_bias);
  out.head_weight = std::move(g.head_weight);
  out.head_bias = std::move(g.head_bias);
  return out;
}

Eigen::VectorXd classify_pieces(const MiniEncoder& encoder, const LinearHead& head, std::span<const int> pieces) {
  Eigen::VectorXd logits = (head.weight * encoder.encode(pieces) + head.bias).cast<double>();
  logits.array() -= logits.maxCoeff();
  logits = logits.array().exp().matrix();
  return logits / logits.sum();
}

FinetuneResult finetune_encoder(const MiniEncoder& pretrained, int class_count, std::span<const EncodedExample> train,
                                std::span<const EncodedExample> validation, const FinetuneOptions& options) {
  if (options.epochs < 1 || options.batch_size < 1 || options.max_length < 1 || options.early_stopping_patience < 1 ||
      !(options.learning_rate > 0.0)) {
    throw RangeError("fine-tuning epochs, batch size, max length, patience and learning rate must be positive");
  }
  if (class_count < 1) throw RangeError("fine-tuning needs at least one class");
  if (train.empty() || validation.empty()) throw InputError("fine-tuning needs non-empty train and validation sets");
  for (auto set : {train, validation}) {
    for (const auto& ex : set) {
      if (ex.target < 0 || ex.target >= class_count) throw InputError("fine-tuning target out of range");
    }
  }

  MiniEncoder enc = pretrained;
  LinearHead head = init_head(class_count, enc.dimension(), options.seed);
  Optimizer opt(enc, head);
  Gradients g(enc, head);
  std::mt19937_64 rng(options.seed + 1);

  std::vector<const EncodedExample*> order;
  for (const auto& ex : train) order.push_back(&ex);
  long steps_per_epoch = static_cast<long>((order.size() + options.batch_size - 1) / options.batch_size);
  long total = steps_per_epoch * options.epochs;
  long step = 0;

  FinetuneResult result{enc, head, {}, 0, std::numeric_limits<double>::infinity()};
  int since_best = 0;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_loss = run_epoch(enc, head, opt, g, order, options.batch_size, options.learning_rate, step, total);
    double val_loss = mean_classification_loss(enc, head, validation);
    result.log.push_back({epoch, train_loss, val_loss});
    if (val_loss < result.best_validation_loss) {
      result.best_validation_loss = val_loss;
      result.best_epoch = epoch;
      result.encoder = enc;
      result.head = head;
      since_best = 0;
    } else if (++since_best >= options.early_stopping_patience) {
      break;
    }
  }
  return result;
}

}  // namespace scope3
