#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "scope3/common.hpp"
#include "scope3/csv.hpp"
#include "scope3/encoder.hpp"
#include "support.hpp"

using namespace scope3;

namespace {

const std::vector<std::string> kSentences = {
    "electric power generation and distribution",   "natural gas distribution to homes",
    "legal services and accounting firms",          "office furniture and fixtures manufacturing",
    "air transportation of passengers and cargo",   "computer systems design services",
    "restaurants and other eating places",          "truck transportation of freight",
};

MiniEncoder small_encoder(std::uint64_t seed = 1) {
  std::vector<std::string> words = {"electric", "power", "legal", "services", "office", "furniture", "truck"};
  return MiniEncoder(words, 12, 32, seed);
}

LinearHead small_head(int classes, int dim) {
  LinearHead h;
  h.weight = LinearHead::Matrix::Random(classes, dim) * 0.5f;
  h.bias = LinearHead::Vector::Random(classes) * 0.1f;
  return h;
}

std::vector<EncodedExample> encode_all(const MiniEncoder& enc, const std::vector<std::pair<std::string, int>>& xs) {
  std::vector<EncodedExample> out;
  for (const auto& [text, target] : xs) out.push_back({enc.pieces(text, 64), target});
  return out;
}

// Central difference of the loss along one parameter coordinate.
template <typename Set>
double numeric(MiniEncoder& enc, LinearHead& head, std::span<const EncodedExample> xs, Set set, float base) {
  const float h = 1e-2f;
  set(base + h);
  double up = mean_classification_loss(enc, head, xs);
  set(base - h);
  double down = mean_classification_loss(enc, head, xs);
  set(base);
  return (up - down) / (2.0 * h);
}

void check_close(double analytic, double fd) {
  CHECK(std::fabs(analytic - fd) <= 2e-3 + 3e-2 * std::fabs(fd));
}

}  // namespace

TEST_CASE("pieces: word id first, then hashed trigrams, truncated at max_length") {
  auto enc = small_encoder();
  auto p = enc.pieces("Legal", 64);
  REQUIRE(p.size() == 1 + 5);  // "<legal>" has five trigrams
  CHECK(p[0] == enc.word_id("legal"));
  for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i] >= static_cast<int>(enc.words().size()));
  CHECK(enc.pieces("unknownword", 64).size() == 11);
  CHECK(enc.pieces("legal services office furniture", 7).size() == 7);
  CHECK(enc.pieces("", 64).empty());
  CHECK_THROWS_AS(MiniEncoder({"a", "a"}, 4, 4, 1), ValidationError);
  CHECK_THROWS_AS(MiniEncoder({"a"}, 0, 4, 1), RangeError);
}

TEST_CASE("layer norm gives zero mean and unit variance") {
  MiniEncoder::Vector x(5);
  x << 1, 2, 3, 4, 10;
  auto y = MiniEncoder::layer_norm(x);
  CHECK(std::fabs(y.mean()) < 1e-6);
  CHECK(y.squaredNorm() / 5.0f == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(MiniEncoder::layer_norm(MiniEncoder::Vector::Zero(4)).isZero());
}

TEST_CASE("encode is deterministic and bounded") {
  auto enc = small_encoder();
  auto a = enc.encode("legal services retainer", 64);
  CHECK(a.size() == 12);
  CHECK(a == enc.encode("legal services retainer", 64));
  CHECK((a.array().abs() <= 1.0f).all());
  CHECK(small_encoder(2).encode("legal services retainer", 64) != a);
}

TEST_CASE("analytic gradient matches finite differences") {
  auto enc = small_encoder(5);
  auto head = small_head(3, enc.dimension());
  auto xs = encode_all(enc, {{"legal services retainer", 0}, {"electric power bill", 1}, {"truck freight", 2},
                             {"office furniture desks", 0}});
  auto g = classification_gradient(enc, head, xs);
  CHECK(g.loss == doctest::Approx(mean_classification_loss(enc, head, xs)).epsilon(1e-6));

  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < enc.dimension(); j += 5) {
      float base = head.weight(i, j);
      check_close(g.head_weight(i, j), numeric(enc, head, xs, [&](float v) { head.weight(i, j) = v; }, base));
    }
  for (int i = 0; i < 3; ++i) {
    float base = head.bias(i);
    check_close(g.head_bias(i), numeric(enc, head, xs, [&](float v) { head.bias(i) = v; }, base));
  }
  for (int i = 0; i < enc.dimension(); i += 3)
    for (int j = 0; j < enc.dimension(); j += 4) {
      float base = enc.pool_weight(i, j);
      check_close(g.pool_weight(i, j), numeric(enc, head, xs, [&](float v) { enc.pool_weight(i, j) = v; }, base));
    }
  for (int i = 0; i < enc.dimension(); i += 2) {
    float base = enc.pool_bias(i);
    check_close(g.pool_bias(i), numeric(enc, head, xs, [&](float v) { enc.pool_bias(i) = v; }, base));
  }
  // Embedding columns reached by the inputs, including the layer norm path.
  for (int col : {static_cast<int>(enc.word_id("legal")), xs[1].pieces[1], xs[2].pieces[0]}) {
    for (int i = 0; i < enc.dimension(); i += 3) {
      float base = enc.embeddings(i, col);
      check_close(g.embeddings(i, col), numeric(enc, head, xs, [&](float v) { enc.embeddings(i, col) = v; }, base));
    }
  }
  CHECK(g.embeddings.col(enc.word_id("power")).isZero() == false);
  CHECK(g.embeddings.col(enc.word_id("furniture")).isZero() == false);
}

TEST_CASE("encoder and head checkpoints round-trip bit for bit") {
  testing::TempDir tmp;
  auto enc = small_encoder(9);
  save_encoder(enc, tmp / "enc.bin");
  auto back = load_encoder(tmp / "enc.bin");
  CHECK(back.words() == enc.words());
  CHECK(back.buckets() == enc.buckets());
  CHECK(back.embeddings == enc.embeddings);
  CHECK(back.pool_weight == enc.pool_weight);
  CHECK(back.pool_bias == enc.pool_bias);

  auto head = small_head(4, 12);
  save_head(head, tmp / "head.bin");
  auto hb = load_head(tmp / "head.bin");
  CHECK(hb.weight == head.weight);
  CHECK(hb.bias == head.bias);

  CHECK_THROWS_AS(load_encoder(tmp / "missing.bin"), ProviderError);
  CHECK_THROWS_AS(load_encoder(tmp / "head.bin"), Error);
  auto bytes = csv::read_text(tmp / "enc.bin");
  csv::write_text(tmp / "trunc.bin", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_encoder(tmp / "trunc.bin"), Error);
}

TEST_CASE("split_sentences") {
  CHECK(split_sentences("One thing. Two; three\nfour.") ==
        std::vector<std::string>{"One thing", "Two", "three", "four"});
  CHECK(split_sentences(" . ; ").empty());
}

TEST_CASE("pretraining is deterministic and lowers the loss") {
  PretrainConfig cfg;
  cfg.dim = 16;
  cfg.buckets = 64;
  cfg.epochs = 8;
  cfg.batch_size = 4;
  std::vector<EpochLog> log;
  auto a = pretrain_encoder(kSentences, cfg, &log);
  auto b = pretrain_encoder(kSentences, cfg);
  CHECK(a.embeddings == b.embeddings);
  CHECK(a.pool_weight == b.pool_weight);
  REQUIRE(log.size() == 8);
  CHECK(log.back().train_loss < log.front().train_loss);
  CHECK(a.word_id("furniture") >= 0);
  auto wv = a.word_vectors("memory");
  CHECK(wv.size() == a.words().size());
  CHECK_THROWS_AS(pretrain_encoder(std::vector<std::string>{"single"}, cfg), InputError);
  cfg.epochs = 0;
  CHECK_THROWS_AS(pretrain_encoder(kSentences, cfg), RangeError);
}

TEST_CASE("fine-tuning returns the checkpoint with the lowest validation loss") {
  PretrainConfig pc;
  pc.dim = 16;
  pc.buckets = 64;
  pc.epochs = 3;
  auto enc = pretrain_encoder(kSentences, pc);
  std::vector<std::pair<std::string, int>> train_raw, val_raw;
  for (std::size_t i = 0; i < kSentences.size(); ++i) {
    train_raw.push_back({kSentences[i], static_cast<int>(i % 4)});
    train_raw.push_back({kSentences[i] + " invoice", static_cast<int>(i % 4)});
    val_raw.push_back({kSentences[i] + " payment", static_cast<int>((i + 1) % 4)});
  }
  auto train = encode_all(enc, train_raw);
  auto val = encode_all(enc, val_raw);

  FinetuneOptions opt;
  opt.epochs = 30;
  opt.batch_size = 2;
  opt.learning_rate = 1e-2;
  opt.early_stopping_patience = 3;
  auto r = finetune_encoder(enc, 4, train, val, opt);
  REQUIRE_FALSE(r.log.empty());
  double min_val = std::min_element(r.log.begin(), r.log.end(), [](const auto& a, const auto& b) {
                     return a.validation_loss < b.validation_loss;
                   })->validation_loss;
  CHECK(r.best_validation_loss == min_val);
  CHECK(r.log[static_cast<std::size_t>(r.best_epoch - 1)].validation_loss == min_val);
  CHECK(std::fabs(mean_classification_loss(r.encoder, r.head, val) - min_val) <= 1e-12);
  // labels are shifted in validation, so it overfits and stops early
  CHECK(static_cast<int>(r.log.size()) == std::min(opt.epochs, r.best_epoch + opt.early_stopping_patience));
  for (std::size_t i = 0; i < r.log.size(); ++i) CHECK(r.log[i].epoch == static_cast<int>(i) + 1);

  auto again = finetune_encoder(enc, 4, train, val, opt);
  CHECK(again.head.weight == r.head.weight);
  CHECK(again.best_epoch == r.best_epoch);

  opt.learning_rate = 0.0;
  CHECK_THROWS_AS(finetune_encoder(enc, 4, train, val, opt), RangeError);
  opt.learning_rate = 1e-3;
  CHECK_THROWS_AS(finetune_encoder(enc, 2, train, val, opt), InputError);
  CHECK_THROWS_AS(finetune_encoder(enc, 4, train, {}, opt), InputError);
}

TEST_CASE("classify_pieces returns a distribution") {
  auto enc = small_encoder();
  auto head = small_head(5, enc.dimension());
  auto p = classify_pieces(enc, head, enc.pieces("office furniture", 64));
  CHECK(p.size() == 5);
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK((p.array() > 0.0).all());
}

TEST_CASE("mini provider exposes the encoder as a sentence embedding") {
  testing::TempDir tmp;
  auto enc = small_encoder(3);
  save_encoder(enc, tmp / "enc.bin");
  auto provider = open_sentence_encoder("mini:" + (tmp / "enc.bin").string());
  CHECK(provider->dimension() == 12);
  CHECK(provider->embed("legal services") == enc.encode("legal services", 512).cast<double>());
}
