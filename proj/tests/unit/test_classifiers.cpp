#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scope3/classifiers.hpp"
#include "scope3/common.hpp"
#include "scope3/csv.hpp"
#include "support.hpp"

using namespace scope3;

namespace {

Taxonomy toy_taxonomy() {
  return Taxonomy({{"A1", "Electric power", {"1"}, "Electric power generation transmission and distribution"},
                   {"B2", "Legal services", {"2"}, "Offices of lawyers notaries and legal counsel"},
                   {"C3", "Office furniture", {"3"}, "Desks chairs cabinets and other office furniture"}},
                  {{"A1", 0.5, "USD-2022", "supply_chain_with_margins"},
                   {"B2", 0.1, "USD-2022", "supply_chain_with_margins"},
                   {"C3", 0.2, "USD-2022", "supply_chain_with_margins"}});
}

std::vector<LabeledExample> toy_examples() {
  std::vector<LabeledExample> out;
  const std::vector<std::pair<std::string, std::vector<std::string>>> phrases = {
      {"A1", {"electric bill", "power utility invoice", "electricity usage march", "power supply charge",
              "electric service fee", "utility power payment"}},
      {"B2", {"legal fees", "attorney retainer", "lawyer consultation", "legal counsel invoice", "notary services",
              "law firm payment"}},
      {"C3", {"office desks", "chairs for staff", "filing cabinets", "office furniture order", "desk lamps and chairs",
              "furniture purchase"}},
  };
  int n = 0;
  for (const auto& [label, texts] : phrases)
    for (const auto& t : texts) out.push_back({"e" + std::to_string(n++), t, label});
  return out;
}

struct Fixed : SentenceEncoder {
  int dimension() const override { return 2; }
  std::string id() const override { return "fixed"; }
  FeatureVector embed(std::string_view text) const override {
    if (text.find("fail") != std::string_view::npos) throw std::runtime_error("refused");
    return Eigen::Vector2d(1.0, 0.0);
  }
};

}  // namespace

TEST_CASE("rank_scores orders by score then code and honours k") {
  std::vector<std::string> labels = {"C", "A", "B", "D"};
  Eigen::Vector4d s(0.2, 0.5, 0.5, 0.1);
  auto p = rank_scores(labels, s, ScoreKind::probability);
  REQUIRE(p.topk.size() == 4);
  CHECK(p.label == "A");
  CHECK(p.score == 0.5);
  CHECK(p.topk[1].label == "B");
  CHECK(p.topk[2].label == "C");
  CHECK(p.topk[3].label == "D");
  CHECK(rank_scores(labels, s, ScoreKind::probability, 2).topk.size() == 2);
  CHECK(rank_scores(labels, s, ScoreKind::probability, 10).topk.size() == 4);
  CHECK_THROWS_AS(rank_scores(labels, Eigen::Vector3d::Zero(), ScoreKind::probability), InputError);
}

TEST_CASE("family and feature names parse") {
  CHECK(parse_family("zeroshot") == Family::zeroshot);
  CHECK(parse_family("classical") == Family::classical);
  CHECK(parse_family("finetuned") == Family::finetuned);
  CHECK_THROWS_AS(parse_family("svm"), InputError);
  CHECK(parse_feature_kind("tfidf") == FeatureKind::tfidf);
  CHECK(parse_feature_kind("word_average") == FeatureKind::word_average);
  CHECK(parse_feature_kind("word2vec") == FeatureKind::word_average);
}

TEST_CASE("zero-shot ties break by ascending code") {
  auto tax = Taxonomy({{"Z9", "same words", {"1"}, ""}, {"M5", "same words", {"2"}, ""}, {"Q1", "other", {"3"}, ""}}, {});
  auto model = zeroshot_build(std::make_shared<HashingEncoder>(128), tax, TextMode::title);
  auto p = model->predict("same words");
  CHECK(p.label == "M5");
  CHECK(p.topk[1].label == "Z9");
  CHECK(p.topk[0].score == p.topk[1].score);
  CHECK(p.kind == ScoreKind::similarity);
}

TEST_CASE("zero-shot modes, errors and persistence") {
  auto tax = toy_taxonomy();
  auto hashing = std::make_shared<HashingEncoder>(256);
  auto title = zeroshot_build(hashing, tax, TextMode::title);
  CHECK(title->predict("electric power bill").label == "A1");
  CHECK(title->label_set() == tax.codes());
  CHECK(title->metadata().taxonomy_hash == tax.fingerprint());
  auto desc = zeroshot_build(hashing, tax, TextMode::description);
  CHECK(desc->predict("lawyers and notaries").label == "B2");
  CHECK_THROWS_AS(title->predict("  ... "), InputError);

  auto bare = Taxonomy({{"A1", "Electric power", {"1"}, ""}, {"B2", "Legal", {"2"}, ""}}, {});
  CHECK_THROWS_AS(zeroshot_build(hashing, bare, TextMode::description), StateError);

  auto failing = Taxonomy({{"A1", "fine", {"1"}, ""}, {"B2", "will fail", {"2"}, ""}}, {});
  try {
    zeroshot_build(std::make_shared<Fixed>(), failing, TextMode::title);
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("B2") != std::string::npos);
  }

  testing::TempDir tmp;
  desc->save(tmp / "zs");
  auto back = load_model(tmp / "zs");
  CHECK(back->family() == Family::zeroshot);
  for (const char* t : {"power invoice", "legal retainer", "desk chairs", "random words"}) CHECK(back->predict(t) == desc->predict(t));
}

TEST_CASE("zero-shot rejects a degenerate input embedding") {
  Eigen::MatrixXd m(2, 2);
  m << 1, 0, 0, 1;
  auto words = std::make_shared<const WordVectors>(std::vector<std::string>{"electric", "legal"}, m);
  auto tax = Taxonomy({{"A1", "electric", {"1"}, ""}, {"B2", "legal", {"2"}, ""}}, {});
  auto model = zeroshot_build(std::make_shared<WordAverageEncoder>(words), tax, TextMode::title);
  CHECK(model->predict("electric stuff").label == "A1");
  CHECK_THROWS_AS(model->predict("nothing known"), DomainError);
}

TEST_CASE("classical tfidf model trains, predicts and round-trips through disk") {
  auto tax = toy_taxonomy();
  auto train = toy_examples();
  ClassicalConfig cfg;
  cfg.forest.n_trees = 30;
  auto model = train_classical(train, tax, cfg);
  CHECK(model->predict("monthly electric power bill").label == "A1");
  CHECK(model->predict("law firm retainer").label == "B2");
  CHECK(model->predict("new office chairs").label == "C3");
  auto p = model->predict("legal fees");
  double sum = 0.0;
  for (const auto& s : p.topk) sum += s.score;
  CHECK(sum == doctest::Approx(1.0));
  CHECK(p.topk.size() == 3);
  CHECK(model->metadata().data_fingerprint == data_fingerprint(train));
  CHECK(model->metadata().seed == cfg.forest.seed);

  testing::TempDir tmp;
  model->save(tmp / "m");
  auto manifest = nlohmann::json::parse(csv::read_text(tmp / "m" / "manifest.json"));
  CHECK(manifest["family"] == "classical");
  CHECK(manifest["config"]["features"] == "tfidf");
  CHECK(manifest["metadata"].contains("created_at"));
  auto back = load_model(tmp / "m");
  std::vector<std::string> texts = {"power", "attorney", "cabinets", "something else entirely"};
  CHECK(back->predict_batch(texts) == model->predict_batch(texts));
  for (std::size_t i = 0; i < texts.size(); ++i) CHECK(model->predict_batch(texts)[i] == model->predict(texts[i]));

  auto again = train_classical(train, tax, cfg);
  CHECK(again->predict_batch(texts) == model->predict_batch(texts));
}

TEST_CASE("classical word-average model round-trips") {
  auto tax = toy_taxonomy();
  Eigen::MatrixXd m(2, 4);
  m << 1, 0, 0, 0.5,  //
      0, 1, 0.5, 0;
  auto words = std::make_shared<const WordVectors>(std::vector<std::string>{"electric", "legal", "attorney", "power"}, m);
  ClassicalConfig cfg;
  cfg.features = FeatureKind::word_average;
  cfg.forest.n_trees = 10;
  auto model = train_classical(toy_examples(), tax, cfg, words);
  CHECK(model->pipeline().kind() == FeatureKind::word_average);
  testing::TempDir tmp;
  model->save(tmp / "w");
  auto back = load_model(tmp / "w");
  CHECK(back->predict("electric power") == model->predict("electric power"));
  CHECK_THROWS_AS(train_classical(toy_examples(), tax, cfg), InputError);
}

TEST_CASE("classical_train input validation") {
  auto tax = toy_taxonomy();
  std::vector<std::string> docs = {"a b", "b c"};
  FeaturePipeline pipe(fit_tfidf(docs));
  std::vector<FeatureVector> feats = {pipe.transform("a"), pipe.transform("c")};
  CHECK_THROWS_AS(classical_train(pipe, feats, std::vector<std::string>{"A1"}, tax, {}), InputError);
  CHECK_THROWS_AS(classical_train(pipe, feats, std::vector<std::string>{"A1", "A1"}, tax, {}), InputError);
  CHECK_THROWS_AS(classical_train(pipe, feats, std::vector<std::string>{"A1", "ZZ"}, tax, {}), InputError);
  CHECK(classical_train(pipe, feats, std::vector<std::string>{"A1", "B2"}, tax, {})->label_set().size() == 3);
}

TEST_CASE("training config grid") {
  TrainingConfig c;
  CHECK(c.on_grid());
  c.learning_rate = 5e-6;
  CHECK(c.on_grid());
  c.max_length = 100;
  CHECK_FALSE(c.on_grid());
  CHECK(c.to_json()["max_length"] == 100);
}

TEST_CASE("fine-tuning through the model API") {
  auto tax = toy_taxonomy();
  auto all = toy_examples();
  std::vector<LabeledExample> train, val;
  for (std::size_t i = 0; i < all.size(); ++i) (i % 3 == 2 ? val : train).push_back(all[i]);

  std::vector<std::string> corpus;
  for (const auto& cls : tax.classes()) corpus.push_back(cls.title + " " + cls.description);
  for (const auto& e : train) corpus.push_back(e.text);
  PretrainConfig pc;
  pc.dim = 16;
  pc.buckets = 64;
  pc.epochs = 5;
  testing::TempDir tmp;
  save_encoder(pretrain_encoder(corpus, pc), tmp / "enc.bin");

  TrainingConfig cfg;
  cfg.max_length = 64;
  cfg.learning_rate = 5e-3;
  cfg.epochs = 15;
  cfg.batch_size = 4;
  cfg.early_stopping_patience = 3;
  auto out = finetune("mini:" + (tmp / "enc.bin").string(), train, val, tax, cfg);
  const auto& model = *out.model;
  REQUIRE_FALSE(out.log.empty());
  double best = out.log.front().validation_loss;
  for (const auto& e : out.log) best = std::min(best, e.validation_loss);
  CHECK(std::fabs(model.loss(val) - best) <= 1e-12);
  CHECK(model.metadata().extra["best_validation_loss"].get<double>() == best);
  CHECK(model.metadata().extra["epochs_run"] == out.log.size());
  CHECK(model.metadata().extra["on_grid"] == false);
  CHECK(model.metadata().config["learning_rate"] == 5e-3);

  model.save(tmp / "ft");
  auto back = load_model(tmp / "ft");
  CHECK(back->family() == Family::finetuned);
  CHECK(back->predict("electric bill") == model.predict("electric bill"));
  CHECK(dynamic_cast<const FinetunedModel&>(*back).loss(val) == model.loss(val));

  CHECK_THROWS_AS(finetune("hashing:64", train, val, tax, cfg), ProviderError);
  CHECK_THROWS_AS(finetune("mini:" + (tmp / "nope.bin").string(), train, val, tax, cfg), ProviderError);
}

TEST_CASE("epoch log csv round-trips exactly") {
  std::vector<EpochLog> log = {{1, 3.25, 2.5}, {2, 1.0 / 3.0, 0.1 + 0.2}};
  auto back = parse_epoch_log_csv(epoch_log_csv(log));
  REQUIRE(back.size() == 2);
  CHECK(back[1].train_loss == log[1].train_loss);
  CHECK(back[1].validation_loss == log[1].validation_loss);
  CHECK(back[1].epoch == 2);
  CHECK_THROWS_AS(parse_epoch_log_csv("epoch,train_loss,validation_loss\n1,x,2\n"), ParseError);
}

TEST_CASE("load_model rejects missing or foreign directories") {
  testing::TempDir tmp;
  CHECK_THROWS_AS(load_model(tmp / "absent"), InputError);
  csv::write_text(tmp / "x" / "manifest.json", "{\"format\": \"other\", \"version\": 1}");
  CHECK_THROWS_AS(load_model(tmp / "x"), ParseError);
  csv::write_text(tmp / "y" / "manifest.json", "not json");
  CHECK_THROWS_AS(load_model(tmp / "y"), ParseError);
}
