#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "scope3/cli.hpp"
#include "scope3/csv.hpp"
#include "support.hpp"

using namespace scope3;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "scope3");
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> taxonomy_args() {
  auto d = testing::data_dir();
  return {"--classes", (d / "eeio/summary_classes.csv").string(), "--factors", (d / "eeio/emission_factors.csv").string(),
          "--naics", (d / "naics/descriptions.csv").string()};
}

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(csv::read_text(p)); }

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == kExitUserError);
  CHECK(run({"frobnicate"}).code == kExitUserError);
  auto help = run({"--help"});
  CHECK(help.code == kExitOk);
  CHECK(help.out.find("prepare") != std::string::npos);

  testing::TempDir tmp;
  auto r = run({"--out", tmp.path().string(), "prepare"});
  CHECK(r.code == kExitUserError);
  CHECK(r.err.find("--classes") != std::string::npos);
  CHECK(r.err.find('\n') == r.err.size() - 1);

  auto bad = run(with({"--out", tmp.path().string(), "train", "--family", "svm"}, taxonomy_args()));
  CHECK(bad.code == kExitUserError);
  CHECK(bad.err.find("usage error") != std::string::npos);

  auto missing = run({"--config", (tmp / "nope.json").string(), "report"});
  CHECK(missing.code == kExitUserError);
}

TEST_CASE("prepare is idempotent per seed and records ratios") {
  testing::TempDir tmp;
  auto args = with({"--out", tmp.path().string(), "--seed", "7", "prepare", "--per-class", "6"}, taxonomy_args());
  REQUIRE(run(args).code == kExitOk);
  auto first = csv::read_text(tmp / "data/split_manifest.json");
  auto train = csv::read_text(tmp / "data/train.csv");
  REQUIRE(run(args).code == kExitOk);
  CHECK(csv::read_text(tmp / "data/split_manifest.json") == first);
  CHECK(csv::read_text(tmp / "data/train.csv") == train);
  auto m = nlohmann::json::parse(first);
  CHECK(m["ratios"] == nlohmann::json::array({0.7, 0.2, 0.1}));
  CHECK(m["seed"] == 7);
  CHECK(m["counts"]["train"].get<int>() + m["counts"]["validation"].get<int>() + m["counts"]["test"].get<int>() == 396);

  auto bad = run(with({"--out", tmp.path().string(), "prepare", "--ratios", "1", "0", "0"}, taxonomy_args()));
  CHECK(bad.code == kExitUserError);
}

TEST_CASE("perfect classifier, model comparison, classify and missing models") {
  testing::TempDir tmp;
  std::string corpus = "text,label\n";
  for (int i = 0; i < 10; ++i) {
    corpus += "electricity kilowatt " + std::to_string(i) + ",22\n";
    corpus += "attorney retainer " + std::to_string(i) + ",5411\n";
    corpus += "desks cabinets " + std::to_string(i) + ",337\n";
  }
  csv::write_text(tmp / "corpus.csv", corpus);
  auto out = tmp.path().string();
  REQUIRE(run(with({"--out", out, "prepare", "--corpus", (tmp / "corpus.csv").string()}, taxonomy_args())).code == kExitOk);
  // later commands pick the taxonomy up from <out>/config.json
  REQUIRE(run({"--out", out, "train", "--family", "classical", "--trees", "20"}).code == kExitOk);
  CHECK(fs::is_regular_file(tmp / "models/classical-tfidf/manifest.json"));
  REQUIRE(run({"--out", out, "train", "--family", "zeroshot", "--mode", "title"}).code == kExitOk);

  auto ev = run({"--out", out, "evaluate"});
  REQUIRE(ev.code == kExitOk);
  auto rep = read_json(tmp / "eval/classical-tfidf.json");
  CHECK(rep["weighted_f1"] == 1.0);
  CHECK(rep["confusion"][0][0] == 1);
  auto cmp = read_json(tmp / "eval/comparison.json");
  REQUIRE(cmp.size() == 2);
  CHECK(cmp[0]["name"] == "classical-tfidf");
  CHECK(cmp[0]["weighted_f1"].get<double>() >= cmp[1]["weighted_f1"].get<double>());
  CHECK(fs::is_regular_file(tmp / "eval/comparison.txt"));

  auto cl = run({"--out", out, "classify", "--model", "classical-tfidf", "--text", "attorney retainer march", "--top-k", "2"});
  REQUIRE(cl.code == kExitOk);
  CHECK(cl.out.find(",5411,") != std::string::npos);
  CHECK(run({"--out", out, "classify", "--model", "classical-tfidf", "--text", "..."}).code == kExitUserError);

  auto gone = run({"--out", out, "evaluate", "--model", (tmp / "no-such-model").string()});
  CHECK(gone.code == kExitUserError);
  CHECK(gone.err.find("no-such-model") != std::string::npos);
}

TEST_CASE("estimate: fixture ledger, empty ledger, report") {
  testing::TempDir tmp;
  auto out = tmp.path().string();
  REQUIRE(run(with({"--out", out, "--seed", "3", "prepare", "--per-class", "6"}, taxonomy_args())).code == kExitOk);
  REQUIRE(run({"--out", out, "train", "--family", "classical", "--trees", "10"}).code == kExitOk);
  auto ledger = (testing::data_dir() / "fixtures/ledger.csv").string();
  auto est = run({"--out", out, "estimate", "--model", "classical-tfidf", "--ledger", ledger});
  REQUIRE(est.code == kExitOk);
  auto summary = read_json(tmp / "estimate/summary.json");
  CHECK(summary["lines"] == 24);
  CHECK(summary["mapped_lines"] == 23);
  CHECK(summary["unmapped"] == nlohmann::json::array({"L024"}));
  CHECK(csv::read_text(tmp / "estimate/unmapped.csv") == "record_id,reason\nL024,missing_amount\n");
  auto audit = csv::parse(csv::read_text(tmp / "estimate/audit.csv"), "audit");
  CHECK(audit.rows.size() == 24);
  CHECK(fs::is_regular_file(tmp / "estimate/report.svg"));

  auto rep = run({"--out", out, "report"});
  REQUIRE(rep.code == kExitOk);
  CHECK(csv::read_text(tmp / "report.md").find("L024 (missing_amount)") != std::string::npos);

  csv::write_text(tmp / "empty.csv", "id,text,amount,currency\n");
  auto empty = run({"--out", out, "estimate", "--model", "classical-tfidf", "--ledger", (tmp / "empty.csv").string()});
  CHECK(empty.code == kExitOk);
  CHECK(csv::read_text(tmp / "estimate/report.csv") ==
        "class_code,class_title,total_spend,total_emission_kg,line_count\nTOTAL,,0,0,0\n");

  CHECK(run({"--out", out, "estimate", "--model", "classical-tfidf", "--ledger", (tmp / "missing.csv").string()}).code ==
        kExitUserError);
}

TEST_CASE("config file paths resolve relative to the file and flags win") {
  testing::TempDir tmp;
  auto d = testing::data_dir();
  nlohmann::json cfg = {{"seed", 5},
                        {"out", "run"},
                        {"taxonomy", {{"classes", (d / "eeio/summary_classes.csv").string()},
                                      {"factors", (d / "eeio/emission_factors.csv").string()}}},
                        {"corpus", {{"synthetic_per_class", 4}}}};
  csv::write_text(tmp / "cfg.json", cfg.dump());
  REQUIRE(run({"--config", (tmp / "cfg.json").string(), "prepare"}).code == kExitOk);
  CHECK(read_json(tmp / "run/data/split_manifest.json")["seed"] == 5);
  REQUIRE(run({"--config", (tmp / "cfg.json").string(), "--seed", "6", "prepare"}).code == kExitOk);
  CHECK(read_json(tmp / "run/data/split_manifest.json")["seed"] == 6);
  CHECK(read_json(tmp / "run/config.json")["corpus"]["synthetic_per_class"] == 4);
}

TEST_CASE("pretrain and fine-tune echo the configuration") {
  testing::TempDir tmp;
  auto out = tmp.path().string();
  REQUIRE(run(with({"--out", out, "prepare", "--per-class", "4"}, taxonomy_args())).code == kExitOk);
  auto pre = run({"--out", out, "pretrain", "--dim", "16", "--epochs", "1"});
  REQUIRE(pre.code == kExitOk);
  CHECK(fs::is_regular_file(tmp / "encoder/mini.ckpt"));
  CHECK(fs::is_regular_file(tmp / "encoder/word_vectors.txt"));

  auto ft = run({"--out", out, "train", "--family", "finetuned", "--lr", "5e-6", "--max-length", "512", "--epochs", "1"});
  REQUIRE(ft.code == kExitOk);
  auto m = read_json(tmp / "models/finetuned/manifest.json");
  CHECK(m["config"]["learning_rate"] == 5e-6);
  CHECK(m["config"]["max_length"] == 512);
  CHECK(m["extra"]["on_grid"] == true);
  CHECK(m["extra"]["epochs_run"] == 1);
  CHECK(csv::read_text(tmp / "models/finetuned/epoch_log.csv").find("epoch,train_loss,validation_loss\n1,") == 0);
  CHECK(fs::is_regular_file(tmp / "models/finetuned/learning_curve.svg"));

  REQUIRE(run({"--out", out, "train", "--family", "classical", "--features", "word_average", "--trees", "5"}).code == kExitOk);
  REQUIRE(run({"--out", out, "train", "--family", "zeroshot", "--provider", "mini"}).code == kExitOk);
  CHECK(read_json(tmp / "models/zeroshot-description/provider.json")["bundled_encoder"] == true);
  CHECK(run({"--out", out, "evaluate"}).code == kExitOk);
  CHECK(read_json(tmp / "eval/comparison.json").size() == 3);

  testing::TempDir other;
  auto no_enc = run(with({"--out", other.path().string(), "train", "--family", "finetuned"}, taxonomy_args()));
  CHECK(no_enc.code == kExitUserError);
}
