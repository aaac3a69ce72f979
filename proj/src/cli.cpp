#include "scope3/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <new>
#include <optional>

#include "scope3/classifiers.hpp"
#include "scope3/common.hpp"
#include "scope3/corpus.hpp"
#include "scope3/csv.hpp"
#include "scope3/emission.hpp"
#include "scope3/evaluation.hpp"
#include "scope3/taxonomy.hpp"
#include "scope3/text.hpp"

namespace scope3 {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

json default_config() {
  return {
      {"seed", 42},
      {"out", "scope3-run"},
      {"taxonomy", {{"classes", nullptr}, {"factors", nullptr}, {"naics", nullptr}, {"factor_kind", kDefaultFactorKind}}},
      {"corpus", {{"path", nullptr}, {"synthetic_per_class", 40}, {"ratios", {0.7, 0.2, 0.1}}, {"subsample", 1.0}}},
      {"pretrain",
       {{"dim", 384},
        {"buckets", 4096},
        {"epochs", 30},
        {"learning_rate", 1e-3},
        {"batch_size", 32},
        {"max_length", 64},
        {"include_train", false}}},
      {"train",
       {{"family", "classical"},
        {"name", nullptr},
        {"features", "tfidf"},
        {"word_vectors", nullptr},
        {"encoder", nullptr},
        {"n_trees", 100},
        {"max_features", 0},
        {"min_samples_leaf", 1},
        {"max_depth", 0},
        {"provider", "hashing:512"},
        {"mode", "description"},
        {"max_length", 512},
        {"learning_rate", 5e-5},
        {"epochs", 20},
        {"batch_size", 32},
        {"early_stopping_patience", 5}}},
      {"evaluate", {{"split", "test"}, {"low_performance_threshold", kDefaultLowPerformanceThreshold}}},
      {"estimate", {{"ledger", nullptr}, {"review_threshold", kDefaultReviewThreshold}}},
  };
}

// Keys holding file paths; relative values in a config file are taken
// relative to that file.
const std::vector<json::json_pointer>& path_keys() {
  static const std::vector<json::json_pointer> keys = {
      json::json_pointer("/out"),          json::json_pointer("/taxonomy/classes"),
      json::json_pointer("/taxonomy/factors"), json::json_pointer("/taxonomy/naics"),
      json::json_pointer("/corpus/path"),  json::json_pointer("/train/word_vectors"),
      json::json_pointer("/train/encoder"), json::json_pointer("/estimate/ledger"),
  };
  return keys;
}

json read_config_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw InputError("--config: file not found: " + path.string());
  json j;
  try {
    j = json::parse(csv::read_text(path));
  } catch (const json::exception& e) {
    throw ParseError("--config: " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError("--config: " + path.string() + ": expected a JSON object");
  fs::path base = fs::absolute(path).parent_path();
  for (const auto& key : path_keys()) {
    if (j.contains(key) && j[key].is_string()) {
      fs::path p = j[key].get<std::string>();
      if (p.is_relative()) j[key] = (base / p).lexically_normal().string();
    }
  }
  return j;
}

// Flag values; unset optionals leave the config untouched.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  std::optional<std::string> classes, factors, naics, factor_kind;
  std::optional<std::string> corpus;
  std::optional<int> per_class;
  std::optional<std::vector<double>> ratios;
  std::optional<double> subsample;

  std::optional<int> pretrain_dim, pretrain_epochs;
  bool include_train = false;

  std::optional<std::string> family, name, features, word_vectors, encoder, provider, mode;
  std::optional<int> n_trees, max_length, epochs, batch_size, patience;
  std::optional<double> learning_rate;

  std::vector<std::string> models;
  std::optional<std::string> split;
  std::optional<double> low_threshold;

  std::vector<std::string> texts;
  std::optional<std::string> input;
  int top_k = 3;

  std::optional<std::string> ledger;
  std::optional<double> review_threshold;
};

template <typename T>
void set_if(json& cfg, const char* pointer, const std::optional<T>& value) {
  if (value) cfg[json::json_pointer(pointer)] = *value;
}

void set_path_if(json& cfg, const char* pointer, const std::optional<std::string>& value) {
  if (value) cfg[json::json_pointer(pointer)] = fs::absolute(*value).lexically_normal().string();
}

// Like merge_patch, but null is a value here, not a deletion.
void overlay(json& base, const json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
      overlay(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

json resolve_config(const Flags& f) {
  json cfg = default_config();
  fs::path out = f.out ? fs::path(*f.out) : fs::path();
  if (f.config) {
    overlay(cfg, read_config_file(*f.config));
  } else {
    fs::path guess = (f.out ? out : fs::path(cfg["out"].get<std::string>())) / "config.json";
    if (fs::is_regular_file(guess)) overlay(cfg, read_config_file(guess));
  }
  set_if(cfg, "/seed", f.seed);
  set_path_if(cfg, "/out", f.out);
  set_path_if(cfg, "/taxonomy/classes", f.classes);
  set_path_if(cfg, "/taxonomy/factors", f.factors);
  set_path_if(cfg, "/taxonomy/naics", f.naics);
  set_if(cfg, "/taxonomy/factor_kind", f.factor_kind);
  set_path_if(cfg, "/corpus/path", f.corpus);
  set_if(cfg, "/corpus/synthetic_per_class", f.per_class);
  set_if(cfg, "/corpus/ratios", f.ratios);
  set_if(cfg, "/corpus/subsample", f.subsample);
  set_if(cfg, "/pretrain/dim", f.pretrain_dim);
  set_if(cfg, "/pretrain/epochs", f.pretrain_epochs);
  if (f.include_train) cfg["pretrain"]["include_train"] = true;
  set_if(cfg, "/train/family", f.family);
  set_if(cfg, "/train/name", f.name);
  set_if(cfg, "/train/features", f.features);
  set_path_if(cfg, "/train/word_vectors", f.word_vectors);
  set_if(cfg, "/train/provider", f.provider);
  set_if(cfg, "/train/mode", f.mode);
  set_if(cfg, "/train/n_trees", f.n_trees);
  set_if(cfg, "/train/max_length", f.max_length);
  set_if(cfg, "/train/learning_rate", f.learning_rate);
  set_if(cfg, "/train/epochs", f.epochs);
  set_if(cfg, "/train/batch_size", f.batch_size);
  set_if(cfg, "/train/early_stopping_patience", f.patience);
  if (f.encoder) {
    std::string e = *f.encoder;
    cfg["train"]["encoder"] = e.rfind("mini:", 0) == 0 ? e : fs::absolute(e).lexically_normal().string();
  }
  set_if(cfg, "/evaluate/split", f.split);
  set_if(cfg, "/evaluate/low_performance_threshold", f.low_threshold);
  set_path_if(cfg, "/estimate/ledger", f.ledger);
  set_if(cfg, "/estimate/review_threshold", f.review_threshold);
  cfg["out"] = fs::absolute(cfg["out"].get<std::string>()).lexically_normal().string();
  return cfg;
}

template <typename T>
T get(const json& cfg, const char* pointer) {
  const json& v = cfg.at(json::json_pointer(pointer));
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string("config value ") + pointer + " has the wrong type: " + v.dump());
  }
}

std::optional<fs::path> optional_path(const json& cfg, const char* pointer) {
  const json& v = cfg.at(json::json_pointer(pointer));
  if (v.is_null()) return std::nullopt;
  return fs::path(v.get<std::string>());
}

fs::path required_file(const json& cfg, const char* pointer, const std::string& flag) {
  auto p = optional_path(cfg, pointer);
  if (!p) {
    throw InputError("missing " + flag + " (or " + std::string(pointer + 1) + " in --config)");
  }
  if (!fs::is_regular_file(*p)) throw InputError(flag + ": file not found: " + p->string());
  return *p;
}

// --------------------------------------------------------------------------

struct Run {
  json cfg;
  fs::path out;
  std::ostream& log;

  fs::path data_dir() const { return out / "data"; }
  fs::path models_dir() const { return out / "models"; }
  fs::path encoder_path() const {
    if (auto p = optional_path(cfg, "/train/encoder")) {
      std::string s = p->string();
      return s.rfind("mini:", 0) == 0 ? fs::path(s.substr(5)) : *p;
    }
    return out / "encoder" / "mini.ckpt";
  }
  std::uint64_t seed() const { return get<std::uint64_t>(cfg, "/seed"); }

  Taxonomy taxonomy() const {
    auto classes = required_file(cfg, "/taxonomy/classes", "--classes");
    auto factors = required_file(cfg, "/taxonomy/factors", "--factors");
    auto tax = load_taxonomy(classes, factors, get<std::string>(cfg, "/taxonomy/factor_kind"));
    if (auto naics = optional_path(cfg, "/taxonomy/naics")) {
      if (!fs::is_regular_file(*naics)) throw InputError("--naics: file not found: " + naics->string());
      tax = tax.with_descriptions(load_naics_descriptions(*naics));
    }
    return tax;
  }

  std::vector<LabeledExample> split_part(const std::string& part, const Taxonomy& tax) const {
    fs::path p = data_dir() / (part + ".csv");
    if (!fs::is_regular_file(p)) throw InputError("no " + part + " split at " + p.string() + " (run `scope3 prepare` first)");
    return load_labeled(p, tax);
  }

  std::unique_ptr<ClassifierModel> model(const std::string& ref) const {
    fs::path p = ref;
    if (!fs::exists(p) && p.is_relative() && fs::exists(models_dir() / p)) p = models_dir() / p;
    if (!fs::is_directory(p)) throw InputError("--model: model directory not found: " + ref);
    return load_model(p);
  }

  void write(const fs::path& path, const std::string& content) const { csv::write_text(path, content); }
};

std::string model_name(const json& cfg) {
  if (auto n = cfg.at("train").at("name"); n.is_string()) return n.get<std::string>();
  auto family = parse_family(get<std::string>(cfg, "/train/family"));
  switch (family) {
    case Family::classical:
      return "classical-" + std::string(to_string(parse_feature_kind(get<std::string>(cfg, "/train/features"))));
    case Family::zeroshot:
      return "zeroshot-" + std::string(to_string(parse_text_mode(get<std::string>(cfg, "/train/mode"))));
    case Family::finetuned:
      return "finetuned";
  }
  return "model";
}

// --------------------------------------------------------------------------

int cmd_prepare(const Run& run) {
  Taxonomy tax = run.taxonomy();
  for (const auto& w : tax.warnings()) run.log << "warning: " << w << "\n";

  std::vector<LabeledExample> corpus;
  std::vector<std::string> warnings;
  if (auto path = optional_path(run.cfg, "/corpus/path")) {
    if (!fs::is_regular_file(*path)) throw InputError("--corpus: file not found: " + path->string());
    corpus = load_labeled(*path, tax, &warnings);
  } else {
    corpus = synth_generate(tax, get<int>(run.cfg, "/corpus/synthetic_per_class"), run.seed());
  }
  for (const auto& w : warnings) run.log << "warning: " << w << "\n";

  auto ratios_v = get<std::vector<double>>(run.cfg, "/corpus/ratios");
  if (ratios_v.size() != 3) throw RangeError("--ratios needs exactly three values (train validation test)");
  SplitRatios ratios{ratios_v[0], ratios_v[1], ratios_v[2]};
  DatasetSplit parts = split(corpus, ratios, run.seed());
  double fraction = get<double>(run.cfg, "/corpus/subsample");
  if (fraction != 1.0) parts = subsample(parts, fraction, run.seed());

  run.write(run.data_dir() / "corpus.csv", serialize_labeled(corpus));
  run.write(run.data_dir() / "train.csv", serialize_labeled(parts.train));
  run.write(run.data_dir() / "validation.csv", serialize_labeled(parts.validation));
  run.write(run.data_dir() / "test.csv", serialize_labeled(parts.test));
  json manifest = split_manifest(parts);
  manifest["subsample"] = fraction;
  manifest["taxonomy_hash"] = tax.fingerprint();
  run.write(run.data_dir() / "split_manifest.json", manifest.dump(2) + "\n");
  run.write(run.out / "config.json", run.cfg.dump(2) + "\n");

  run.log << "prepared " << corpus.size() << " examples over " << tax.class_count() << " classes: train "
          << parts.train.size() << ", validation " << parts.validation.size() << ", test " << parts.test.size()
          << " -> " << run.data_dir().string() << "\n";
  return kExitOk;
}

int cmd_pretrain(const Run& run) {
  Taxonomy tax = run.taxonomy();
  if (!tax.descriptions_composed()) throw InputError("pretraining needs NAICS descriptions: pass --naics");
  std::vector<std::string> texts;
  for (const auto& cls : tax.classes()) {
    texts.push_back(cls.title);
    for (auto& s : split_sentences(cls.description)) texts.push_back(std::move(s));
  }
  if (get<bool>(run.cfg, "/pretrain/include_train")) {
    for (const auto& e : run.split_part("train", tax)) texts.push_back(e.text);
  }
  PretrainConfig pc;
  pc.dim = get<int>(run.cfg, "/pretrain/dim");
  pc.buckets = get<int>(run.cfg, "/pretrain/buckets");
  pc.epochs = get<int>(run.cfg, "/pretrain/epochs");
  pc.learning_rate = get<double>(run.cfg, "/pretrain/learning_rate");
  pc.batch_size = get<int>(run.cfg, "/pretrain/batch_size");
  pc.max_length = get<int>(run.cfg, "/pretrain/max_length");
  pc.seed = run.seed();
  std::vector<EpochLog> log;
  MiniEncoder enc = pretrain_encoder(texts, pc, &log);

  fs::path ckpt = run.out / "encoder" / "mini.ckpt";
  save_encoder(enc, ckpt);
  run.write(ckpt.parent_path() / "word_vectors.txt", enc.word_vectors(ckpt.string()).to_text());
  run.write(ckpt.parent_path() / "pretrain_log.csv", epoch_log_csv(log));
  run.log << "pretrained encoder (dim " << pc.dim << ", " << enc.words().size() << " words, " << texts.size()
          << " texts, final loss " << format_double(log.back().train_loss) << ") -> " << ckpt.string() << "\n";
  return kExitOk;
}

int cmd_train(const Run& run) {
  Taxonomy tax = run.taxonomy();
  auto family = parse_family(get<std::string>(run.cfg, "/train/family"));
  std::string name = model_name(run.cfg);
  fs::path dir = run.models_dir() / name;
  std::unique_ptr<ClassifierModel> model;
  std::vector<EpochLog> log;

  switch (family) {
    case Family::zeroshot: {
      std::string spec = get<std::string>(run.cfg, "/train/provider");
      if (spec == "mini") spec = "mini:" + run.encoder_path().string();
      auto mode = parse_text_mode(get<std::string>(run.cfg, "/train/mode"));
      if (mode == TextMode::description && !tax.descriptions_composed()) {
        throw InputError("description mode needs NAICS descriptions: pass --naics");
      }
      model = zeroshot_build(open_sentence_encoder(spec), tax, mode);
      break;
    }
    case Family::classical: {
      ClassicalConfig cc;
      cc.features = parse_feature_kind(get<std::string>(run.cfg, "/train/features"));
      cc.forest.n_trees = get<int>(run.cfg, "/train/n_trees");
      cc.forest.max_features = get<int>(run.cfg, "/train/max_features");
      cc.forest.min_samples_leaf = get<int>(run.cfg, "/train/min_samples_leaf");
      cc.forest.max_depth = get<int>(run.cfg, "/train/max_depth");
      cc.forest.seed = run.seed();
      std::shared_ptr<const WordVectors> words;
      if (cc.features == FeatureKind::word_average) {
        if (auto wv = optional_path(run.cfg, "/train/word_vectors")) {
          if (!fs::is_regular_file(*wv)) throw InputError("--word-vectors: file not found: " + wv->string());
          words = std::make_shared<const WordVectors>(WordVectors::load(*wv));
        } else {
          fs::path ckpt = run.encoder_path();
          if (!fs::is_regular_file(ckpt)) {
            throw InputError("word_average features need --word-vectors or a pretrained encoder at " + ckpt.string());
          }
          words = std::make_shared<const WordVectors>(load_encoder(ckpt).word_vectors(ckpt.string()));
        }
      }
      model = train_classical(run.split_part("train", tax), tax, cc, std::move(words));
      break;
    }
    case Family::finetuned: {
      fs::path ckpt = run.encoder_path();
      if (!fs::is_regular_file(ckpt)) {
        throw InputError("no encoder checkpoint at " + ckpt.string() + " (run `scope3 pretrain` or pass --encoder)");
      }
      TrainingConfig tc;
      tc.max_length = get<int>(run.cfg, "/train/max_length");
      tc.learning_rate = get<double>(run.cfg, "/train/learning_rate");
      tc.epochs = get<int>(run.cfg, "/train/epochs");
      tc.batch_size = get<int>(run.cfg, "/train/batch_size");
      tc.early_stopping_patience = get<int>(run.cfg, "/train/early_stopping_patience");
      tc.seed = run.seed();
      if (!tc.on_grid()) run.log << "warning: max_length/learning_rate outside the explored grid\n";
      auto result = finetune("mini:" + ckpt.string(), run.split_part("train", tax), run.split_part("validation", tax),
                             tax, tc);
      model = std::move(result.model);
      log = std::move(result.log);
      break;
    }
  }

  model->save(dir);
  if (!log.empty()) {
    run.write(dir / "epoch_log.csv", epoch_log_csv(log));
    run.write(dir / "learning_curve.svg", learning_curve_svg(log, "Learning curve: " + name));
    const auto& extra = model->metadata().extra;
    run.log << "best epoch " << extra.at("best_epoch").get<int>() << " of " << log.size()
            << ", validation loss " << format_double(extra.at("best_validation_loss").get<double>()) << "\n";
  }
  run.log << "trained " << to_string(family) << " model -> " << dir.string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const Run& run, std::vector<std::string> refs) {
  Taxonomy tax = run.taxonomy();
  std::string part = get<std::string>(run.cfg, "/evaluate/split");
  if (part != "test" && part != "validation" && part != "train") {
    throw InputError("--split must be test, validation or train");
  }
  double threshold = get<double>(run.cfg, "/evaluate/low_performance_threshold");
  auto examples = run.split_part(part, tax);

  if (refs.empty()) {
    if (fs::is_directory(run.models_dir())) {
      for (const auto& entry : fs::directory_iterator(run.models_dir())) {
        if (fs::is_regular_file(entry.path() / "manifest.json")) refs.push_back(entry.path().string());
      }
    }
    std::sort(refs.begin(), refs.end());
    if (refs.empty()) throw InputError("no models to evaluate: pass --model or run `scope3 train` first");
  }

  std::map<std::string, EvalReport> reports;
  fs::path eval_dir = run.out / "eval";
  for (const auto& ref : refs) {
    auto model = run.model(ref);
    std::string name = fs::path(ref).filename().string();
    if (name.empty()) name = fs::path(ref).parent_path().filename().string();
    if (model->metadata().taxonomy_hash != tax.fingerprint()) {
      run.log << "warning: model " << name << " was built against a different taxonomy\n";
    }
    EvalReport report = evaluate(*model, examples);
    json j = to_json(report);
    j["model"] = name;
    j["family"] = to_string(model->family());
    j["split"] = part;
    j["low_performance_threshold"] = threshold;
    j["low_performance"] = flag_low_performance(report, threshold);
    run.write(eval_dir / (name + ".json"), j.dump(2) + "\n");
    run.write(eval_dir / (name + ".txt"), format_report(report));
    reports.emplace(name, std::move(report));
  }
  auto rows = compare(reports);
  run.write(eval_dir / "comparison.json", to_json(rows).dump(2) + "\n");
  std::string table = format_comparison(rows);
  run.write(eval_dir / "comparison.txt", table);
  run.log << table;
  return kExitOk;
}

int cmd_classify(const Run& run, const std::vector<std::string>& refs, const std::vector<std::string>& texts,
                 const std::optional<std::string>& input, int top_k) {
  if (refs.size() != 1) throw InputError("classify needs exactly one --model");
  if (top_k < 1) throw RangeError("--top-k must be positive");
  auto model = run.model(refs.front());

  std::vector<std::string> ids;
  std::vector<std::string> inputs;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    ids.push_back("text-" + std::to_string(i + 1));
    inputs.push_back(texts[i]);
  }
  if (input) {
    if (!fs::is_regular_file(*input)) throw InputError("--input: file not found: " + *input);
    auto tab = csv::read_file(*input);
    auto c_text = tab.require_column("text");
    auto c_id = tab.column("id");
    for (const auto& row : tab.rows) {
      ids.push_back(c_id ? row.fields[*c_id] : "row-" + std::to_string(row.line));
      inputs.push_back(row.fields[c_text]);
    }
  }
  if (inputs.empty()) throw InputError("nothing to classify: pass --text or --input");

  std::string result = "id,text,label,score,top_k\n";
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (normalize(inputs[i]).empty()) throw InputError(ids[i] + ": empty text after normalization");
  }
  auto preds = model->predict_batch(inputs);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<std::string> top;
    for (std::size_t k = 0; k < preds[i].topk.size() && k < static_cast<std::size_t>(top_k); ++k) {
      top.push_back(preds[i].topk[k].label + ":" + format_double(preds[i].topk[k].score));
    }
    result += csv::format_row({ids[i], inputs[i], preds[i].label, format_double(preds[i].score), join(top, "|")});
  }
  if (input) run.write(run.out / "classify" / "predictions.csv", result);
  run.log << result;
  return kExitOk;
}

int cmd_estimate(const Run& run, const std::vector<std::string>& refs) {
  if (refs.size() != 1) throw InputError("estimate needs exactly one --model");
  Taxonomy tax = run.taxonomy();
  fs::path ledger_path = required_file(run.cfg, "/estimate/ledger", "--ledger");
  double threshold = get<double>(run.cfg, "/estimate/review_threshold");
  auto model = run.model(refs.front());
  auto ledger = load_ledger(ledger_path);

  auto outcomes = estimate_ledger(ledger, *model, tax, threshold);
  EmissionReport report = aggregate(outcomes);
  std::size_t flagged = 0;
  for (const auto& o : outcomes) {
    if (const auto* e = std::get_if<LineEstimate>(&o); e && e->review_flag) ++flagged;
  }

  fs::path dir = run.out / "estimate";
  run.write(dir / "report.csv", report_csv(report, tax));
  run.write(dir / "audit.csv", audit_csv(outcomes));
  run.write(dir / "unmapped.csv", unmapped_csv(outcomes));
  run.write(dir / "report.svg", report_chart_svg(report, tax));
  json summary = {{"model", fs::path(refs.front()).filename().string()},
                  {"lines", ledger.size()},
                  {"mapped_lines", report.mapped_lines},
                  {"unmapped", report.unmapped},
                  {"review_flagged", flagged},
                  {"review_threshold", threshold},
                  {"total_spend", report.total_spend},
                  {"total_emission_kg", report.total_emission}};
  run.write(dir / "summary.json", summary.dump(2) + "\n");
  run.log << "estimated " << report.mapped_lines << " of " << ledger.size() << " lines: spend "
          << format_double(report.total_spend) << ", emission " << format_double(report.total_emission)
          << " kg CO2e, " << report.unmapped.size() << " unmapped, " << flagged << " flagged for review -> "
          << dir.string() << "\n";
  return kExitOk;
}

int cmd_report(const Run& run) {
  fs::path comparison = run.out / "eval" / "comparison.txt";
  fs::path emissions = run.out / "estimate" / "report.csv";
  if (!fs::is_regular_file(comparison) && !fs::is_regular_file(emissions)) {
    throw InputError("nothing to report in " + run.out.string() + ": run `scope3 evaluate` or `scope3 estimate` first");
  }
  std::string md = "# Scope 3 run report\n";
  if (fs::is_regular_file(comparison)) {
    md += "\n## Classifier comparison (weighted F1)\n\n```\n" + csv::read_text(comparison) + "```\n";
  }
  if (fs::is_regular_file(emissions)) {
    auto tab = csv::read_file(emissions);
    md += "\n## Spend and emissions by commodity class\n\n";
    md += "| code | title | spend | emission (kg CO2e) | lines |\n|---|---|---:|---:|---:|\n";
    for (const auto& row : tab.rows) md += "| " + join(row.fields, " | ") + " |\n";
    fs::path unmapped = run.out / "estimate" / "unmapped.csv";
    if (fs::is_regular_file(unmapped)) {
      auto u = csv::read_file(unmapped);
      if (!u.rows.empty()) {
        md += "\nUnmapped lines:";
        for (const auto& row : u.rows) md += " " + row.fields[0] + " (" + row.fields[1] + ")";
        md += "\n";
      }
    }
  }
  run.write(run.out / "report.md", md);
  run.log << md;
  return kExitOk;
}

bool is_user_error(const Error& e) {
  return dynamic_cast<const StateError*>(&e) == nullptr && dynamic_cast<const ResourceError*>(&e) == nullptr;
}

std::string one_line(std::string msg) {
  std::replace(msg.begin(), msg.end(), '\n', ' ');
  return msg;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ledger-text classification into EEIO commodity classes and spend-based Scope 3 estimates", "scope3"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON run configuration");
  app.add_option("--seed", f.seed, "Seed for every random step");
  app.add_option("--out", f.out, "Run directory");

  auto taxonomy_flags = [&](CLI::App* sub) {
    sub->add_option("--classes", f.classes, "Commodity classes file");
    sub->add_option("--factors", f.factors, "Emission factors file");
    sub->add_option("--naics", f.naics, "NAICS descriptions file");
    sub->add_option("--factor-kind", f.factor_kind, "Factor variant to use");
  };

  auto* prepare = app.add_subcommand("prepare", "Load or synthesize the labeled corpus and split it");
  taxonomy_flags(prepare);
  prepare->add_option("--corpus", f.corpus, "Labeled corpus (text,label[,id]); synthesized when absent");
  prepare->add_option("--per-class", f.per_class, "Synthetic examples per class");
  prepare->add_option("--ratios", f.ratios, "Train, validation and test fractions")->expected(3);
  prepare->add_option("--subsample", f.subsample, "Keep this fraction of train and validation per class");

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain the miniature encoder on taxonomy text");
  taxonomy_flags(pretrain);
  pretrain->add_option("--dim", f.pretrain_dim, "Embedding dimension");
  pretrain->add_option("--epochs", f.pretrain_epochs, "Pretraining epochs");
  pretrain->add_flag("--include-train", f.include_train, "Also use the unlabeled training texts");

  auto* train = app.add_subcommand("train", "Build or train a classifier");
  taxonomy_flags(train);
  train->add_option("--family", f.family, "zeroshot, classical or finetuned");
  train->add_option("--name", f.name, "Model directory name under <out>/models");
  train->add_option("--features", f.features, "Classical features: tfidf or word_average");
  train->add_option("--word-vectors", f.word_vectors, "word2vec text file for word_average features");
  train->add_option("--encoder", f.encoder, "Encoder checkpoint (default <out>/encoder/mini.ckpt)");
  train->add_option("--provider", f.provider, "Zero-shot sentence encoder: hashing[:dim], mini or mini:<path>");
  train->add_option("--mode", f.mode, "Zero-shot class text: title or description");
  train->add_option("--trees", f.n_trees, "Random forest size");
  train->add_option("--max-length", f.max_length, "Fine-tuning max input pieces");
  train->add_option("--lr", f.learning_rate, "Fine-tuning learning rate");
  train->add_option("--epochs", f.epochs, "Fine-tuning epochs");
  train->add_option("--batch-size", f.batch_size, "Fine-tuning batch size");
  train->add_option("--patience", f.patience, "Early-stopping patience in epochs");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score models on a held-out split");
  taxonomy_flags(evaluate_cmd);
  evaluate_cmd->add_option("--model", f.models, "Model directory (repeatable; default: all under <out>/models)");
  evaluate_cmd->add_option("--split", f.split, "test, validation or train");
  evaluate_cmd->add_option("--low-threshold", f.low_threshold, "Per-class F1 below which a class is flagged");

  auto* classify = app.add_subcommand("classify", "Classify ledger texts");
  classify->add_option("--model", f.models, "Model directory")->required();
  classify->add_option("--text", f.texts, "Text to classify (repeatable)");
  classify->add_option("--input", f.input, "CSV file with a text column");
  classify->add_option("--top-k", f.top_k, "Ranked classes to print");

  auto* estimate = app.add_subcommand("estimate", "Classify a ledger and compute Scope 3 emissions");
  taxonomy_flags(estimate);
  estimate->add_option("--model", f.models, "Model directory")->required();
  estimate->add_option("--ledger", f.ledger, "Ledger file (id,text,amount,currency)");
  estimate->add_option("--threshold", f.review_threshold, "Confidence below which lines are flagged for review");

  auto* report = app.add_subcommand("report", "Summarize evaluation and emission outputs of a run");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "scope3: usage error: " << one_line(e.what()) << "\n";
    return kExitUserError;
  }

  try {
    json cfg = resolve_config(f);
    Run run{cfg, fs::path(cfg["out"].get<std::string>()), out};
    if (*prepare) return cmd_prepare(run);
    if (*pretrain) return cmd_pretrain(run);
    if (*train) {
      try {
        parse_family(get<std::string>(cfg, "/train/family"));
      } catch (const InputError& e) {
        err << "scope3: usage error: --family: " << one_line(e.what()) << "\n";
        return kExitUserError;
      }
      return cmd_train(run);
    }
    if (*evaluate_cmd) return cmd_evaluate(run, f.models);
    if (*classify) return cmd_classify(run, f.models, f.texts, f.input, f.top_k);
    if (*estimate) return cmd_estimate(run, f.models);
    if (*report) return cmd_report(run);
    return kExitUserError;
  } catch (const Error& e) {
    err << "scope3: error: " << one_line(e.what()) << "\n";
    return is_user_error(e) ? kExitUserError : kExitInternalError;
  } catch (const std::bad_alloc&) {
    err << "scope3: internal error: out of memory\n";
    return kExitInternalError;
  } catch (const fs::filesystem_error& e) {
    err << "scope3: error: " << one_line(e.what()) << "\n";
    return kExitUserError;
  } catch (const std::exception& e) {
    err << "scope3: internal error: " << one_line(e.what()) << "\n";
    return kExitInternalError;
  }
}

}  // namespace scope3
