#include "scope3/classifiers.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <new>
#include <numeric>

#include "scope3/common.hpp"
#include "scope3/csv.hpp"
#include "scope3/parallel.hpp"
#include "scope3/text.hpp"

namespace scope3 {

namespace {

constexpr int kManifestVersion = 1;

std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(csv::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { csv::write_text(path, j.dump(2) + "\n"); }

std::vector<std::string> label_codes(const Taxonomy& tax) { return tax.codes(); }

int label_index(const std::vector<std::string>& labels, const std::string& code) {
  auto it = std::find(labels.begin(), labels.end(), code);
  if (it == labels.end()) throw InputError("label '" + code + "' is not in the model's label set");
  return static_cast<int>(it - labels.begin());
}

std::vector<EncodedExample> encode_examples(const MiniEncoder& enc, std::span<const LabeledExample> examples,
                                            const std::vector<std::string>& labels, int max_length) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back({enc.pieces(e.text, max_length), label_index(labels, e.label)});
  return out;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  auto rows = j.at("rows").get<Eigen::Index>();
  auto cols = j.at("cols").get<Eigen::Index>();
  auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ParseError("matrix: size mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

}  // namespace

Family parse_family(std::string_view name) {
  if (name == "zeroshot") return Family::zeroshot;
  if (name == "classical") return Family::classical;
  if (name == "finetuned") return Family::finetuned;
  throw InputError("unknown classifier family '" + std::string(name) + "' (expected zeroshot, classical or finetuned)");
}

std::string_view to_string(Family family) {
  switch (family) {
    case Family::zeroshot:
      return "zeroshot";
    case Family::classical:
      return "classical";
    case Family::finetuned:
      return "finetuned";
  }
  return "unknown";
}

FeatureKind parse_feature_kind(std::string_view name) {
  if (name == "tfidf") return FeatureKind::tfidf;
  if (name == "word_average" || name == "word2vec") return FeatureKind::word_average;
  throw InputError("unknown feature kind '" + std::string(name) + "' (expected tfidf or word_average)");
}

std::string_view to_string(FeatureKind kind) { return kind == FeatureKind::tfidf ? "tfidf" : "word_average"; }

Prediction rank_scores(std::span<const std::string> labels, const Eigen::VectorXd& scores, ScoreKind kind,
                       std::size_t k) {
  if (labels.empty() || static_cast<Eigen::Index>(labels.size()) != scores.size()) {
    throw InputError("rank_scores: label/score size mismatch");
  }
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    double sa = scores(static_cast<Eigen::Index>(a));
    double sb = scores(static_cast<Eigen::Index>(b));
    if (sa != sb) return sa > sb;
    return labels[a] < labels[b];
  });
  if (k == 0 || k > order.size()) k = order.size();
  Prediction p;
  p.kind = kind;
  for (std::size_t i = 0; i < k; ++i) p.topk.push_back({labels[order[i]], scores(static_cast<Eigen::Index>(order[i]))});
  p.label = p.topk.front().label;
  p.score = p.topk.front().score;
  return p;
}

// ---------------------------------------------------------------------------

Prediction ClassifierModel::predict(std::string_view text) const {
  std::string normalized = normalize(text);
  if (normalized.empty()) throw InputError("empty text after normalization");
  return predict_normalized(normalized);
}

std::vector<Prediction> ClassifierModel::predict_batch(std::span<const std::string> texts) const {
  std::vector<Prediction> out(texts.size());
  parallel_for(texts.size(), [&](std::size_t i) { out[i] = predict(texts[i]); });
  return out;
}

void ClassifierModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["format"] = "scope3.model";
  j["version"] = kManifestVersion;
  j["family"] = to_string(metadata_.family);
  j["labels"] = labels_;
  j["config"] = metadata_.config;
  j["seed"] = metadata_.seed;
  j["data_fingerprint"] = metadata_.data_fingerprint;
  j["taxonomy_hash"] = metadata_.taxonomy_hash;
  j["extra"] = metadata_.extra;
  j["metadata"] = {{"created_at", utc_timestamp()}};
  save_weights(dir);
  write_json(dir / "manifest.json", j);
}

std::unique_ptr<ClassifierModel> load_model(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InputError("model directory not found: " + dir.string());
  auto j = read_json(dir / "manifest.json");
  if (j.value("format", "") != "scope3.model" || j.value("version", 0) != kManifestVersion) {
    throw ParseError((dir / "manifest.json").string() + ": unsupported model format or version");
  }
  ModelMetadata meta;
  meta.family = parse_family(j.at("family").get<std::string>());
  meta.config = j.at("config");
  meta.seed = j.at("seed").get<std::uint64_t>();
  meta.data_fingerprint = j.at("data_fingerprint").get<std::string>();
  meta.taxonomy_hash = j.at("taxonomy_hash").get<std::string>();
  meta.extra = j.value("extra", nlohmann::json::object());
  auto labels = j.at("labels").get<std::vector<std::string>>();

  switch (meta.family) {
    case Family::zeroshot: {
      auto pj = read_json(dir / "provider.json");
      std::string spec = pj.at("provider").get<std::string>();
      std::shared_ptr<const SentenceEncoder> provider;
      if (pj.value("bundled_encoder", false)) {
        auto enc = std::make_shared<const MiniEncoder>(load_encoder(dir / "encoder.bin"));
        provider = std::make_shared<MiniEncoderProvider>(std::move(enc), spec.substr(5));
      } else {
        provider = open_sentence_encoder(spec);
      }
      auto vectors = matrix_from_json(read_json(dir / "class_vectors.json"));
      return std::make_unique<ZeroShotModel>(std::move(provider), parse_text_mode(pj.at("mode").get<std::string>()),
                                             std::move(labels), std::move(vectors), std::move(meta));
    }
    case Family::classical: {
      auto pj = read_json(dir / "pipeline.json");
      auto kind = parse_feature_kind(pj.at("features").get<std::string>());
      auto forest = RandomForest::from_text(csv::read_text(dir / "forest.txt"));
      if (kind == FeatureKind::tfidf) {
        return std::make_unique<ClassicalModel>(FeaturePipeline(TfidfModel::from_json(pj.at("tfidf"))),
                                                std::move(forest), std::move(labels), std::move(meta));
      }
      auto words = std::make_shared<const WordVectors>(WordVectors::load(dir / "word_vectors.txt"));
      return std::make_unique<ClassicalModel>(FeaturePipeline(std::move(words)), std::move(forest), std::move(labels),
                                              std::move(meta));
    }
    case Family::finetuned: {
      auto enc = std::make_shared<const MiniEncoder>(load_encoder(dir / "encoder.bin"));
      auto head = load_head(dir / "head.bin");
      int max_length = meta.config.at("max_length").get<int>();
      return std::make_unique<FinetunedModel>(std::move(enc), std::move(head), max_length, std::move(labels),
                                              std::move(meta));
    }
  }
  throw ParseError("unknown model family");
}

// ---------------------------------------------------------------------------

ZeroShotModel::ZeroShotModel(std::shared_ptr<const SentenceEncoder> provider, TextMode mode,
                             std::vector<std::string> labels, Eigen::MatrixXd class_vectors, ModelMetadata metadata)
    : ClassifierModel(std::move(labels), std::move(metadata)),
      provider_(std::move(provider)),
      mode_(mode),
      class_vectors_(std::move(class_vectors)) {
  if (!provider_) throw ProviderError("zero-shot model needs a provider");
  if (class_vectors_.cols() != static_cast<Eigen::Index>(labels_.size()) ||
      class_vectors_.rows() != provider_->dimension()) {
    throw ValidationError("zero-shot model: class vector shape does not match labels and provider");
  }
  metadata_.family = Family::zeroshot;
}

Prediction ZeroShotModel::predict_embedding(const Eigen::VectorXd& embedding) const {
  if (!(embedding.norm() > 0.0)) throw DomainError("zero-shot: degenerate input (zero embedding)");
  Eigen::VectorXd scores(class_vectors_.cols());
  for (Eigen::Index c = 0; c < class_vectors_.cols(); ++c) {
    scores(c) = cosine_similarity(embedding, class_vectors_.col(c));
  }
  return rank_scores(labels_, scores, ScoreKind::similarity);
}

Prediction ZeroShotModel::predict_normalized(const std::string& text) const {
  return predict_embedding(embed_sentence(*provider_, text));
}

void ZeroShotModel::save_weights(const std::filesystem::path& dir) const {
  nlohmann::json pj = {{"provider", provider_->id()}, {"mode", to_string(mode_)}, {"bundled_encoder", false}};
  if (const auto* mini = dynamic_cast<const MiniEncoderProvider*>(provider_.get())) {
    save_encoder(mini->encoder(), dir / "encoder.bin");
    pj["bundled_encoder"] = true;
  }
  write_json(dir / "provider.json", pj);
  write_json(dir / "class_vectors.json", matrix_to_json(class_vectors_));
}

std::unique_ptr<ZeroShotModel> zeroshot_build(std::shared_ptr<const SentenceEncoder> provider, const Taxonomy& tax,
                                              TextMode mode) {
  if (!provider) throw ProviderError("zero-shot build needs a provider");
  if (tax.class_count() == 0) throw InputError("zero-shot build needs a non-empty taxonomy");
  Eigen::MatrixXd vectors(provider->dimension(), static_cast<Eigen::Index>(tax.class_count()));
  for (std::size_t c = 0; c < tax.class_count(); ++c) {
    const auto& cls = tax.classes()[c];
    const std::string& text = class_text(cls, mode);
    FeatureVector v;
    try {
      v = embed_sentence(*provider, text, cls.code);
    } catch (const Error& e) {
      throw ProviderError("zero-shot build failed for class " + cls.code + ": " + e.what());
    }
    if (!(v.norm() > 0.0)) throw ProviderError("zero-shot build: class " + cls.code + " embeds to a zero vector");
    vectors.col(static_cast<Eigen::Index>(c)) = v;
  }
  ModelMetadata meta;
  meta.family = Family::zeroshot;
  meta.config = {{"provider", provider->id()}, {"mode", to_string(mode)}};
  meta.taxonomy_hash = tax.fingerprint();
  return std::make_unique<ZeroShotModel>(std::move(provider), mode, label_codes(tax), std::move(vectors),
                                         std::move(meta));
}

// ---------------------------------------------------------------------------

std::size_t FeaturePipeline::dimension() const {
  return kind() == FeatureKind::tfidf ? tfidf().dimension() : static_cast<std::size_t>(word_vectors().dimension());
}

FeatureVector FeaturePipeline::transform(std::string_view text) const {
  if (kind() == FeatureKind::tfidf) return tfidf().transform(text);
  return average_word_embeddings(word_vectors(), text).values;
}

ClassicalModel::ClassicalModel(FeaturePipeline pipeline, RandomForest forest, std::vector<std::string> labels,
                               ModelMetadata metadata)
    : ClassifierModel(std::move(labels), std::move(metadata)), pipeline_(std::move(pipeline)), forest_(std::move(forest)) {
  if (forest_.n_classes() != static_cast<int>(labels_.size()) ||
      static_cast<std::size_t>(forest_.n_features()) != pipeline_.dimension()) {
    throw ValidationError("classical model: forest shape does not match labels and features");
  }
  metadata_.family = Family::classical;
}

Prediction ClassicalModel::predict_normalized(const std::string& text) const {
  return rank_scores(labels_, forest_.predict_proba(pipeline_.transform(text)), ScoreKind::probability);
}

void ClassicalModel::save_weights(const std::filesystem::path& dir) const {
  nlohmann::json pj = {{"features", to_string(pipeline_.kind())}};
  if (pipeline_.kind() == FeatureKind::tfidf) {
    pj["tfidf"] = pipeline_.tfidf().to_json();
  } else {
    csv::write_text(dir / "word_vectors.txt", pipeline_.word_vectors().to_text());
  }
  write_json(dir / "pipeline.json", pj);
  csv::write_text(dir / "forest.txt", forest_.to_text());
}

namespace {

std::unique_ptr<ClassicalModel> fit_classical(FeaturePipeline pipeline, std::span<const FeatureVector> features,
                                              std::span<const std::string> labels, const Taxonomy& tax,
                                              const ForestConfig& config, std::string fingerprint) {
  if (features.size() != labels.size()) throw InputError("classical_train: features and labels differ in length");
  if (features.empty()) throw InputError("classical_train: empty training set");
  auto codes = label_codes(tax);
  std::vector<int> y;
  y.reserve(labels.size());
  for (const auto& l : labels) y.push_back(label_index(codes, l));
  if (std::all_of(y.begin(), y.end(), [&](int v) { return v == y.front(); })) {
    throw InputError("classical_train: training set has a single class");
  }
  auto dim = static_cast<Eigen::Index>(pipeline.dimension());
  Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != dim) throw InputError("classical_train: feature dimension mismatch");
    x.col(static_cast<Eigen::Index>(i)) = features[i];
  }
  auto forest = RandomForest::fit(x, y, static_cast<int>(codes.size()), config);

  ModelMetadata meta;
  meta.family = Family::classical;
  meta.config = {{"features", to_string(pipeline.kind())},
                 {"n_trees", config.n_trees},
                 {"max_features", config.max_features},
                 {"min_samples_leaf", config.min_samples_leaf},
                 {"max_depth", config.max_depth},
                 {"bootstrap", config.bootstrap}};
  if (pipeline.kind() == FeatureKind::word_average) meta.config["word_vectors"] = pipeline.word_vectors().id();
  meta.seed = config.seed;
  meta.data_fingerprint = std::move(fingerprint);
  meta.taxonomy_hash = tax.fingerprint();
  return std::make_unique<ClassicalModel>(std::move(pipeline), std::move(forest), std::move(codes), std::move(meta));
}

}  // namespace

std::unique_ptr<ClassicalModel> classical_train(FeaturePipeline pipeline, std::span<const FeatureVector> features,
                                                std::span<const std::string> labels, const Taxonomy& tax,
                                                const ForestConfig& config) {
  return fit_classical(std::move(pipeline), features, labels, tax, config, {});
}

std::unique_ptr<ClassicalModel> train_classical(std::span<const LabeledExample> train, const Taxonomy& tax,
                                                const ClassicalConfig& config,
                                                std::shared_ptr<const WordVectors> words) {
  std::vector<std::string> texts;
  std::vector<std::string> labels;
  for (const auto& e : train) {
    texts.push_back(e.text);
    labels.push_back(e.label);
  }
  std::optional<FeaturePipeline> pipeline;
  if (config.features == FeatureKind::tfidf) {
    pipeline.emplace(fit_tfidf(texts));
  } else {
    if (!words) throw InputError("word_average features need a word-vector provider");
    pipeline.emplace(std::move(words));
  }
  std::vector<FeatureVector> features(texts.size());
  parallel_for(texts.size(), [&](std::size_t i) { features[i] = pipeline->transform(texts[i]); });
  return fit_classical(std::move(*pipeline), features, labels, tax, config.forest,
                       data_fingerprint(std::vector<LabeledExample>(train.begin(), train.end())));
}

// ---------------------------------------------------------------------------

nlohmann::json TrainingConfig::to_json() const {
  return {{"max_length", max_length},
          {"learning_rate", learning_rate},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"early_stopping_patience", early_stopping_patience}};
}

bool TrainingConfig::on_grid() const {
  bool length_ok = max_length == 64 || max_length == 128 || max_length == 256 || max_length == 512;
  bool lr_ok = learning_rate == 5e-5 || learning_rate == 5e-6;
  return length_ok && lr_ok;
}

FinetunedModel::FinetunedModel(std::shared_ptr<const MiniEncoder> encoder, LinearHead head, int max_length,
                               std::vector<std::string> labels, ModelMetadata metadata)
    : ClassifierModel(std::move(labels), std::move(metadata)),
      encoder_(std::move(encoder)),
      head_(std::move(head)),
      max_length_(max_length) {
  if (head_.weight.rows() != static_cast<Eigen::Index>(labels_.size()) ||
      head_.weight.cols() != encoder_->dimension()) {
    throw ValidationError("fine-tuned model: head shape does not match labels and encoder");
  }
  metadata_.family = Family::finetuned;
}

double FinetunedModel::loss(std::span<const LabeledExample> examples) const {
  auto encoded = encode_examples(*encoder_, examples, labels_, max_length_);
  return mean_classification_loss(*encoder_, head_, encoded);
}

Prediction FinetunedModel::predict_normalized(const std::string& text) const {
  auto pieces = encoder_->pieces(text, max_length_);
  return rank_scores(labels_, classify_pieces(*encoder_, head_, pieces), ScoreKind::probability);
}

void FinetunedModel::save_weights(const std::filesystem::path& dir) const {
  save_encoder(*encoder_, dir / "encoder.bin");
  save_head(head_, dir / "head.bin");
}

FinetuneOutput finetune(std::string_view encoder_id, std::span<const LabeledExample> train,
                        std::span<const LabeledExample> validation, const Taxonomy& tax,
                        const TrainingConfig& config) {
  if (encoder_id.substr(0, 5) != "mini:" || encoder_id.size() <= 5) {
    throw ProviderError("unresolvable encoder id '" + std::string(encoder_id) +
                        "' (fine-tuning needs mini:<checkpoint>)");
  }
  try {
    MiniEncoder pretrained = load_encoder(std::string(encoder_id.substr(5)));
    auto labels = label_codes(tax);
    auto train_enc = encode_examples(pretrained, train, labels, config.max_length);
    auto val_enc = encode_examples(pretrained, validation, labels, config.max_length);

    FinetuneOptions options;
    options.max_length = config.max_length;
    options.learning_rate = config.learning_rate;
    options.epochs = config.epochs;
    options.batch_size = config.batch_size;
    options.early_stopping_patience = config.early_stopping_patience;
    options.seed = config.seed;
    auto result = finetune_encoder(pretrained, static_cast<int>(labels.size()), train_enc, val_enc, options);

    ModelMetadata meta;
    meta.family = Family::finetuned;
    meta.config = config.to_json();
    meta.config["encoder_id"] = std::string(encoder_id);
    meta.seed = config.seed;
    std::vector<LabeledExample> all(train.begin(), train.end());
    all.insert(all.end(), validation.begin(), validation.end());
    meta.data_fingerprint = data_fingerprint(all);
    meta.taxonomy_hash = tax.fingerprint();
    meta.extra = {{"best_epoch", result.best_epoch},
                  {"best_validation_loss", result.best_validation_loss},
                  {"epochs_run", result.log.size()},
                  {"on_grid", config.on_grid()}};

    FinetuneOutput out;
    out.model = std::make_unique<FinetunedModel>(std::make_shared<const MiniEncoder>(std::move(result.encoder)),
                                                 std::move(result.head), config.max_length, std::move(labels),
                                                 std::move(meta));
    out.log = std::move(result.log);
    return out;
  } catch (const std::bad_alloc&) {
    throw ResourceError("out of memory while fine-tuning with config " + config.to_json().dump());
  }
}

std::string epoch_log_csv(std::span<const EpochLog> log) {
  std::string out = "epoch,train_loss,validation_loss\n";
  for (const auto& e : log) {
    out += csv::format_row({std::to_string(e.epoch), format_double(e.train_loss), format_double(e.validation_loss)});
  }
  return out;
}

std::vector<EpochLog> parse_epoch_log_csv(const std::string& text) {
  auto tab = csv::parse(text, "epoch log");
  auto c_epoch = tab.require_column("epoch");
  auto c_train = tab.require_column("train_loss");
  auto c_val = tab.require_column("validation_loss");
  std::vector<EpochLog> out;
  for (const auto& row : tab.rows) {
    EpochLog e;
    double epoch = 0.0;
    if (!parse_double(row.fields[c_epoch], epoch) || !parse_double(row.fields[c_train], e.train_loss) ||
        !parse_double(row.fields[c_val], e.validation_loss)) {
      throw ParseError("epoch log: line " + std::to_string(row.line) + ": bad number");
    }
    e.epoch = static_cast<int>(epoch);
    out.push_back(e);
  }
  return out;
}

}  // namespace scope3
