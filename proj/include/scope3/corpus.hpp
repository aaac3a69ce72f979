#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scope3/taxonomy.hpp"

namespace scope3 {

/// One ledger line to classify and price.
struct TransactionRecord {
  std::string id;
  std::string text;
  std::optional<double> amount;
  std::optional<std::string> currency;
};

/// Normalized ledger text with its gold class. `id` is stable across
/// splits and is what split manifests record.
struct LabeledExample {
  std::string id;
  std::string text;
  std::string label;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

struct SplitRatios {
  double train = 0.7;
  double validation = 0.2;
  double test = 0.1;

  std::array<double, 3> as_array() const { return {train, validation, test}; }
};

struct DatasetSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> validation;
  std::vector<LabeledExample> test;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

/// Reads a `text,label` file (an optional `id` column is honoured). Text is
/// normalized; exact duplicate (text,label) pairs are dropped and reported in
/// `warnings` when given. Throws ValidationError naming the line for unknown
/// labels or text that is empty after normalization.
std::vector<LabeledExample> load_labeled(const std::filesystem::path& path, const Taxonomy& tax,
                                         std::vector<std::string>* warnings = nullptr);

/// Reads an `id,text,amount,currency` ledger file. Amount and currency may
/// be empty. Text is kept as written; ids must be unique.
std::vector<TransactionRecord> load_ledger(const std::filesystem::path& path);

/// Drops exact duplicate (text,label) pairs, keeping the first occurrence.
std::vector<LabeledExample> deduplicate(std::vector<LabeledExample> examples,
                                        std::vector<std::string>* warnings = nullptr);

/// Stratified, seeded three-way split. Per-class part sizes are the floor or
/// ceiling of n_class * ratio, chosen so the global part sizes also follow
/// the largest-remainder rounding of N * ratio. Members keep input order.
DatasetSplit split(const std::vector<LabeledExample>& examples, SplitRatios ratios, std::uint64_t seed);

/// Keeps ceil(fraction * n_class) examples per class in train and validation;
/// test is untouched. fraction must lie in (0, 1].
DatasetSplit subsample(const DatasetSplit& split, double fraction, std::uint64_t seed);

/// Templated expense phrases built from class title and description
/// keyphrases. Emits exactly n_per_class examples per class, unique texts,
/// deterministic per seed.
std::vector<LabeledExample> synth_generate(const Taxonomy& tax, int n_per_class, std::uint64_t seed);

/// `id,text,label` CSV.
std::string serialize_labeled(const std::vector<LabeledExample>& examples);

/// `id,text,amount,currency` CSV.
std::string serialize_ledger(const std::vector<TransactionRecord>& records);

/// Audit manifest (seed, ratios, member ids). Deterministic; callers may add
/// a "metadata" object for timestamps.
nlohmann::json split_manifest(const DatasetSplit& split);

/// Order-sensitive fingerprint of ids, texts and labels.
std::string data_fingerprint(const std::vector<LabeledExample>& examples);

}  // namespace scope3
