#include "scope3/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "scope3/common.hpp"
#include "scope3/csv.hpp"
#include "scope3/hash.hpp"
#include "scope3/text.hpp"

namespace scope3 {

namespace {

std::string pair_key(const LabeledExample& e) { return e.text + '\x1f' + e.label; }

void check_ratios(const SplitRatios& r) {
  for (double v : r.as_array()) {
    if (!(v > 0.0)) throw RangeError("split ratios must all be positive");
  }
  if (std::fabs(r.train + r.validation + r.test - 1.0) > 1e-9) throw RangeError("split ratios must sum to 1");
}

/// Group indices by label; labels iterate in code order.
std::map<std::string, std::vector<std::size_t>> group_by_label(const std::vector<LabeledExample>& examples) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < examples.size(); ++i) groups[examples[i].label].push_back(i);
  return groups;
}

/// Largest-remainder apportionment of `total` over `weights` (sum 1). Ties go
/// to the lower index.
std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& weights) {
  std::array<std::size_t, 3> out{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int p = 0; p < 3; ++p) {
    double q = static_cast<double>(total) * weights[p];
    out[p] = static_cast<std::size_t>(std::floor(q + 1e-9));
    rem[p] = std::max(0.0, q - static_cast<double>(out[p]));
    assigned += out[p];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (int k = 0; assigned < total; k = (k + 1) % 3, ++assigned) ++out[order[k]];
  return out;
}

/// Rounds the class x part quota table so that every cell is the floor or
/// floor+1 of its quota, every row sums to its class size, and every column
/// sums to the global target. Greedy by remainder, then augmenting paths.
std::vector<std::array<std::size_t, 3>> round_quotas(const std::vector<std::size_t>& class_sizes,
                                                     const std::array<double, 3>& ratios,
                                                     const std::array<std::size_t, 3>& targets) {
  const std::size_t n_classes = class_sizes.size();
  std::vector<std::array<std::size_t, 3>> cells(n_classes);
  std::vector<std::array<double, 3>> rem(n_classes);
  std::vector<long> row_need(n_classes);
  std::array<long, 3> col_need{};
  for (int p = 0; p < 3; ++p) col_need[p] = static_cast<long>(targets[p]);

  for (std::size_t c = 0; c < n_classes; ++c) {
    long row = static_cast<long>(class_sizes[c]);
    for (int p = 0; p < 3; ++p) {
      double q = static_cast<double>(class_sizes[c]) * ratios[p];
      cells[c][p] = static_cast<std::size_t>(std::floor(q + 1e-9));
      rem[c][p] = std::max(0.0, q - static_cast<double>(cells[c][p]));
      row -= static_cast<long>(cells[c][p]);
      col_need[p] -= static_cast<long>(cells[c][p]);
    }
    row_need[c] = row;
  }

  // bump[c][p] == 1 when cell (c,p) receives the extra unit.
  std::vector<std::array<int, 3>> bump(n_classes, {0, 0, 0});
  struct Cell {
    std::size_t c;
    int p;
  };
  std::vector<Cell> order;
  for (std::size_t c = 0; c < n_classes; ++c)
    for (int p = 0; p < 3; ++p) order.push_back({c, p});
  std::stable_sort(order.begin(), order.end(), [&](const Cell& a, const Cell& b) { return rem[a.c][a.p] > rem[b.c][b.p]; });

  std::vector<long> row_flow(n_classes, 0);
  std::array<long, 3> col_flow{};
  for (const auto& cell : order) {
    if (row_flow[cell.c] < row_need[cell.c] && col_flow[cell.p] < col_need[cell.p]) {
      bump[cell.c][cell.p] = 1;
      ++row_flow[cell.c];
      ++col_flow[cell.p];
    }
  }

  // Augment source -> class -> part -> sink until every row is satisfied.
  // Node ids: classes [0, n), parts [n, n+3).
  for (;;) {
    std::size_t start = n_classes;
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (row_flow[c] < row_need[c]) {
        start = c;
        break;
      }
    }
    if (start == n_classes) break;

    std::vector<long> parent(n_classes + 3, -1);
    std::vector<bool> seen(n_classes + 3, false);
    std::vector<std::size_t> queue{start};
    seen[start] = true;
    long sink_part = -1;
    for (std::size_t head = 0; head < queue.size() && sink_part < 0; ++head) {
      std::size_t u = queue[head];
      if (u < n_classes) {
        for (int p = 0; p < 3; ++p) {
          std::size_t v = n_classes + p;
          if (!bump[u][p] && !seen[v]) {
            seen[v] = true;
            parent[v] = static_cast<long>(u);
            if (col_flow[p] < col_need[p]) {
              sink_part = p;
              break;
            }
            queue.push_back(v);
          }
        }
      } else {
        int p = static_cast<int>(u - n_classes);
        for (std::size_t c = 0; c < n_classes; ++c) {
          if (bump[c][p] && !seen[c]) {
            seen[c] = true;
            parent[c] = static_cast<long>(u);
            queue.push_back(c);
          }
        }
      }
    }
    if (sink_part < 0) throw StateError("stratified split: no consistent rounding of per-class quotas");

    ++col_flow[sink_part];
    ++row_flow[start];
    std::size_t v = n_classes + static_cast<std::size_t>(sink_part);
    while (v != start) {
      auto u = static_cast<std::size_t>(parent[v]);
      if (u < n_classes) {
        bump[u][v - n_classes] = 1;  // forward class -> part
      } else {
        bump[v][u - n_classes] = 0;  // cancel part -> class
      }
      v = u;
    }
  }

  for (std::size_t c = 0; c < n_classes; ++c)
    for (int p = 0; p < 3; ++p) cells[c][p] += static_cast<std::size_t>(bump[c][p]);
  return cells;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a",        "an",        "and",        "are",      "as",       "at",        "by",       "for",
      "from",     "in",        "into",       "is",       "it",       "of",        "on",       "or",
      "such",     "that",      "the",        "their",    "them",     "these",     "this",     "to",
      "with",     "other",     "others",     "except",   "related",  "including", "products", "product",
      "services", "service",   "activities", "allied",   "general",  "new",       "used",     "similar",
      "making",   "providing", "operating",  "through",  "basis",    "goods",     "mainly",   "miscellaneous",
      "establishments"};
  return words;
}

std::vector<std::string> content_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : normalized_tokens(text)) {
    if (t.size() < 3) continue;
    if (stopwords().count(t)) continue;
    if (std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
  }
  return out;
}

// Keyphrase pools: tokens that occur in few classes' texts.
constexpr std::size_t kMaxClassSpread = 2;
constexpr std::size_t kDescriptionPoolSize = 10;
constexpr double kTitleKeyphraseProbability = 0.3;

const std::vector<std::string>& templates() {
  static const std::vector<std::string> t = {
      "{} expense",       "cost of {}",         "{} purchase",        "payment for {}",
      "{} invoice",       "vendor invoice {}",  "monthly {} charges", "{} fees",
      "purchase of {}",   "{} supplies",        "reimbursement {}",   "{}",
      "{} contract",      "annual {} spend",    "{} order",           "accrued {} costs"};
  return t;
}

std::string fill(const std::string& tmpl, const std::string& keyphrase) {
  std::string out = tmpl;
  out.replace(out.find("{}"), 2, keyphrase);
  return out;
}

std::string distractor(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 8);
  std::uniform_int_distribution<int> four(1000, 9999);
  switch (kind(rng)) {
    case 0:
      return "inv " + std::to_string(four(rng));
    case 1:
      return "po " + std::to_string(four(rng));
    case 2:
      return "q" + std::to_string(std::uniform_int_distribution<int>(1, 4)(rng));
    case 3:
      return "fy" + std::to_string(std::uniform_int_distribution<int>(19, 24)(rng));
    case 4:
      return "net 30";
    case 5:
      return "acct " + std::to_string(four(rng));
    case 6:
      return "dept " + std::to_string(std::uniform_int_distribution<int>(10, 99)(rng));
    case 7:
      return "accrual";
    default:
      return "adj";
  }
}

}  // namespace

std::vector<LabeledExample> deduplicate(std::vector<LabeledExample> examples, std::vector<std::string>* warnings) {
  std::unordered_set<std::string> seen;
  std::vector<LabeledExample> out;
  out.reserve(examples.size());
  for (auto& e : examples) {
    if (!seen.insert(pair_key(e)).second) {
      if (warnings) warnings->push_back("dropped duplicate example " + e.id + " ('" + e.text + "', " + e.label + ")");
      continue;
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<LabeledExample> load_labeled(const std::filesystem::path& path, const Taxonomy& tax,
                                         std::vector<std::string>* warnings) {
  auto tab = csv::read_file(path);
  std::size_t c_text = tab.require_column("text");
  std::size_t c_label = tab.require_column("label");
  auto c_id = tab.column("id");
  std::vector<LabeledExample> out;
  std::unordered_set<std::string> ids;
  for (std::size_t r = 0; r < tab.rows.size(); ++r) {
    const auto& row = tab.rows[r];
    std::string where = tab.source + ": line " + std::to_string(row.line);
    LabeledExample e;
    e.text = normalize(row.fields[c_text]);
    e.label = trim(row.fields[c_label]);
    e.id = c_id ? trim(row.fields[*c_id]) : "row-" + std::to_string(r + 1);
    if (e.text.empty()) throw ValidationError(where + ": empty text after normalization");
    if (!tax.contains(e.label)) throw ValidationError(where + ": unknown label '" + e.label + "'");
    if (e.id.empty() || !ids.insert(e.id).second) throw ValidationError(where + ": missing or duplicate id");
    out.push_back(std::move(e));
  }
  return deduplicate(std::move(out), warnings);
}

std::vector<TransactionRecord> load_ledger(const std::filesystem::path& path) {
  auto tab = csv::read_file(path);
  std::size_t c_id = tab.require_column("id");
  std::size_t c_text = tab.require_column("text");
  std::size_t c_amount = tab.require_column("amount");
  std::size_t c_currency = tab.require_column("currency");
  std::vector<TransactionRecord> out;
  std::unordered_set<std::string> ids;
  for (const auto& row : tab.rows) {
    std::string where = tab.source + ": line " + std::to_string(row.line);
    TransactionRecord rec;
    rec.id = trim(row.fields[c_id]);
    rec.text = trim(row.fields[c_text]);
    if (rec.id.empty() || !ids.insert(rec.id).second) throw ValidationError(where + ": missing or duplicate id");
    auto amount = trim(row.fields[c_amount]);
    if (!amount.empty()) {
      double v = 0.0;
      if (!parse_double(amount, v) || !std::isfinite(v)) {
        throw ParseError(where + ": bad amount '" + amount + "'");
      }
      rec.amount = v;
    }
    auto currency = trim(row.fields[c_currency]);
    if (!currency.empty()) rec.currency = currency;
    out.push_back(std::move(rec));
  }
  return out;
}

DatasetSplit split(const std::vector<LabeledExample>& examples, SplitRatios ratios, std::uint64_t seed) {
  check_ratios(ratios);
  if (examples.empty()) throw InputError("cannot split an empty corpus");
  {
    std::unordered_set<std::string> ids;
    std::unordered_set<std::string> pairs;
    for (const auto& e : examples) {
      if (!ids.insert(e.id).second) throw ValidationError("duplicate example id '" + e.id + "'");
      if (!pairs.insert(pair_key(e)).second) throw ValidationError("duplicate example '" + e.text + "' (" + e.label + ")");
    }
  }
  auto groups = group_by_label(examples);
  std::vector<std::size_t> sizes;
  for (const auto& [label, members] : groups) {
    if (members.size() < 3) {
      throw ValidationError("class " + label + " has " + std::to_string(members.size()) +
                            " examples; stratified split needs at least 3");
    }
    sizes.push_back(members.size());
  }
  auto weights = ratios.as_array();
  auto targets = apportion(examples.size(), weights);
  auto cells = round_quotas(sizes, weights, targets);

  std::vector<int> part(examples.size(), -1);
  std::mt19937_64 rng(seed);
  std::size_t c = 0;
  for (auto& [label, members] : groups) {
    std::vector<std::size_t> shuffled = members;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::size_t k = 0;
    for (int p = 0; p < 3; ++p)
      for (std::size_t j = 0; j < cells[c][p]; ++j) part[shuffled[k++]] = p;
    ++c;
  }

  DatasetSplit out;
  out.seed = seed;
  out.ratios = ratios;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto& dst = part[i] == 0 ? out.train : part[i] == 1 ? out.validation : out.test;
    dst.push_back(examples[i]);
  }
  return out;
}

DatasetSplit subsample(const DatasetSplit& input, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw RangeError("subsample fraction must lie in (0, 1]");
  std::mt19937_64 rng(seed);
  auto reduce = [&](const std::vector<LabeledExample>& examples) {
    std::vector<bool> keep(examples.size(), false);
    for (auto& [label, members] : group_by_label(examples)) {
      auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(members.size()) - 1e-9));
      std::vector<std::size_t> shuffled = members;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      for (std::size_t j = 0; j < n; ++j) keep[shuffled[j]] = true;
    }
    std::vector<LabeledExample> out;
    for (std::size_t i = 0; i < examples.size(); ++i)
      if (keep[i]) out.push_back(examples[i]);
    return out;
  };
  DatasetSplit out = input;
  out.train = reduce(input.train);
  out.validation = reduce(input.validation);
  return out;
}

std::vector<LabeledExample> synth_generate(const Taxonomy& tax, int n_per_class, std::uint64_t seed) {
  if (tax.class_count() == 0) throw InputError("cannot generate a corpus for an empty taxonomy");
  if (n_per_class < 1) throw RangeError("n_per_class must be at least 1");

  std::map<std::string, std::size_t> spread;
  std::vector<std::vector<std::string>> class_tokens;
  for (const auto& cls : tax.classes()) {
    auto tokens = content_tokens(cls.title + " " + cls.description);
    for (const auto& t : tokens) ++spread[t];
    class_tokens.push_back(std::move(tokens));
  }
  auto distinctive = [&](const std::string& t) { return spread[t] <= kMaxClassSpread; };

  std::vector<LabeledExample> out;
  std::unordered_set<std::string> used;
  for (std::size_t ci = 0; ci < tax.class_count(); ++ci) {
    const auto& cls = tax.classes()[ci];
    std::vector<std::string> title_pool;
    for (auto& t : content_tokens(cls.title))
      if (distinctive(t)) title_pool.push_back(t);
    if (title_pool.empty()) title_pool = content_tokens(cls.title);
    if (title_pool.empty()) title_pool = normalized_tokens(cls.title);

    std::vector<std::string> desc_pool;
    for (auto& t : content_tokens(cls.description)) {
      if (desc_pool.size() >= kDescriptionPoolSize) break;
      if (distinctive(t) && std::find(title_pool.begin(), title_pool.end(), t) == title_pool.end()) {
        desc_pool.push_back(t);
      }
    }
    std::vector<std::string> all = title_pool;
    all.insert(all.end(), desc_pool.begin(), desc_pool.end());

    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(ci)};
    std::mt19937_64 rng(seq);
    std::bernoulli_distribution from_title(kTitleKeyphraseProbability);
    std::bernoulli_distribution second_token(0.8);
    std::bernoulli_distribution third_token(0.25);
    std::bernoulli_distribution add_distractor(0.5);
    auto pick = [&](const std::vector<std::string>& pool) {
      return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    };

    for (int k = 0; k < n_per_class; ++k) {
      std::string text;
      for (int attempt = 0;; ++attempt) {
        std::vector<std::string> phrase;
        bool title_first = desc_pool.empty() || from_title(rng);
        phrase.push_back(pick(title_first ? title_pool : desc_pool));
        std::size_t extra = (all.size() > 1 && second_token(rng)) ? (third_token(rng) ? 2 : 1) : 0;
        for (std::size_t e = 0; e < extra && phrase.size() < all.size(); ++e) {
          std::string t;
          do {
            t = pick(all);
          } while (std::find(phrase.begin(), phrase.end(), t) != phrase.end());
          phrase.push_back(t);
        }
        const auto& tmpl = templates()[std::uniform_int_distribution<std::size_t>(0, templates().size() - 1)(rng)];
        text = fill(tmpl, join(phrase, " "));
        if (add_distractor(rng)) text += " " + distractor(rng);
        if (attempt >= 64) text += " ref " + std::to_string(k);
        text = normalize(text);
        if (used.insert(text).second) break;
      }
      char id[64];
      std::snprintf(id, sizeof(id), "syn-%s-%04d", cls.code.c_str(), k);
      out.push_back({id, text, cls.code});
    }
  }
  return out;
}

std::string serialize_labeled(const std::vector<LabeledExample>& examples) {
  std::string out = "id,text,label\n";
  for (const auto& e : examples) out += csv::format_row({e.id, e.text, e.label});
  return out;
}

std::string serialize_ledger(const std::vector<TransactionRecord>& records) {
  std::string out = "id,text,amount,currency\n";
  for (const auto& r : records) {
    out += csv::format_row({r.id, r.text, r.amount ? format_double(*r.amount) : "", r.currency.value_or("")});
  }
  return out;
}

nlohmann::json split_manifest(const DatasetSplit& s) {
  auto ids = [](const std::vector<LabeledExample>& xs) {
    std::vector<std::string> out;
    for (const auto& e : xs) out.push_back(e.id);
    return out;
  };
  nlohmann::json j;
  j["format"] = "scope3.split-manifest";
  j["version"] = 1;
  j["seed"] = s.seed;
  j["ratios"] = {s.ratios.train, s.ratios.validation, s.ratios.test};
  j["counts"] = {{"train", s.train.size()}, {"validation", s.validation.size()}, {"test", s.test.size()}};
  j["fingerprints"] = {{"train", data_fingerprint(s.train)},
                       {"validation", data_fingerprint(s.validation)},
                       {"test", data_fingerprint(s.test)}};
  j["members"] = {{"train", ids(s.train)}, {"validation", ids(s.validation)}, {"test", ids(s.test)}};
  return j;
}

std::string data_fingerprint(const std::vector<LabeledExample>& examples) {
  Fnv1a h;
  for (const auto& e : examples) h.field(e.id).field(e.text).field(e.label);
  return h.hex();
}

}  // namespace scope3
