#ifndef SAN_METRICS_HPP
#define SAN_METRICS_HPP

// Classification accuracy, the ten-annotator consensus score and
// Wu-Palmer based WUPS.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "san/config.hpp"
#include "san/error.hpp"

namespace san {

inline double accuracy(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels) {
  if (preds.size() != labels.size()) {
    throw ContractError("accuracy: " + std::to_string(preds.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw ContractError("accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

inline std::string canonical_answer(const std::string& s) {
  std::string out = trim(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline constexpr std::size_t kConsensusLabels = 10;

/// min(#matching labels / 3, 1) after lowercasing and trimming.
inline double vqa_consensus(const std::string& pred, const std::vector<std::string>& human_labels) {
  if (human_labels.size() != kConsensusLabels) {
    throw ContractError("vqa_consensus: expected 10 human labels, got " +
                        std::to_string(human_labels.size()));
  }
  const std::string p = canonical_answer(pred);
  const auto matches = std::count_if(human_labels.begin(), human_labels.end(),
                                     [&](const std::string& l) { return canonical_answer(l) == p; });
  return std::min(static_cast<double>(matches) / 3.0, 1.0);
}

/// Rooted word tree. depth(root) = 1.
class TaxonomyTree {
 public:
  /// Builds from (child, parent) edges; exactly one node may lack a parent.
  static TaxonomyTree from_edges(const std::vector<std::pair<std::string, std::string>>& edges) {
    TaxonomyTree t;
    std::set<std::string> nodes;
    for (const auto& [child, parent] : edges) {
      if (child.empty() || parent.empty()) throw TaxonomyError("taxonomy: empty word");
      if (child == parent) throw TaxonomyError("taxonomy: '" + child + "' is its own parent");
      if (!t.parent_.emplace(child, parent).second) {
        throw TaxonomyError("taxonomy: '" + child + "' has two parents");
      }
      nodes.insert(child);
      nodes.insert(parent);
    }
    std::vector<std::string> roots;
    for (const auto& n : nodes) {
      if (!t.parent_.count(n)) roots.push_back(n);
    }
    if (roots.size() != 1) {
      throw TaxonomyError("taxonomy: expected one root, found " + std::to_string(roots.size()));
    }
    t.root_ = roots.front();
    for (const auto& n : nodes) {
      std::size_t depth = 1;
      std::string cur = n;
      while (cur != t.root_) {
        cur = t.parent_.at(cur);
        if (++depth > nodes.size()) throw TaxonomyError("taxonomy: cycle through '" + n + "'");
      }
      t.depth_[n] = depth;
    }
    return t;
  }

  /// "child<TAB>parent" per line.
  static TaxonomyTree parse(const std::string& text, const std::string& origin = "taxonomy") {
    std::vector<std::pair<std::string, std::string>> edges;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw TaxonomyError(origin + ":" + std::to_string(lineno) + ": expected child<TAB>parent");
      }
      edges.emplace_back(trim(line.substr(0, tab)), trim(line.substr(tab + 1)));
    }
    return from_edges(edges);
  }

  static TaxonomyTree load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw TaxonomyError("taxonomy: cannot read " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path.string());
  }

  bool contains(const std::string& word) const { return depth_.count(word) != 0; }
  const std::string& root() const { return root_; }

  std::size_t depth(const std::string& word) const {
    auto it = depth_.find(word);
    if (it == depth_.end()) throw TaxonomyError("taxonomy: unknown word '" + word + "'");
    return it->second;
  }

  std::string lowest_common_ancestor(const std::string& a, const std::string& b) const {
    std::string x = a, y = b;
    std::size_t dx = depth(x), dy = depth(y);
    while (dx > dy) { x = parent_.at(x); --dx; }
    while (dy > dx) { y = parent_.at(y); --dy; }
    while (x != y) {
      x = parent_.at(x);
      y = parent_.at(y);
    }
    return x;
  }

 private:
  std::map<std::string, std::string> parent_;
  std::map<std::string, std::size_t> depth_;
  std::string root_;
};

/// 2·depth(lca) / (depth(a) + depth(b)).
inline double wu_palmer(const std::string& a, const std::string& b, const TaxonomyTree& tax) {
  const double da = static_cast<double>(tax.depth(a));
  const double db = static_cast<double>(tax.depth(b));
  const double dl = static_cast<double>(tax.depth(tax.lowest_common_ancestor(a, b)));
  return 2.0 * dl / (da + db);
}

struct WupsOptions {
  /// Below-threshold similarities are multiplied by 0.1 instead of zeroed.
  bool down_weight = false;
  /// Words missing from the taxonomy score 1 on exact match, else 0;
  /// otherwise they raise TaxonomyError.
  bool unknown_exact_match = false;
};

/// Mean over samples of wu_palmer(pred, label), zeroed below `threshold`.
inline double wups_score(const std::vector<std::string>& preds, const std::vector<std::string>& labels,
                         const TaxonomyTree& tax, double threshold, WupsOptions options = {}) {
  if (preds.size() != labels.size()) throw ContractError("wups_score: length mismatch");
  if (preds.empty()) throw ContractError("wups_score: no samples");
  double total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double sim = 0;
    if (options.unknown_exact_match && (!tax.contains(preds[i]) || !tax.contains(labels[i]))) {
      sim = preds[i] == labels[i] ? 1.0 : 0.0;
    } else {
      sim = wu_palmer(preds[i], labels[i], tax);
    }
    if (sim < threshold) sim = options.down_weight ? 0.1 * sim : 0.0;
    total += sim;
  }
  return total / static_cast<double>(preds.size());
}

struct EvalReport {
  std::size_t count = 0;
  double accuracy = 0;
  std::map<std::string, double> type_accuracy;
  std::map<std::string, std::size_t> type_count;
  double wups_09 = 0;
  double wups_00 = 0;

  nlohmann::json to_json() const {
    nlohmann::json per_type = nlohmann::json::object();
    for (const auto& [t, acc] : type_accuracy) {
      per_type[t] = {{"accuracy", acc}, {"count", type_count.at(t)}};
    }
    return {{"count", count}, {"accuracy", accuracy}, {"wups_0.9", wups_09},
            {"wups_0.0", wups_00}, {"per_type", per_type}};
  }
};

/// Accuracy overall and per question type, plus WUPS at 0.9 and 0.0.
inline EvalReport make_report(const std::vector<std::string>& preds, const std::vector<std::string>& labels,
                              const std::vector<std::string>& types, const TaxonomyTree& tax,
                              WupsOptions options = {}) {
  if (preds.size() != labels.size() || types.size() != labels.size()) {
    throw ContractError("make_report: length mismatch");
  }
  EvalReport r;
  r.count = preds.size();
  if (r.count == 0) return r;
  std::map<std::string, std::size_t> hits;
  std::size_t total_hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool hit = preds[i] == labels[i];
    total_hits += hit;
    ++r.type_count[types[i]];
    hits[types[i]] += hit;
  }
  r.accuracy = static_cast<double>(total_hits) / static_cast<double>(r.count);
  for (const auto& [t, n] : r.type_count) {
    r.type_accuracy[t] = static_cast<double>(hits[t]) / static_cast<double>(n);
  }
  r.wups_09 = wups_score(preds, labels, tax, 0.9, options);
  r.wups_00 = wups_score(preds, labels, tax, 0.0, options);
  return r;
}

/// JSON Schema for EvalReport::to_json().
inline nlohmann::json eval_report_schema() {
  return nlohmann::json::parse(R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "EvalReport",
  "type": "object",
  "required": ["count", "accuracy", "wups_0.9", "wups_0.0", "per_type"],
  "properties": {
    "count": {"type": "integer", "minimum": 0},
    "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
    "wups_0.9": {"type": "number", "minimum": 0, "maximum": 1},
    "wups_0.0": {"type": "number", "minimum": 0, "maximum": 1},
    "per_type": {
      "type": "object",
      "additionalProperties": {
        "type": "object",
        "required": ["accuracy", "count"],
        "properties": {
          "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
          "count": {"type": "integer", "minimum": 0}
        }
      }
    }
  },
  "additionalProperties": false
})");
}

}  // namespace san

#endif  // SAN_METRICS_HPP
