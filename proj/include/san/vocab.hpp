#ifndef SAN_VOCAB_HPP
#define SAN_VOCAB_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "san/error.hpp"

namespace san {

using TokenId = std::size_t;

/// Dense token <-> id map. Ids 0 and 1 are always PAD and UNK.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocab() : Vocab(std::vector<std::string>{}) {}

  /// Builds from the non-reserved tokens in order; duplicates are skipped.
  explicit Vocab(const std::vector<std::string>& tokens) {
    add(kPadToken);
    add(kUnkToken);
    for (const auto& t : tokens) {
      if (!contains(t)) add(t);
    }
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }

  TokenId id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  /// Like id() but throws for tokens outside the vocabulary.
  TokenId require(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) throw VocabError("vocab: unknown token '" + token + "'");
    return it->second;
  }

  const std::string& token(TokenId id) const {
    if (id >= tokens_.size()) {
      throw VocabError("vocab: id " + std::to_string(id) + " outside " +
                       std::to_string(tokens_.size()));
    }
    return tokens_[id];
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> encode(const std::vector<std::string>& words) const {
    std::vector<TokenId> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(id(w));
    return out;
  }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

  /// One token per line; the line number is the id.
  void save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("vocab: cannot write " + path.string());
    for (const auto& t : tokens_) os << t << '\n';
  }

  static Vocab load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("vocab: cannot read " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
    if (lines.size() < 2 || lines[0] != kPadToken || lines[1] != kUnkToken) {
      throw FormatError("vocab: " + path.string() + " must start with " + kPadToken + " and " +
                        kUnkToken);
    }
    Vocab v;
    for (std::size_t i = 2; i < lines.size(); ++i) {
      if (lines[i].empty() || v.contains(lines[i])) {
        throw FormatError("vocab: bad or duplicate token on line " + std::to_string(i + 1));
      }
      v.add(lines[i]);
    }
    return v;
  }

 private:
  void add(const std::string& token) {
    ids_.emplace(token, tokens_.size());
    tokens_.push_back(token);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace san

#endif  // SAN_VOCAB_HPP
