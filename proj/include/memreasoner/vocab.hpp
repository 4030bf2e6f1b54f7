#pragma once

#include <cctype>
#include <fstream>
#include <unordered_map>

#include "memreasoner/core.hpp"

namespace memr {

// Word-level vocabulary with fixed reserved ids. Construction order is
// deterministic: reserved tokens first, then the word lists in the order the
// caller supplies them.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kEmpty = 4;  // blank context line

  Vocab() {
    for (const char* w : {"<pad>", "<bos>", "<eos>", "<unk>", "<empty>"}) add(w);
  }

  int add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    int id = static_cast<int>(tokens_.size());
    ids_.emplace(token, id);
    tokens_.push_back(token);
    return id;
  }

  int id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return ids_.count(token) > 0; }
  const std::string& token(int id) const { return tokens_[id]; }
  int size() const { return static_cast<int>(tokens_.size()); }

  // One token per line, line number == id, reserved ids first.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocab file: " + path);
    for (const auto& t : tokens_) out << t << "\n";
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read vocab file: " + path);
    Vocab v;
    v.tokens_.clear();
    v.ids_.clear();
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      v.ids_.emplace(line, static_cast<int>(v.tokens_.size()));
      v.tokens_.push_back(line);
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

constexpr int kMaxLineTokens = 64;

// Lowercasing word splitter. Punctuation characters become their own tokens
// and runs of digits are split into single-digit tokens so arbitrary numbers
// stay in-vocabulary.
inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::isdigit(c)) {
      flush();
      words.push_back(std::string(1, ch));
    } else if (std::isalpha(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      words.push_back(std::string(1, ch));
    }
  }
  flush();
  return words;
}

inline std::vector<int> tokenize(const std::string& text, const Vocab& vocab) {
  std::vector<std::string> words = split_words(text);
  if (words.empty()) return {Vocab::kEmpty};
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(vocab.id(w));
  return ids;
}

inline std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (id == Vocab::kEos) break;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

// Long lines are split at multiples of kMaxLineTokens; each chunk becomes its
// own context line.
inline std::vector<std::vector<int>> split_line_chunks(const std::vector<int>& ids) {
  std::vector<std::vector<int>> chunks;
  for (size_t i = 0; i < ids.size(); i += kMaxLineTokens) {
    size_t end = std::min(ids.size(), i + kMaxLineTokens);
    chunks.emplace_back(ids.begin() + i, ids.begin() + end);
  }
  if (chunks.empty()) chunks.push_back({Vocab::kEmpty});
  return chunks;
}

}  // namespace memr
