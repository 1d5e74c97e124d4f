#pragma once

// Shared BPE vocabulary over source and both target streams.
//
// Pre-tokenization is whitespace only; punctuation is ordinary characters
// and BPE decides how it splits. Segmentation tags and other special tokens
// are atomic and never pass through BPE.

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dualsub/common.hpp"

namespace dualsub {

inline const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> kSpecials = {
      "<pad>", "<bos>", "<eos>", "<unk>", "[eol]", "[eob]", "<2cap>", "<2sub>"};
  return kSpecials;
}

inline bool is_special_token(const std::string& tok) {
  const auto& sp = special_tokens();
  return std::find(sp.begin(), sp.end(), tok) != sp.end();
}

// Continuation marker: a symbol that does not end its word carries the
// suffix "@@" in token form (subword-nmt convention).
inline constexpr const char* kBpeMarker = "@@";

struct Vocab {
  static constexpr int pad_id = 0;
  static constexpr int bos_id = 1;
  static constexpr int eos_id = 2;
  static constexpr int unk_id = 3;
  static constexpr int eol_id = 4;
  static constexpr int eob_id = 5;
  static constexpr int cap_tag_id = 6;
  static constexpr int sub_tag_id = 7;

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::pair<std::string, std::string>> merges;

  int size() const { return int(id_to_token.size()); }

  int id(const std::string& tok) const {
    auto it = token_to_id.find(tok);
    return it == token_to_id.end() ? unk_id : it->second;
  }

  bool contains(const std::string& tok) const { return token_to_id.count(tok) > 0; }

  const std::string& token(int tid) const {
    if (tid < 0 || tid >= size()) throw DataError("vocab: token id out of range");
    return id_to_token[size_t(tid)];
  }

  void add(const std::string& tok) {
    if (token_to_id.count(tok)) return;
    token_to_id.emplace(tok, size());
    id_to_token.push_back(tok);
  }

  uint64_t fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : id_to_token) h = fnv1a(t + "\x1f", h);
    for (const auto& m : merges) h = fnv1a(m.first + "\x1e" + m.second + "\x1f", h);
    return h;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("vocab: cannot write " + path);
    out << "dualsub-vocab 1\n";
    out << id_to_token.size() << "\n";
    for (const auto& t : id_to_token) out << t << "\n";
    out << merges.size() << "\n";
    for (const auto& m : merges) out << m.first << " " << m.second << "\n";
    if (!out) throw DataError("vocab: write failed for " + path);
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("vocab: cannot open " + path);
    std::string header;
    std::getline(in, header);
    if (header != "dualsub-vocab 1") throw DataError("vocab: bad header in " + path);
    size_t n_tok = 0, n_merge = 0;
    std::string line;
    std::getline(in, line);
    n_tok = std::stoull(line);
    Vocab v;
    for (size_t i = 0; i < n_tok; ++i) {
      if (!std::getline(in, line)) throw DataError("vocab: truncated token list");
      v.add(line);
    }
    const auto& sp = special_tokens();
    for (size_t i = 0; i < sp.size(); ++i)
      if (v.id_to_token.size() <= i || v.id_to_token[i] != sp[i])
        throw DataError("vocab: special tokens out of place in " + path);
    std::getline(in, line);
    n_merge = std::stoull(line);
    for (size_t i = 0; i < n_merge; ++i) {
      if (!std::getline(in, line)) throw DataError("vocab: truncated merge list");
      auto parts = split_ws(line);
      if (parts.size() != 2) throw DataError("vocab: malformed merge line");
      v.merges.emplace_back(parts[0], parts[1]);
    }
    return v;
  }
};

namespace detail {

inline std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> syms;
  for (char32_t cp : utf8_decode(word)) {
    std::string s;
    utf8_append(s, cp);
    syms.push_back(std::move(s));
  }
  syms.push_back(kEndOfWord);
  return syms;
}

// Merge all occurrences of (a, b), left to right.
inline void merge_pair(std::vector<std::string>& syms, const std::string& a,
                       const std::string& b) {
  std::vector<std::string> out;
  out.reserve(syms.size());
  size_t i = 0;
  while (i < syms.size()) {
    if (i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
      out.push_back(a + b);
      i += 2;
    } else {
      out.push_back(syms[i]);
      ++i;
    }
  }
  syms = std::move(out);
}

}  // namespace detail

// Greedy most-frequent-pair merges, ties broken lexicographically.
inline Vocab learn_bpe(const std::vector<std::string>& corpus, int n_merges) {
  if (n_merges < 0) throw UsageError("learn_bpe: n_merges must be >= 0");
  std::map<std::string, long> word_count;
  for (const auto& line : corpus)
    for (const auto& w : split_ws(line))
      if (!is_special_token(w)) ++word_count[w];
  if (word_count.empty()) throw DataError("learn_bpe: empty corpus");

  std::vector<std::vector<std::string>> words;
  std::vector<long> counts;
  words.reserve(word_count.size());
  for (const auto& [w, c] : word_count) {
    words.push_back(detail::word_symbols(w));
    counts.push_back(c);
  }

  Vocab vocab;
  for (const auto& sp : special_tokens()) vocab.add(sp);

  for (int step = 0; step < n_merges; ++step) {
    std::map<std::pair<std::string, std::string>, long> pair_count;
    for (size_t wi = 0; wi < words.size(); ++wi) {
      const auto& syms = words[wi];
      for (size_t i = 0; i + 1 < syms.size(); ++i)
        pair_count[{syms[i], syms[i + 1]}] += counts[wi];
    }
    if (pair_count.empty()) break;
    // std::map iterates pairs in lexicographic order, so ">" keeps the
    // lexicographically smallest pair among equal counts.
    auto best = pair_count.begin();
    for (auto it = pair_count.begin(); it != pair_count.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [a, b] = best->first;
    vocab.merges.emplace_back(a, b);
    for (auto& syms : words) detail::merge_pair(syms, a, b);
  }

  // Single characters first (sorted), then merge products in merge order,
  // so ids are reproducible for a given corpus and merge count.
  std::map<std::string, bool> singles;
  for (const auto& [w, c] : word_count)
    for (const auto& s : detail::word_symbols(w)) singles[s] = true;
  for (const auto& [s, _] : singles) vocab.add(s);
  for (const auto& m : vocab.merges) vocab.add(m.first + m.second);
  return vocab;
}

// One whitespace token -> BPE symbol strings.
inline std::vector<std::string> bpe_segment_word(const std::string& word, const Vocab& vocab) {
  std::vector<std::string> syms = detail::word_symbols(word);
  std::unordered_map<std::string, int> rank;
  for (size_t i = 0; i < vocab.merges.size(); ++i)
    rank.emplace(vocab.merges[i].first + "\x1e" + vocab.merges[i].second, int(i));
  while (syms.size() > 1) {
    int best_rank = -1;
    size_t best_i = 0;
    for (size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = rank.find(syms[i] + "\x1e" + syms[i + 1]);
      if (it != rank.end() && (best_rank < 0 || it->second < best_rank)) {
        best_rank = it->second;
        best_i = i;
      }
    }
    if (best_rank < 0) break;
    detail::merge_pair(syms, syms[best_i], syms[best_i + 1]);
  }
  return syms;
}

inline std::vector<int> apply_bpe(const std::string& text, const Vocab& vocab) {
  std::vector<int> ids;
  for (const auto& w : split_ws(text)) {
    if (is_special_token(w)) {
      ids.push_back(vocab.id(w));
      continue;
    }
    for (const auto& s : bpe_segment_word(w, vocab)) ids.push_back(vocab.id(s));
  }
  return ids;
}

inline std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  std::vector<std::string> out_words;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      out_words.push_back(cur);
      cur.clear();
    }
  };
  for (int tid : ids) {
    const std::string& tok = vocab.token(tid);
    if (is_special_token(tok)) {
      flush();
      out_words.push_back(tok);
      continue;
    }
    const size_t eow = std::string(kEndOfWord).size();
    if (tok.size() >= eow && tok.compare(tok.size() - eow, eow, kEndOfWord) == 0) {
      cur += tok.substr(0, tok.size() - eow);
      flush();
    } else {
      cur += tok;
    }
  }
  flush();
  return join_ws(out_words);
}

}  // namespace dualsub
