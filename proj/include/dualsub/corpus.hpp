#pragma once

// Tri-parallel corpora and the desk-scale toy task.
//
// A corpus is three plain-text files with equal line counts:
// <prefix>.transcript / <prefix>.caption / <prefix>.subtitle. Transcripts
// are unpunctuated and untagged; captions and subtitles carry [eol]/[eob].

#include <fstream>
#include <string>
#include <vector>

#include "dualsub/blocks.hpp"
#include "dualsub/common.hpp"

namespace dualsub {

struct Triplet {
  std::string transcript;
  std::string caption;
  std::string subtitle;
};

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& l : lines) out << l << "\n";
  if (!out) throw DataError("write failed for " + path);
}

inline std::vector<Triplet> read_triplets(const std::string& prefix) {
  auto tr = read_lines(prefix + ".transcript");
  auto cap = read_lines(prefix + ".caption");
  auto sub = read_lines(prefix + ".subtitle");
  if (tr.size() != cap.size() || tr.size() != sub.size())
    throw DataError("tri-parallel corpus " + prefix + " has unequal line counts");
  std::vector<Triplet> out(tr.size());
  for (size_t i = 0; i < tr.size(); ++i) out[i] = {tr[i], cap[i], sub[i]};
  return out;
}

inline void write_triplets(const std::string& prefix, const std::vector<Triplet>& triplets) {
  std::vector<std::string> tr, cap, sub;
  for (const auto& t : triplets) {
    tr.push_back(t.transcript);
    cap.push_back(t.caption);
    sub.push_back(t.subtitle);
  }
  write_lines(prefix + ".transcript", tr);
  write_lines(prefix + ".caption", cap);
  write_lines(prefix + ".subtitle", sub);
}

struct ConcatOptions {
  double mean = 2.0;
  double sigma = 0.75;
  int min_group = 1;
  int max_group = 5;
};

// Groups consecutive sentences; group sizes are round(N(mean, sigma))
// clamped to [min, max]. Order is preserved and every sentence lands in
// exactly one group.
inline std::vector<std::vector<std::string>> concat_sample(
    const std::vector<std::string>& sentences, Rng& rng, const ConcatOptions& opt = {}) {
  if (sentences.empty()) throw DataError("concat_sample: empty sentence list");
  std::vector<std::vector<std::string>> groups;
  size_t i = 0;
  while (i < sentences.size()) {
    int k = int(std::llround(rng.normal(opt.mean, opt.sigma)));
    k = std::max(opt.min_group, std::min(opt.max_group, k));
    k = std::min<int>(k, int(sentences.size() - i));
    groups.emplace_back(sentences.begin() + i, sentences.begin() + i + k);
    i += size_t(k);
  }
  return groups;
}

inline std::string concat_group(const std::vector<std::string>& group) {
  return join_ws(group);
}

// ---------------------------------------------------------------------------
// Toy task. Transcripts are noisy lowercase word streams; captions remove
// the noise, restore case/punctuation and insert display tags; subtitles map
// every word through a fixed bijective lexicon with the same tag positions.

inline const std::vector<std::string>& toy_source_words() {
  static const std::vector<std::string> kWords = {
      "the",    "we",     "you",    "they",   "time",   "water",  "light",
      "sound",  "world",  "people", "city",   "house",  "road",   "river",
      "stone",  "wind",   "fire",   "earth",  "green",  "small",  "large",
      "old",    "new",    "good",   "bright", "dark",   "cold",   "warm",
      "walk",   "run",    "speak",  "listen", "build",  "break",  "open",
      "close",  "find",   "lose",   "give",   "take",   "morning", "night",
      "summer", "winter", "music",  "story",  "friend", "garden", "window",
      "bridge"};
  return kWords;
}

inline const std::vector<std::string>& toy_target_words() {
  static const std::vector<std::string> kWords = {
      "la",     "nous",   "vous",   "ils",    "temps",  "eau",    "lumiere",
      "son",    "monde",  "gens",   "ville",  "maison", "route",  "riviere",
      "pierre", "vent",   "feu",    "terre",  "vert",   "petit",  "grand",
      "vieux",  "neuf",   "bon",    "clair",  "sombre", "froid",  "chaud",
      "marcher", "courir", "parler", "ecouter", "batir",  "casser", "ouvrir",
      "fermer", "trouver", "perdre", "donner", "prendre", "matin",  "nuit",
      "ete",    "hiver",  "musique", "conte",  "ami",    "jardin", "fenetre",
      "pont"};
  return kWords;
}

inline const std::string& toy_translate(const std::string& word) {
  const auto& src = toy_source_words();
  const auto& tgt = toy_target_words();
  for (size_t i = 0; i < src.size(); ++i)
    if (src[i] == word) return tgt[i];
  throw DataError("toy lexicon: unknown word " + word);
}

struct ToyOptions {
  int min_words = 4;
  int max_words = 14;
  double filler_prob = 0.12;      // "uh" insertions
  double repeat_prob = 0.08;      // immediate word repetitions
  int words_per_line = 6;
  int lines_per_block = 2;
};

inline std::string toy_sentence_case(std::string w) {
  if (!w.empty()) w[0] = char(std::toupper((unsigned char)w[0]));
  return w;
}

// Deterministic tag rule: a line break after every `words_per_line` words,
// a block break after every `lines_per_block` lines, final [eob] always.
inline std::string toy_render_tagged(const std::vector<std::string>& words,
                                     const ToyOptions& opt) {
  std::vector<std::string> toks;
  int in_line = 0, lines_in_block = 0;
  for (size_t i = 0; i < words.size(); ++i) {
    std::string w = (i == 0) ? toy_sentence_case(words[i]) : words[i];
    if (i + 1 == words.size()) w += ".";
    toks.push_back(w);
    if (++in_line == opt.words_per_line && i + 1 < words.size()) {
      in_line = 0;
      if (++lines_in_block == opt.lines_per_block) {
        toks.push_back(kEobTag);
        lines_in_block = 0;
      } else {
        toks.push_back(kEolTag);
      }
    }
  }
  toks.push_back(kEobTag);
  return join_ws(toks);
}

inline Triplet make_toy_triplet(Rng& rng, const ToyOptions& opt = {}) {
  const auto& vocab = toy_source_words();
  const int n = rng.uniform_int(opt.min_words, opt.max_words);
  std::vector<std::string> clean;
  for (int i = 0; i < n; ++i) {
    // no intended adjacent duplicates, so repetitions are unambiguous noise
    std::string w;
    do {
      w = vocab[size_t(rng.uniform_int(0, int(vocab.size()) - 1))];
    } while (!clean.empty() && clean.back() == w);
    clean.push_back(w);
  }

  std::vector<std::string> noisy;
  for (const auto& w : clean) {
    if (rng.uniform() < opt.filler_prob) noisy.push_back("uh");
    noisy.push_back(w);
    if (rng.uniform() < opt.repeat_prob) noisy.push_back(w);
  }

  std::vector<std::string> translated;
  for (const auto& w : clean) translated.push_back(toy_translate(w));

  Triplet t;
  t.transcript = join_ws(noisy);
  t.caption = toy_render_tagged(clean, opt);
  t.subtitle = toy_render_tagged(translated, opt);
  return t;
}

inline std::vector<Triplet> generate_toy_corpus(int n, Rng& rng, const ToyOptions& opt = {}) {
  if (n < 1) throw UsageError("generate_toy_corpus: n must be >= 1");
  std::vector<Triplet> out;
  out.reserve(size_t(n));
  for (int i = 0; i < n; ++i) out.push_back(make_toy_triplet(rng, opt));
  return out;
}

// Drops "uh" fillers and collapses immediate duplicates; inverse of the
// toy noise model.
inline std::string strip_fillers(const std::string& transcript) {
  std::vector<std::string> kept;
  for (const auto& w : split_ws(transcript)) {
    if (w == "uh") continue;
    if (!kept.empty() && kept.back() == w) continue;
    kept.push_back(w);
  }
  return join_ws(kept);
}

// Lowercased, untagged, unpunctuated view of a caption; for a toy triplet
// this equals strip_fillers(transcript).
inline std::string caption_to_transcript_form(const std::string& caption) {
  std::vector<std::string> words;
  for (const auto& tok : split_ws(strip_seg_tags(caption))) {
    std::string w;
    for (char c : tok)
      if (std::isalnum((unsigned char)c)) w += char(std::tolower((unsigned char)c));
    if (!w.empty()) words.push_back(w);
  }
  return join_ws(words);
}

}  // namespace dualsub
