#pragma once

// Segmentation-tag semantics: [eob] closes a block (screen), [eol] closes a
// line within a block. Target-task tags <2cap>/<2sub> mark the intended
// output stream for the shared-decoder variant.

#include <string>
#include <vector>

#include "dualsub/common.hpp"

namespace dualsub {

inline constexpr const char* kEolTag = "[eol]";
inline constexpr const char* kEobTag = "[eob]";
inline constexpr const char* kCapTag = "<2cap>";
inline constexpr const char* kSubTag = "<2sub>";

enum class Task { caption, subtitle };

inline const char* task_tag(Task t) { return t == Task::caption ? kCapTag : kSubTag; }

struct BlockStructure {
  std::vector<std::vector<std::string>> blocks;  // block -> lines
  bool well_formed = true;

  int block_count() const { return int(blocks.size()); }
};

// Robust to malformed input: empty lines/blocks and trailing untagged text
// are still parsed, but flag the structure as not well-formed.
inline BlockStructure parse_blocks(const std::string& tagged) {
  BlockStructure bs;
  std::vector<std::string> line_words;
  std::vector<std::string> block_lines;
  for (const auto& tok : split_ws(tagged)) {
    if (tok == kEolTag) {
      if (line_words.empty()) bs.well_formed = false;
      block_lines.push_back(join_ws(line_words));
      line_words.clear();
    } else if (tok == kEobTag) {
      if (!line_words.empty()) {
        block_lines.push_back(join_ws(line_words));
        line_words.clear();
      }
      if (block_lines.empty()) bs.well_formed = false;
      bs.blocks.push_back(block_lines);
      block_lines.clear();
    } else {
      line_words.push_back(tok);
    }
  }
  if (!line_words.empty()) block_lines.push_back(join_ws(line_words));
  if (!block_lines.empty()) {
    bs.blocks.push_back(block_lines);
    bs.well_formed = false;  // trailing open block
  }
  return bs;
}

inline std::string serialize_blocks(const BlockStructure& bs) {
  std::string out;
  for (const auto& block : bs.blocks) {
    if (!out.empty()) out += ' ';
    std::string body;
    for (size_t i = 0; i < block.size(); ++i) {
      if (i) body += std::string(" ") + kEolTag + " ";
      body += block[i];
    }
    out += body.empty() ? std::string(kEobTag) : body + " " + kEobTag;
  }
  return out;
}

inline int block_count(const std::string& tagged) {
  return parse_blocks(tagged).block_count();
}

// Strips [eol]/[eob], keeping the word stream.
inline std::string strip_seg_tags(const std::string& tagged) {
  std::vector<std::string> kept;
  for (const auto& tok : split_ws(tagged))
    if (tok != kEolTag && tok != kEobTag) kept.push_back(tok);
  return join_ws(kept);
}

inline bool has_target_tag(const std::vector<std::string>& tokens) {
  return !tokens.empty() && (tokens[0] == kCapTag || tokens[0] == kSubTag);
}

inline std::vector<std::string> add_target_tag(std::vector<std::string> tokens, Task task) {
  if (has_target_tag(tokens)) throw DataError("add_target_tag: already tagged");
  tokens.insert(tokens.begin(), task_tag(task));
  return tokens;
}

inline std::string add_target_tag(const std::string& text, Task task) {
  return join_ws(add_target_tag(split_ws(text), task));
}

inline std::vector<std::string> strip_target_tag(std::vector<std::string> tokens) {
  if (has_target_tag(tokens)) tokens.erase(tokens.begin());
  return tokens;
}

inline std::string strip_target_tag(const std::string& text) {
  return join_ws(strip_target_tag(split_ws(text)));
}

}  // namespace dualsub
