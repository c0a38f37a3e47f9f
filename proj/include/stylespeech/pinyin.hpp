// Copyright 2026 The stylespeech authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Tone-annotated Pinyin front end: syllable parsing into initial/final/tone,
// grapheme-to-phoneme conversion into parallel phoneme and tone streams, and
// the symbol vocabularies.

#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stylespeech/error.hpp"

namespace stylespeech::pinyin {

// One Mandarin syllable. The initial is absent for zero-initial syllables
// ("an", "yi"); the tone is 1-4 lexical or 5 neutral. Tone 0 is reserved as
// the placeholder tone emitted for initials in the style stream.
struct Syllable {
  std::optional<std::string> initial;
  std::string final;
  int tone = 5;

  bool operator==(const Syllable&) const = default;
};

// Parallel position-aligned phoneme-ID and tone-ID streams for an utterance.
struct AcousticTokens {
  std::vector<int> phonemes;
  std::vector<int> tones;

  size_t size() const { return phonemes.size(); }
};

// Symbol streams before vocabulary encoding.
struct TokenSymbols {
  std::vector<std::string> phonemes;
  std::vector<std::string> tones;
};

// Bijective symbol <-> ID map. Index 0 is always PAD.
class SymbolTable {
 public:
  explicit SymbolTable(std::vector<std::string> symbols);

  int id(const std::string& symbol) const;          // throws UnknownSymbol
  const std::string& symbol(int id) const;          // throws IdOutOfRange
  bool contains(const std::string& symbol) const;
  int size() const { return static_cast<int>(symbols_.size()); }
  const std::vector<std::string>& symbols() const { return symbols_; }

  std::vector<int> encode(const std::vector<std::string>& symbols) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  // One symbol per line, line number = ID, line 0 literally PAD.
  static SymbolTable load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

// The 21 initials and 39 finals (v-notation for u-umlaut, apical vowels as
// ii/iii), preceded by PAD.
const std::vector<std::string>& initial_inventory();
const std::vector<std::string>& final_inventory();
const std::vector<std::string>& phoneme_inventory();  // PAD + initials + finals
const std::vector<std::string>& tone_inventory();     // PAD + "0".."5"

const SymbolTable& phoneme_table();
const SymbolTable& tone_table();

// "hao3" -> (h, ao, 3). Lowercases, strips punctuation and erhua, maps a
// missing or 0 tone digit to neutral 5, resolves y/w orthography and the
// contextual u/v and apical-i spellings.
Syllable parse_syllable(const std::string& text);

// Canonical orthographic respelling, the inverse of parse_syllable.
std::string join_syllable(const Syllable& s);

// join(parse(text)): lowercased, punctuation/erhua stripped, explicit tone.
std::string normalize_syllable(const std::string& text);

// Whitespace-split sentence -> normalized syllable tokens.
std::vector<std::string> sentence_syllables(const std::string& sentence);

// Sentence -> parallel phoneme/tone symbol streams: each initial contributes
// (initial, "0"), each final (final, tone digit).
TokenSymbols g2p_symbols(const std::string& sentence);

// Symbol streams encoded against the given tables.
AcousticTokens g2p(const std::string& sentence, const SymbolTable& phonemes,
                   const SymbolTable& tones);
inline AcousticTokens g2p(const std::string& sentence) {
  return g2p(sentence, phoneme_table(), tone_table());
}

}  // namespace stylespeech::pinyin
