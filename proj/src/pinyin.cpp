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

#include "stylespeech/pinyin.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace stylespeech::pinyin {

namespace {

// Longest first so zh/ch/sh win over z/c/s.
const std::vector<std::string> kInitials = {"zh", "ch", "sh", "b", "p", "m", "f", "d", "t",
                                            "n",  "l",  "g",  "k", "h", "j", "q", "x", "r",
                                            "z",  "c",  "s"};

// 39 finals, Baker-style labeling: v-notation for the u-umlaut series, the
// apical vowels of z/c/s and zh/ch/sh/r rows as ii/iii, io for the
// interjection syllable yo.
const std::vector<std::string> kFinals = {
    "a",   "o",   "e",    "i",   "u",    "v",    "er",  "ai",  "ei",  "ao",
    "ou",  "ia",  "ie",   "iao", "iu",   "ua",   "uo",  "uai", "ui",  "ve",
    "an",  "en",  "in",   "un",  "vn",   "ang",  "eng", "ing", "ong", "ian",
    "iang", "iong", "uan", "uang", "ueng", "van", "ii",  "iii", "io"};

// Zero-initial syllables in y/w orthography and their canonical finals.
const std::unordered_map<std::string, std::string>& yw_to_final() {
  static const std::unordered_map<std::string, std::string> map = {
      {"yi", "i"},     {"ya", "ia"},   {"ye", "ie"},   {"yao", "iao"}, {"you", "iu"},
      {"yan", "ian"},  {"yin", "in"},  {"yang", "iang"}, {"ying", "ing"}, {"yong", "iong"},
      {"yo", "io"},    {"yu", "v"},    {"yue", "ve"},  {"yuan", "van"}, {"yun", "vn"},
      {"wu", "u"},     {"wa", "ua"},   {"wo", "uo"},   {"wai", "uai"}, {"wei", "ui"},
      {"wan", "uan"},  {"wen", "un"},  {"wang", "uang"}, {"weng", "ueng"}};
  return map;
}

const std::unordered_map<std::string, std::string>& final_to_yw() {
  static const std::unordered_map<std::string, std::string> map = [] {
    std::unordered_map<std::string, std::string> m;
    for (const auto& [yw, fin] : yw_to_final()) m[fin] = yw;
    return m;
  }();
  return map;
}

bool is_one_of(const std::string& s, std::initializer_list<const char*> set) {
  for (const char* c : set)
    if (s == c) return true;
  return false;
}

bool known_final(const std::string& f) {
  static const std::unordered_map<std::string, bool> set = [] {
    std::unordered_map<std::string, bool> m;
    for (const auto& f : kFinals) m[f] = true;
    return m;
  }();
  return set.count(f) > 0;
}

// Lowercase, strip punctuation, u-umlaut to v. Keeps letters and digits.
std::string clean(const std::string& text) {
  std::string out;
  for (size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c == 0xC3 && i + 1 < text.size()) {
      const unsigned char d = static_cast<unsigned char>(text[i + 1]);
      if (d == 0xBC || d == 0x9C) {  // u-umlaut, either case
        out.push_back('v');
        ++i;
        continue;
      }
    }
    if (std::isalpha(c)) out.push_back(static_cast<char>(std::tolower(c)));
    else if (std::isdigit(c)) out.push_back(static_cast<char>(c));
    // anything else (punctuation) is stripped
  }
  return out;
}

}  // namespace

const std::vector<std::string>& initial_inventory() {
  static const std::vector<std::string> sorted = [] {
    std::vector<std::string> v = {"b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h",
                                  "j", "q", "x", "zh", "ch", "sh", "r", "z", "c", "s"};
    return v;
  }();
  return sorted;
}

const std::vector<std::string>& final_inventory() { return kFinals; }

const std::vector<std::string>& phoneme_inventory() {
  static const std::vector<std::string> all = [] {
    std::vector<std::string> v = {"PAD"};
    for (const auto& s : initial_inventory()) v.push_back(s);
    for (const auto& s : final_inventory()) v.push_back(s);
    return v;
  }();
  return all;
}

const std::vector<std::string>& tone_inventory() {
  static const std::vector<std::string> v = {"PAD", "0", "1", "2", "3", "4", "5"};
  return v;
}

const SymbolTable& phoneme_table() {
  static const SymbolTable table(phoneme_inventory());
  return table;
}

const SymbolTable& tone_table() {
  static const SymbolTable table(tone_inventory());
  return table;
}

SymbolTable::SymbolTable(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  if (symbols_.empty() || symbols_[0] != "PAD")
    throw Error(ErrorKind::ParseError, "symbol table must start with PAD");
  for (size_t i = 0; i < symbols_.size(); ++i) {
    if (!index_.emplace(symbols_[i], static_cast<int>(i)).second)
      throw Error(ErrorKind::ParseError, "duplicate symbol " + symbols_[i]);
  }
}

int SymbolTable::id(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) throw Error(ErrorKind::UnknownSymbol, "\"" + symbol + "\"");
  return it->second;
}

const std::string& SymbolTable::symbol(int id) const {
  if (id < 0 || id >= size())
    throw Error(ErrorKind::IdOutOfRange,
                std::to_string(id) + " outside table of " + std::to_string(size()));
  return symbols_[id];
}

bool SymbolTable::contains(const std::string& symbol) const { return index_.count(symbol) > 0; }

std::vector<int> SymbolTable::encode(const std::vector<std::string>& symbols) const {
  std::vector<int> ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) ids.push_back(id(s));
  return ids;
}

std::vector<std::string> SymbolTable::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(symbol(i));
  return out;
}

SymbolTable SymbolTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    symbols.push_back(line);
  }
  return SymbolTable(std::move(symbols));
}

void SymbolTable::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path);
  for (const auto& s : symbols_) out << s << "\n";
}

Syllable parse_syllable(const std::string& text) {
  const std::string norm = clean(text);
  if (norm.empty()) throw Error(ErrorKind::UnknownSyllable, "\"" + text + "\" is empty");

  // Split off the tone digit.
  std::string base = norm;
  int tone = 5;
  if (std::isdigit(static_cast<unsigned char>(base.back()))) {
    const int digit = base.back() - '0';
    if (digit > 5)
      throw Error(ErrorKind::BadToneDigit,
                  "tone " + std::to_string(digit) + " in \"" + text + "\"");
    tone = digit == 0 ? 5 : digit;  // unmarked and 0 both mean neutral
    base.pop_back();
  }
  for (char c : base) {
    if (std::isdigit(static_cast<unsigned char>(c)))
      throw Error(ErrorKind::UnknownSyllable, "stray digit inside \"" + text + "\"");
  }
  if (base.empty()) throw Error(ErrorKind::UnknownSyllable, "\"" + text + "\" has no letters");

  // Erhua: a trailing r that is not the syllable "er" itself.
  if (base.size() > 1 && base.back() == 'r' && base != "er") base.pop_back();

  // Zero-initial orthography.
  if (auto it = yw_to_final().find(base); it != yw_to_final().end())
    return Syllable{std::nullopt, it->second, tone};

  std::optional<std::string> initial;
  std::string rest = base;
  for (const auto& ini : kInitials) {
    if (base.rfind(ini, 0) == 0 && base.size() > ini.size()) {
      initial = ini;
      rest = base.substr(ini.size());
      break;
    }
  }

  if (initial) {
    // Contextual spellings: u-umlaut series after j/q/x, apical i rows.
    if (is_one_of(*initial, {"j", "q", "x"})) {
      if (rest == "u") rest = "v";
      else if (rest == "un") rest = "vn";
      else if (rest == "uan") rest = "van";
    }
    if (rest == "ue") rest = "ve";
    if (rest == "i") {
      if (is_one_of(*initial, {"z", "c", "s"})) rest = "ii";
      else if (is_one_of(*initial, {"zh", "ch", "sh", "r"})) rest = "iii";
    }
  }
  // The apical-vowel symbols are never written directly; they only arise
  // from the i respelling behind their own initial rows.
  if (rest == "ii" || rest == "iii")
    if (!initial || !is_one_of(*initial, {"z", "c", "s", "zh", "ch", "sh", "r"}) ||
        base.substr(initial->size()) != "i")
      throw Error(ErrorKind::UnknownSyllable, "\"" + text + "\": no final \"" + rest + "\"");

  if (!known_final(rest))
    throw Error(ErrorKind::UnknownSyllable, "\"" + text + "\": no final \"" + rest + "\"");
  return Syllable{initial, rest, tone};
}

std::string join_syllable(const Syllable& s) {
  if (s.tone < 1 || s.tone > 5)
    throw Error(ErrorKind::BadToneDigit, "tone " + std::to_string(s.tone));
  std::string fin = s.final;
  if (!s.initial) {
    if (auto it = final_to_yw().find(fin); it != final_to_yw().end()) fin = it->second;
    return fin + std::to_string(s.tone);
  }
  const std::string& ini = *s.initial;
  if (is_one_of(ini, {"j", "q", "x"})) {
    if (fin == "v") fin = "u";
    else if (fin == "vn") fin = "un";
    else if (fin == "van") fin = "uan";
    else if (fin == "ve") fin = "ue";
  }
  if (fin == "ii" || fin == "iii") fin = "i";
  return ini + fin + std::to_string(s.tone);
}

std::string normalize_syllable(const std::string& text) {
  return join_syllable(parse_syllable(text));
}

std::vector<std::string> sentence_syllables(const std::string& sentence) {
  std::vector<std::string> out;
  std::istringstream in(sentence);
  std::string token;
  size_t position = 0;
  while (in >> token) {
    try {
      out.push_back(normalize_syllable(token));
    } catch (const Error& e) {
      throw Error(e.kind(), "token " + std::to_string(position) + " \"" + token + "\": " +
                                e.what());
    }
    ++position;
  }
  return out;
}

TokenSymbols g2p_symbols(const std::string& sentence) {
  TokenSymbols out;
  std::istringstream in(sentence);
  std::string token;
  size_t position = 0;
  while (in >> token) {
    Syllable s;
    try {
      s = parse_syllable(token);
    } catch (const Error& e) {
      throw Error(e.kind(), "token " + std::to_string(position) + " \"" + token + "\": " +
                                e.what());
    }
    if (s.initial) {
      out.phonemes.push_back(*s.initial);
      out.tones.push_back("0");  // placeholder tone for initials
    }
    out.phonemes.push_back(s.final);
    out.tones.push_back(std::to_string(s.tone));
    ++position;
  }
  return out;
}

AcousticTokens g2p(const std::string& sentence, const SymbolTable& phonemes,
                   const SymbolTable& tones) {
  const TokenSymbols symbols = g2p_symbols(sentence);
  return AcousticTokens{phonemes.encode(symbols.phonemes), tones.encode(symbols.tones)};
}

}  // namespace stylespeech::pinyin
