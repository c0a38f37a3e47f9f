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

#include "stylespeech/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stylespeech/pinyin.hpp"

namespace stylespeech::metrics {

namespace {

constexpr double kMcdScale = 10.0 / M_LN10;

std::string format4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string mean_std(const std::vector<double>& values) {
  if (values.empty()) return "";
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return format4(mean) + " \xc2\xb1 " + format4(std::sqrt(var));
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

WerLevels wer_levels(const std::string& ref_sentence, const std::string& hyp_sentence) {
  auto parse = [](const std::string& sentence, const char* side) {
    try {
      return std::pair{pinyin::sentence_syllables(sentence), pinyin::g2p_symbols(sentence)};
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(side) + " sentence: " + e.what());
    }
  };
  const auto [ref_syll, ref_sym] = parse(ref_sentence, "ref");
  const auto [hyp_syll, hyp_sym] = parse(hyp_sentence, "hyp");
  WerLevels out;
  out.wer = wer(ref_syll, hyp_syll);
  out.wer_p = wer(ref_sym.phonemes, hyp_sym.phonemes);
  out.wer_t = wer(ref_sym.tones, hyp_sym.tones);
  return out;
}

std::vector<double> mel_to_cepstra(const dsp::MelSpectrogram& mel, int n_coeffs) {
  const int n = mel.n_mels;
  std::vector<double> out(static_cast<size_t>(mel.frames) * n_coeffs, 0.0);
  const double a0 = std::sqrt(1.0 / n), ak = std::sqrt(2.0 / n);
  for (int f = 0; f < mel.frames; ++f) {
    for (int k = 1; k <= n_coeffs; ++k) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j)
        acc += mel.at(f, j) * std::cos(M_PI * (2.0 * j + 1.0) * k / (2.0 * n));
      out[static_cast<size_t>(f) * n_coeffs + (k - 1)] = (k == 0 ? a0 : ak) * acc;
    }
  }
  return out;
}

double mcd(const dsp::MelSpectrogram& a, const dsp::MelSpectrogram& b, bool use_dtw,
           int n_coeffs) {
  if (a.frames == 0 || b.frames == 0)
    throw Error(ErrorKind::EmptyInput, "mcd needs nonempty spectrograms");
  if (a.n_mels != b.n_mels)
    throw Error(ErrorKind::MetadataMismatch, "mel band counts differ");
  const std::vector<double> ca = mel_to_cepstra(a, n_coeffs);
  const std::vector<double> cb = mel_to_cepstra(b, n_coeffs);
  const int ta = a.frames, tb = b.frames;

  auto local = [&](int i, int j) {
    double acc = 0.0;
    for (int k = 0; k < n_coeffs; ++k) {
      const double d = ca[static_cast<size_t>(i) * n_coeffs + k] -
                       cb[static_cast<size_t>(j) * n_coeffs + k];
      acc += d * d;
    }
    return std::sqrt(acc);
  };

  if (!use_dtw) {
    const int t = std::min(ta, tb);
    double acc = 0.0;
    for (int i = 0; i < t; ++i) acc += local(i, i);
    return kMcdScale * std::sqrt(2.0) * acc / t;
  }

  const double inf = HUGE_VAL;
  std::vector<double> dp(static_cast<size_t>(ta) * tb, inf);
  auto at = [&](int i, int j) -> double& { return dp[static_cast<size_t>(i) * tb + j]; };
  at(0, 0) = local(0, 0);
  for (int i = 1; i < ta; ++i) at(i, 0) = at(i - 1, 0) + local(i, 0);
  for (int j = 1; j < tb; ++j) at(0, j) = at(0, j - 1) + local(0, j);
  for (int i = 1; i < ta; ++i)
    for (int j = 1; j < tb; ++j)
      at(i, j) = std::min({at(i - 1, j - 1), at(i - 1, j), at(i, j - 1)}) + local(i, j);

  // Path length by diagonal-preferring backtrace.
  int i = ta - 1, j = tb - 1;
  int64_t pairs = 1;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + local(i, j)) {
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + local(i, j)) {
      --i;
    } else {
      --j;
    }
    ++pairs;
  }
  return kMcdScale * std::sqrt(2.0) * at(ta - 1, tb - 1) / static_cast<double>(pairs);
}

std::map<std::string, double> ingest_pesq(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
  std::map<std::string, double> scores;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_tabs(line);
    if (fields.size() != 2 || fields[0].empty())
      throw Error(ErrorKind::MalformedLine,
                  "line " + std::to_string(line_no) + ": expected utt_id<TAB>score");
    double score = 0.0;
    try {
      size_t used = 0;
      score = std::stod(fields[1], &used);
      if (used != fields[1].size()) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      throw Error(ErrorKind::MalformedLine,
                  "line " + std::to_string(line_no) + ": bad score \"" + fields[1] + "\"");
    }
    if (score < -0.5 || score > 4.5)
      throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no) + ": score " +
                                                fields[1] + " outside PESQ range [-0.5, 4.5]");
    scores[fields[0]] = score;
  }
  return scores;
}

double nearest_rank_percentile(std::vector<double> values, int percentile) {
  if (values.empty()) throw Error(ErrorKind::EmptyPool, "no values for percentile");
  std::sort(values.begin(), values.end());
  const int n = static_cast<int>(values.size());
  int rank = static_cast<int>(std::ceil(percentile * n / 100.0));
  rank = std::clamp(rank, 1, n);
  return values[rank - 1];
}

std::vector<MosRating> llm_mos(const std::vector<MetricReport>& pool) {
  if (pool.empty()) throw Error(ErrorKind::EmptyPool, "llm_mos needs at least one report");

  struct Thresholds {
    double p20, p40, p60, p80;
    bool available = false;
  };
  auto thresholds_for = [&](auto getter) {
    Thresholds t;
    std::vector<double> values;
    for (const auto& r : pool) {
      const std::optional<double> v = getter(r);
      if (v) values.push_back(*v);
    }
    if (values.empty()) return t;
    t.p20 = nearest_rank_percentile(values, 20);
    t.p40 = nearest_rank_percentile(values, 40);
    t.p60 = nearest_rank_percentile(values, 60);
    t.p80 = nearest_rank_percentile(values, 80);
    t.available = true;
    return t;
  };

  const Thresholds tw = thresholds_for([](const MetricReport& r) { return std::optional<double>(r.wer); });
  const Thresholds tm = thresholds_for([](const MetricReport& r) { return std::optional<double>(r.mcd); });
  const Thresholds tp = thresholds_for([](const MetricReport& r) { return r.pesq; });

  auto rate_lower_better = [](const Thresholds& t, double v) {
    if (v <= t.p20) return 5;
    if (v <= t.p40) return 4;
    if (v <= t.p60) return 3;
    if (v <= t.p80) return 2;
    return 1;
  };
  auto rate_higher_better = [](const Thresholds& t, double v) {
    if (v >= t.p80) return 5;
    if (v >= t.p60) return 4;
    if (v >= t.p40) return 3;
    if (v >= t.p20) return 2;
    return 1;
  };

  std::vector<MosRating> out;
  out.reserve(pool.size());
  for (const auto& r : pool) {
    MosRating rating;
    rating.utt_id = r.utt_id;
    rating.system_id = r.system_id;
    if (tw.available) rating.wer_rating = rate_lower_better(tw, r.wer);
    if (tm.available) rating.mcd_rating = rate_lower_better(tm, r.mcd);
    if (tp.available && r.pesq) rating.pesq_rating = rate_higher_better(tp, *r.pesq);
    double sum = 0.0;
    int count = 0;
    for (const auto& v : {rating.wer_rating, rating.mcd_rating, rating.pesq_rating}) {
      if (v) {
        sum += *v;
        ++count;
      }
    }
    rating.overall = count > 0 ? sum / count : 0.0;
    out.push_back(rating);
  }
  return out;
}

void write_eval_report(const std::string& path, const std::vector<MetricReport>& reports) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path);
  out << "utt_id\tsystem\tWER\tWER-P\tWER-T\tMCD\tPESQ\n";
  std::vector<double> wers, werps, werts, mcds, pesqs;
  for (const auto& r : reports) {
    out << r.utt_id << '\t' << r.system_id << '\t' << format4(r.wer) << '\t'
        << format4(r.wer_p) << '\t' << format4(r.wer_t) << '\t' << format4(r.mcd) << '\t'
        << (r.pesq ? format4(*r.pesq) : "") << "\n";
    wers.push_back(r.wer);
    werps.push_back(r.wer_p);
    werts.push_back(r.wer_t);
    mcds.push_back(r.mcd);
    if (r.pesq) pesqs.push_back(*r.pesq);
  }
  const std::string system = reports.empty() ? "" : reports.front().system_id;
  out << "mean_std\t" << system << '\t' << mean_std(wers) << '\t' << mean_std(werps) << '\t'
      << mean_std(werts) << '\t' << mean_std(mcds) << '\t' << mean_std(pesqs) << "\n";
  if (!out) throw Error(ErrorKind::IoFailure, "short write to " + path);
}

std::vector<MetricReport> parse_eval_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
  std::vector<MetricReport> reports;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> fields = split_tabs(line);
    if (fields[0] == "utt_id" || fields[0] == "mean_std") continue;
    if (fields.size() != 7)
      throw Error(ErrorKind::MalformedLine,
                  path + " line " + std::to_string(line_no) + ": expected 7 fields");
    MetricReport r;
    r.utt_id = fields[0];
    r.system_id = fields[1];
    try {
      r.wer = std::stod(fields[2]);
      r.wer_p = std::stod(fields[3]);
      r.wer_t = std::stod(fields[4]);
      r.mcd = std::stod(fields[5]);
      if (!fields[6].empty()) r.pesq = std::stod(fields[6]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::MalformedLine,
                  path + " line " + std::to_string(line_no) + ": bad number");
    }
    reports.push_back(r);
  }
  return reports;
}

void write_rate_report(const std::string& path, const std::vector<MosRating>& ratings) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path);
  out << "utt_id\tsystem\tWER\tMCD\tPESQ\tOverall\n";
  std::vector<std::string> systems;
  for (const auto& r : ratings) {
    out << r.utt_id << '\t' << r.system_id << '\t'
        << (r.wer_rating ? std::to_string(*r.wer_rating) : "") << '\t'
        << (r.mcd_rating ? std::to_string(*r.mcd_rating) : "") << '\t'
        << (r.pesq_rating ? std::to_string(*r.pesq_rating) : "") << '\t'
        << format4(r.overall) << "\n";
    if (std::find(systems.begin(), systems.end(), r.system_id) == systems.end())
      systems.push_back(r.system_id);
  }
  for (const auto& system : systems) {
    std::vector<double> w, m, p, o;
    for (const auto& r : ratings) {
      if (r.system_id != system) continue;
      if (r.wer_rating) w.push_back(*r.wer_rating);
      if (r.mcd_rating) m.push_back(*r.mcd_rating);
      if (r.pesq_rating) p.push_back(*r.pesq_rating);
      o.push_back(r.overall);
    }
    out << "mean_std\t" << system << '\t' << mean_std(w) << '\t' << mean_std(m) << '\t'
        << mean_std(p) << '\t' << mean_std(o) << "\n";
  }
  if (!out) throw Error(ErrorKind::IoFailure, "short write to " + path);
}

}  // namespace stylespeech::metrics
