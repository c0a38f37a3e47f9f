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
// Evaluation protocol: word error rates over syllable/phoneme/tone streams,
// mel cepstral distortion with DTW alignment, PESQ score ingestion, and the
// percentile-threshold MOS rating averaged into an overall score.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stylespeech/dsp.hpp"
#include "stylespeech/error.hpp"

namespace stylespeech::metrics {

struct EditCounts {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int total() const { return substitutions + deletions + insertions; }
};

// Minimal unit-cost Levenshtein counts; S+D+I equals the edit distance.
template <typename Tok>
EditCounts edit_distance(const std::vector<Tok>& ref, const std::vector<Tok>& hyp) {
  const int n = static_cast<int>(ref.size()), m = static_cast<int>(hyp.size());
  std::vector<int> cost(static_cast<size_t>(n + 1) * (m + 1));
  auto at = [&](int i, int j) -> int& { return cost[static_cast<size_t>(i) * (m + 1) + j]; };
  for (int i = 0; i <= n; ++i) at(i, 0) = i;
  for (int j = 0; j <= m; ++j) at(0, j) = j;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j) {
      const int match = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({match, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  EditCounts counts;
  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++counts.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

// (S+D+I)/len(ref); an empty reference against k hypothesis tokens scores k.
template <typename Tok>
double wer(const std::vector<Tok>& ref, const std::vector<Tok>& hyp) {
  if (ref.empty()) return static_cast<double>(hyp.size());
  return static_cast<double>(edit_distance(ref, hyp).total()) / static_cast<double>(ref.size());
}

struct WerLevels {
  double wer = 0.0;    // whole tone-annotated syllables
  double wer_p = 0.0;  // phoneme stream
  double wer_t = 0.0;  // tone stream
};

// Runs g2p on both pinyin sentences and scores the three token streams.
WerLevels wer_levels(const std::string& ref_sentence, const std::string& hyp_sentence);

// Orthonormal DCT-II over the mel bands per frame, keeping coefficients
// 1..n_coeffs (c0 dropped). Row-major frames x n_coeffs.
std::vector<double> mel_to_cepstra(const dsp::MelSpectrogram& mel, int n_coeffs = 13);

// Mean over DTW-aligned frame pairs of (10/ln10)*sqrt(2*sum d_k^2), in dB.
// use_dtw=false pairs the first min(Ta,Tb) frames directly.
double mcd(const dsp::MelSpectrogram& a, const dsp::MelSpectrogram& b, bool use_dtw = true,
           int n_coeffs = 13);

// Lines `utt_id<TAB>score`, scores within the PESQ range [-0.5, 4.5].
std::map<std::string, double> ingest_pesq(const std::string& path);

struct MetricReport {
  std::string utt_id;
  std::string system_id;
  double wer = 0.0;
  double wer_p = 0.0;
  double wer_t = 0.0;
  double mcd = 0.0;
  std::optional<double> pesq;
};

struct MosRating {
  std::string utt_id;
  std::string system_id;
  std::optional<int> wer_rating;
  std::optional<int> mcd_rating;
  std::optional<int> pesq_rating;
  double overall = 0.0;  // mean of the present per-metric ratings
};

// Nearest-rank percentile: value at index ceil(k*n/100), 1-based, ascending.
double nearest_rank_percentile(std::vector<double> values, int percentile);

// Percentile-threshold ratings over the pooled reports: per metric, the
// P20/P40/P60/P80 thresholds over present values map to ratings 5..1 (lower
// is better for wer and mcd, higher is better for pesq).
std::vector<MosRating> llm_mos(const std::vector<MetricReport>& pool);

// Per-utterance rows plus a mean +/- std aggregate, WER WER-P WER-T MCD PESQ
// column order. Absent PESQ renders as a blank field.
void write_eval_report(const std::string& path, const std::vector<MetricReport>& reports);
std::vector<MetricReport> parse_eval_report(const std::string& path);

// Per-utterance rating rows plus per-system aggregates, WER MCD PESQ Overall
// column order.
void write_rate_report(const std::string& path, const std::vector<MosRating>& ratings);

}  // namespace stylespeech::metrics
