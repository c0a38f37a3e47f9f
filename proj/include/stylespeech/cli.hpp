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
// Command implementations behind the CLI: dataset preparation, training,
// adaptation, synthesis, evaluation and rating. The binary in tools/ is a
// thin argument-parsing wrapper over these.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stylespeech/metrics.hpp"
#include "stylespeech/model.hpp"
#include "stylespeech/trainer.hpp"

namespace stylespeech::cli {

struct DspConfig {
  int sample_rate = 48000;  // synthesis output rate; analysis keeps each wav's own
  int n_fft = 1024;
  int hop = 512;
  int n_mels = 80;
  int griffin_lim_iters = 60;

  void validate() const;
};

struct RunConfig {
  model::ModelConfig model;
  training::TrainConfig train;
  DspConfig dsp;
  uint64_t seed = 1234;

  void validate() const;
};

// JSON config with full schema validation; unknown keys are rejected. The
// root seed fans out to the init/dropout/griffin_lim streams.
RunConfig load_run_config(const std::string& path);

struct ManifestRow {
  std::string utt_id;
  std::string pinyin;
  std::string wav_path;
  std::optional<std::vector<int>> durations;  // per token after g2p
};

// UTF-8 TSV: utt_id<TAB>pinyin<TAB>wav_path[<TAB>comma-separated durations].
std::vector<ManifestRow> parse_manifest(const std::string& path);

// UTF-8 TSV: utt_id<TAB>pinyin sentence.
std::vector<std::pair<std::string, std::string>> parse_transcripts(const std::string& path);

struct FeatureStore {
  training::Dataset dataset;
  std::vector<std::string> phoneme_vocab;
  std::vector<std::string> tone_vocab;
};

FeatureStore load_features(const std::string& features_dir);

void cmd_prepare(const std::string& manifest_path, const std::string& out_dir,
                 const RunConfig& cfg);

void cmd_train(const std::string& features_dir, const std::string& out_dir,
               const RunConfig& cfg);

void cmd_finetune(const std::string& features_dir, const std::string& base_checkpoint,
                  const std::string& out_dir, const RunConfig& cfg);

// Either a single sentence or a transcript file of utt_id/sentence rows.
void cmd_synth(const std::string& checkpoint_path, const std::optional<std::string>& text,
               const std::optional<std::string>& transcripts_path, const std::string& out_dir,
               const RunConfig& cfg);

struct EvalArgs {
  std::string ref_transcripts;
  std::string hyp_transcripts;
  std::string synth_mels_dir;
  std::string ref_mels_dir;
  std::optional<std::string> pesq_path;
  std::string system_id = "system";
  std::string out_path;
};

void cmd_eval(const EvalArgs& args);

void cmd_rate(const std::vector<std::string>& report_paths, const std::string& out_path);

}  // namespace stylespeech::cli
