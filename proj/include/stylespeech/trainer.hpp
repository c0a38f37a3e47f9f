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
// Optimization loop for both regimes: joint training, and LoRA-style
// adaptation with the phoneme path frozen. Adam with the Transformer warm-up
// schedule, global-norm gradient clipping, binary checkpoints.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stylespeech/dsp.hpp"
#include "stylespeech/model.hpp"
#include "stylespeech/pinyin.hpp"
#include "stylespeech/tensor.hpp"

namespace stylespeech::training {

struct TrainConfig {
  std::string mode = "joint";  // joint | lora
  int64_t steps = 2000;
  int batch_size = 8;
  int64_t warmup_steps = 4000;
  uint64_t seed = 1234;
  double mel_loss_weight = 1.0;
  double duration_loss_weight = 1.0;
  int64_t checkpoint_every = 1000;  // 0 disables intermediate checkpoints
  double grad_clip = 1.0;           // global L2 norm; 0 disables

  void validate() const;
};

struct Utterance {
  std::string id;
  pinyin::AcousticTokens tokens;
  std::vector<int> durations;  // per token, sums to mel.frames
  dsp::MelSpectrogram mel;
};
using Dataset = std::vector<Utterance>;

// Transformer schedule: d_model^-0.5 * min(step^-0.5, step * warmup^-1.5).
double lr_at(int64_t step, int d_model, int64_t warmup);

struct StepStats {
  double mel_loss = 0.0;
  double duration_loss = 0.0;
  double lr = 0.0;
};

using StepCallback = std::function<void(int64_t step, const StepStats&)>;

struct CheckpointMeta {
  model::ModelConfig config;
  std::vector<std::string> phoneme_vocab;
  std::vector<std::string> tone_vocab;
  int64_t step = 0;
  std::string mode = "joint";
  std::map<std::string, bool> freeze;  // group -> frozen
};

struct Checkpoint {
  CheckpointMeta meta;
  ad::ParameterSet params;
};

// Binary format: magic SSPC, one version byte, u64 little-endian length of a
// UTF-8 JSON metadata document, then raw little-endian float32 blobs in
// declared parameter order. Writes are atomic (temp file + rename).
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Model built from a loaded checkpoint; freeze flags applied to the groups.
model::StyleSpeechModel model_from_checkpoint(const Checkpoint& ckpt);

// Adam with the warm-up schedule. State is allocated lazily per trainable
// tensor; frozen tensors never get any.
class AdamOptimizer {
 public:
  AdamOptimizer(double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-9);
  void update(ad::ParameterSet& params, double lr, int64_t step);
  bool has_state(const std::string& name) const { return state_.count(name) > 0; }

 private:
  struct Slot {
    std::vector<float> m, v;
  };
  double beta1_, beta2_, eps_;
  std::map<std::string, Slot> state_;
};

// One optimization step over a batch; returns the pre-update losses.
class Trainer {
 public:
  Trainer(model::StyleSpeechModel& model, const TrainConfig& cfg);

  StepStats step(const std::vector<const Utterance*>& batch, int64_t step_no);
  std::mt19937& dropout_rng() { return dropout_rng_; }
  const AdamOptimizer& optimizer() const { return adam_; }

 private:
  model::StyleSpeechModel& model_;
  TrainConfig cfg_;
  AdamOptimizer adam_;
  std::mt19937 dropout_rng_;
};

// Fresh joint (or lora-from-scratch) training run. Checkpoints are written
// under out_dir when it is non-empty; the final checkpoint is returned.
Checkpoint train(const Dataset& dataset, const model::ModelConfig& mcfg, const TrainConfig& cfg,
                 const std::vector<std::string>& phoneme_vocab,
                 const std::vector<std::string>& tone_vocab, const std::string& out_dir,
                 const StepCallback& callback = nullptr);

// LoRA adaptation from a base checkpoint: phoneme_encoder and
// duration_adaptor freeze, style_encoder + mel_decoder + output_linear train.
Checkpoint lora_adapt(const Checkpoint& base, const Dataset& dataset, const TrainConfig& cfg,
                      const std::string& out_dir, const StepCallback& callback = nullptr);

}  // namespace stylespeech::training
