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
// The acoustic network: parallel phoneme/style encoders over FFT blocks, the
// duration adaptor (predictor + length regulator), additive style fusion at a
// configurable stage, and the mel decoder.

#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stylespeech/model_blocks.hpp"
#include "stylespeech/pinyin.hpp"
#include "stylespeech/tensor.hpp"

namespace stylespeech::model {

struct ModelConfig {
  int d_model = 128;
  int n_heads = 2;
  int n_blocks = 4;  // per encoder
  int conv_kernel1 = 3;
  int conv_kernel2 = 3;
  int conv_filter = 256;
  int n_mels = 80;
  int fusion_stage = 0;  // 0 before the length adaptor, 1 after, 2 before the linear
  double dropout_fft = 0.5;
  double dropout_duration = 0.1;
  int max_seq_len = 1000;

  void validate() const;
};

// Time-major hidden sequence plus its validity mask.
struct EmbeddingSequence {
  ad::Tensor h;  // length x d
  Mask mask;
};

struct Regulated {
  EmbeddingSequence seq;
  bool degenerate = false;  // every duration was zero
};

struct ForwardOptions {
  bool training = false;
  const std::vector<int>* gt_durations = nullptr;  // required when training
  bool zero_style = false;   // style embeddings forced to zero vectors
  bool style_free = false;   // run the bare phoneme path, no fusion at all
  std::mt19937* rng = nullptr;  // dropout stream, required when training
};

struct ForwardResult {
  ad::Tensor mel;               // frames x n_mels
  ad::Tensor duration_pred;     // tokens x 1, log domain
  std::vector<int> durations;   // the expansion actually used
  Mask token_mask;
  bool degenerate = false;
};

// Parameter groups, in declaration (= serialization) order.
extern const std::vector<std::string> kParameterGroups;

ad::ParameterSet build_parameters(const ModelConfig& cfg, int n_phonemes, int n_tones,
                                  uint64_t init_seed);

class StyleSpeechModel {
 public:
  StyleSpeechModel(ModelConfig cfg, ad::ParameterSet params, int n_phonemes, int n_tones);

  static StyleSpeechModel create(const ModelConfig& cfg, int n_phonemes, int n_tones,
                                 uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ad::ParameterSet& parameters() { return params_; }
  const ad::ParameterSet& parameters() const { return params_; }
  int phoneme_vocab() const { return n_phonemes_; }
  int tone_vocab() const { return n_tones_; }

  FftBlockParams block(const std::string& group, int index) const;

  EmbeddingSequence encode_phonemes(ad::Tape& tape, const std::vector<int>& ids,
                                    const Mask& mask, bool training, std::mt19937* rng) const;
  EmbeddingSequence encode_styles(ad::Tape& tape, const std::vector<int>& ids,
                                  const Mask& mask, bool training, std::mt19937* rng) const;

  // Per-token log-domain duration predictions, tokens x 1.
  ad::Tensor predict_durations(ad::Tape& tape, const EmbeddingSequence& h, bool training,
                               std::mt19937* rng) const;

  static Regulated length_regulate(ad::Tape& tape, const EmbeddingSequence& h,
                                   const std::vector<int>& durations);

  // Elementwise sum; masks intersected.
  static EmbeddingSequence fuse(ad::Tape& tape, const EmbeddingSequence& a,
                                const EmbeddingSequence& b);

  // FFT blocks to the mel embedding, optional pre-linear style addition, then
  // the n_mels-wide linear output.
  ad::Tensor decode_mel(ad::Tape& tape, const EmbeddingSequence& h, bool training,
                        std::mt19937* rng, const ad::Tensor* style_pre_linear = nullptr) const;

  ForwardResult forward(ad::Tape& tape, const pinyin::AcousticTokens& tokens,
                        const ForwardOptions& opts) const;

  // Inference rounding: max(0, round(exp(p) - 1)), masked tokens get 0.
  static std::vector<int> durations_from_predictions(const ad::Tensor& log_preds,
                                                     const Mask& mask);

  static Mask token_mask(const pinyin::AcousticTokens& tokens);

 private:
  EmbeddingSequence encode(ad::Tape& tape, const std::string& group,
                           const ad::Tensor& table, const std::vector<int>& ids,
                           const Mask& mask, bool training, std::mt19937* rng) const;

  ModelConfig cfg_;
  ad::ParameterSet params_;
  int n_phonemes_;
  int n_tones_;
};

}  // namespace stylespeech::model
