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

#include "stylespeech/model.hpp"

#include <cmath>

#include "stylespeech/rng.hpp"

namespace stylespeech::model {

const std::vector<std::string> kParameterGroups = {
    "phoneme_encoder", "style_encoder", "duration_adaptor", "mel_decoder", "output_linear"};

void ModelConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
    throw Error(ErrorKind::ConfigError, "d_model must be a positive multiple of n_heads");
  if (n_blocks <= 0) throw Error(ErrorKind::ConfigError, "n_blocks must be positive");
  if (conv_kernel1 % 2 == 0 || conv_kernel2 % 2 == 0 || conv_kernel1 <= 0 || conv_kernel2 <= 0)
    throw Error(ErrorKind::ConfigError, "conv kernel sizes must be odd and positive");
  if (conv_filter <= 0) throw Error(ErrorKind::ConfigError, "conv_filter must be positive");
  if (n_mels <= 0) throw Error(ErrorKind::ConfigError, "n_mels must be positive");
  if (fusion_stage < 0 || fusion_stage > 2)
    throw Error(ErrorKind::ConfigError, "fusion_stage must be 0, 1 or 2");
  if (!(dropout_fft >= 0.0 && dropout_fft < 1.0) ||
      !(dropout_duration >= 0.0 && dropout_duration < 1.0))
    throw Error(ErrorKind::ConfigError, "dropout rates must lie in [0,1)");
  if (max_seq_len <= 0) throw Error(ErrorKind::ConfigError, "max_seq_len must be positive");
}

namespace {

std::vector<float> xavier_uniform(std::mt19937& rng, int fan_in, int fan_out, int64_t count) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<float> v(count);
  for (auto& x : v) x = static_cast<float>(uniform_in(rng, -a, a));
  return v;
}

std::vector<float> normal_init(std::mt19937& rng, double stddev, int64_t count) {
  std::vector<float> v(count);
  for (auto& x : v) x = static_cast<float>(normal_double(rng) * stddev);
  return v;
}

void add_fft_block(ad::ParameterSet& params, std::mt19937& rng, const ModelConfig& cfg,
                   const std::string& prefix) {
  const int d = cfg.d_model, cf = cfg.conv_filter;
  const int k1 = cfg.conv_kernel1, k2 = cfg.conv_kernel2;
  auto weight = [&](const std::string& name, int in, int out) {
    params.add(prefix + "." + name, prefix.substr(0, prefix.find('.')),
               ad::Tensor::param({in, out}, xavier_uniform(rng, in, out, static_cast<int64_t>(in) * out)));
  };
  auto bias = [&](const std::string& name, int n, float fill) {
    params.add(prefix + "." + name, prefix.substr(0, prefix.find('.')),
               ad::Tensor::param({1, n}, std::vector<float>(n, fill)));
  };
  weight("wq", d, d);
  bias("bq", d, 0.0f);
  weight("wk", d, d);
  bias("bk", d, 0.0f);
  weight("wv", d, d);
  bias("bv", d, 0.0f);
  weight("wo", d, d);
  bias("bo", d, 0.0f);
  bias("ln1_gain", d, 1.0f);
  bias("ln1_bias", d, 0.0f);
  params.add(prefix + ".conv1_w", prefix.substr(0, prefix.find('.')),
             ad::Tensor::param({k1, d, cf},
                               xavier_uniform(rng, k1 * d, k1 * cf, static_cast<int64_t>(k1) * d * cf)));
  bias("conv1_b", cf, 0.0f);
  params.add(prefix + ".conv2_w", prefix.substr(0, prefix.find('.')),
             ad::Tensor::param({k2, cf, d},
                               xavier_uniform(rng, k2 * cf, k2 * d, static_cast<int64_t>(k2) * cf * d)));
  bias("conv2_b", d, 0.0f);
  bias("ln2_gain", d, 1.0f);
  bias("ln2_bias", d, 0.0f);
}

void add_encoder(ad::ParameterSet& params, std::mt19937& rng, const ModelConfig& cfg,
                 const std::string& group, int vocab) {
  params.add(group + ".embedding", group,
             ad::Tensor::param({vocab, cfg.d_model},
                               normal_init(rng, std::pow(cfg.d_model, -0.5),
                                           static_cast<int64_t>(vocab) * cfg.d_model)));
  for (int b = 0; b < cfg.n_blocks; ++b)
    add_fft_block(params, rng, cfg, group + ".block" + std::to_string(b));
}

}  // namespace

ad::ParameterSet build_parameters(const ModelConfig& cfg, int n_phonemes, int n_tones,
                                  uint64_t init_seed) {
  cfg.validate();
  std::mt19937 rng = make_rng(init_seed, "init");
  ad::ParameterSet params;
  const int d = cfg.d_model, cf = cfg.conv_filter, k = cfg.conv_kernel1;

  add_encoder(params, rng, cfg, "phoneme_encoder", n_phonemes);
  add_encoder(params, rng, cfg, "style_encoder", n_tones);

  const std::string da = "duration_adaptor";
  params.add(da + ".conv1_w", da,
             ad::Tensor::param({k, d, cf}, xavier_uniform(rng, k * d, k * cf,
                                                          static_cast<int64_t>(k) * d * cf)));
  params.add(da + ".conv1_b", da, ad::Tensor::param({1, cf}, std::vector<float>(cf, 0.0f)));
  params.add(da + ".ln1_gain", da, ad::Tensor::param({1, cf}, std::vector<float>(cf, 1.0f)));
  params.add(da + ".ln1_bias", da, ad::Tensor::param({1, cf}, std::vector<float>(cf, 0.0f)));
  params.add(da + ".conv2_w", da,
             ad::Tensor::param({k, cf, cf}, xavier_uniform(rng, k * cf, k * cf,
                                                           static_cast<int64_t>(k) * cf * cf)));
  params.add(da + ".conv2_b", da, ad::Tensor::param({1, cf}, std::vector<float>(cf, 0.0f)));
  params.add(da + ".ln2_gain", da, ad::Tensor::param({1, cf}, std::vector<float>(cf, 1.0f)));
  params.add(da + ".ln2_bias", da, ad::Tensor::param({1, cf}, std::vector<float>(cf, 0.0f)));
  params.add(da + ".linear_w", da,
             ad::Tensor::param({cf, 1}, xavier_uniform(rng, cf, 1, cf)));
  params.add(da + ".linear_b", da, ad::Tensor::param({1, 1}, {0.0f}));

  for (int b = 0; b < cfg.n_blocks; ++b)
    add_fft_block(params, rng, cfg, "mel_decoder.block" + std::to_string(b));

  params.add("output_linear.w", "output_linear",
             ad::Tensor::param({d, cfg.n_mels},
                               xavier_uniform(rng, d, cfg.n_mels,
                                              static_cast<int64_t>(d) * cfg.n_mels)));
  params.add("output_linear.b", "output_linear",
             ad::Tensor::param({1, cfg.n_mels}, std::vector<float>(cfg.n_mels, 0.0f)));
  return params;
}

StyleSpeechModel::StyleSpeechModel(ModelConfig cfg, ad::ParameterSet params, int n_phonemes,
                                   int n_tones)
    : cfg_(std::move(cfg)), params_(std::move(params)), n_phonemes_(n_phonemes), n_tones_(n_tones) {
  cfg_.validate();
}

StyleSpeechModel StyleSpeechModel::create(const ModelConfig& cfg, int n_phonemes, int n_tones,
                                          uint64_t init_seed) {
  return StyleSpeechModel(cfg, build_parameters(cfg, n_phonemes, n_tones, init_seed),
                          n_phonemes, n_tones);
}

FftBlockParams StyleSpeechModel::block(const std::string& group, int index) const {
  const std::string p = group + ".block" + std::to_string(index) + ".";
  FftBlockParams b;
  b.wq = params_.at(p + "wq");
  b.bq = params_.at(p + "bq");
  b.wk = params_.at(p + "wk");
  b.bk = params_.at(p + "bk");
  b.wv = params_.at(p + "wv");
  b.bv = params_.at(p + "bv");
  b.wo = params_.at(p + "wo");
  b.bo = params_.at(p + "bo");
  b.ln1_gain = params_.at(p + "ln1_gain");
  b.ln1_bias = params_.at(p + "ln1_bias");
  b.conv1_w = params_.at(p + "conv1_w");
  b.conv1_b = params_.at(p + "conv1_b");
  b.conv2_w = params_.at(p + "conv2_w");
  b.conv2_b = params_.at(p + "conv2_b");
  b.ln2_gain = params_.at(p + "ln2_gain");
  b.ln2_bias = params_.at(p + "ln2_bias");
  b.n_heads = cfg_.n_heads;
  return b;
}

Mask StyleSpeechModel::token_mask(const pinyin::AcousticTokens& tokens) {
  Mask mask(tokens.phonemes.size());
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = tokens.phonemes[i] != 0;
  return mask;
}

EmbeddingSequence StyleSpeechModel::encode(ad::Tape& tape, const std::string& group,
                                           const ad::Tensor& table, const std::vector<int>& ids,
                                           const Mask& mask, bool training,
                                           std::mt19937* rng) const {
  const int n = static_cast<int>(ids.size());
  if (n > cfg_.max_seq_len)
    throw Error(ErrorKind::LengthMismatch,
                "sequence of " + std::to_string(n) + " tokens exceeds max_seq_len");
  if (mask.size() != ids.size())
    throw Error(ErrorKind::LengthMismatch, "mask length does not match token count");
  ad::Tensor x = tape.embedding(table, ids);
  x = tape.add(x, positional_encoding<float>(n, cfg_.d_model));
  x = tape.mul(x, mask_column<float>(mask));
  for (int b = 0; b < cfg_.n_blocks; ++b)
    x = fft_block(tape, block(group, b), x, mask, cfg_.dropout_fft, training, rng);
  return EmbeddingSequence{x, mask};
}

EmbeddingSequence StyleSpeechModel::encode_phonemes(ad::Tape& tape, const std::vector<int>& ids,
                                                    const Mask& mask, bool training,
                                                    std::mt19937* rng) const {
  return encode(tape, "phoneme_encoder", params_.at("phoneme_encoder.embedding"), ids, mask,
                training, rng);
}

EmbeddingSequence StyleSpeechModel::encode_styles(ad::Tape& tape, const std::vector<int>& ids,
                                                  const Mask& mask, bool training,
                                                  std::mt19937* rng) const {
  return encode(tape, "style_encoder", params_.at("style_encoder.embedding"), ids, mask,
                training, rng);
}

ad::Tensor StyleSpeechModel::predict_durations(ad::Tape& tape, const EmbeddingSequence& h,
                                               bool training, std::mt19937* rng) const {
  ad::Tensor x = h.h;
  ad::Tensor col = mask_column<float>(h.mask);
  x = tape.relu(tape.add(tape.conv1d(x, params_.at("duration_adaptor.conv1_w")),
                         params_.at("duration_adaptor.conv1_b")));
  x = layer_norm_affine(tape, x, params_.at("duration_adaptor.ln1_gain"),
                        params_.at("duration_adaptor.ln1_bias"));
  x = tape.mul(x, col);
  if (training && cfg_.dropout_duration > 0.0)
    x = tape.dropout(x, cfg_.dropout_duration, training, *rng);
  x = tape.relu(tape.add(tape.conv1d(x, params_.at("duration_adaptor.conv2_w")),
                         params_.at("duration_adaptor.conv2_b")));
  x = layer_norm_affine(tape, x, params_.at("duration_adaptor.ln2_gain"),
                        params_.at("duration_adaptor.ln2_bias"));
  x = tape.mul(x, col);
  if (training && cfg_.dropout_duration > 0.0)
    x = tape.dropout(x, cfg_.dropout_duration, training, *rng);
  return tape.add(tape.matmul(x, params_.at("duration_adaptor.linear_w")),
                  params_.at("duration_adaptor.linear_b"));
}

Regulated StyleSpeechModel::length_regulate(ad::Tape& tape, const EmbeddingSequence& h,
                                            const std::vector<int>& durations) {
  if (durations.size() != static_cast<size_t>(h.h.dim(0)))
    throw Error(ErrorKind::LengthMismatch,
                std::to_string(durations.size()) + " durations for " +
                    std::to_string(h.h.dim(0)) + " tokens");
  ad::Tensor out = tape.repeat_rows(h.h, durations);
  Regulated r;
  r.seq.h = out;
  r.seq.mask.assign(static_cast<size_t>(out.dim(0)), 1);
  r.degenerate = out.dim(0) == 0;
  return r;
}

EmbeddingSequence StyleSpeechModel::fuse(ad::Tape& tape, const EmbeddingSequence& a,
                                         const EmbeddingSequence& b) {
  EmbeddingSequence out;
  out.h = tape.add(a.h, b.h);
  out.mask.resize(a.mask.size());
  for (size_t i = 0; i < out.mask.size(); ++i) out.mask[i] = a.mask[i] && b.mask[i];
  return out;
}

ad::Tensor StyleSpeechModel::decode_mel(ad::Tape& tape, const EmbeddingSequence& h,
                                        bool training, std::mt19937* rng,
                                        const ad::Tensor* style_pre_linear) const {
  const int m = h.h.dim(0);
  if (m > cfg_.max_seq_len)
    throw Error(ErrorKind::LengthMismatch,
                std::to_string(m) + " frames exceed max_seq_len");
  ad::Tensor col = mask_column<float>(h.mask);
  ad::Tensor x = tape.mul(tape.add(h.h, positional_encoding<float>(m, cfg_.d_model)), col);
  for (int b = 0; b < cfg_.n_blocks; ++b)
    x = fft_block(tape, block("mel_decoder", b), x, h.mask, cfg_.dropout_fft, training, rng);
  if (style_pre_linear) x = tape.add(x, *style_pre_linear);
  return tape.add(tape.matmul(x, params_.at("output_linear.w")), params_.at("output_linear.b"));
}

std::vector<int> StyleSpeechModel::durations_from_predictions(const ad::Tensor& log_preds,
                                                              const Mask& mask) {
  std::vector<int> out(mask.size(), 0);
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double d = std::exp(static_cast<double>(log_preds.values()[i])) - 1.0;
    out[i] = static_cast<int>(std::max(0.0, std::round(d)));
  }
  return out;
}

ForwardResult StyleSpeechModel::forward(ad::Tape& tape, const pinyin::AcousticTokens& tokens,
                                        const ForwardOptions& opts) const {
  if (tokens.phonemes.size() != tokens.tones.size())
    throw Error(ErrorKind::LengthMismatch, "phoneme and tone streams differ in length");
  if (opts.training && opts.gt_durations == nullptr)
    throw Error(ErrorKind::MissingDurations, "training forward requires ground-truth durations");
  if (opts.training && opts.rng == nullptr)
    throw Error(ErrorKind::MissingDurations, "training forward requires a dropout rng");
  const Mask mask = token_mask(tokens);
  if (opts.gt_durations && opts.gt_durations->size() != tokens.phonemes.size())
    throw Error(ErrorKind::LengthMismatch, "duration count does not match token count");

  // Phoneme path first, style path second: the phoneme encoding never
  // depends on style inputs or on the style encoder's dropout draws.
  const EmbeddingSequence hp =
      encode_phonemes(tape, tokens.phonemes, mask, opts.training, opts.rng);
  std::optional<EmbeddingSequence> hs;
  if (!opts.style_free) {
    if (opts.zero_style) {
      hs = EmbeddingSequence{
          ad::Tensor::zeros({static_cast<int>(tokens.tones.size()), cfg_.d_model}), mask};
    } else {
      hs = encode_styles(tape, tokens.tones, mask, opts.training, opts.rng);
    }
  }

  ForwardResult result;
  result.token_mask = mask;

  // Ground-truth durations drive the expansion whenever they are supplied
  // (always in training); otherwise the rounded predictions do.
  auto pick_durations = [&](const ad::Tensor& pred) {
    return opts.gt_durations ? *opts.gt_durations : durations_from_predictions(pred, mask);
  };

  switch (cfg_.fusion_stage) {
    case 0: {
      const EmbeddingSequence h = hs ? fuse(tape, hp, *hs) : hp;
      result.duration_pred = predict_durations(tape, h, opts.training, opts.rng);
      result.durations = pick_durations(result.duration_pred);
      Regulated reg = length_regulate(tape, h, result.durations);
      result.degenerate = reg.degenerate;
      result.mel = decode_mel(tape, reg.seq, opts.training, opts.rng);
      break;
    }
    case 1: {
      result.duration_pred = predict_durations(tape, hp, opts.training, opts.rng);
      result.durations = pick_durations(result.duration_pred);
      Regulated rp = length_regulate(tape, hp, result.durations);
      result.degenerate = rp.degenerate;
      EmbeddingSequence h = rp.seq;
      if (hs) {
        Regulated rs = length_regulate(tape, *hs, result.durations);
        h = fuse(tape, rp.seq, rs.seq);
      }
      result.mel = decode_mel(tape, h, opts.training, opts.rng);
      break;
    }
    case 2: {
      result.duration_pred = predict_durations(tape, hp, opts.training, opts.rng);
      result.durations = pick_durations(result.duration_pred);
      Regulated rp = length_regulate(tape, hp, result.durations);
      result.degenerate = rp.degenerate;
      if (hs) {
        Regulated rs = length_regulate(tape, *hs, result.durations);
        result.mel = decode_mel(tape, rp.seq, opts.training, opts.rng, &rs.seq.h);
      } else {
        result.mel = decode_mel(tape, rp.seq, opts.training, opts.rng);
      }
      break;
    }
    default:
      throw Error(ErrorKind::ConfigError, "fusion_stage must be 0, 1 or 2");
  }
  return result;
}

}  // namespace stylespeech::model
