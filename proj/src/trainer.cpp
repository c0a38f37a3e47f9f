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

#include "stylespeech/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "stylespeech/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written as raw little-endian float32");

namespace stylespeech::training {

namespace {

using nlohmann::ordered_json;

ordered_json config_to_json(const model::ModelConfig& c) {
  ordered_json j;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["n_blocks"] = c.n_blocks;
  j["conv_kernel1"] = c.conv_kernel1;
  j["conv_kernel2"] = c.conv_kernel2;
  j["conv_filter"] = c.conv_filter;
  j["n_mels"] = c.n_mels;
  j["fusion_stage"] = c.fusion_stage;
  j["dropout_fft"] = c.dropout_fft;
  j["dropout_duration"] = c.dropout_duration;
  j["max_seq_len"] = c.max_seq_len;
  return j;
}

model::ModelConfig config_from_json(const nlohmann::json& j) {
  model::ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_blocks = j.at("n_blocks").get<int>();
  c.conv_kernel1 = j.at("conv_kernel1").get<int>();
  c.conv_kernel2 = j.at("conv_kernel2").get<int>();
  c.conv_filter = j.at("conv_filter").get<int>();
  c.n_mels = j.at("n_mels").get<int>();
  c.fusion_stage = j.at("fusion_stage").get<int>();
  c.dropout_fft = j.at("dropout_fft").get<double>();
  c.dropout_duration = j.at("dropout_duration").get<double>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  return c;
}

constexpr char kMagic[4] = {'S', 'S', 'P', 'C'};
constexpr uint8_t kVersion = 1;

}  // namespace

void TrainConfig::validate() const {
  if (mode != "joint" && mode != "lora")
    throw Error(ErrorKind::ConfigError, "mode must be joint or lora, got " + mode);
  if (steps < 1) throw Error(ErrorKind::ConfigError, "steps must be >= 1");
  if (warmup_steps < 1) throw Error(ErrorKind::ConfigError, "warmup_steps must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::ConfigError, "batch_size must be >= 1");
  if (grad_clip < 0.0) throw Error(ErrorKind::ConfigError, "grad_clip must be >= 0");
  if (checkpoint_every < 0) throw Error(ErrorKind::ConfigError, "checkpoint_every must be >= 0");
}

double lr_at(int64_t step, int d_model, int64_t warmup) {
  if (step < 1) throw Error(ErrorKind::ConfigError, "lr_at needs step >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return std::pow(d_model, -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ordered_json meta;
  meta["model"] = config_to_json(ckpt.meta.config);
  meta["phoneme_vocab"] = ckpt.meta.phoneme_vocab;
  meta["tone_vocab"] = ckpt.meta.tone_vocab;
  meta["step"] = ckpt.meta.step;
  meta["mode"] = ckpt.meta.mode;
  ordered_json freeze;
  for (const auto& group : model::kParameterGroups) {
    auto it = ckpt.meta.freeze.find(group);
    freeze[group] = it != ckpt.meta.freeze.end() && it->second;
  }
  meta["freeze"] = freeze;
  ordered_json manifest = ordered_json::array();
  for (const auto& e : ckpt.params.entries()) {
    ordered_json p;
    p["name"] = e.name;
    p["group"] = e.group;
    p["shape"] = e.tensor.shape();
    manifest.push_back(p);
  }
  meta["params"] = manifest;
  const std::string doc = meta.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + tmp);
    out.write(kMagic, 4);
    out.put(static_cast<char>(kVersion));
    uint64_t len = doc.size();
    unsigned char lb[8];
    for (int i = 0; i < 8; ++i) lb[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(lb), 8);
    out.write(doc.data(), static_cast<std::streamsize>(doc.size()));
    for (const auto& e : ckpt.params.entries()) {
      const auto& v = e.tensor.values();
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(float)));
    }
    if (!out) throw Error(ErrorKind::IoFailure, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(ErrorKind::CorruptCheckpoint, path + ": bad magic");
  const int version = in.get();
  if (version != kVersion)
    throw Error(ErrorKind::CorruptCheckpoint,
                path + ": unsupported version " + std::to_string(version));
  unsigned char lb[8];
  in.read(reinterpret_cast<char*>(lb), 8);
  if (!in) throw Error(ErrorKind::CorruptCheckpoint, path + ": truncated header");
  uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<uint64_t>(lb[i]) << (8 * i);
  std::string doc(len, '\0');
  in.read(doc.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(ErrorKind::CorruptCheckpoint, path + ": truncated metadata");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(doc);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptCheckpoint, path + ": " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.meta.config = config_from_json(meta.at("model"));
    ckpt.meta.phoneme_vocab = meta.at("phoneme_vocab").get<std::vector<std::string>>();
    ckpt.meta.tone_vocab = meta.at("tone_vocab").get<std::vector<std::string>>();
    ckpt.meta.step = meta.at("step").get<int64_t>();
    ckpt.meta.mode = meta.at("mode").get<std::string>();
    for (const auto& [k, v] : meta.at("freeze").items()) ckpt.meta.freeze[k] = v.get<bool>();
    for (const auto& p : meta.at("params")) {
      const std::string name = p.at("name").get<std::string>();
      const std::string group = p.at("group").get<std::string>();
      const ad::Shape shape = p.at("shape").get<ad::Shape>();
      std::vector<float> values(static_cast<size_t>(ad::numel_of(shape)));
      in.read(reinterpret_cast<char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
      if (!in) throw Error(ErrorKind::CorruptCheckpoint, path + ": truncated blob for " + name);
      ad::Tensor t = ad::Tensor::param(shape, std::move(values));
      auto fit = ckpt.meta.freeze.find(group);
      t.set_trainable(!(fit != ckpt.meta.freeze.end() && fit->second));
      ckpt.params.add(name, group, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptCheckpoint, path + ": " + e.what());
  }
  return ckpt;
}

model::StyleSpeechModel model_from_checkpoint(const Checkpoint& ckpt) {
  ad::ParameterSet params;
  for (const auto& e : ckpt.params.entries()) params.add(e.name, e.group, e.tensor.clone());
  return model::StyleSpeechModel(ckpt.meta.config, std::move(params),
                                 static_cast<int>(ckpt.meta.phoneme_vocab.size()),
                                 static_cast<int>(ckpt.meta.tone_vocab.size()));
}

AdamOptimizer::AdamOptimizer(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::update(ad::ParameterSet& params, double lr, int64_t step) {
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step));
  for (auto& e : params.entries()) {
    if (!e.tensor.trainable() || !e.tensor.has_grad()) continue;
    Slot& slot = state_[e.name];
    auto& values = e.tensor.values();
    const auto& grad = e.tensor.grad();
    if (slot.m.empty()) {
      slot.m.assign(values.size(), 0.0f);
      slot.v.assign(values.size(), 0.0f);
    }
    for (size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      const double m = beta1_ * slot.m[i] + (1.0 - beta1_) * g;
      const double v = beta2_ * slot.v[i] + (1.0 - beta2_) * g * g;
      slot.m[i] = static_cast<float>(m);
      slot.v[i] = static_cast<float>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      values[i] = static_cast<float>(values[i] - lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

Trainer::Trainer(model::StyleSpeechModel& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), dropout_rng_(make_rng(cfg.seed, "dropout")) {
  cfg_.validate();
}

StepStats Trainer::step(const std::vector<const Utterance*>& batch, int64_t step_no) {
  if (batch.empty()) throw Error(ErrorKind::DatasetEmpty, "empty batch");
  ad::Tape tape;
  ad::Tensor total;
  StepStats stats;
  bool first = true;

  int max_n = 0;
  for (const Utterance* u : batch)
    max_n = std::max(max_n, static_cast<int>(u->tokens.size()));

  for (const Utterance* u : batch) {
    if (u->tokens.size() != u->durations.size())
      throw Error(ErrorKind::LengthMismatch, u->id + ": durations do not match tokens");
    // Right-pad to the batch length with PAD ids and zero durations; the
    // regulator drops the zero-duration rows so mel lengths stay exact.
    pinyin::AcousticTokens tokens = u->tokens;
    std::vector<int> durations = u->durations;
    tokens.phonemes.resize(max_n, 0);
    tokens.tones.resize(max_n, 0);
    durations.resize(max_n, 0);

    model::ForwardOptions opts;
    opts.training = true;
    opts.gt_durations = &durations;
    opts.rng = &dropout_rng_;
    model::ForwardResult fr = model_.forward(tape, tokens, opts);

    const int m = fr.mel.dim(0);
    if (m != u->mel.frames)
      throw Error(ErrorKind::LengthMismatch,
                  u->id + ": durations sum to " + std::to_string(m) + " but mel has " +
                      std::to_string(u->mel.frames) + " frames");
    ad::Tensor mel_target =
        ad::Tensor::from({m, u->mel.n_mels},
                         std::vector<float>(u->mel.data.begin(), u->mel.data.end()));
    ad::Tensor mel_loss = tape.mse_loss(fr.mel, mel_target);

    std::vector<float> dur_target(max_n, 0.0f), dur_weight(max_n, 0.0f);
    for (int i = 0; i < max_n; ++i) {
      if (!fr.token_mask[i]) continue;
      dur_target[i] = static_cast<float>(std::log(durations[i] + 1.0));
      dur_weight[i] = 1.0f;
    }
    ad::Tensor dur_loss =
        tape.mse_loss(fr.duration_pred, ad::Tensor::from({max_n, 1}, std::move(dur_target)),
                      ad::Tensor::from({max_n, 1}, std::move(dur_weight)));

    stats.mel_loss += mel_loss.item();
    stats.duration_loss += dur_loss.item();

    ad::Tensor utt_loss =
        tape.add(tape.scale(mel_loss, static_cast<float>(cfg_.mel_loss_weight)),
                 tape.scale(dur_loss, static_cast<float>(cfg_.duration_loss_weight)));
    total = first ? utt_loss : tape.add(total, utt_loss);
    first = false;
  }

  const float inv_b = 1.0f / static_cast<float>(batch.size());
  total = tape.scale(total, inv_b);
  stats.mel_loss /= static_cast<double>(batch.size());
  stats.duration_loss /= static_cast<double>(batch.size());
  stats.lr = lr_at(step_no, model_.config().d_model, cfg_.warmup_steps);

  if (!std::isfinite(total.item()))
    throw Error(ErrorKind::NonFiniteLoss,
                "step " + std::to_string(step_no) + ": loss " + std::to_string(total.item()) +
                    " (mel " + std::to_string(stats.mel_loss) + ", duration " +
                    std::to_string(stats.duration_loss) + ")");

  tape.backward(total);

  if (cfg_.grad_clip > 0.0) {
    double norm_sq = 0.0;
    for (const auto& e : model_.parameters().entries()) {
      if (!e.tensor.has_grad()) continue;
      for (float g : e.tensor.grad()) norm_sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(norm_sq);
    if (norm > cfg_.grad_clip) {
      const float s = static_cast<float>(cfg_.grad_clip / norm);
      for (auto& e : model_.parameters().entries()) {
        if (!e.tensor.has_grad()) continue;
        for (auto& v : e.tensor.mutable_grad()) v *= s;
      }
    }
  }

  adam_.update(model_.parameters(), stats.lr, step_no);
  model_.parameters().zero_grads();
  return stats;
}

namespace {

Checkpoint run_training(model::StyleSpeechModel& model, const Dataset& dataset,
                        const TrainConfig& cfg, const std::vector<std::string>& phoneme_vocab,
                        const std::vector<std::string>& tone_vocab, const std::string& out_dir,
                        const StepCallback& callback) {
  if (dataset.empty()) throw Error(ErrorKind::DatasetEmpty, "no utterances to train on");
  Trainer trainer(model, cfg);

  auto freeze_map = [&] {
    std::map<std::string, bool> freeze;
    for (const auto& group : model::kParameterGroups) {
      bool frozen = true;
      for (const auto& e : model.parameters().entries())
        if (e.group == group && e.tensor.trainable()) frozen = false;
      freeze[group] = frozen;
    }
    return freeze;
  };

  auto snapshot = [&](int64_t step) {
    Checkpoint ckpt;
    ckpt.meta.config = model.config();
    ckpt.meta.phoneme_vocab = phoneme_vocab;
    ckpt.meta.tone_vocab = tone_vocab;
    ckpt.meta.step = step;
    ckpt.meta.mode = cfg.mode;
    ckpt.meta.freeze = freeze_map();
    for (const auto& e : model.parameters().entries())
      ckpt.params.add(e.name, e.group, e.tensor);
    return ckpt;
  };

  const int b = std::min<int>(cfg.batch_size, static_cast<int>(dataset.size()));
  for (int64_t step = 1; step <= cfg.steps; ++step) {
    std::vector<const Utterance*> batch;
    batch.reserve(b);
    for (int j = 0; j < b; ++j)
      batch.push_back(&dataset[((step - 1) * b + j) % dataset.size()]);
    const StepStats stats = trainer.step(batch, step);
    if (callback) callback(step, stats);
    if (!out_dir.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
        step != cfg.steps) {
      save_checkpoint(out_dir + "/checkpoint_" + std::to_string(step) + ".sspc",
                      snapshot(step));
    }
  }
  Checkpoint final_ckpt = snapshot(cfg.steps);
  if (!out_dir.empty())
    save_checkpoint(out_dir + "/checkpoint_final.sspc", final_ckpt);
  return final_ckpt;
}

}  // namespace

Checkpoint train(const Dataset& dataset, const model::ModelConfig& mcfg, const TrainConfig& cfg,
                 const std::vector<std::string>& phoneme_vocab,
                 const std::vector<std::string>& tone_vocab, const std::string& out_dir,
                 const StepCallback& callback) {
  cfg.validate();
  model::StyleSpeechModel model = model::StyleSpeechModel::create(
      mcfg, static_cast<int>(phoneme_vocab.size()), static_cast<int>(tone_vocab.size()),
      cfg.seed);
  if (cfg.mode == "lora") {
    ad::set_trainable(model.parameters(), ad::name_prefix("phoneme_encoder."), false);
    ad::set_trainable(model.parameters(), ad::name_prefix("duration_adaptor."), false);
  }
  return run_training(model, dataset, cfg, phoneme_vocab, tone_vocab, out_dir, callback);
}

Checkpoint lora_adapt(const Checkpoint& base, const Dataset& dataset, const TrainConfig& cfg,
                      const std::string& out_dir, const StepCallback& callback) {
  TrainConfig lora_cfg = cfg;
  lora_cfg.mode = "lora";
  lora_cfg.validate();
  model::StyleSpeechModel model = model_from_checkpoint(base);
  for (auto& e : model.parameters().entries()) e.tensor.set_trainable(true);
  ad::set_trainable(model.parameters(), ad::name_prefix("phoneme_encoder."), false);
  ad::set_trainable(model.parameters(), ad::name_prefix("duration_adaptor."), false);
  return run_training(model, dataset, lora_cfg, base.meta.phoneme_vocab, base.meta.tone_vocab,
                      out_dir, callback);
}

}  // namespace stylespeech::training
