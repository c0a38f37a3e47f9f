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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "stylespeech/trainer.hpp"

using namespace stylespeech;
namespace fs = std::filesystem;

namespace {

model::ModelConfig tiny_config(int fusion_stage = 0) {
  model::ModelConfig cfg;
  cfg.d_model = 32;
  cfg.n_heads = 2;
  cfg.n_blocks = 2;
  cfg.conv_filter = 48;
  cfg.fusion_stage = fusion_stage;
  cfg.max_seq_len = 128;
  return cfg;
}

dsp::MelSpectrogram toy_mel(int frames, uint64_t seed) {
  dsp::MelSpectrogram mel;
  mel.frames = frames;
  mel.n_mels = 80;
  mel.sample_rate = 8000;
  mel.n_fft = 1024;
  mel.hop = 512;
  mel.data.resize(static_cast<size_t>(frames) * 80);
  std::mt19937 rng(static_cast<uint32_t>(seed));
  for (auto& v : mel.data) v = static_cast<float>(uniform_in(rng, -11.5, 0.0));
  return mel;
}

training::Dataset toy_dataset() {
  const char* sentences[3] = {"ni3 hao3", "chong1 chong2", "an1 hao3 ma5"};
  training::Dataset dataset;
  for (int i = 0; i < 3; ++i) {
    training::Utterance u;
    u.id = "u" + std::to_string(i);
    u.tokens = pinyin::g2p(sentences[i]);
    const int n = static_cast<int>(u.tokens.size());
    const int frames = 2 * n + 3;
    u.durations.assign(n, 2);
    u.durations[0] += 3;  // remainder to the earliest token
    u.mel = toy_mel(frames, 100 + i);
    dataset.push_back(std::move(u));
  }
  return dataset;
}

std::vector<std::string> pvocab() { return pinyin::phoneme_inventory(); }
std::vector<std::string> tvocab() { return pinyin::tone_inventory(); }

std::string temp_dir(const std::string& name) {
  const std::string dir = (fs::temp_directory_path() / name).string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<float> group_values(const ad::ParameterSet& params, const std::string& group) {
  std::vector<float> out;
  for (const auto& e : params.entries())
    if (e.group == group) out.insert(out.end(), e.tensor.values().begin(), e.tensor.values().end());
  return out;
}

}  // namespace

TEST_CASE("warm-up schedule values and shape") {
  CHECK(training::lr_at(4000, 256, 4000) == doctest::Approx(9.8821e-4).epsilon(1e-7 / 9.8821e-4));
  CHECK(training::lr_at(1, 256, 4000) == doctest::Approx(2.4705e-7).epsilon(1e-10 / 2.4705e-7));

  // positive, increasing before warmup, decreasing after, peak at warmup
  double peak = 0.0;
  int64_t peak_step = 0;
  double prev = 0.0;
  for (int64_t s = 1; s <= 8000; ++s) {
    const double lr = training::lr_at(s, 256, 4000);
    CHECK(lr > 0.0);
    if (s < 4000) CHECK(lr > prev);
    if (s > 4000) CHECK(lr < prev);
    if (lr > peak) {
      peak = lr;
      peak_step = s;
    }
    prev = lr;
  }
  CHECK(peak_step == 4000);
  CHECK_THROWS_AS(training::lr_at(0, 256, 4000), Error);
}

TEST_CASE("train_step: finite positive loss, deterministic across runs") {
  auto run = [](int steps) {
    const training::Dataset dataset = toy_dataset();
    model::StyleSpeechModel m = model::StyleSpeechModel::create(
        tiny_config(), static_cast<int>(pvocab().size()), static_cast<int>(tvocab().size()), 5);
    training::TrainConfig cfg;
    cfg.steps = steps;
    cfg.batch_size = 3;
    cfg.seed = 77;
    training::Trainer trainer(m, cfg);
    std::vector<const training::Utterance*> batch;
    for (const auto& u : dataset) batch.push_back(&u);
    std::vector<double> losses;
    for (int s = 1; s <= steps; ++s) {
      const training::StepStats stats = trainer.step(batch, s);
      losses.push_back(stats.mel_loss);
      losses.push_back(stats.duration_loss);
      CHECK(std::isfinite(stats.mel_loss));
      CHECK(stats.mel_loss > 0.0);
    }
    return losses;
  };
  const auto a = run(10);
  const auto b = run(10);
  CHECK(a == b);  // bit-identical losses for 10 steps
}

TEST_CASE("lora mode: frozen groups bit-unchanged, optimizer state never allocated") {
  const training::Dataset dataset = toy_dataset();
  model::StyleSpeechModel m = model::StyleSpeechModel::create(
      tiny_config(), static_cast<int>(pvocab().size()), static_cast<int>(tvocab().size()), 5);
  ad::set_trainable(m.parameters(), ad::name_prefix("phoneme_encoder."), false);
  ad::set_trainable(m.parameters(), ad::name_prefix("duration_adaptor."), false);

  const std::vector<float> phoneme_before = group_values(m.parameters(), "phoneme_encoder");
  const std::vector<float> duration_before = group_values(m.parameters(), "duration_adaptor");
  const std::vector<float> style_before = group_values(m.parameters(), "style_encoder");

  training::TrainConfig cfg;
  cfg.mode = "lora";
  cfg.steps = 100;
  cfg.batch_size = 3;
  cfg.seed = 13;
  training::Trainer trainer(m, cfg);
  std::vector<const training::Utterance*> batch;
  for (const auto& u : dataset) batch.push_back(&u);
  for (int s = 1; s <= 100; ++s) trainer.step(batch, s);

  CHECK(group_values(m.parameters(), "phoneme_encoder") == phoneme_before);
  CHECK(group_values(m.parameters(), "duration_adaptor") == duration_before);
  CHECK(group_values(m.parameters(), "style_encoder") != style_before);

  for (const auto& e : m.parameters().entries()) {
    if (e.group == "phoneme_encoder" || e.group == "duration_adaptor")
      CHECK(!trainer.optimizer().has_state(e.name));
  }
}

TEST_CASE("checkpoint round trip is bit-exact and byte-stable") {
  const training::Dataset dataset = toy_dataset();
  training::TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch_size = 2;
  cfg.checkpoint_every = 0;
  cfg.seed = 3;
  const training::Checkpoint ckpt = training::train(dataset, tiny_config(), cfg, pvocab(),
                                                    tvocab(), "");

  const std::string dir = temp_dir("ss_ckpt_test");
  const std::string path = dir + "/a.sspc";
  training::save_checkpoint(path, ckpt);
  const training::Checkpoint loaded = training::load_checkpoint(path);
  CHECK(loaded.meta.step == ckpt.meta.step);
  CHECK(loaded.meta.mode == "joint");
  CHECK(loaded.meta.phoneme_vocab == pvocab());
  REQUIRE(loaded.params.size() == ckpt.params.size());
  for (size_t i = 0; i < ckpt.params.entries().size(); ++i) {
    CHECK(loaded.params.entries()[i].name == ckpt.params.entries()[i].name);
    CHECK(loaded.params.entries()[i].tensor.values() ==
          ckpt.params.entries()[i].tensor.values());
  }

  const std::string path2 = dir + "/b.sspc";
  training::save_checkpoint(path2, loaded);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  // corrupt magic
  std::string bad = b1;
  bad[0] = 'X';
  {
    std::ofstream out(dir + "/bad.sspc", std::ios::binary);
    out << bad;
  }
  CHECK_THROWS_AS(training::load_checkpoint(dir + "/bad.sspc"), Error);
  fs::remove_all(dir);
}

TEST_CASE("lora_adapt freezes the base path and keeps the additive identity") {
  const training::Dataset dataset = toy_dataset();
  training::TrainConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 3;
  cfg.checkpoint_every = 0;
  cfg.seed = 21;
  const training::Checkpoint base =
      training::train(dataset, tiny_config(0), cfg, pvocab(), tvocab(), "");

  training::TrainConfig lcfg = cfg;
  lcfg.steps = 40;
  const training::Checkpoint adapted = training::lora_adapt(base, dataset, lcfg, "");
  CHECK(adapted.meta.mode == "lora");
  CHECK(adapted.meta.freeze.at("phoneme_encoder"));
  CHECK(adapted.meta.freeze.at("duration_adaptor"));
  CHECK_FALSE(adapted.meta.freeze.at("style_encoder"));

  // Frozen groups bit-equal to the base checkpoint.
  CHECK(group_values(adapted.params, "phoneme_encoder") ==
        group_values(base.params, "phoneme_encoder"));
  CHECK(group_values(adapted.params, "duration_adaptor") ==
        group_values(base.params, "duration_adaptor"));

  // Zero-style inference of the adapted model matches its own style-free
  // pipeline bit for bit, and predicts the base model's durations (the
  // duration path is frozen).
  const model::StyleSpeechModel base_model = training::model_from_checkpoint(base);
  const model::StyleSpeechModel adapted_model = training::model_from_checkpoint(adapted);
  const pinyin::AcousticTokens t = pinyin::g2p("ni3 hao3");
  ad::Tape tape(false);
  model::ForwardOptions zero;
  zero.zero_style = true;
  model::ForwardOptions free;
  free.style_free = true;
  const model::ForwardResult az = adapted_model.forward(tape, t, zero);
  const model::ForwardResult af = adapted_model.forward(tape, t, free);
  const model::ForwardResult bz = base_model.forward(tape, t, zero);
  CHECK(az.mel.values() == af.mel.values());
  CHECK(az.durations == bz.durations);
  CHECK(az.duration_pred.values() == bz.duration_pred.values());
}

TEST_CASE("training on an empty dataset is rejected") {
  training::TrainConfig cfg;
  cfg.steps = 1;
  CHECK_THROWS_AS(training::train({}, tiny_config(), cfg, pvocab(), tvocab(), ""), Error);
}

TEST_CASE("loss trends down on the toy set") {
  const training::Dataset dataset = toy_dataset();
  training::TrainConfig cfg;
  cfg.steps = 150;
  cfg.batch_size = 3;
  cfg.warmup_steps = 50;
  cfg.checkpoint_every = 0;
  cfg.seed = 9;
  std::vector<double> mel_losses;
  training::train(dataset, tiny_config(), cfg, pvocab(), tvocab(), "",
                  [&](int64_t, const training::StepStats& s) { mel_losses.push_back(s.mel_loss); });
  REQUIRE(mel_losses.size() == 150);
  const double head = (mel_losses[0] + mel_losses[1] + mel_losses[2]) / 3.0;
  const double tail = (mel_losses[147] + mel_losses[148] + mel_losses[149]) / 3.0;
  CHECK(tail < head);
}

TEST_CASE("checkpoint cadence writes intermediate files") {
  const training::Dataset dataset = toy_dataset();
  const std::string dir = temp_dir("ss_cadence_test");
  training::TrainConfig cfg;
  cfg.steps = 4;
  cfg.batch_size = 3;
  cfg.checkpoint_every = 2;
  cfg.seed = 2;
  training::train(dataset, tiny_config(), cfg, pvocab(), tvocab(), dir);
  CHECK(fs::exists(dir + "/checkpoint_2.sspc"));
  CHECK(fs::exists(dir + "/checkpoint_final.sspc"));
  fs::remove_all(dir);
}
