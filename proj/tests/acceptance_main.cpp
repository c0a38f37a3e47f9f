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
// Acceptance suite: ten end-to-end criteria, one pass/fail line each.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "stylespeech/cli.hpp"
#include "stylespeech/dsp.hpp"
#include "stylespeech/metrics.hpp"
#include "stylespeech/model.hpp"
#include "stylespeech/rng.hpp"
#include "stylespeech/tensor.hpp"
#include "stylespeech/trainer.hpp"

using namespace stylespeech;
namespace fs = std::filesystem;

namespace {

using DTensor = ad::TensorT<double>;
using DTape = ad::TapeT<double>;

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

DTensor random_dtensor(std::mt19937& rng, ad::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ad::numel_of(shape));
  for (auto& x : v) x = uniform_in(rng, lo, hi);
  return DTensor::from(std::move(shape), std::move(v));
}

// ---- toy corpus ------------------------------------------------------------

dsp::AudioBuffer tone_mix(const std::vector<double>& freqs, double seconds, int sr) {
  dsp::AudioBuffer a;
  a.sample_rate = sr;
  a.samples.assign(static_cast<size_t>(seconds * sr), 0.0);
  for (size_t i = 0; i < a.samples.size(); ++i) {
    double s = 0.0;
    for (double f : freqs) s += std::sin(2.0 * M_PI * f * i / sr);
    a.samples[i] = 0.35 * s / static_cast<double>(freqs.size());
  }
  return a;
}

training::Dataset toy_dataset_from_audio() {
  struct Spec {
    const char* id;
    const char* pinyin;
    std::vector<double> freqs;
    double seconds;
  };
  const std::vector<Spec> specs = {
      {"u0", "ni3 hao3", {320.0}, 0.45},
      {"u1", "chong1 chong2", {520.0}, 0.40},
      {"u2", "an1 ma5", {240.0, 720.0}, 0.50},
  };
  training::Dataset dataset;
  for (const auto& s : specs) {
    training::Utterance u;
    u.id = s.id;
    u.tokens = pinyin::g2p(s.pinyin);
    u.mel = dsp::wav_to_logmel(tone_mix(s.freqs, s.seconds, 8000), 1024, 512, 80);
    const int n = static_cast<int>(u.tokens.size());
    const int base = u.mel.frames / n, rem = u.mel.frames % n;
    u.durations.assign(n, base);
    for (int i = 0; i < rem; ++i) ++u.durations[i];
    dataset.push_back(std::move(u));
  }
  return dataset;
}

model::ModelConfig desk_config(int fusion_stage) {
  model::ModelConfig cfg;  // desk-scale defaults
  cfg.fusion_stage = fusion_stage;
  return cfg;
}

double eval_mode_mel_mse(const model::StyleSpeechModel& m, const training::Dataset& dataset) {
  double total = 0.0;
  for (const auto& u : dataset) {
    ad::Tape tape(false);
    model::ForwardOptions opts;  // eval dropout, ground-truth expansion
    opts.gt_durations = &u.durations;
    const model::ForwardResult fr = m.forward(tape, u.tokens, opts);
    const ad::Tensor target = ad::Tensor::from(
        {u.mel.frames, u.mel.n_mels}, std::vector<float>(u.mel.data.begin(), u.mel.data.end()));
    total += tape.mse_loss(fr.mel, target).item();
  }
  return total / static_cast<double>(dataset.size());
}

// ---- criteria --------------------------------------------------------------

bool criterion_gradients(std::string& detail) {
  const double t0 = now_s();
  double worst = 0.0;
  std::string worst_name = "none";
  auto check = [&](const char* name,
                   const std::function<std::vector<DTensor>(std::mt19937&)>& make,
                   const std::function<DTensor(DTape&, std::vector<DTensor>&)>& f) {
    std::mt19937 rng(20260810);
    for (int trial = 0; trial < 5; ++trial) {
      auto inputs = make(rng);
      const double err = ad::grad_check<double>(f, std::move(inputs), 1e-4);
      if (err > worst) {
        worst = err;
        worst_name = name;
      }
    }
  };

  check("matmul",
        [](std::mt19937& rng) {
          return std::vector<DTensor>{random_dtensor(rng, {3, 4}), random_dtensor(rng, {4, 5})};
        },
        [](DTape& t, std::vector<DTensor>& in) {
          return t.mse_loss(t.matmul(in[0], in[1]), DTensor::zeros({3, 5}));
        });
  check("add",
        [](std::mt19937& rng) {
          return std::vector<DTensor>{random_dtensor(rng, {3, 4}), random_dtensor(rng, {1, 4})};
        },
        [](DTape& t, std::vector<DTensor>& in) { return t.sum(t.add(in[0], in[1])); });
  check("mul",
        [](std::mt19937& rng) {
          return std::vector<DTensor>{random_dtensor(rng, {3, 4}), random_dtensor(rng, {3, 4})};
        },
        [](DTape& t, std::vector<DTensor>& in) {
          return t.mse_loss(t.mul(in[0], in[1]), DTensor::zeros({3, 4}));
        });
  check("relu",
        [](std::mt19937& rng) {
          auto x = random_dtensor(rng, {4, 4});
          for (auto& v : x.values()) v += v >= 0.0 ? 0.5 : -0.5;
          return std::vector<DTensor>{x};
        },
        [](DTape& t, std::vector<DTensor>& in) { return t.sum(t.relu(in[0])); });
  check("softmax",
        [](std::mt19937& rng) { return std::vector<DTensor>{random_dtensor(rng, {3, 5})}; },
        [](DTape& t, std::vector<DTensor>& in) {
          return t.mse_loss(t.softmax(in[0]), DTensor::full({3, 5}, 0.1));
        });
  check("layer_norm",
        [](std::mt19937& rng) { return std::vector<DTensor>{random_dtensor(rng, {3, 4})}; },
        [](DTape& t, std::vector<DTensor>& in) {
          return t.mse_loss(t.layer_norm(in[0]), DTensor::full({3, 4}, 0.2));
        });
  check("conv1d",
        [](std::mt19937& rng) {
          return std::vector<DTensor>{random_dtensor(rng, {6, 3}), random_dtensor(rng, {3, 3, 2})};
        },
        [](DTape& t, std::vector<DTensor>& in) {
          return t.mse_loss(t.conv1d(in[0], in[1]), DTensor::zeros({6, 2}));
        });
  check("embedding",
        [](std::mt19937& rng) { return std::vector<DTensor>{random_dtensor(rng, {5, 3})}; },
        [](DTape& t, std::vector<DTensor>& in) {
          return t.sum(t.embedding(in[0], {0, 2, 2, 4}));
        });
  check("dropout",
        [](std::mt19937& rng) { return std::vector<DTensor>{random_dtensor(rng, {4, 4})}; },
        [](DTape& t, std::vector<DTensor>& in) {
          std::mt19937 rng(555);
          return t.sum(t.dropout(in[0], 0.4, true, rng));
        });
  check("transpose",
        [](std::mt19937& rng) { return std::vector<DTensor>{random_dtensor(rng, {3, 5})}; },
        [](DTape& t, std::vector<DTensor>& in) {
          return t.mse_loss(t.transpose(in[0]), DTensor::zeros({5, 3}));
        });
  check("concat",
        [](std::mt19937& rng) {
          return std::vector<DTensor>{random_dtensor(rng, {3, 2}), random_dtensor(rng, {3, 4})};
        },
        [](DTape& t, std::vector<DTensor>& in) {
          return t.mse_loss(t.concat({in[0], in[1]}, 1), DTensor::zeros({3, 6}));
        });
  check("slice",
        [](std::mt19937& rng) { return std::vector<DTensor>{random_dtensor(rng, {4, 6})}; },
        [](DTape& t, std::vector<DTensor>& in) { return t.sum(t.slice(in[0], 1, 2, 3)); });
  check("scale",
        [](std::mt19937& rng) { return std::vector<DTensor>{random_dtensor(rng, {2, 3})}; },
        [](DTape& t, std::vector<DTensor>& in) { return t.sum(t.scale(in[0], -1.7)); });
  check("mse_loss",
        [](std::mt19937& rng) {
          return std::vector<DTensor>{random_dtensor(rng, {3, 3}), random_dtensor(rng, {3, 3})};
        },
        [](DTape& t, std::vector<DTensor>& in) { return t.mse_loss(in[0], in[1]); });
  check("sum",
        [](std::mt19937& rng) { return std::vector<DTensor>{random_dtensor(rng, {3, 4})}; },
        [](DTape& t, std::vector<DTensor>& in) { return t.sum(in[0]); });
  check("repeat_rows",
        [](std::mt19937& rng) { return std::vector<DTensor>{random_dtensor(rng, {4, 3})}; },
        [](DTape& t, std::vector<DTensor>& in) {
          return t.mse_loss(t.repeat_rows(in[0], {2, 0, 3, 1}), DTensor::zeros({6, 3}));
        });

  // Composite FFT block, double precision, one PAD position in the mask.
  // grad_check needs smooth probe points, so the ReLU pre-activations must
  // sit clear of the kink: small convolution weights plus +-1 biases keep
  // them away from zero, and each sampled point is verified before use.
  const int d = 16, cf = 24, n = 5, heads = 2;
  const model::Mask mask = {1, 1, 1, 1, 0};
  auto assemble = [&](std::vector<DTensor>& in) {
    model::FftBlockParamsT<double> p;
    p.wq = in[1];
    p.bq = in[2];
    p.wk = in[3];
    p.bk = in[4];
    p.wv = in[5];
    p.bv = in[6];
    p.wo = in[7];
    p.bo = in[8];
    p.ln1_gain = in[9];
    p.ln1_bias = in[10];
    p.conv1_w = in[11];
    p.conv1_b = in[12];
    p.conv2_w = in[13];
    p.conv2_b = in[14];
    p.ln2_gain = in[15];
    p.ln2_bias = in[16];
    p.n_heads = heads;
    return p;
  };
  auto relu_margin = [&](std::vector<DTensor>& in) {
    // Replicate the block up to the ReLU input and report min |pre-act|.
    DTape t(false);
    model::FftBlockParamsT<double> p = assemble(in);
    const DTensor bias = model::attention_bias<double>(mask);
    const DTensor col = model::mask_column<double>(mask);
    DTensor h = model::multi_head_self_attention(t, p, in[0], bias);
    h = model::layer_norm_affine(t, t.add(in[0], h), p.ln1_gain, p.ln1_bias);
    h = t.mul(h, col);
    const DTensor pre = t.add(t.conv1d(h, p.conv1_w), p.conv1_b);
    double margin = 1e30;
    for (double v : pre.values()) margin = std::min(margin, std::abs(v));
    return margin;
  };
  check("fft_block",
        [&](std::mt19937& rng) {
          for (int attempt = 0; attempt < 32; ++attempt) {
            std::vector<DTensor> in;
            in.push_back(random_dtensor(rng, {n, d}));        // x
            for (int i = 0; i < 4; ++i) {                     // wq wk wv wo
              in.push_back(random_dtensor(rng, {d, d}, -0.4, 0.4));
              in.push_back(random_dtensor(rng, {1, d}, -0.1, 0.1));
            }
            in.push_back(random_dtensor(rng, {1, d}, 0.8, 1.2));   // ln1 gain
            in.push_back(random_dtensor(rng, {1, d}, -0.1, 0.1));  // ln1 bias
            in.push_back(random_dtensor(rng, {3, d, cf}, -0.05, 0.05));
            DTensor conv1_b = random_dtensor(rng, {1, cf}, 0.9, 1.1);
            for (int i = 1; i < cf; i += 2) conv1_b.values()[i] *= -1.0;
            in.push_back(conv1_b);
            in.push_back(random_dtensor(rng, {3, cf, d}, -0.3, 0.3));
            in.push_back(random_dtensor(rng, {1, d}, -0.1, 0.1));
            in.push_back(random_dtensor(rng, {1, d}, 0.8, 1.2));   // ln2 gain
            in.push_back(random_dtensor(rng, {1, d}, -0.1, 0.1));  // ln2 bias
            if (relu_margin(in) > 0.05) return in;
          }
          throw Error(ErrorKind::EmptyInput, "no smooth fft_block probe point found");
        },
        [&](DTape& t, std::vector<DTensor>& in) {
          model::FftBlockParamsT<double> p = assemble(in);
          const DTensor y = model::fft_block(t, p, in[0], mask, 0.0, false, nullptr);
          return t.mse_loss(y, DTensor::zeros({n, d}));
        });

  const double elapsed = now_s() - t0;
  std::ostringstream os;
  os << "max grad_check error " << worst << " (" << worst_name << "), " << elapsed << " s";
  detail = os.str();
  return worst < 1e-4 && elapsed < 120.0;
}

bool criterion_lora_freeze(std::string& detail) {
  const double t0 = now_s();
  const training::Dataset dataset = toy_dataset_from_audio();
  training::TrainConfig base_cfg;
  base_cfg.steps = 20;
  base_cfg.checkpoint_every = 0;
  base_cfg.seed = 31;
  const training::Checkpoint base =
      training::train(dataset, desk_config(0), base_cfg, pinyin::phoneme_inventory(),
                      pinyin::tone_inventory(), "");

  training::TrainConfig lora_cfg;
  lora_cfg.steps = 200;
  lora_cfg.checkpoint_every = 0;
  lora_cfg.seed = 32;
  const training::Checkpoint adapted = training::lora_adapt(base, dataset, lora_cfg, "");

  auto group_bytes = [](const training::Checkpoint& c, const std::string& group) {
    std::vector<float> out;
    for (const auto& e : c.params.entries())
      if (e.group == group)
        out.insert(out.end(), e.tensor.values().begin(), e.tensor.values().end());
    return out;
  };
  const bool phon = group_bytes(adapted, "phoneme_encoder") == group_bytes(base, "phoneme_encoder");
  const bool dur = group_bytes(adapted, "duration_adaptor") == group_bytes(base, "duration_adaptor");
  const bool moved = group_bytes(adapted, "style_encoder") != group_bytes(base, "style_encoder");
  const double elapsed = now_s() - t0;
  std::ostringstream os;
  os << "phoneme_encoder bit-identical: " << (phon ? "yes" : "NO")
     << ", duration_adaptor bit-identical: " << (dur ? "yes" : "NO")
     << ", style moved: " << (moved ? "yes" : "NO") << ", " << elapsed << " s";
  detail = os.str();
  return phon && dur && moved && elapsed < 300.0;
}

bool criterion_zero_style(std::string& detail) {
  const pinyin::AcousticTokens t = pinyin::g2p("ni3 hao3 chong2 an1");
  bool ok = true;
  std::ostringstream os;
  for (int stage : {0, 1}) {
    const model::StyleSpeechModel m = model::StyleSpeechModel::create(
        desk_config(stage), static_cast<int>(pinyin::phoneme_inventory().size()),
        static_cast<int>(pinyin::tone_inventory().size()), 91);
    ad::Tape tape(false);
    model::ForwardOptions zero;
    zero.zero_style = true;
    model::ForwardOptions free;
    free.style_free = true;
    const model::ForwardResult a = m.forward(tape, t, zero);
    const model::ForwardResult b = m.forward(tape, t, free);
    const bool mel_eq = a.mel.values() == b.mel.values();
    const bool dur_eq = a.durations == b.durations;
    os << "stage " << stage << " mel bit-identical: " << (mel_eq ? "yes" : "NO")
       << ", durations equal: " << (dur_eq ? "yes" : "NO") << "; ";
    ok = ok && mel_eq && dur_eq;
  }
  detail = os.str();
  return ok;
}

bool criterion_duration_independence(std::string& detail) {
  const pinyin::AcousticTokens t = pinyin::g2p("ni3 hao3 chong2 an1 ma5");
  const model::Mask mask = model::StyleSpeechModel::token_mask(t);
  double stage0_grad = 0.0, stage1_grad = -1.0;
  for (int stage : {0, 1}) {
    model::StyleSpeechModel m = model::StyleSpeechModel::create(
        desk_config(stage), static_cast<int>(pinyin::phoneme_inventory().size()),
        static_cast<int>(pinyin::tone_inventory().size()), 77);
    ad::Tape tape;
    model::ForwardOptions opts;
    const model::ForwardResult fr = m.forward(tape, t, opts);
    std::vector<float> target(mask.size(), 0.7f), weight(mask.size(), 1.0f);
    const ad::Tensor loss = tape.mse_loss(
        fr.duration_pred,
        ad::Tensor::from({static_cast<int>(mask.size()), 1}, std::move(target)),
        ad::Tensor::from({static_cast<int>(mask.size()), 1}, std::move(weight)));
    tape.backward(loss);
    double max_grad = 0.0;
    for (const auto& e : m.parameters().entries()) {
      if (e.group != "style_encoder" || !e.tensor.has_grad()) continue;
      for (float g : e.tensor.grad())
        max_grad = std::max(max_grad, std::abs(static_cast<double>(g)));
    }
    if (stage == 0) stage0_grad = max_grad;
    else stage1_grad = max_grad;
  }
  std::ostringstream os;
  os << "stage-1 max |d dur_loss / d style| = " << stage1_grad << " (exactly zero required), "
     << "stage-0 max = " << stage0_grad << " (> 1e-8 required)";
  detail = os.str();
  return stage1_grad == 0.0 && stage0_grad > 1e-8;
}

bool criterion_length_law(std::string& detail) {
  std::mt19937 rng(55);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 12);
    std::vector<int> durations(n);
    int64_t want = 0;
    for (auto& d : durations) {
      d = static_cast<int>(rng() % 7);
      want += d;
    }
    model::EmbeddingSequence h;
    h.h = ad::Tensor::zeros({n, 4});
    h.mask.assign(n, 1);
    ad::Tape tape(false);
    const model::Regulated r = model::StyleSpeechModel::length_regulate(tape, h, durations);
    if (r.seq.h.dim(0) != want) {
      detail = "length mismatch at trial " + std::to_string(trial);
      return false;
    }
    ++checked;
  }
  detail = std::to_string(checked) + " random duration vectors, all lengths exact";
  return true;
}

bool criterion_overfit(std::string& detail) {
  const double t0 = now_s();
  const training::Dataset dataset = toy_dataset_from_audio();
  training::TrainConfig cfg;  // desk defaults: 2000 steps, warmup 4000, clip 1.0
  cfg.checkpoint_every = 0;
  cfg.seed = 1234;
  double last_mel = -1.0;
  const training::Checkpoint ckpt =
      training::train(dataset, desk_config(0), cfg, pinyin::phoneme_inventory(),
                      pinyin::tone_inventory(), "",
                      [&](int64_t, const training::StepStats& s) { last_mel = s.mel_loss; });
  const model::StyleSpeechModel m = training::model_from_checkpoint(ckpt);
  const double mse = eval_mode_mel_mse(m, dataset);
  const double elapsed = now_s() - t0;
  std::ostringstream os;
  os << "eval-mode masked mel MSE " << mse << " after 2000 joint steps (train-mode final "
     << last_mel << "), " << elapsed << " s";
  detail = os.str();
  return mse < 0.05 && elapsed < 600.0;
}

bool criterion_griffin_lim(std::string& detail) {
  int violations = 0;
  double worst_gap = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937 rng(900 + trial);
    dsp::MagnitudeSpectrogram mag;
    mag.frames = 12;
    mag.bins = 129;
    mag.n_fft = 256;
    mag.hop = 128;
    mag.sample_rate = 8000;
    mag.data.resize(static_cast<size_t>(mag.frames) * mag.bins);
    for (auto& v : mag.data) v = uniform_in(rng, 0.0, 1.0);
    std::vector<double> distances;
    dsp::griffin_lim(mag, 60, trial, &distances);
    for (size_t i = 1; i < distances.size(); ++i) {
      if (distances[i] > distances[i - 1] + 1e-6) {
        ++violations;
        worst_gap = std::max(worst_gap, distances[i] - distances[i - 1]);
      }
    }
  }

  // 440 Hz sinusoid reconstruction.
  dsp::AudioBuffer sin_audio;
  sin_audio.sample_rate = 16000;
  sin_audio.samples.resize(8000);
  for (size_t i = 0; i < sin_audio.samples.size(); ++i)
    sin_audio.samples[i] = 0.4 * std::sin(2.0 * M_PI * 440.0 * i / 16000.0);
  const dsp::ComplexSpectrogram s = dsp::stft(sin_audio, 1024, 256);
  dsp::MagnitudeSpectrogram mag;
  mag.frames = s.frames;
  mag.bins = s.bins;
  mag.n_fft = s.n_fft;
  mag.hop = s.hop;
  mag.sample_rate = s.sample_rate;
  mag.data.resize(s.data.size());
  for (size_t i = 0; i < s.data.size(); ++i) mag.data[i] = std::abs(s.data[i]);
  const dsp::AudioBuffer rec = dsp::griffin_lim(mag, 60, 11);
  const dsp::ComplexSpectrogram z = dsp::stft(rec, 1024, 256);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < std::min(z.data.size(), mag.data.size()); ++i) {
    const double d = std::abs(z.data[i]) - mag.data[i];
    num += d * d;
    den += mag.data[i] * mag.data[i];
  }
  const double rel = std::sqrt(num / den);
  std::ostringstream os;
  os << violations << " monotonicity violations over 20 inputs x 60 iterations"
     << ", sinusoid relative magnitude error " << rel;
  detail = os.str();
  return violations == 0 && rel < 0.05;
}

bool criterion_metric_oracles(std::string& detail) {
  // edit distance vs an independent two-row DP oracle
  std::mt19937 rng(77);
  auto oracle = [](const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
    for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= a.size(); ++i) {
      cur[0] = static_cast<int>(i);
      for (size_t j = 1; j <= b.size(); ++j)
        cur[j] = std::min({prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1), prev[j] + 1,
                           cur[j - 1] + 1});
      std::swap(prev, cur);
    }
    return prev[b.size()];
  };
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> a(rng() % 9), b(rng() % 9);
    for (auto& v : a) v = static_cast<int>(rng() % 5);
    for (auto& v : b) v = static_cast<int>(rng() % 5);
    if (metrics::edit_distance(a, b).total() != oracle(a, b)) ++mismatches;
  }

  const metrics::WerLevels levels = metrics::wer_levels("ni3 hao3", "ni3 hao4");
  const bool wer_ok = levels.wer_p == 0.0 && std::abs(levels.wer_t - 0.25) < 1e-12;

  // uniform cepstral offset
  std::mt19937 mel_rng(13);
  dsp::MelSpectrogram a;
  a.frames = 5;
  a.n_mels = 80;
  a.data.resize(5 * 80);
  for (auto& v : a.data) v = static_cast<float>(uniform_in(mel_rng, -8.0, 2.0));
  dsp::MelSpectrogram b = a;
  for (int f = 0; f < b.frames; ++f)
    for (int j = 0; j < 80; ++j) {
      double bump = 0.0;
      for (int k = 1; k <= 13; ++k)
        bump += 0.1 * std::sqrt(2.0 / 80.0) * std::cos(M_PI * (2.0 * j + 1.0) * k / 160.0);
      b.at(f, j) += static_cast<float>(bump);
    }
  const double mcd_value = metrics::mcd(a, b);
  const bool mcd_ok = std::abs(mcd_value - 2.2144) < 1e-3;

  // five-value pool
  std::vector<metrics::MetricReport> pool(5);
  for (int i = 0; i < 5; ++i) {
    pool[i].utt_id = "u" + std::to_string(i);
    pool[i].system_id = "s";
    pool[i].wer = 0.1 * (i + 1);
    pool[i].mcd = 10.0;
  }
  const auto ratings = metrics::llm_mos(pool);
  bool mos_ok = true;
  for (int i = 0; i < 5; ++i) mos_ok = mos_ok && *ratings[i].wer_rating == 5 - i;

  std::ostringstream os;
  os << mismatches << " edit-distance mismatches/1000, wer_p=" << levels.wer_p
     << " wer_t=" << levels.wer_t << ", offset MCD=" << mcd_value << ", pool ratings "
     << *ratings[0].wer_rating << *ratings[1].wer_rating << *ratings[2].wer_rating
     << *ratings[3].wer_rating << *ratings[4].wer_rating;
  detail = os.str();
  return mismatches == 0 && wer_ok && mcd_ok && mos_ok;
}

struct TempDir {
  std::string root;
  explicit TempDir(const std::string& name) {
    root = (fs::temp_directory_path() / name).string();
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~TempDir() { fs::remove_all(root); }
  std::string operator/(const std::string& rel) const { return root + "/" + rel; }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

cli::RunConfig toy_cli_config() {
  cli::RunConfig cfg;
  cfg.model.d_model = 32;
  cfg.model.n_heads = 2;
  cfg.model.n_blocks = 1;
  cfg.model.conv_filter = 48;
  cfg.model.max_seq_len = 128;
  cfg.dsp.sample_rate = 8000;
  cfg.dsp.n_fft = 512;
  cfg.dsp.hop = 128;
  cfg.dsp.griffin_lim_iters = 6;
  cfg.train.steps = 25;
  cfg.train.batch_size = 2;
  cfg.train.checkpoint_every = 0;
  cfg.train.warmup_steps = 20;
  cfg.seed = 7;
  cfg.train.seed = 7;
  return cfg;
}

void write_toy_corpus(const TempDir& dir, const cli::RunConfig& cfg) {
  const auto wav = [&](const std::string& name, double freq, double seconds) {
    dsp::AudioBuffer a = tone_mix({freq}, seconds, cfg.dsp.sample_rate);
    dsp::save_wav(dir / name, a);
  };
  wav("a.wav", 300.0, 0.30);
  wav("b.wav", 500.0, 0.25);
  wav("c.wav", 700.0, 0.35);
  std::ostringstream manifest;
  manifest << "utt_a\tni3 hao3\t" << (dir / "a.wav") << "\n";
  manifest << "utt_b\tchong1 chong2\t" << (dir / "b.wav") << "\n";
  manifest << "utt_c\tan1 hao3 ma5\t" << (dir / "c.wav") << "\n";
  write_file(dir / "manifest.tsv", manifest.str());
}

bool criterion_table_shapes(std::string& detail) {
  TempDir dir("ss_acceptance_tables");
  const cli::RunConfig cfg = toy_cli_config();
  write_toy_corpus(dir, cfg);
  cli::cmd_prepare(dir / "manifest.tsv", dir / "mels", cfg);

  write_file(dir / "ref.tsv", "utt_a\tni3 hao3\nutt_b\tchong1 chong2\nutt_c\tan1 hao3 ma5\n");
  write_file(dir / "hyp_a.tsv", "utt_a\tni3 hao3\nutt_b\tchong1 chong3\nutt_c\tan1 hao3 ma5\n");
  write_file(dir / "hyp_b.tsv", "utt_a\tni3 hao4\nutt_b\tchong1\nutt_c\tan2 hao3\n");
  write_file(dir / "pesq.tsv", "utt_a\t3.1\nutt_b\t2.2\n");

  for (const auto& [hyp, system, report] :
       {std::tuple{"hyp_a.tsv", "sysA", "report_a.tsv"},
        std::tuple{"hyp_b.tsv", "sysB", "report_b.tsv"}}) {
    cli::EvalArgs args;
    args.ref_transcripts = dir / "ref.tsv";
    args.hyp_transcripts = dir / hyp;
    args.synth_mels_dir = dir / "mels";
    args.ref_mels_dir = dir / "mels";
    args.pesq_path = dir / "pesq.tsv";
    args.system_id = system;
    args.out_path = dir / report;
    cli::cmd_eval(args);
  }
  cli::cmd_rate({dir / "report_a.tsv", dir / "report_b.tsv"}, dir / "ratings.tsv");

  auto first_line = [](const std::string& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    return line;
  };
  const bool eval_header_ok =
      first_line(dir / "report_a.tsv") == "utt_id\tsystem\tWER\tWER-P\tWER-T\tMCD\tPESQ";
  const bool rate_header_ok =
      first_line(dir / "ratings.tsv") == "utt_id\tsystem\tWER\tMCD\tPESQ\tOverall";

  // aggregate rows carry mean +/- std; utt_c's PESQ stays blank
  bool agg_ok = false, blank_ok = false;
  {
    std::ifstream in(dir / "report_a.tsv");
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("mean_std", 0) == 0 && line.find("\xc2\xb1") != std::string::npos)
        agg_ok = true;
      if (line.rfind("utt_c", 0) == 0 && line.back() == '\t') blank_ok = true;
    }
  }
  bool rate_agg = false;
  int rate_rows = 0;
  {
    std::ifstream in(dir / "ratings.tsv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.rfind("mean_std", 0) == 0) ++rate_rows, rate_agg = true;
    }
  }
  std::ostringstream os;
  os << "eval header " << (eval_header_ok ? "ok" : "WRONG") << ", rate header "
     << (rate_header_ok ? "ok" : "WRONG") << ", mean±std " << (agg_ok && rate_agg ? "ok" : "MISSING")
     << ", blank PESQ " << (blank_ok ? "ok" : "MISSING") << ", " << rate_rows
     << " per-system aggregate rows";
  detail = os.str();
  return eval_header_ok && rate_header_ok && agg_ok && blank_ok && rate_agg && rate_rows == 2;
}

bool criterion_tone_contrast(std::string& detail) {
  TempDir dir("ss_acceptance_fig3");
  const cli::RunConfig cfg = toy_cli_config();
  write_toy_corpus(dir, cfg);
  cli::cmd_prepare(dir / "manifest.tsv", dir / "features", cfg);
  cli::cmd_train(dir / "features", dir / "run", cfg);

  write_file(dir / "chong.tsv",
             "chong1\tchong1\nchong2\tchong2\nchong3\tchong3\nchong4\tchong4\n");
  cli::cmd_synth(dir / "run/checkpoint_final.sspc", std::nullopt, dir / "chong.tsv",
                 dir / "synth", cfg);

  const training::Checkpoint ckpt = training::load_checkpoint(dir / "run/checkpoint_final.sspc");
  const pinyin::SymbolTable phonemes(ckpt.meta.phoneme_vocab);
  const pinyin::SymbolTable tones(ckpt.meta.tone_vocab);

  bool loadable = true, phonemes_identical = true, tones_differ = true;
  std::vector<std::vector<int>> phoneme_streams, tone_streams;
  for (int tone = 1; tone <= 4; ++tone) {
    const std::string id = "chong" + std::to_string(tone);
    const pinyin::AcousticTokens t = pinyin::g2p(id, phonemes, tones);
    phoneme_streams.push_back(t.phonemes);
    tone_streams.push_back(t.tones);
    try {
      const dsp::MelSpectrogram mel = dsp::load_mel(dir / ("synth/" + id + ".mel"));
      loadable = loadable && mel.frames > 0 && mel.n_mels == 80;
    } catch (const Error&) {
      loadable = false;
    }
  }
  for (int i = 1; i < 4; ++i) {
    phonemes_identical = phonemes_identical && phoneme_streams[i] == phoneme_streams[0];
    tones_differ = tones_differ && tone_streams[i] != tone_streams[0];
  }
  std::ostringstream os;
  os << "four mels loadable: " << (loadable ? "yes" : "NO")
     << ", phoneme streams identical: " << (phonemes_identical ? "yes" : "NO")
     << ", tone streams differ: " << (tones_differ ? "yes" : "NO");
  detail = os.str();
  return loadable && phonemes_identical && tones_differ;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness (all primitives + composite fft_block, < 2 min)",
       criterion_gradients},
      {2, "LoRA freeze invariance (200 steps, frozen blobs bit-identical, < 5 min)",
       criterion_lora_freeze},
      {3, "zero-style identity (stages 0/1 bit-identical to the style-free pipeline)",
       criterion_zero_style},
      {4, "stage-1 duration independence (style gradients exactly zero; stage 0 nonzero)",
       criterion_duration_independence},
      {5, "length law (1000 random duration vectors, output length = sum exactly)",
       criterion_length_law},
      {6, "overfit convergence (3 utterances, 2000 joint steps, mel MSE < 0.05, < 10 min)",
       criterion_overfit},
      {7, "griffin-lim (non-increasing distance on 20 inputs; sinusoid error < 5%)",
       criterion_griffin_lim},
      {8, "metric oracles (edit distance, wer split, offset MCD, five-value pool)",
       criterion_metric_oracles},
      {9, "table shapes (eval/rate reports, column order, mean±std, blanks)",
       criterion_table_shapes},
      {10, "tone contrast (chong1..chong4: same phonemes, different tones, loadable mels)",
       criterion_tone_contrast},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("%s  %2d. %s\n      %s\n", ok ? "PASS" : "FAIL", c.id, c.name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures == 0) {
    std::printf("all 10 acceptance criteria passed\n");
  } else {
    std::printf("%d acceptance criteria FAILED\n", failures);
  }
  return failures == 0 ? 0 : 1;
}
