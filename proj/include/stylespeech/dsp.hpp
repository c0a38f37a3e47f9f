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
// Audio I/O and spectral transforms: STFT/ISTFT, mel filterbank, log-mel
// extraction, mel inversion, and the Griffin-Lim vocoder. All spectral math
// runs in double; mel matrices are stored as float32 (the on-disk format).

#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "stylespeech/error.hpp"

namespace stylespeech::dsp {

struct AudioBuffer {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 48000;
};

struct ComplexSpectrogram {
  int frames = 0;
  int bins = 0;  // n_fft/2 + 1
  int n_fft = 1024;
  int hop = 512;
  int sample_rate = 48000;
  std::vector<std::complex<double>> data;  // row-major frames x bins

  std::complex<double>& at(int f, int b) { return data[static_cast<int64_t>(f) * bins + b]; }
  std::complex<double> at(int f, int b) const { return data[static_cast<int64_t>(f) * bins + b]; }
};

struct MagnitudeSpectrogram {
  int frames = 0;
  int bins = 0;
  int n_fft = 1024;
  int hop = 512;
  int sample_rate = 48000;
  std::vector<double> data;  // row-major frames x bins, nonnegative

  double& at(int f, int b) { return data[static_cast<int64_t>(f) * bins + b]; }
  double at(int f, int b) const { return data[static_cast<int64_t>(f) * bins + b]; }
};

// Log-compressed mel power: log(mel_fb * |stft|^2 + log_offset), natural log.
struct MelSpectrogram {
  int frames = 0;
  int n_mels = 80;
  int sample_rate = 48000;
  int n_fft = 1024;
  int hop = 512;
  double log_offset = 1e-5;
  std::vector<float> data;  // row-major frames x n_mels

  float& at(int f, int m) { return data[static_cast<int64_t>(f) * n_mels + m]; }
  float at(int f, int m) const { return data[static_cast<int64_t>(f) * n_mels + m]; }
};

// RIFF PCM. 16-bit only; stereo is averaged to mono with a stderr warning.
AudioBuffer load_wav(const std::string& path);
void save_wav(const std::string& path, const AudioBuffer& audio);

std::vector<double> hann_window(int n);  // periodic

// Zero-padded centering, periodic Hann. n_fft must be a power of two.
// Frame count for a signal of n samples is 1 + floor(n/hop).
ComplexSpectrogram stft(const AudioBuffer& audio, int n_fft = 1024, int hop = 512);

// Exact least-squares inverse of stft: windowed overlap-add normalized by
// the summed squared window, then the center padding trimmed. Returns
// (frames-1)*hop samples unless length >= 0.
AudioBuffer istft(const ComplexSpectrogram& spec, int length = -1);

// HTK-scale triangular filters, n_mels x (n_fft/2+1) row-major.
std::vector<double> mel_filterbank(int sample_rate, int n_fft, int n_mels = 80,
                                   double fmin = 0.0, double fmax = -1.0);

MelSpectrogram wav_to_logmel(const AudioBuffer& audio, int n_fft = 1024, int hop = 512,
                             int n_mels = 80);

// Undo the log, then per-frame nonnegative least squares against the
// filterbank (50 multiplicative updates); returns the magnitude spectrogram.
MagnitudeSpectrogram mel_to_linear(const MelSpectrogram& mel, int nnls_iters = 50);

// Griffin-Lim from seeded random phase. momentum = 0 is the classic
// alternating projection (provably non-increasing distance); the default 0.9
// is the accelerated variant, which converges much faster and keeps the
// distance non-increasing in practice. If distances is non-null it receives
// ||  |stft(x_t)| - mag ||_F for every iteration (Hermitian-weighted).
AudioBuffer griffin_lim(const MagnitudeSpectrogram& mag, int iters = 60, uint64_t seed = 0,
                        std::vector<double>* distances = nullptr, double momentum = 0.9);

// Binary mel file (little-endian float32, row-major) plus a JSON sidecar
// carrying {n_frames, n_mels, sr, n_fft, hop, log_offset} at <path>.json.
void save_mel(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram load_mel(const std::string& path);

}  // namespace stylespeech::dsp
