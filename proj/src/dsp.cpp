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

#include "stylespeech/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "stylespeech/kernels.hpp"
#include "stylespeech/rng.hpp"

namespace stylespeech::dsp {

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}
void write_u32(std::ostream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
void write_u16(std::ostream& out, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

// Zero-pad around both ends. With this centering the trim-and-overlap-add
// inverse below is the exact least-squares inverse of the STFT, which is
// what makes the Griffin-Lim distance provably non-increasing.
std::vector<double> center_pad(const std::vector<double>& x, int pad) {
  std::vector<double> out(x.size() + 2 * pad, 0.0);
  std::copy(x.begin(), x.end(), out.begin() + pad);
  return out;
}

void check_frame_params(int n_fft, int hop) {
  if (!is_power_of_two(n_fft))
    throw Error(ErrorKind::BadFrameParams, "n_fft " + std::to_string(n_fft) + " is not a power of two");
  if (hop <= 0 || hop > n_fft)
    throw Error(ErrorKind::BadFrameParams, "hop " + std::to_string(hop) + " outside (0, n_fft]");
}

// Windowed framing without any padding; the caller owns the signal domain.
ComplexSpectrogram stft_frames(const std::vector<double>& x, int n_fft, int hop,
                               int sample_rate) {
  const std::vector<double> win = hann_window(n_fft);
  const int frames =
      static_cast<int64_t>(x.size()) < n_fft
          ? 0
          : 1 + static_cast<int>((static_cast<int64_t>(x.size()) - n_fft) / hop);
  ComplexSpectrogram spec;
  spec.n_fft = n_fft;
  spec.hop = hop;
  spec.sample_rate = sample_rate;
  spec.frames = frames;
  spec.bins = n_fft / 2 + 1;
  spec.data.assign(static_cast<size_t>(spec.frames) * spec.bins, {0.0, 0.0});
  const bool par = kernels::parallel();
#pragma omp parallel for schedule(static) if (par && frames > 1)
  for (int f = 0; f < frames; ++f) {
    std::vector<std::complex<double>> buf(n_fft);
    const int64_t start = static_cast<int64_t>(f) * hop;
    for (int i = 0; i < n_fft; ++i) buf[i] = x[start + i] * win[i];
    kernels::fft_inplace(buf.data(), n_fft, false);
    for (int b = 0; b < spec.bins; ++b) spec.at(f, b) = buf[b];
  }
  return spec;
}

// Least-squares inverse of stft_frames over the full framed domain:
// x = sum_f w * iDFT(Y_f) / sum_f w^2, the minimum-norm solution where the
// window never touches a sample.
std::vector<double> ola_inverse(const ComplexSpectrogram& spec) {
  const int n_fft = spec.n_fft, hop = spec.hop;
  const std::vector<double> win = hann_window(n_fft);
  const int64_t len =
      spec.frames == 0 ? 0 : static_cast<int64_t>(spec.frames - 1) * hop + n_fft;
  std::vector<double> frames_time(static_cast<size_t>(spec.frames) * n_fft, 0.0);
  const bool par = kernels::parallel();
#pragma omp parallel for schedule(static) if (par && spec.frames > 1)
  for (int f = 0; f < spec.frames; ++f) {
    std::vector<std::complex<double>> buf(n_fft);
    for (int b = 0; b < spec.bins; ++b) buf[b] = spec.at(f, b);
    for (int b = spec.bins; b < n_fft; ++b) buf[b] = std::conj(spec.at(f, n_fft - b));
    kernels::fft_inplace(buf.data(), n_fft, true);
    for (int i = 0; i < n_fft; ++i)
      frames_time[static_cast<int64_t>(f) * n_fft + i] = buf[i].real() * win[i];
  }
  std::vector<double> num(len, 0.0), den(len, 0.0);
  for (int f = 0; f < spec.frames; ++f) {
    const int64_t start = static_cast<int64_t>(f) * hop;
    for (int i = 0; i < n_fft; ++i) {
      num[start + i] += frames_time[static_cast<int64_t>(f) * n_fft + i];
      den[start + i] += win[i] * win[i];
    }
  }
  for (int64_t i = 0; i < len; ++i) num[i] = den[i] > 1e-11 ? num[i] / den[i] : 0.0;
  return num;
}

// Frobenius distance between |Z| and mag over the full Hermitian spectrum
// (interior bins count twice).
double spectral_distance(const ComplexSpectrogram& z, const MagnitudeSpectrogram& mag) {
  double acc = 0.0;
  const size_t n = std::min(z.data.size(), mag.data.size());
  for (size_t i = 0; i < n; ++i) {
    const int b = static_cast<int>(i % mag.bins);
    const double d = std::abs(z.data[i]) - mag.data[i];
    const double w = (b == 0 || b == mag.bins - 1) ? 1.0 : 2.0;
    acc += w * d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

AudioBuffer load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
  char tag[5] = {0};
  in.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0)
    throw Error(ErrorKind::UnsupportedFormat, path + " is not a RIFF file");
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0)
    throw Error(ErrorKind::UnsupportedFormat, path + " is not a WAVE file");

  uint16_t channels = 0, bits = 0, format = 0;
  uint32_t sample_rate = 0;
  std::vector<int16_t> pcm;
  bool got_fmt = false, got_data = false;
  while (in && !(got_fmt && got_data)) {
    in.read(tag, 4);
    if (!in) break;
    const uint32_t size = read_u32(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      got_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      if (!got_fmt) throw Error(ErrorKind::UnsupportedFormat, path + ": data before fmt");
      if (format != 1) throw Error(ErrorKind::UnsupportedFormat, "only PCM wav is supported");
      if (bits != 16)
        throw Error(ErrorKind::UnsupportedFormat,
                    std::to_string(bits) + "-bit wav is not supported (16-bit only)");
      const size_t count = size / 2;
      pcm.resize(count);
      in.read(reinterpret_cast<char*>(pcm.data()), static_cast<std::streamsize>(size));
      if (!in) throw Error(ErrorKind::IoFailure, "truncated data chunk in " + path);
      got_data = true;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!got_fmt || !got_data)
    throw Error(ErrorKind::UnsupportedFormat, path + ": missing fmt or data chunk");
  if (channels != 1 && channels != 2)
    throw Error(ErrorKind::UnsupportedFormat, std::to_string(channels) + " channels");

  AudioBuffer audio;
  audio.sample_rate = static_cast<int>(sample_rate);
  if (channels == 1) {
    audio.samples.resize(pcm.size());
    for (size_t i = 0; i < pcm.size(); ++i) audio.samples[i] = pcm[i] / 32768.0;
  } else {
    std::cerr << "warning: " << path << " is stereo, averaging to mono\n";
    audio.samples.resize(pcm.size() / 2);
    for (size_t i = 0; i < audio.samples.size(); ++i)
      audio.samples[i] = (pcm[2 * i] + pcm[2 * i + 1]) / 2.0 / 32768.0;
  }
  return audio;
}

void save_wav(const std::string& path, const AudioBuffer& audio) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path);
  const uint32_t n = static_cast<uint32_t>(audio.samples.size());
  const uint32_t data_size = n * 2;
  out.write("RIFF", 4);
  write_u32(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(audio.sample_rate));
  write_u32(out, static_cast<uint32_t>(audio.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_size);
  for (double s : audio.samples) {
    const double scaled = std::round(s * 32768.0);
    const int16_t q = static_cast<int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    write_u16(out, static_cast<uint16_t>(q));
  }
  if (!out) throw Error(ErrorKind::IoFailure, "short write to " + path);
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / n));
  return w;
}

ComplexSpectrogram stft(const AudioBuffer& audio, int n_fft, int hop) {
  check_frame_params(n_fft, hop);
  return stft_frames(center_pad(audio.samples, n_fft / 2), n_fft, hop, audio.sample_rate);
}

AudioBuffer istft(const ComplexSpectrogram& spec, int length) {
  check_frame_params(spec.n_fft, spec.hop);
  const int pad = spec.n_fft / 2;
  const std::vector<double> padded = ola_inverse(spec);
  AudioBuffer out;
  out.sample_rate = spec.sample_rate;
  const int64_t full = std::max<int64_t>(static_cast<int64_t>(padded.size()) - 2 * pad, 0);
  const int64_t want =
      length >= 0 ? length
                  : (spec.frames > 0 ? static_cast<int64_t>(spec.frames - 1) * spec.hop : 0);
  out.samples.assign(static_cast<size_t>(want), 0.0);
  const int64_t n = std::min(want, full);
  for (int64_t i = 0; i < n; ++i) out.samples[i] = padded[pad + i];
  return out;
}

std::vector<double> mel_filterbank(int sample_rate, int n_fft, int n_mels, double fmin,
                                   double fmax) {
  if (fmax < 0.0) fmax = sample_rate / 2.0;
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0 + 1e-9))
    throw Error(ErrorKind::BadBandEdges,
                "need 0 <= fmin < fmax <= sr/2, got [" + std::to_string(fmin) + ", " +
                    std::to_string(fmax) + "]");
  if (n_mels <= 0) throw Error(ErrorKind::BadBandEdges, "n_mels must be positive");
  const int bins = n_fft / 2 + 1;
  auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto mel_to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };

  std::vector<double> centers(n_mels + 2);
  const double mlo = hz_to_mel(fmin), mhi = hz_to_mel(fmax);
  for (int i = 0; i < n_mels + 2; ++i)
    centers[i] = mel_to_hz(mlo + (mhi - mlo) * i / (n_mels + 1));

  std::vector<double> fb(static_cast<size_t>(n_mels) * bins, 0.0);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f < hi) w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      fb[static_cast<size_t>(m) * bins + b] = std::max(w, 0.0);
    }
  }
  return fb;
}

MelSpectrogram wav_to_logmel(const AudioBuffer& audio, int n_fft, int hop, int n_mels) {
  const ComplexSpectrogram spec = stft(audio, n_fft, hop);
  const std::vector<double> fb = mel_filterbank(audio.sample_rate, n_fft, n_mels);
  MelSpectrogram mel;
  mel.frames = spec.frames;
  mel.n_mels = n_mels;
  mel.sample_rate = audio.sample_rate;
  mel.n_fft = n_fft;
  mel.hop = hop;
  mel.log_offset = 1e-5;
  mel.data.assign(static_cast<size_t>(spec.frames) * n_mels, 0.0f);
  const bool par = kernels::parallel();
#pragma omp parallel for schedule(static) if (par && spec.frames > 1)
  for (int f = 0; f < spec.frames; ++f) {
    for (int m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      const double* w = fb.data() + static_cast<size_t>(m) * spec.bins;
      for (int b = 0; b < spec.bins; ++b) acc += w[b] * std::norm(spec.at(f, b));
      mel.at(f, m) = static_cast<float>(std::log(acc + mel.log_offset));
    }
  }
  return mel;
}

MagnitudeSpectrogram mel_to_linear(const MelSpectrogram& mel, int nnls_iters) {
  if (mel.n_mels <= 0 || !is_power_of_two(mel.n_fft) || mel.hop <= 0 || mel.log_offset <= 0.0 ||
      static_cast<int64_t>(mel.data.size()) != static_cast<int64_t>(mel.frames) * mel.n_mels)
    throw Error(ErrorKind::MetadataMismatch, "mel metadata does not describe a filterbank");
  const int bins = mel.n_fft / 2 + 1;
  const std::vector<double> fb = mel_filterbank(mel.sample_rate, mel.n_fft, mel.n_mels);

  // Gram matrix F^T F (bins x bins is large; apply F and F^T instead).
  MagnitudeSpectrogram out;
  out.frames = mel.frames;
  out.bins = bins;
  out.n_fft = mel.n_fft;
  out.hop = mel.hop;
  out.sample_rate = mel.sample_rate;
  out.data.assign(static_cast<size_t>(mel.frames) * bins, 0.0);

  const float floor_value = static_cast<float>(std::log(mel.log_offset));
  const bool par = kernels::parallel();
#pragma omp parallel for schedule(static) if (par && mel.frames > 1)
  for (int f = 0; f < mel.frames; ++f) {
    // Target mel power for this frame; entries at the log floor are silence.
    std::vector<double> target(mel.n_mels);
    for (int m = 0; m < mel.n_mels; ++m)
      target[m] = mel.at(f, m) <= floor_value
                      ? 0.0
                      : std::max(std::exp(static_cast<double>(mel.at(f, m))) - mel.log_offset, 0.0);

    // p >= 0 minimizing ||F p - target||^2 via multiplicative updates.
    std::vector<double> p(bins, 0.0), ft_t(bins, 0.0), fp(mel.n_mels), ftfp(bins);
    for (int m = 0; m < mel.n_mels; ++m) {
      const double* w = fb.data() + static_cast<size_t>(m) * bins;
      for (int b = 0; b < bins; ++b) ft_t[b] += w[b] * target[m];
    }
    p = ft_t;
    for (int it = 0; it < nnls_iters; ++it) {
      for (int m = 0; m < mel.n_mels; ++m) {
        const double* w = fb.data() + static_cast<size_t>(m) * bins;
        double acc = 0.0;
        for (int b = 0; b < bins; ++b) acc += w[b] * p[b];
        fp[m] = acc;
      }
      std::fill(ftfp.begin(), ftfp.end(), 0.0);
      for (int m = 0; m < mel.n_mels; ++m) {
        const double* w = fb.data() + static_cast<size_t>(m) * bins;
        for (int b = 0; b < bins; ++b) ftfp[b] += w[b] * fp[m];
      }
      for (int b = 0; b < bins; ++b) p[b] *= ft_t[b] / (ftfp[b] + 1e-12);
    }
    for (int b = 0; b < bins; ++b) out.at(f, b) = std::sqrt(std::max(p[b], 0.0));
  }
  return out;
}

AudioBuffer griffin_lim(const MagnitudeSpectrogram& mag, int iters, uint64_t seed,
                        std::vector<double>* distances, double momentum) {
  if (iters < 1) throw Error(ErrorKind::BadFrameParams, "iters must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0)
    throw Error(ErrorKind::BadFrameParams, "momentum must lie in [0, 1)");
  check_frame_params(mag.n_fft, mag.hop);
  for (double v : mag.data)
    if (v < 0.0 || !std::isfinite(v))
      throw Error(ErrorKind::NegativeMagnitude, "magnitude entries must be finite and >= 0");
  if (distances) distances->clear();

  std::mt19937 rng = make_rng(seed, "griffin_lim");
  ComplexSpectrogram spec;
  spec.frames = mag.frames;
  spec.bins = mag.bins;
  spec.n_fft = mag.n_fft;
  spec.hop = mag.hop;
  spec.sample_rate = mag.sample_rate;
  spec.data.resize(mag.data.size());

  std::vector<double> phase(mag.data.size());
  for (auto& p : phase) p = uniform_in(rng, 0.0, 2.0 * M_PI);
  std::vector<std::complex<double>> prev(mag.data.size(), {0.0, 0.0});

  // istft is the exact least-squares inverse of stft here, which is what
  // keeps the logged spectral distance non-increasing.
  for (int it = 0; it < iters; ++it) {
    for (size_t i = 0; i < phase.size(); ++i)
      spec.data[i] = std::polar(mag.data[i], phase[i]);
    const AudioBuffer x = istft(spec);
    const ComplexSpectrogram z = stft(x, mag.n_fft, mag.hop);
    if (distances) distances->push_back(spectral_distance(z, mag));
    const size_t n = std::min(z.data.size(), phase.size());
    for (size_t i = 0; i < n; ++i) {
      const std::complex<double> v = z.data[i] - momentum / (1.0 + momentum) * prev[i];
      prev[i] = z.data[i];
      phase[i] = std::arg(v);
    }
  }
  for (size_t i = 0; i < phase.size(); ++i) spec.data[i] = std::polar(mag.data[i], phase[i]);
  return istft(spec);
}

void save_mel(const std::string& path, const MelSpectrogram& mel) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(mel.data.data()),
              static_cast<std::streamsize>(mel.data.size() * sizeof(float)));
    if (!out) throw Error(ErrorKind::IoFailure, "short write to " + path);
  }
  nlohmann::ordered_json meta;
  meta["n_frames"] = mel.frames;
  meta["n_mels"] = mel.n_mels;
  meta["sr"] = mel.sample_rate;
  meta["n_fft"] = mel.n_fft;
  meta["hop"] = mel.hop;
  meta["log_offset"] = mel.log_offset;
  std::ofstream side(path + ".json");
  if (!side) throw Error(ErrorKind::IoFailure, "cannot write " + path + ".json");
  side << meta.dump(2) << "\n";
}

MelSpectrogram load_mel(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw Error(ErrorKind::IoFailure, "cannot open " + path + ".json");
  nlohmann::json meta;
  try {
    side >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MetadataMismatch, std::string("bad mel sidecar: ") + e.what());
  }
  MelSpectrogram mel;
  try {
    mel.frames = meta.at("n_frames").get<int>();
    mel.n_mels = meta.at("n_mels").get<int>();
    mel.sample_rate = meta.at("sr").get<int>();
    mel.n_fft = meta.at("n_fft").get<int>();
    mel.hop = meta.at("hop").get<int>();
    mel.log_offset = meta.at("log_offset").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MetadataMismatch, std::string("bad mel sidecar: ") + e.what());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
  mel.data.resize(static_cast<size_t>(mel.frames) * mel.n_mels);
  in.read(reinterpret_cast<char*>(mel.data.data()),
          static_cast<std::streamsize>(mel.data.size() * sizeof(float)));
  if (!in) throw Error(ErrorKind::MetadataMismatch, "mel file shorter than its sidecar claims");
  return mel;
}

}  // namespace stylespeech::dsp
