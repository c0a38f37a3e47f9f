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
// Dense compute kernels. The OpenMP versions parallelize over independent
// output elements only, so every output value is accumulated in a fixed
// serial order and results are bit-identical to the serial reference in
// kernels::ref regardless of thread count. Reductions accumulate in double.

#pragma once

#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

namespace stylespeech::kernels {

// Runtime switch, mostly for tests and the benchmark tool.
inline std::atomic<bool>& parallel_flag() {
  static std::atomic<bool> enabled{true};
  return enabled;
}
inline void set_parallel(bool on) { parallel_flag().store(on); }
inline bool parallel() { return parallel_flag().load(); }

// ---------------------------------------------------------------------------
// Serial reference implementations. Kept deliberately plain; the unit tests
// assert the OpenMP kernels match these bit for bit.
// ---------------------------------------------------------------------------
namespace ref {

template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        acc += static_cast<double>(a[i * k + p]) * static_cast<double>(b[p * n + j]);
      }
      c[i * n + j] = static_cast<T>(acc);
    }
  }
}

// x: n x cin, w: kw x cin x cout, y: n x cout. Zero same-padding, odd kw.
template <typename T>
void conv1d(const T* x, const T* w, T* y, int n, int cin, int cout, int kw) {
  const int half = kw / 2;
  for (int t = 0; t < n; ++t) {
    for (int co = 0; co < cout; ++co) {
      double acc = 0.0;
      for (int k = 0; k < kw; ++k) {
        const int s = t + k - half;
        if (s < 0 || s >= n) continue;
        for (int ci = 0; ci < cin; ++ci) {
          acc += static_cast<double>(x[s * cin + ci]) *
                 static_cast<double>(w[(k * cin + ci) * cout + co]);
        }
      }
      y[t * cout + co] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void softmax_rows(const T* x, T* y, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const T* xi = x + static_cast<int64_t>(i) * cols;
    T* yi = y + static_cast<int64_t>(i) * cols;
    double mx = -HUGE_VAL;
    for (int j = 0; j < cols; ++j) mx = std::max(mx, static_cast<double>(xi[j]));
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double e = std::exp(static_cast<double>(xi[j]) - mx);
      yi[j] = static_cast<T>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < cols; ++j) yi[j] = static_cast<T>(static_cast<double>(yi[j]) * inv);
  }
}

// Plain normalization, no affine part. mean/inv_std are per-row stats the
// backward pass reuses (may be null).
template <typename T>
void layernorm_rows(const T* x, T* y, T* mean_out, T* inv_std_out, int rows, int cols,
                    double eps) {
  for (int i = 0; i < rows; ++i) {
    const T* xi = x + static_cast<int64_t>(i) * cols;
    T* yi = y + static_cast<int64_t>(i) * cols;
    double mu = 0.0;
    for (int j = 0; j < cols; ++j) mu += static_cast<double>(xi[j]);
    mu /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = static_cast<double>(xi[j]) - mu;
      var += d * d;
    }
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < cols; ++j) {
      yi[j] = static_cast<T>((static_cast<double>(xi[j]) - mu) * inv);
    }
    if (mean_out) mean_out[i] = static_cast<T>(mu);
    if (inv_std_out) inv_std_out[i] = static_cast<T>(inv);
  }
}

}  // namespace ref

// ---------------------------------------------------------------------------
// Production kernels (OpenMP over independent outputs).
// ---------------------------------------------------------------------------

template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n) {
  const bool par = parallel();
#pragma omp parallel for schedule(static) if (par && m > 1)
  for (int i = 0; i < m; ++i) {
    // Row of doubles keeps the k-ascending accumulation order of the
    // reference while staying cache friendly over b.
    std::vector<double> acc(n, 0.0);
    const T* arow = a + static_cast<int64_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = static_cast<double>(arow[p]);
      const T* brow = b + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    T* crow = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = static_cast<T>(acc[j]);
  }
}

template <typename T>
void conv1d(const T* x, const T* w, T* y, int n, int cin, int cout, int kw) {
  const int half = kw / 2;
  const bool par = parallel();
#pragma omp parallel for schedule(static) if (par && n > 1)
  for (int t = 0; t < n; ++t) {
    std::vector<double> acc(cout, 0.0);
    for (int k = 0; k < kw; ++k) {
      const int s = t + k - half;
      if (s < 0 || s >= n) continue;
      const T* xs = x + static_cast<int64_t>(s) * cin;
      for (int ci = 0; ci < cin; ++ci) {
        const double xv = static_cast<double>(xs[ci]);
        const T* wrow = w + (static_cast<int64_t>(k) * cin + ci) * cout;
        for (int co = 0; co < cout; ++co) acc[co] += xv * static_cast<double>(wrow[co]);
      }
    }
    T* yt = y + static_cast<int64_t>(t) * cout;
    for (int co = 0; co < cout; ++co) yt[co] = static_cast<T>(acc[co]);
  }
}

template <typename T>
void softmax_rows(const T* x, T* y, int rows, int cols) {
  const bool par = parallel();
#pragma omp parallel for schedule(static) if (par && rows > 1)
  for (int i = 0; i < rows; ++i) {
    ref::softmax_rows(x + static_cast<int64_t>(i) * cols, y + static_cast<int64_t>(i) * cols,
                      1, cols);
  }
}

template <typename T>
void layernorm_rows(const T* x, T* y, T* mean_out, T* inv_std_out, int rows, int cols,
                    double eps) {
  const bool par = parallel();
#pragma omp parallel for schedule(static) if (par && rows > 1)
  for (int i = 0; i < rows; ++i) {
    ref::layernorm_rows(x + static_cast<int64_t>(i) * cols, y + static_cast<int64_t>(i) * cols,
                        mean_out ? mean_out + i : nullptr,
                        inv_std_out ? inv_std_out + i : nullptr, 1, cols, eps);
  }
}

template <typename T, typename F>
void map_elementwise(const T* x, T* y, int64_t size, F f) {
  const bool par = parallel();
#pragma omp parallel for schedule(static) if (par && size > 4096)
  for (int64_t i = 0; i < size; ++i) y[i] = f(x[i]);
}

template <typename T, typename F>
void zip_elementwise(const T* a, const T* b, T* y, int64_t size, F f) {
  const bool par = parallel();
#pragma omp parallel for schedule(static) if (par && size > 4096)
  for (int64_t i = 0; i < size; ++i) y[i] = f(a[i], b[i]);
}

template <typename T>
double reduce_sum(const T* x, int64_t size) {
  double acc = 0.0;  // serial: a single deterministic accumulation order
  for (int64_t i = 0; i < size; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

// ---------------------------------------------------------------------------
// Radix-2 FFT (double precision, in place). n must be a power of two.
// ---------------------------------------------------------------------------
inline void fft_inplace(std::complex<double>* a, int n, bool inverse) {
  // Bit-reversal permutation.
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * M_PI / len * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / n;
    for (int i = 0; i < n; ++i) a[i] *= inv;
  }
}

}  // namespace stylespeech::kernels
