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
// Times the serial reference kernels against the OpenMP ones and checks that
// the outputs agree bit for bit.

#include <chrono>
#include <cstring>
#include <iomanip>
#include <iostream>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "stylespeech/kernels.hpp"
#include "stylespeech/rng.hpp"

namespace k = stylespeech::kernels;

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::vector<float> random_values(std::mt19937& rng, int64_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(stylespeech::uniform_in(rng, -1.0, 1.0));
  return v;
}

template <typename F>
double time_best_of(int reps, F f) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_ms();
    f();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

void report(const std::string& name, double serial_ms, double parallel_ms, bool exact) {
  std::cout << std::left << std::setw(28) << name << " serial " << std::setw(9) << serial_ms
            << " ms   omp " << std::setw(9) << parallel_ms << " ms   speedup "
            << std::setprecision(3) << (serial_ms / parallel_ms) << "x   bit-identical: "
            << (exact ? "yes" : "NO") << std::setprecision(6) << "\n";
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::cout << "OpenMP threads: " << omp_get_max_threads() << "\n";
#else
  std::cout << "built without OpenMP\n";
#endif
  std::mt19937 rng(12345);

  {
    const int m = 256, kk = 256, n = 256;
    const auto a = random_values(rng, static_cast<int64_t>(m) * kk);
    const auto b = random_values(rng, static_cast<int64_t>(kk) * n);
    std::vector<float> c_ref(static_cast<int64_t>(m) * n), c_omp(c_ref.size());
    const double ts = time_best_of(
        5, [&] { k::ref::matmul(a.data(), b.data(), c_ref.data(), m, kk, n); });
    k::set_parallel(true);
    const double tp =
        time_best_of(5, [&] { k::matmul(a.data(), b.data(), c_omp.data(), m, kk, n); });
    report("matmul 256x256x256", ts, tp,
           std::memcmp(c_ref.data(), c_omp.data(), c_ref.size() * sizeof(float)) == 0);
  }

  {
    const int n = 512, cin = 128, cout = 256, kw = 3;
    const auto x = random_values(rng, static_cast<int64_t>(n) * cin);
    const auto w = random_values(rng, static_cast<int64_t>(kw) * cin * cout);
    std::vector<float> y_ref(static_cast<int64_t>(n) * cout), y_omp(y_ref.size());
    const double ts = time_best_of(
        5, [&] { k::ref::conv1d(x.data(), w.data(), y_ref.data(), n, cin, cout, kw); });
    const double tp = time_best_of(
        5, [&] { k::conv1d(x.data(), w.data(), y_omp.data(), n, cin, cout, kw); });
    report("conv1d 512x128->256 k3", ts, tp,
           std::memcmp(y_ref.data(), y_omp.data(), y_ref.size() * sizeof(float)) == 0);
  }

  {
    const int rows = 2048, cols = 512;
    const auto x = random_values(rng, static_cast<int64_t>(rows) * cols);
    std::vector<float> y_ref(x.size()), y_omp(x.size());
    const double ts =
        time_best_of(5, [&] { k::ref::softmax_rows(x.data(), y_ref.data(), rows, cols); });
    const double tp =
        time_best_of(5, [&] { k::softmax_rows(x.data(), y_omp.data(), rows, cols); });
    report("softmax 2048x512", ts, tp,
           std::memcmp(y_ref.data(), y_omp.data(), y_ref.size() * sizeof(float)) == 0);
  }

  {
    const int rows = 2048, cols = 512;
    const auto x = random_values(rng, static_cast<int64_t>(rows) * cols);
    std::vector<float> y_ref(x.size()), y_omp(x.size());
    std::vector<float> mu(rows), inv(rows);
    const double ts = time_best_of(5, [&] {
      k::ref::layernorm_rows(x.data(), y_ref.data(), mu.data(), inv.data(), rows, cols, 1e-5);
    });
    const double tp = time_best_of(5, [&] {
      k::layernorm_rows(x.data(), y_omp.data(), mu.data(), inv.data(), rows, cols, 1e-5);
    });
    report("layernorm 2048x512", ts, tp,
           std::memcmp(y_ref.data(), y_omp.data(), y_ref.size() * sizeof(float)) == 0);
  }

  return 0;
}
