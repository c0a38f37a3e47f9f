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
// Feed-forward Transformer block: multi-head self-attention plus a two-layer
// 1-D convolution stack, post-norm residuals, PAD rows re-zeroed. Templated
// on the scalar so the gradient checker can run it in double.

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "stylespeech/tensor.hpp"

namespace stylespeech::model {

using Mask = std::vector<uint8_t>;  // 1 = real position, 0 = PAD

template <typename T>
struct FftBlockParamsT {
  ad::TensorT<T> wq, bq, wk, bk, wv, bv, wo, bo;
  ad::TensorT<T> ln1_gain, ln1_bias;
  ad::TensorT<T> conv1_w, conv1_b, conv2_w, conv2_b;
  ad::TensorT<T> ln2_gain, ln2_bias;
  int n_heads = 1;
};

using FftBlockParams = FftBlockParamsT<float>;

constexpr double kMaskedLogit = -1e30;

// Sinusoidal position table, length x d.
template <typename T>
ad::TensorT<T> positional_encoding(int length, int d) {
  ad::TensorT<T> pe = ad::TensorT<T>::zeros({length, d});
  auto& v = pe.values();
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / d);
      v[static_cast<int64_t>(pos) * d + i] = static_cast<T>(std::sin(angle));
      if (i + 1 < d) v[static_cast<int64_t>(pos) * d + i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

// n x 1 column of 0/1 used to re-zero PAD rows.
template <typename T>
ad::TensorT<T> mask_column(const Mask& mask) {
  ad::TensorT<T> col = ad::TensorT<T>::zeros({static_cast<int>(mask.size()), 1});
  for (size_t i = 0; i < mask.size(); ++i) col.values()[i] = mask[i] ? T(1) : T(0);
  return col;
}

// n x n additive attention bias: masked key columns get a logit so low that
// their softmax weight underflows to exactly zero.
template <typename T>
ad::TensorT<T> attention_bias(const Mask& mask) {
  const int n = static_cast<int>(mask.size());
  ad::TensorT<T> bias = ad::TensorT<T>::zeros({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      bias.values()[static_cast<int64_t>(i) * n + j] = mask[j] ? T(0) : static_cast<T>(kMaskedLogit);
  return bias;
}

template <typename T>
ad::TensorT<T> layer_norm_affine(ad::TapeT<T>& tape, const ad::TensorT<T>& x,
                                 const ad::TensorT<T>& gain, const ad::TensorT<T>& bias) {
  return tape.add(tape.mul(tape.layer_norm(x), gain), bias);
}

template <typename T>
ad::TensorT<T> multi_head_self_attention(ad::TapeT<T>& tape, const FftBlockParamsT<T>& p,
                                         const ad::TensorT<T>& x, const ad::TensorT<T>& bias) {
  const int d = x.dim(1);
  const int dh = d / p.n_heads;
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  ad::TensorT<T> q = tape.add(tape.matmul(x, p.wq), p.bq);
  ad::TensorT<T> k = tape.add(tape.matmul(x, p.wk), p.bk);
  ad::TensorT<T> v = tape.add(tape.matmul(x, p.wv), p.bv);
  std::vector<ad::TensorT<T>> heads;
  heads.reserve(p.n_heads);
  for (int h = 0; h < p.n_heads; ++h) {
    ad::TensorT<T> qh = tape.slice(q, 1, h * dh, dh);
    ad::TensorT<T> kh = tape.slice(k, 1, h * dh, dh);
    ad::TensorT<T> vh = tape.slice(v, 1, h * dh, dh);
    ad::TensorT<T> scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
    scores = tape.add(scores, bias);
    ad::TensorT<T> weights = tape.softmax(scores);
    heads.push_back(tape.matmul(weights, vh));
  }
  ad::TensorT<T> merged = p.n_heads == 1 ? heads[0] : tape.concat(heads, 1);
  return tape.add(tape.matmul(merged, p.wo), p.bo);
}

// y = LN(h + Conv2(ReLU(Conv1(h)))), h = LN(x + MHSA(x)); PAD rows re-zeroed
// after each norm so the convolutions never smear padding into real frames.
template <typename T>
ad::TensorT<T> fft_block(ad::TapeT<T>& tape, const FftBlockParamsT<T>& p,
                         const ad::TensorT<T>& x, const Mask& mask, double dropout_p,
                         bool training, std::mt19937* rng) {
  ad::TensorT<T> bias = attention_bias<T>(mask);
  ad::TensorT<T> col = mask_column<T>(mask);
  ad::TensorT<T> attn = multi_head_self_attention(tape, p, x, bias);
  if (training && dropout_p > 0.0) attn = tape.dropout(attn, dropout_p, training, *rng);
  ad::TensorT<T> h = layer_norm_affine(tape, tape.add(x, attn), p.ln1_gain, p.ln1_bias);
  h = tape.mul(h, col);
  ad::TensorT<T> c = tape.relu(tape.add(tape.conv1d(h, p.conv1_w), p.conv1_b));
  c = tape.add(tape.conv1d(c, p.conv2_w), p.conv2_b);
  if (training && dropout_p > 0.0) c = tape.dropout(c, dropout_p, training, *rng);
  ad::TensorT<T> y = layer_norm_affine(tape, tape.add(h, c), p.ln2_gain, p.ln2_bias);
  return tape.mul(y, col);
}

}  // namespace stylespeech::model
