// Copyright 2026 The eend-dat Authors
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

// Conformer encoder with convolutional sub/up-sampling, a bank of
// per-domain residual adapters after the encoder blocks and an optional
// learnable summary row that skips the convolution module.
//
// Block structure, for input X:
//   X~   = X + 1/2 FF(X)
//   X'   = X~ + SA(X~)
//   X''  = X' + CNN(X')          (summary row excluded from CNN)
//   X''' = LN(X'' + 1/2 FF(X''))
//   X''''= X''' + Up(Swish(Down(LN_d(X'''))))   (adapter of domain d)

#pragma once

#include "eend/params.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace eend {

struct EncoderConfig {
  int input_dim = 23;
  int num_blocks = 4;
  int d_model = 256;
  int num_heads = 4;
  int ff_hidden = 1024;
  int conv_kernel = 15;
  int subsample_factor = 10;
  int adapter_bottleneck = 32;
  // 1-based block indices carrying adapters; nullopt means every block.
  std::optional<std::vector<int>> adapter_blocks;
  bool use_summary_vector = false;
  bool summary_bypasses_adapters = false;
  std::vector<std::string> domains;

  std::vector<int> resolved_adapter_blocks() const {
    if (adapter_blocks) return *adapter_blocks;
    std::vector<int> all(static_cast<std::size_t>(num_blocks));
    for (int i = 0; i < num_blocks; ++i) all[static_cast<std::size_t>(i)] = i + 1;
    return all;
  }

  void validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("EncoderConfig: " + msg); };
    if (input_dim < 1) fail("input_dim must be >= 1");
    if (num_blocks < 1) fail("num_blocks must be >= 1");
    if (d_model < 1 || num_heads < 1 || d_model % num_heads != 0) fail("d_model must be divisible by num_heads");
    if (ff_hidden < 1) fail("ff_hidden must be >= 1");
    if (conv_kernel < 1 || conv_kernel % 2 == 0) fail("conv_kernel must be odd");
    if (subsample_factor < 1) fail("subsample_factor must be >= 1");
    if (adapter_bottleneck < 1) fail("adapter_bottleneck must be >= 1");
    std::set<int> seen;
    for (int b : resolved_adapter_blocks()) {
      if (b < 1 || b > num_blocks) fail("adapter block index out of range: " + std::to_string(b));
      if (!seen.insert(b).second) fail("duplicate adapter block index " + std::to_string(b));
    }
    std::set<std::string> names;
    for (const auto& d : domains) {
      if (d.empty()) fail("empty domain name");
      if (d == "none") fail("'none' is reserved and cannot name a domain");
      if (!names.insert(d).second) fail("duplicate domain " + d);
    }
  }

  std::optional<std::size_t> domain_index(const std::string& name) const {
    auto it = std::find(domains.begin(), domains.end(), name);
    if (it == domains.end()) return std::nullopt;
    return static_cast<std::size_t>(it - domains.begin());
  }
};

/// Adapter parameter count for model width d and bottleneck r.
constexpr std::size_t adapter_parameter_count(std::size_t d, std::size_t r) {
  return 2 * d + d * r + r + r * d + d;
}

struct FeedForwardParams {
  LayerNorm norm;
  Linear expand;
  Linear project;
};

struct AttentionParams {
  LayerNorm norm;
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int num_heads = 1;
};

struct ConvModuleParams {
  LayerNorm norm;
  Linear pointwise_in;  // d -> 2d, feeds the GLU
  Tensor depthwise_kernel;  // K x d
  Tensor depthwise_bias;    // 1 x d
  LayerNorm depthwise_norm;
  Linear pointwise_out;
};

struct ConformerBlockParams {
  FeedForwardParams ff1;
  AttentionParams attention;
  ConvModuleParams conv;
  FeedForwardParams ff2;
  LayerNorm final_norm;
};

struct AdapterParams {
  LayerNorm norm;
  Linear down;
  Linear up;
};

struct SubsamplerParams {
  Linear stage1;  // (stride1 * input_dim) -> d
  Linear stage2;  // (stride2 * d) -> d
  int stride1 = 1;
  int stride2 = 1;
};

struct UpsamplerParams {
  Linear deconv;  // d -> stride * d
  int stride = 1;
};

struct EncoderOutput {
  Tensor embeddings;             // T x d at input frame rate
  std::optional<Tensor> summary;  // 1 x d
};

/// Splits a total stride into two convolution strides.
inline std::pair<int, int> split_stride(int factor) {
  if (factor <= 1) return {1, 1};
  for (int p = 2; p * p <= factor; ++p) {
    if (factor % p == 0) return {p, factor / p};
  }
  return {factor, 1};
}

inline FeedForwardParams make_feed_forward(ParameterStore& store, const std::string& name, int d, int hidden,
                                           Rng& rng) {
  return {LayerNorm::create(store, name + ".norm", d), Linear::create(store, name + ".expand", d, hidden, rng),
          Linear::create(store, name + ".project", hidden, d, rng)};
}

inline AttentionParams make_attention(ParameterStore& store, const std::string& name, int d, int heads, Rng& rng) {
  return {LayerNorm::create(store, name + ".norm", d),
          Linear::create(store, name + ".query", d, d, rng),
          Linear::create(store, name + ".key", d, d, rng),
          Linear::create(store, name + ".value", d, d, rng),
          Linear::create(store, name + ".output", d, d, rng),
          heads};
}

inline ConvModuleParams make_conv_module(ParameterStore& store, const std::string& name, int d, int kernel,
                                         Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(kernel));
  return {LayerNorm::create(store, name + ".norm", d),
          Linear::create(store, name + ".pointwise_in", d, 2 * d, rng),
          store.add(name + ".depthwise.kernel", uniform_matrix(kernel, d, bound, rng)),
          store.add(name + ".depthwise.bias", uniform_matrix(1, d, bound, rng)),
          LayerNorm::create(store, name + ".depthwise_norm", d),
          Linear::create(store, name + ".pointwise_out", d, d, rng)};
}

/// LN -> W1 (random, std 1e-2) -> Swish -> W2 (zero), so a fresh adapter is
/// the identity map.
inline AdapterParams make_adapter(ParameterStore& store, const std::string& name, int d, int bottleneck, Rng& rng) {
  AdapterParams a;
  a.norm = LayerNorm::create(store, name + ".norm", d);
  a.down = {store.add(name + ".down.weight", normal_matrix(d, bottleneck, 1e-2, rng)),
            store.add(name + ".down.bias", Matrix::Zero(1, bottleneck))};
  a.up = {store.add(name + ".up.weight", Matrix::Zero(bottleneck, d)),
          store.add(name + ".up.bias", Matrix::Zero(1, d))};
  return a;
}

/// LN -> Linear -> Swish -> Linear. Residual and half-step scaling belong
/// to the caller.
inline Tensor ff_module(const Tensor& x, const FeedForwardParams& p) {
  return p.project(swish(p.expand(p.norm(x))));
}

/// Pre-normalized multi-head scaled dot-product attention without positional
/// information or masking. Residual belongs to the caller. When weights is
/// non-null it receives one N x N attention matrix per head.
inline Tensor self_attention(const Tensor& x, const AttentionParams& p, std::vector<Matrix>* weights = nullptr) {
  const auto d = x.cols();
  if (p.query.weight.rows() != d) throw std::invalid_argument("self_attention: input width mismatch");
  const auto heads = p.num_heads;
  const auto dk = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor normed = p.norm(x);
  Tensor q = p.query(normed);
  Tensor k = p.key(normed);
  Tensor v = p.value(normed);
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  if (weights) weights->clear();
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dk, dk);
    Tensor kh = slice_cols(k, h * dk, dk);
    Tensor vh = slice_cols(v, h * dk, dk);
    Tensor attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_scale));
    if (weights) weights->push_back(attn.value());
    outs.push_back(matmul(attn, vh));
  }
  return p.output(heads == 1 ? outs.front() : concat_cols(outs));
}

namespace detail {

inline Tensor conv_body(const Tensor& x, const ConvModuleParams& p) {
  Tensor h = glu(p.pointwise_in(p.norm(x)));
  h = depthwise_conv1d(h, p.depthwise_kernel, p.depthwise_bias);
  return p.pointwise_out(swish(p.depthwise_norm(h)));
}

}  // namespace detail

/// Convolution module: LN -> pointwise -> GLU -> depthwise -> LN -> Swish ->
/// pointwise over the time axis. With summary_present, row 0 is split off
/// and returned as-is; the remaining rows carry the convolution output
/// (residual belongs to the caller for those rows).
inline Tensor conv_module(const Tensor& x, const ConvModuleParams& p, bool summary_present) {
  if (x.cols() != p.pointwise_out.weight.cols()) throw std::invalid_argument("conv_module: input width mismatch");
  if (!summary_present) return detail::conv_body(x, p);
  if (x.rows() < 2) throw std::invalid_argument("conv_module: summary row without frames");
  Tensor summary = slice_rows(x, 0, 1);
  Tensor frames = slice_rows(x, 1, x.rows() - 1);
  return concat_rows({summary, detail::conv_body(frames, p)});
}

inline Tensor conformer_block(const Tensor& x, const ConformerBlockParams& p, bool summary_present) {
  Tensor h = add(x, scale(ff_module(x, p.ff1), 0.5));
  h = add(h, self_attention(h, p.attention));
  if (summary_present) {
    Tensor summary = slice_rows(h, 0, 1);
    Tensor frames = slice_rows(h, 1, h.rows() - 1);
    h = concat_rows({summary, add(frames, detail::conv_body(frames, p.conv))});
  } else {
    h = add(h, detail::conv_body(h, p.conv));
  }
  return p.final_norm(add(h, scale(ff_module(h, p.ff2), 0.5)));
}

inline Tensor adapter_forward(const Tensor& x, const AdapterParams& a, bool summary_present, bool bypass_summary) {
  if (x.cols() != a.up.weight.cols()) throw std::invalid_argument("adapter_forward: input width mismatch");
  auto residual = [&a](const Tensor& in) { return add(in, a.up(swish(a.down(a.norm(in))))); };
  if (!(summary_present && bypass_summary)) return residual(x);
  Tensor summary = slice_rows(x, 0, 1);
  return concat_rows({summary, residual(slice_rows(x, 1, x.rows() - 1))});
}

namespace detail {

// Zero-pads rows up to a multiple of stride, then folds each group of
// `stride` consecutive rows into one row.
inline Tensor fold_rows(const Tensor& x, int stride) {
  const auto rem = x.rows() % stride;
  Tensor padded = x;
  if (rem != 0) padded = concat_rows({x, Tensor::constant(Matrix::Zero(stride - rem, x.cols()))});
  return reshape(padded, padded.rows() / stride, padded.cols() * stride);
}

}  // namespace detail

/// Two strided non-overlapping convolutions; N = ceil(T / factor).
inline Tensor subsample(const Tensor& features, const SubsamplerParams& p) {
  const int factor = p.stride1 * p.stride2;
  if (features.rows() < factor) {
    throw std::invalid_argument("subsample: " + std::to_string(features.rows()) +
                                " frames is fewer than the subsampling factor " + std::to_string(factor));
  }
  Tensor h = swish(p.stage1(detail::fold_rows(features, p.stride1)));
  return p.stage2(detail::fold_rows(h, p.stride2));
}

/// Transposed convolution with kernel = stride, cropped to target_frames.
inline Tensor upsample(const Tensor& x, const UpsamplerParams& p, Eigen::Index target_frames) {
  if (x.rows() * p.stride < target_frames) throw std::invalid_argument("upsample: target longer than expansion");
  Tensor expanded = p.deconv(x);
  Tensor frames = reshape(expanded, x.rows() * p.stride, x.cols());
  return slice_rows(frames, 0, target_frames);
}

/// Adapter routing for one forward call: a domain name, or nullopt to skip
/// every adapter.
using AdapterRoute = std::optional<std::string>;

class ConformerEncoder {
 public:
  ConformerEncoder() = default;

  static ConformerEncoder create(const EncoderConfig& config, ParameterStore& store, Rng& rng,
                                 const std::string& prefix = "encoder") {
    config.validate();
    ConformerEncoder enc;
    enc.config_ = config;
    const int d = config.d_model;
    auto [s1, s2] = split_stride(config.subsample_factor);
    enc.subsampler_ = {Linear::create(store, prefix + ".subsample.stage1", s1 * config.input_dim, d, rng),
                       Linear::create(store, prefix + ".subsample.stage2", s2 * d, d, rng), s1, s2};
    if (config.use_summary_vector) enc.summary_ = store.add(prefix + ".summary", normal_matrix(1, d, 0.02, rng));
    for (int b = 0; b < config.num_blocks; ++b) {
      const std::string name = prefix + ".block" + std::to_string(b + 1);
      enc.blocks_.push_back({make_feed_forward(store, name + ".ff1", d, config.ff_hidden, rng),
                             make_attention(store, name + ".attention", d, config.num_heads, rng),
                             make_conv_module(store, name + ".conv", d, config.conv_kernel, rng),
                             make_feed_forward(store, name + ".ff2", d, config.ff_hidden, rng),
                             LayerNorm::create(store, name + ".final_norm", d)});
    }
    for (const auto& domain : config.domains) {
      for (int b : config.resolved_adapter_blocks()) {
        enc.adapters_.emplace(std::make_pair(domain, b),
                              make_adapter(store, prefix + ".adapter." + domain + ".block" + std::to_string(b), d,
                                           config.adapter_bottleneck, rng));
      }
    }
    enc.upsampler_ = {Linear::create(store, prefix + ".upsample", d, config.subsample_factor * d, rng),
                      config.subsample_factor};
    return enc;
  }

  const EncoderConfig& config() const { return config_; }
  const std::vector<ConformerBlockParams>& blocks() const { return blocks_; }
  const AdapterParams& adapter(const std::string& domain, int block) const { return adapters_.at({domain, block}); }

  EncoderOutput encode(const Tensor& features, const AdapterRoute& domain) const {
    if (features.cols() != config_.input_dim) {
      throw std::invalid_argument("encode: expected " + std::to_string(config_.input_dim) + " feature bins, got " +
                                  std::to_string(features.cols()));
    }
    if (domain && !config_.domain_index(*domain)) throw std::invalid_argument(unknown_domain_message(*domain));
    const bool with_summary = config_.use_summary_vector;
    Tensor x = subsample(features, subsampler_);
    if (with_summary) x = concat_rows({summary_, x});
    const auto adapter_blocks = config_.resolved_adapter_blocks();
    for (int b = 1; b <= config_.num_blocks; ++b) {
      x = conformer_block(x, blocks_[static_cast<std::size_t>(b - 1)], with_summary);
      if (domain && std::find(adapter_blocks.begin(), adapter_blocks.end(), b) != adapter_blocks.end()) {
        x = adapter_forward(x, adapters_.at({*domain, b}), with_summary, config_.summary_bypasses_adapters);
      }
    }
    EncoderOutput out;
    if (with_summary) {
      out.summary = slice_rows(x, 0, 1);
      x = slice_rows(x, 1, x.rows() - 1);
    }
    out.embeddings = upsample(x, upsampler_, features.rows());
    return out;
  }

  std::string unknown_domain_message(const std::string& name) const {
    std::string msg = "unknown domain '" + name + "'; known domains:";
    for (const auto& d : config_.domains) msg += " " + d;
    return msg + " (or none)";
  }

 private:
  EncoderConfig config_;
  SubsamplerParams subsampler_;
  Tensor summary_;
  std::vector<ConformerBlockParams> blocks_;
  std::map<std::pair<std::string, int>, AdapterParams> adapters_;
  UpsamplerParams upsampler_;
};

}  // namespace eend
