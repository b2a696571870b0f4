#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "capsloc/capsnet.hpp"
#include "capsloc/config.hpp"
#include "capsloc/core/conv.hpp"
#include "capsloc/core/nn.hpp"
#include "capsloc/core/ops.hpp"
#include "capsloc/grid.hpp"

namespace capsloc {

/// Benchmark without routing: the same conv trunk, with the primary-capsule
/// layer replaced by a plain convolution and a fully connected head.
/// The embedding variant reads class scores as row norms of an
/// [classes x pose_atoms] matrix and can reconstruct through the same
/// decoder stack; the logits variant maps straight to class logits.
struct ConvBenchmarkConfig {
  std::string variant = "embedding";  // embedding | logits
  bool reconstruction = true;
  CapsNetConfig trunk;

  bool is_embedding() const { return variant == "embedding"; }

  void validate() const {
    if (variant != "embedding" && variant != "logits")
      throw ConfigError("benchmark variant must be embedding or logits");
    if (!is_embedding() && reconstruction)
      throw ConfigError("only the embedding variant can reconstruct");
    trunk.validate();
  }
};

inline void to_json(json& j, const ConvBenchmarkConfig& c) {
  j = json{{"variant", c.variant},
           {"reconstruction", c.reconstruction},
           {"trunk", c.trunk}};
}

inline void from_json(const json& j, ConvBenchmarkConfig& c) {
  check_known_keys(j, "benchmark config", {"variant", "reconstruction", "trunk"});
  c.variant = j.value("variant", c.variant);
  c.reconstruction = j.value("reconstruction", c.reconstruction);
  if (j.contains("trunk")) from_json(j.at("trunk"), c.trunk);
}

template <class T>
class ConvBenchmark {
 public:
  struct Output {
    Tensor<T> trunk;      // [N, F, G, G] final conv features
    Tensor<T> scores;     // [N, classes]
    Tensor<T> embedding;  // [N, classes, pose_atoms] (embedding variant)
    Tensor<T> recon;      // [N, 1, H, W] when decoding
    Tensor<T> ce;
    Tensor<T> recon_loss;
    Tensor<T> total;
  };

  ConvBenchmark(ConvBenchmarkConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const CapsNetConfig& m = cfg_.trunk;
    grid_ = compute_coordinate_grid(m);
    const int k1 = m.conv1.kernel, f1 = m.conv1.filters;
    const int k2 = m.conv2.kernel, f2 = m.conv2.filters;
    const int k3 = m.primary_kernel;
    const int f3 = m.primary_types * m.primary_atoms;
    conv1_w_ = detail::normal_init<T>(rng, {f1, 1, k1, k1},
                                      std::sqrt(2.0 / (k1 * k1)));
    conv1_b_ = Tensor<T>({f1});
    conv2_w_ = detail::normal_init<T>(rng, {f2, f1, k2, k2},
                                      std::sqrt(2.0 / (f1 * k2 * k2)));
    conv2_b_ = Tensor<T>({f2});
    conv3_w_ = detail::normal_init<T>(rng, {f3, f2, k3, k3},
                                      std::sqrt(2.0 / (f2 * k3 * k3)));
    conv3_b_ = Tensor<T>({f3});

    const int g = grid_.g;
    const int flat = f3 * g * g;
    const int head_out = m.num_classes *
                         (cfg_.is_embedding() ? m.pose_atoms : 1);
    head_w_ = detail::normal_init<T>(rng, {flat, head_out},
                                     std::sqrt(1.0 / flat));
    head_b_ = Tensor<T>({head_out});

    if (decodes()) {
      const int emb = m.num_classes * m.pose_atoms;
      const int seed = m.decoder_seed, seed_ch = m.decoder_seed_channels;
      fc_w_ = detail::normal_init<T>(rng, {emb, seed_ch * seed * seed},
                                     std::sqrt(1.0 / emb));
      fc_b_ = Tensor<T>({seed_ch * seed * seed});
      int ch = seed_ch;
      for (std::size_t i = 0; i < m.decoder_kernels.size(); ++i) {
        const int k = m.decoder_kernels[i];
        const int f = m.decoder_channels[i];
        dec_w_.push_back(detail::normal_init<T>(rng, {ch, f, k, k},
                                                std::sqrt(1.0 / (ch * k * k))));
        dec_b_.push_back(Tensor<T>({f}));
        ch = f;
      }
    }
    for (auto& [name, p] : named_params()) p.set_requires_grad(true);
  }

  const ConvBenchmarkConfig& config() const { return cfg_; }
  const CoordinateGrid& grid() const { return grid_; }
  bool decodes() const { return cfg_.is_embedding() && cfg_.reconstruction; }

  std::vector<std::pair<std::string, Tensor<T>>> named_params() {
    std::vector<std::pair<std::string, Tensor<T>>> out{
        {"conv1.w", conv1_w_}, {"conv1.b", conv1_b_}, {"conv2.w", conv2_w_},
        {"conv2.b", conv2_b_}, {"conv3.w", conv3_w_}, {"conv3.b", conv3_b_},
        {"head.w", head_w_},   {"head.b", head_b_}};
    if (decodes()) {
      out.emplace_back("decoder.fc.w", fc_w_);
      out.emplace_back("decoder.fc.b", fc_b_);
      for (std::size_t i = 0; i < dec_w_.size(); ++i) {
        out.emplace_back("decoder." + std::to_string(i) + ".w", dec_w_[i]);
        out.emplace_back("decoder." + std::to_string(i) + ".b", dec_b_[i]);
      }
    }
    return out;
  }

  /// labels: one class per image (benchmarks train single-digit only).
  Output forward(Tape<T>* tape, Tensor<T> images,
                 const std::vector<int>* labels, bool decode) {
    const CapsNetConfig& m = cfg_.trunk;
    if (images.rank() != 4 || images.dim(1) != 1 ||
        images.dim(2) != m.image_size || images.dim(3) != m.image_size)
      throw DimensionError("expected images [N,1," +
                           std::to_string(m.image_size) + "," +
                           std::to_string(m.image_size) + "], got " +
                           shape_str(images.shape()));
    const int n = images.dim(0);
    Output out;
    auto h1 = ops::relu(tape, ops::add_channel_bias(
                                  tape, ops::conv2d(tape, images, conv1_w_,
                                                    m.conv1.stride),
                                  conv1_b_));
    auto h2 = ops::relu(tape, ops::add_channel_bias(
                                  tape, ops::conv2d(tape, h1, conv2_w_,
                                                    m.conv2.stride),
                                  conv2_b_));
    out.trunk = ops::relu(tape, ops::add_channel_bias(
                                    tape,
                                    ops::conv2d(tape, h2, conv3_w_,
                                                m.primary_stride),
                                    conv3_b_));
    auto flat = ops::reshape(tape, out.trunk,
                             {n, static_cast<int>(out.trunk.size()) / n});
    auto head = ops::add_rowvec(tape, ops::matmul(tape, flat, head_w_), head_b_);
    if (cfg_.is_embedding()) {
      out.embedding = ops::reshape(tape, head,
                                   {n, m.num_classes, m.pose_atoms});
      out.scores = ops::norm_l2(tape, out.embedding, -1);
    } else {
      out.scores = head;
    }

    if (labels) out.ce = ops::softmax_xent(tape, out.scores, *labels);
    if (decode && decodes()) {
      Tensor<T> mask({n, m.num_classes});
      for (int i = 0; i < n; ++i)
        mask.at({i, labels ? (*labels)[static_cast<std::size_t>(i)]
                           : argmax(out.scores, i)}) = T(1);
      out.recon = this->decode(tape, out.embedding, mask);
      if (labels) {
        auto sse = ops::sse_mean(tape, out.recon, images);
        out.recon_loss = ops::mul_scalar(tape, sse,
                                         static_cast<T>(m.recon_weight));
        out.total = ops::add(tape, out.ce, out.recon_loss);
      }
    } else if (labels) {
      out.total = out.ce;
    }
    return out;
  }

  /// Mask embedding rows, flatten, and run the decoder stack.
  Tensor<T> decode(Tape<T>* tape, Tensor<T> embedding, Tensor<T> mask) {
    const CapsNetConfig& m = cfg_.trunk;
    if (!decodes()) throw ConfigError("this benchmark variant cannot decode");
    const int n = embedding.dim(0);
    auto masked = ops::mask_rows(tape, embedding, mask);
    auto flat = ops::reshape(tape, masked,
                             {n, m.num_classes * m.pose_atoms});
    auto h = ops::relu(tape, ops::add_rowvec(tape, ops::matmul(tape, flat, fc_w_),
                                             fc_b_));
    auto x = ops::reshape(tape, h, {n, m.decoder_seed_channels, m.decoder_seed,
                                    m.decoder_seed});
    for (std::size_t i = 0; i < dec_w_.size(); ++i) {
      x = ops::add_channel_bias(
          tape, ops::conv_transpose2d(tape, x, dec_w_[i], m.decoder_strides[i]),
          dec_b_[i]);
      x = (i + 1 == dec_w_.size()) ? ops::sigmoid(tape, x) : ops::relu(tape, x);
    }
    return x;
  }

  static int argmax(const Tensor<T>& scores, int row) {
    int best = 0;
    for (int k = 1; k < scores.dim(1); ++k)
      if (scores.at({row, k}) > scores.at({row, best})) best = k;
    return best;
  }

 private:
  ConvBenchmarkConfig cfg_;
  CoordinateGrid grid_;
  Tensor<T> conv1_w_, conv1_b_, conv2_w_, conv2_b_, conv3_w_, conv3_b_;
  Tensor<T> head_w_, head_b_;
  Tensor<T> fc_w_, fc_b_;
  std::vector<Tensor<T>> dec_w_, dec_b_;
};

}  // namespace capsloc
