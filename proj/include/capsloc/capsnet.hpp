#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "capsloc/config.hpp"
#include "capsloc/core/capsule.hpp"
#include "capsloc/core/conv.hpp"
#include "capsloc/core/nn.hpp"
#include "capsloc/core/ops.hpp"
#include "capsloc/core/random.hpp"
#include "capsloc/core/tape.hpp"
#include "capsloc/core/tensor.hpp"
#include "capsloc/grid.hpp"
#include "capsloc/routing.hpp"

namespace capsloc {

namespace detail {

template <class T>
Tensor<T> normal_init(Rng& rng, Shape shape, double stddev) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.normal() * stddev);
  return t;
}

}  // namespace detail

/// The routed capsule model: two ReLU conv layers, a primary-capsule conv,
/// shared per-(type,class) pose transforms, coordinate-aware routing, and a
/// transposed-conv decoder fed by the masked digit capsules.
template <class T>
class CapsNet {
 public:
  struct Output {
    Tensor<T> v;           // [N, J, pose_atoms]
    Tensor<T> o;           // [N, J, 2]
    Tensor<T> c;           // [N, I, J]
    Tensor<T> norms;       // [N, J]
    Tensor<T> digit_caps;  // [N, J, 2 + pose_atoms], coordinates first
    Tensor<T> recon;       // [N, 1, H, W] when decoding
    Tensor<T> margin;      // scalars when labels were given
    Tensor<T> recon_loss;
    Tensor<T> total;
  };

  CapsNet(CapsNetConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    grid_ = compute_coordinate_grid(cfg_);
    coords_ = grid_.template capsule_coords<T>(cfg_.primary_types);

    const int k1 = cfg_.conv1.kernel, f1 = cfg_.conv1.filters;
    const int k2 = cfg_.conv2.kernel, f2 = cfg_.conv2.filters;
    const int kp = cfg_.primary_kernel;
    const int fp = cfg_.primary_types * cfg_.primary_atoms;
    conv1_w_ = detail::normal_init<T>(rng, {f1, 1, k1, k1},
                                      std::sqrt(2.0 / (k1 * k1)));
    conv1_b_ = Tensor<T>({f1});
    conv2_w_ = detail::normal_init<T>(rng, {f2, f1, k2, k2},
                                      std::sqrt(2.0 / (f1 * k2 * k2)));
    conv2_b_ = Tensor<T>({f2});
    primary_w_ = detail::normal_init<T>(rng, {fp, f2, kp, kp},
                                        std::sqrt(1.0 / (f2 * kp * kp)));
    primary_b_ = Tensor<T>({fp});
    transform_w_ = detail::normal_init<T>(
        rng,
        {cfg_.primary_types, cfg_.primary_atoms, cfg_.digit_capsules(),
         cfg_.pose_atoms},
        0.1);

    const int caps_in = cfg_.num_classes * (cfg_.coord_atoms + cfg_.pose_atoms);
    const int seed = cfg_.decoder_seed;
    const int seed_ch = cfg_.decoder_seed_channels;
    fc_w_ = detail::normal_init<T>(rng, {caps_in, seed_ch * seed * seed},
                                   std::sqrt(1.0 / caps_in));
    fc_b_ = Tensor<T>({seed_ch * seed * seed});
    int ch = seed_ch;
    for (std::size_t i = 0; i < cfg_.decoder_kernels.size(); ++i) {
      const int k = cfg_.decoder_kernels[i];
      const int f = cfg_.decoder_channels[i];
      dec_w_.push_back(detail::normal_init<T>(rng, {ch, f, k, k},
                                              std::sqrt(1.0 / (ch * k * k))));
      dec_b_.push_back(Tensor<T>({f}));
      ch = f;
    }
    for (auto& [name, p] : named_params()) p.set_requires_grad(true);
  }

  const CapsNetConfig& config() const { return cfg_; }
  const CoordinateGrid& grid() const { return grid_; }
  Tensor<T> coords() const { return coords_; }

  std::vector<std::pair<std::string, Tensor<T>>> named_params() {
    std::vector<std::pair<std::string, Tensor<T>>> out{
        {"conv1.w", conv1_w_},       {"conv1.b", conv1_b_},
        {"conv2.w", conv2_w_},       {"conv2.b", conv2_b_},
        {"primary.w", primary_w_},   {"primary.b", primary_b_},
        {"transform.w", transform_w_}, {"decoder.fc.w", fc_w_},
        {"decoder.fc.b", fc_b_}};
    for (std::size_t i = 0; i < dec_w_.size(); ++i) {
      out.emplace_back("decoder." + std::to_string(i) + ".w", dec_w_[i]);
      out.emplace_back("decoder." + std::to_string(i) + ".b", dec_b_[i]);
    }
    return out;
  }

  /// labels: optional multi-hot [N, num_classes] over the real classes; when
  /// given, losses are computed and the decoder mask is the labels, else the
  /// mask is the argmax class. decode controls whether the decoder runs.
  Output forward(Tape<T>* tape, Tensor<T> images, const Tensor<T>* labels,
                 bool decode) {
    if (images.rank() != 4 || images.dim(1) != 1 ||
        images.dim(2) != cfg_.image_size || images.dim(3) != cfg_.image_size)
      throw DimensionError("expected images [N,1," +
                           std::to_string(cfg_.image_size) + "," +
                           std::to_string(cfg_.image_size) + "], got " +
                           shape_str(images.shape()));
    if (labels && (labels->rank() != 2 || labels->dim(0) != images.dim(0) ||
                   labels->dim(1) != cfg_.num_classes))
      throw DimensionError("expected labels [N," +
                           std::to_string(cfg_.num_classes) + "], got " +
                           shape_str(labels->shape()));
    Output out;
    auto h1 = ops::relu(tape, ops::add_channel_bias(
                                  tape, ops::conv2d(tape, images, conv1_w_,
                                                    cfg_.conv1.stride),
                                  conv1_b_));
    auto h2 = ops::relu(tape, ops::add_channel_bias(
                                  tape, ops::conv2d(tape, h1, conv2_w_,
                                                    cfg_.conv2.stride),
                                  conv2_b_));
    auto pmap = ops::add_channel_bias(
        tape, ops::conv2d(tape, h2, primary_w_, cfg_.primary_stride),
        primary_b_);
    auto u = ops::squash(
        tape,
        ops::primary_caps_gather(tape, pmap, cfg_.primary_types,
                                 cfg_.primary_atoms),
        -1);
    auto u_hat = ops::capsule_transform(tape, u, transform_w_,
                                        cfg_.primary_types);
    auto routed = route_with_coordinates(
        tape, u_hat, coords_, cfg_.routing_iterations,
        static_cast<T>(cfg_.bias_logit_real),
        static_cast<T>(cfg_.bias_logit_unknown));
    out.v = routed.v;
    out.o = routed.o;
    out.c = routed.c;
    out.norms = ops::norm_l2(tape, routed.v, -1);
    out.digit_caps = ops::concat(tape, {routed.o, routed.v}, -1);

    if (labels) {
      auto real_norms = ops::slice(tape, out.norms, 1, 0, cfg_.num_classes);
      out.margin = ops::margin_loss(tape, real_norms, *labels,
                                    static_cast<T>(cfg_.margin.m_plus),
                                    static_cast<T>(cfg_.margin.m_minus),
                                    static_cast<T>(cfg_.margin.lambda));
    }
    if (decode) {
      Tensor<T> mask = labels ? *labels : argmax_mask(out.norms);
      out.recon = this->decode(tape, out.digit_caps, mask);
      if (labels) {
        auto sse = ops::sse_mean(tape, out.recon, images);
        out.recon_loss =
            ops::mul_scalar(tape, sse, static_cast<T>(cfg_.recon_weight));
        out.total = ops::add(tape, out.margin, out.recon_loss);
      }
    } else if (labels) {
      out.total = out.margin;
    }
    return out;
  }

  /// Mask rows of the real-class capsules, flatten, and run the decoder.
  /// Exposed so coordinate atoms can be edited before reconstruction.
  Tensor<T> decode(Tape<T>* tape, Tensor<T> digit_caps, Tensor<T> mask) {
    const int n = digit_caps.dim(0);
    const int atoms = cfg_.coord_atoms + cfg_.pose_atoms;
    auto real = ops::slice(tape, digit_caps, 1, 0, cfg_.num_classes);
    auto masked = ops::mask_rows(tape, real, mask);
    auto flat = ops::reshape(tape, masked, {n, cfg_.num_classes * atoms});
    auto h = ops::relu(tape, ops::add_rowvec(tape, ops::matmul(tape, flat, fc_w_),
                                             fc_b_));
    auto x = ops::reshape(
        tape, h, {n, cfg_.decoder_seed_channels, cfg_.decoder_seed,
                  cfg_.decoder_seed});
    for (std::size_t i = 0; i < dec_w_.size(); ++i) {
      x = ops::add_channel_bias(
          tape, ops::conv_transpose2d(tape, x, dec_w_[i], cfg_.decoder_strides[i]),
          dec_b_[i]);
      x = (i + 1 == dec_w_.size()) ? ops::sigmoid(tape, x) : ops::relu(tape, x);
    }
    return x;
  }

  /// One-hot mask over the real classes from the highest capsule norm.
  Tensor<T> argmax_mask(const Tensor<T>& norms) const {
    const int n = norms.dim(0);
    Tensor<T> mask({n, cfg_.num_classes});
    for (int i = 0; i < n; ++i) {
      int best = 0;
      for (int k = 1; k < cfg_.num_classes; ++k)
        if (norms.at({i, k}) > norms.at({i, best})) best = k;
      mask.at({i, best}) = T(1);
    }
    return mask;
  }

 private:
  CapsNetConfig cfg_;
  CoordinateGrid grid_;
  Tensor<T> coords_;
  Tensor<T> conv1_w_, conv1_b_, conv2_w_, conv2_b_;
  Tensor<T> primary_w_, primary_b_;
  Tensor<T> transform_w_;
  Tensor<T> fc_w_, fc_b_;
  std::vector<Tensor<T>> dec_w_, dec_b_;
};

}  // namespace capsloc
