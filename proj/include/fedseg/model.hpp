#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fedseg/grid.hpp"
#include "fedseg/params.hpp"
#include "fedseg/phantom.hpp"
#include "fedseg/rng.hpp"

namespace fedseg {

struct EmptyBatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvSpec {
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
};

// Small fully-convolutional segmentation model: same-padded convolutions
// with tanh between layers and a sigmoid on the final single-channel
// logits. The default stack is 3x3 (2->8), 3x3 (8->8), 1x1 (8->1).
struct ModelConfig {
  std::vector<ConvSpec> layers{{2, 8, 3}, {8, 8, 3}, {8, 1, 1}};
  double dice_weight = 0.5;  // lambda mixing BCE and soft-Dice
  double threshold = 0.5;

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("model has no layers");
    if (layers.front().in_ch != 2)
      throw std::invalid_argument("first layer must take the 2 study channels");
    if (layers.back().out_ch != 1)
      throw std::invalid_argument("last layer must emit 1 channel");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.in_ch <= 0 || l.out_ch <= 0 || l.kernel <= 0 || l.kernel % 2 == 0)
        throw std::invalid_argument("conv layers need positive channels and odd kernels");
      if (i > 0 && layers[i - 1].out_ch != l.in_ch)
        throw std::invalid_argument("channel chain mismatch between conv layers");
    }
    if (!(dice_weight >= 0.0 && dice_weight <= 1.0))
      throw std::invalid_argument("dice_weight must lie in [0,1]");
    if (!(threshold > 0.0 && threshold < 1.0))
      throw std::invalid_argument("threshold must lie in (0,1)");
  }
};

// ADC values arrive in 1e-6 mm^2/s units (hundreds); this scale puts the
// channel on the same order as the normalized DWI channel.
inline constexpr double kAdcInputScale = 1e-3;

inline std::vector<TensorShape> layout_for(const ModelConfig& config) {
  config.validate();
  std::vector<TensorShape> layout;
  for (const auto& l : config.layers) {
    layout.push_back({{static_cast<std::uint32_t>(l.out_ch),
                       static_cast<std::uint32_t>(l.in_ch),
                       static_cast<std::uint32_t>(l.kernel),
                       static_cast<std::uint32_t>(l.kernel)}});
    layout.push_back({{static_cast<std::uint32_t>(l.out_ch)}});
  }
  return layout;
}

inline std::size_t param_count(const ModelConfig& config) {
  return layout_count(layout_for(config));
}

// Seeded fan-in scaled uniform init; weights and biases in (-1/sqrt(fan_in),
// 1/sqrt(fan_in)).
inline ParameterSet init_params(const ModelConfig& config, std::uint64_t seed) {
  ParameterSet p = ParameterSet::zeros(layout_for(config));
  Rng rng(seed);
  std::size_t off = 0;
  for (const auto& l : config.layers) {
    const double bound =
        1.0 / std::sqrt(static_cast<double>(l.in_ch) * l.kernel * l.kernel);
    const std::size_t n_w = static_cast<std::size_t>(l.out_ch) * l.in_ch *
                            l.kernel * l.kernel;
    for (std::size_t i = 0; i < n_w + static_cast<std::size_t>(l.out_ch); ++i)
      p.values[off + i] = rng.uniform(-bound, bound);
    off += n_w + static_cast<std::size_t>(l.out_ch);
  }
  return p;
}

struct Prediction {
  Image probabilities;  // strictly inside (0,1), same dims as the study
};

// voxel = 1 iff probability strictly exceeds the threshold
inline Mask predict_mask(const Prediction& pred, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("threshold must lie in (0,1)");
  Mask m(pred.probabilities.rows, pred.probabilities.cols, 0);
  for (std::size_t i = 0; i < m.data.size(); ++i)
    m.data[i] = pred.probabilities.data[i] > threshold ? 1 : 0;
  return m;
}

namespace detail {

struct Tensor3 {
  int ch = 0, rows = 0, cols = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(int c_, int r_, int co_)
      : ch(c_), rows(r_), cols(co_),
        v(static_cast<std::size_t>(c_) * r_ * co_, 0.0) {}

  double& at(int c, int r, int co) {
    return v[(static_cast<std::size_t>(c) * rows + r) * cols + co];
  }
  double at(int c, int r, int co) const {
    return v[(static_cast<std::size_t>(c) * rows + r) * cols + co];
  }
};

inline Tensor3 input_from_study(const PhantomStudy& study) {
  Tensor3 in(2, study.dwi.rows, study.dwi.cols);
  for (int r = 0; r < in.rows; ++r) {
    for (int c = 0; c < in.cols; ++c) {
      in.at(0, r, c) = study.dwi(r, c);
      in.at(1, r, c) = study.adc(r, c) * kAdcInputScale;
    }
  }
  return in;
}

inline void conv_same(const Tensor3& in, const double* w, const double* b,
                      const ConvSpec& spec, Tensor3& out) {
  const int k = spec.kernel, pad = k / 2;
  const int rows = in.rows, cols = in.cols;
  out = Tensor3(spec.out_ch, rows, cols);
  for (int oc = 0; oc < spec.out_ch; ++oc) {
    for (int y = 0; y < rows; ++y) {
      for (int x = 0; x < cols; ++x) {
        double acc = b[oc];
        for (int ic = 0; ic < spec.in_ch; ++ic) {
          const double* wk = w + ((static_cast<std::size_t>(oc) * spec.in_ch + ic) * k) * k;
          for (int ky = 0; ky < k; ++ky) {
            const int yy = y + ky - pad;
            if (yy < 0 || yy >= rows) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int xx = x + kx - pad;
              if (xx < 0 || xx >= cols) continue;
              acc += wk[ky * k + kx] * in.at(ic, yy, xx);
            }
          }
        }
        out.at(oc, y, x) = acc;
      }
    }
  }
}

// Gradients of a same-padded convolution. g_in may be null for the first layer.
inline void conv_same_backward(const Tensor3& in, const double* w,
                               const ConvSpec& spec, const Tensor3& g_out,
                               Tensor3* g_in, double* g_w, double* g_b) {
  const int k = spec.kernel, pad = k / 2;
  const int rows = in.rows, cols = in.cols;
  if (g_in != nullptr) *g_in = Tensor3(spec.in_ch, rows, cols);
  for (int oc = 0; oc < spec.out_ch; ++oc) {
    for (int y = 0; y < rows; ++y) {
      for (int x = 0; x < cols; ++x) {
        const double g = g_out.at(oc, y, x);
        if (g == 0.0) continue;
        g_b[oc] += g;
        for (int ic = 0; ic < spec.in_ch; ++ic) {
          double* gw = g_w + ((static_cast<std::size_t>(oc) * spec.in_ch + ic) * k) * k;
          const double* wk = w + ((static_cast<std::size_t>(oc) * spec.in_ch + ic) * k) * k;
          for (int ky = 0; ky < k; ++ky) {
            const int yy = y + ky - pad;
            if (yy < 0 || yy >= rows) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int xx = x + kx - pad;
              if (xx < 0 || xx >= cols) continue;
              gw[ky * k + kx] += g * in.at(ic, yy, xx);
              if (g_in != nullptr) g_in->at(ic, yy, xx) += g * wk[ky * k + kx];
            }
          }
        }
      }
    }
  }
}

struct LayerOffsets {
  std::size_t w_off = 0, b_off = 0;
};

inline std::vector<LayerOffsets> layer_offsets(const ModelConfig& config) {
  std::vector<LayerOffsets> offs(config.layers.size());
  std::size_t off = 0;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    offs[i].w_off = off;
    off += static_cast<std::size_t>(l.out_ch) * l.in_ch * l.kernel * l.kernel;
    offs[i].b_off = off;
    off += static_cast<std::size_t>(l.out_ch);
  }
  return offs;
}

struct ForwardCache {
  std::vector<Tensor3> acts;  // acts[0] = input, acts[i] = tanh output of layer i
  Tensor3 logits;             // last layer pre-sigmoid
};

inline void run_forward(const ParameterSet& params, const ModelConfig& config,
                        Tensor3 input, ForwardCache& cache) {
  const auto offs = layer_offsets(config);
  cache.acts.clear();
  cache.acts.push_back(std::move(input));
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    Tensor3 z;
    conv_same(cache.acts.back(), params.values.data() + offs[i].w_off,
              params.values.data() + offs[i].b_off, config.layers[i], z);
    if (i + 1 == config.layers.size()) {
      cache.logits = std::move(z);
    } else {
      for (auto& v : z.v) v = std::tanh(v);
      cache.acts.push_back(std::move(z));
    }
  }
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

inline void require_layout(const ParameterSet& params, const ModelConfig& config) {
  if (params.layout != layout_for(config))
    throw LayoutMismatchError("parameter layout does not match model config");
}

// Per-voxel lesion probability for one study; a pure function of
// (params, study). Logits are clamped to +-30 so probabilities stay
// strictly inside (0,1) in double precision.
inline Prediction forward(const ParameterSet& params, const PhantomStudy& study,
                          const ModelConfig& config) {
  require_layout(params, config);
  detail::ForwardCache cache;
  detail::run_forward(params, config, detail::input_from_study(study), cache);
  Prediction pred;
  pred.probabilities = Image(study.dwi.rows, study.dwi.cols, 0.0);
  for (std::size_t i = 0; i < pred.probabilities.data.size(); ++i) {
    double z = cache.logits.v[i];
    z = std::min(30.0, std::max(-30.0, z));
    pred.probabilities.data[i] = detail::sigmoid(z);
  }
  return pred;
}

// Mean binary cross-entropy of logits against a binary mask, computed in
// the overflow-safe max(z,0) - z*y + log1p(exp(-|z|)) form.
inline double bce_mean_from_logits(const std::vector<double>& logits, const Mask& gt) {
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double y = gt.data[i] ? 1.0 : 0.0;
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  return acc / static_cast<double>(logits.size());
}

// Soft Dice overlap with +1 smoothing in numerator and denominator.
inline double soft_dice_score(const std::vector<double>& probs, const Mask& gt) {
  double inter = 0.0, psum = 0.0, ysum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double y = gt.data[i] ? 1.0 : 0.0;
    inter += probs[i] * y;
    psum += probs[i];
    ysum += y;
  }
  return (2.0 * inter + 1.0) / (psum + ysum + 1.0);
}

// Compound loss (1-lambda)*BCE + lambda*(1 - soft Dice), averaged over the
// batch, with its analytic gradient in the parameter layout.
inline std::pair<double, ParameterSet> loss_and_grad(
    const ParameterSet& params, const std::vector<const PhantomStudy*>& batch,
    const ModelConfig& config) {
  require_layout(params, config);
  if (batch.empty()) throw EmptyBatchError("loss_and_grad: empty batch");

  const auto offs = detail::layer_offsets(config);
  const double lambda = config.dice_weight;
  ParameterSet grad = ParameterSet::zeros(params.layout);
  double total_loss = 0.0;

  for (const auto* study_ptr : batch) {
    const auto& study = *study_ptr;
    detail::ForwardCache cache;
    detail::run_forward(params, config, detail::input_from_study(study), cache);
    const auto& gt = study.gt_mask;
    const std::size_t n_vox = cache.logits.v.size();

    std::vector<double> probs(n_vox);
    for (std::size_t i = 0; i < n_vox; ++i) probs[i] = detail::sigmoid(cache.logits.v[i]);

    const double bce = bce_mean_from_logits(cache.logits.v, gt);
    const double sdice = soft_dice_score(probs, gt);
    total_loss += (1.0 - lambda) * bce + lambda * (1.0 - sdice);

    // d(loss)/d(logit): BCE gives (p-y)/V; the Dice part goes through
    // p(1-p) with S = (2*inter+1)/(psum+ysum+1).
    double inter = 0.0, psum = 0.0, ysum = 0.0;
    for (std::size_t i = 0; i < n_vox; ++i) {
      const double y = gt.data[i] ? 1.0 : 0.0;
      inter += probs[i] * y;
      psum += probs[i];
      ysum += y;
    }
    const double numer = 2.0 * inter + 1.0;
    const double denom = psum + ysum + 1.0;
    detail::Tensor3 g_z(1, cache.logits.rows, cache.logits.cols);
    for (std::size_t i = 0; i < n_vox; ++i) {
      const double p = probs[i];
      const double y = gt.data[i] ? 1.0 : 0.0;
      const double d_bce = (p - y) / static_cast<double>(n_vox);
      const double d_dice = (numer - 2.0 * y * denom) / (denom * denom) * p * (1.0 - p);
      g_z.v[i] = (1.0 - lambda) * d_bce + lambda * d_dice;
    }

    // backprop through the conv stack
    detail::Tensor3 g_out = std::move(g_z);
    for (std::size_t li = config.layers.size(); li-- > 0;) {
      detail::Tensor3 g_in;
      const bool need_input_grad = li > 0;
      detail::conv_same_backward(
          cache.acts[li], params.values.data() + offs[li].w_off, config.layers[li],
          g_out, need_input_grad ? &g_in : nullptr,
          grad.values.data() + offs[li].w_off, grad.values.data() + offs[li].b_off);
      if (need_input_grad) {
        // through the tanh of the previous layer: acts[li] = tanh(z)
        for (std::size_t i = 0; i < g_in.v.size(); ++i) {
          const double a = cache.acts[li].v[i];
          g_in.v[i] *= 1.0 - a * a;
        }
        g_out = std::move(g_in);
      }
    }
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (auto& g : grad.values) g *= inv_b;
  return {total_loss * inv_b, grad};
}

inline std::pair<double, ParameterSet> loss_and_grad(
    const ParameterSet& params, const std::vector<PhantomStudy>& batch,
    const ModelConfig& config) {
  std::vector<const PhantomStudy*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return loss_and_grad(params, ptrs, config);
}

}  // namespace fedseg
