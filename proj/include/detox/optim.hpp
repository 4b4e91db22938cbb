#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace detox::optim {

// A named view of one parameter tensor and its gradient buffer.
struct ParamRef {
  std::string name;
  std::vector<double>* value = nullptr;
  std::vector<double>* grad = nullptr;
};

// AdamW with decoupled weight decay. Decay is applied to matrix-shaped
// tensors only (refs flagged decay=false are skipped: biases, layer norms,
// embeddings follow the usual exemption).
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW(std::vector<ParamRef> params, std::vector<bool> apply_decay,
        Options opt)
      : params_(std::move(params)),
        decay_(std::move(apply_decay)),
        opt_(opt) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].value->size(), 0.0);
      v_[i].assign(params_[i].value->size(), 0.0);
    }
  }

  // One update with the given learning rate (schedule lives at the caller).
  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
      auto& w = *params_[p].value;
      const auto& g = *params_[p].grad;
      auto& m = m_[p];
      auto& v = v_[p];
      const bool wd = decay_[p] && opt_.weight_decay != 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g[i];
        v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + opt_.eps);
        if (wd) w[i] -= lr * opt_.weight_decay * w[i];
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_)
      std::fill(p.grad->begin(), p.grad->end(), 0.0);
  }

  std::uint64_t steps_taken() const { return t_; }

 private:
  std::vector<ParamRef> params_;
  std::vector<bool> decay_;
  Options opt_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

// Piecewise-linear learning-rate schedule: 0 -> peak over the warmup span,
// then linearly down to exactly 0 at the final step. step is 1-based.
inline double scheduled_lr(double peak, std::uint64_t step,
                           std::uint64_t total_steps, double warmup_fraction) {
  if (total_steps == 0) return 0.0;
  if (step > total_steps) return 0.0;
  const auto warm =
      static_cast<std::uint64_t>(warmup_fraction * static_cast<double>(total_steps));
  if (warm > 0 && step <= warm) {
    return peak * static_cast<double>(step) / static_cast<double>(warm);
  }
  if (total_steps == warm) return peak;
  return peak * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warm);
}

}  // namespace detox::optim
