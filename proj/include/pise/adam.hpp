/*
 * Copyright 2026 PISE Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cmath>
#include <vector>

#include "pise/nn.hpp"

namespace pise {

/// Adam with bias correction. Moment buffers are laid out to match the
/// parameter registry handed to the constructor; the registry's tensor
/// shapes must not change afterwards.
template <class S>
class Adam {
 public:
  explicit Adam(const std::vector<nn::ParamRef<S>>& params, double lr = 1e-3,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    check(lr > 0.0, "learning rate must be positive");
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.emplace_back(p.value->size(), 0.0);
      v_.emplace_back(p.value->size(), 0.0);
    }
  }

  double learning_rate() const { return lr_; }
  long step_count() const { return t_; }

  /// Adjusts the step size without touching the moment buffers; used by
  /// schedules that decay the rate across epochs.
  void set_learning_rate(double lr) {
    check(lr > 0.0, "learning rate must be positive");
    lr_ = lr;
  }

  /// One update from the gradients currently held in the registry.
  /// Gradients are left untouched; callers zero them between batches.
  void step(std::vector<nn::ParamRef<S>>& params) {
    check(params.size() == m_.size(), "optimizer/registry size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, double(t_));
    const double c2 = 1.0 - std::pow(beta2_, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<S>& value = *params[i].value;
      const Tensor<S>& grad = *params[i].grad;
      check(value.size() == m_[i].size(), "parameter shape changed");
      for (std::size_t j = 0; j < value.size(); ++j) {
        const double g = static_cast<double>(grad[j]);
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
        const double mhat = m_[i][j] / c1;
        const double vhat = v_[i][j] / c2;
        value[j] = static_cast<S>(static_cast<double>(value[j]) -
                                  lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace pise
