#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "igmn/autodiff.hpp"
#include "igmn/config.hpp"
#include "igmn/matrix.hpp"
#include "igmn/rng.hpp"

namespace igmn {

inline Matrix xavier_uniform(Rng& rng, int rows, int cols, double gain = 1.0) {
  Matrix m(rows, cols);
  const double a = gain * std::sqrt(6.0 / (rows + cols));
  for (double& x : m.d) x = rng.uniform(-a, a);
  return m;
}

struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
};

// Registers long-lived parameter matrices as tape leaves on first use, so a
// forward pass touches each parameter exactly once and gradients can be read
// back per parameter afterwards.
class ParamTape {
 public:
  explicit ParamTape(ad::Tape& tape) : tape_(&tape) {}

  ad::Var operator()(const Matrix& p) {
    auto [it, inserted] = vars_.try_emplace(&p, ad::Var{});
    if (inserted) it->second = tape_->input(p);
    return it->second;
  }

  // Zero matrix when the parameter never entered the forward pass.
  Matrix grad_of(const Matrix& p) const {
    auto it = vars_.find(&p);
    if (it == vars_.end()) return Matrix(p.rows, p.cols);
    return tape_->grad(it->second);
  }

  bool used(const Matrix& p) const { return vars_.count(&p) > 0; }

 private:
  ad::Tape* tape_;
  std::unordered_map<const Matrix*, ad::Var> vars_;
};

// SGD with momentum and decoupled-from-nothing classic weight decay:
// v <- mu * v - lr * (g + wd * p);  p <- p + v.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<ParamRef> params, OptimizerConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) velocity_.emplace_back(p.value->rows, p.value->cols);
  }

  void step(const ParamTape& grads, std::int64_t global_step) {
    const double lr = cfg_.lr_at(global_step);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Matrix& p = *params_[i].value;
      const Matrix g = grads.grad_of(p);
      Matrix& v = velocity_[i];
      for (int j = 0; j < p.size(); ++j) {
        v.d[j] = cfg_.momentum * v.d[j] - lr * (g.d[j] + cfg_.weight_decay * p.d[j]);
        p.d[j] += v.d[j];
      }
    }
  }

  const std::vector<ParamRef>& params() const { return params_; }
  std::vector<Matrix>& velocity() { return velocity_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  std::vector<ParamRef> params_;
  OptimizerConfig cfg_;
  std::vector<Matrix> velocity_;
};

}  // namespace igmn
