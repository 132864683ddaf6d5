#pragma once

#include <string>
#include <vector>

#include "mstgcn/tensor.hpp"

namespace mstgcn {

enum class OptimizerKind { Sgd, Adam };

// Standard SGD / Adam over a fixed parameter list. Parameters with no
// populated gradient are left untouched.
class Optimizer {
 public:
  Optimizer(std::vector<Tensor> params, OptimizerKind kind, double lr);

  // Applies one update from the gradients currently on the parameters.
  // Throws NumericError on non-finite gradients.
  void step();

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  std::vector<Tensor> params_;
  OptimizerKind kind_;
  double lr_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace mstgcn
