#pragma once

#include <cstddef>
#include <vector>

namespace mstgcn {

// Confusion matrix (rows = true class) and the derived scores.
struct Metrics {
  std::size_t classes = 0;
  std::vector<std::size_t> confusion;  // classes x classes
  double accuracy = 0.0;
  std::vector<double> f1;              // per class; 0 for absent classes
  double macro_f1 = 0.0;
  double kappa = 0.0;

  std::size_t total() const;
  std::size_t at(std::size_t true_c, std::size_t pred_c) const {
    return confusion[true_c * classes + pred_c];
  }

  static Metrics from_confusion(std::vector<std::size_t> confusion,
                                std::size_t classes);
};

}  // namespace mstgcn
