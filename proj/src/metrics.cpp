#include "mstgcn/metrics.hpp"

#include <string>

#include "mstgcn/diag.hpp"
#include "mstgcn/tensor.hpp"

namespace mstgcn {

std::size_t Metrics::total() const {
  std::size_t t = 0;
  for (std::size_t v : confusion) t += v;
  return t;
}

Metrics Metrics::from_confusion(std::vector<std::size_t> confusion,
                                std::size_t classes) {
  if (confusion.size() != classes * classes) {
    throw DimensionError("metrics: confusion size " +
                         std::to_string(confusion.size()) + " for " +
                         std::to_string(classes) + " classes");
  }
  Metrics m;
  m.classes = classes;
  m.confusion = std::move(confusion);

  const std::size_t n = m.total();
  if (n == 0) {
    diag::warn("metrics: empty confusion matrix");
    m.f1.assign(classes, 0.0);
    return m;
  }
  const double total = static_cast<double>(n);

  std::size_t trace = 0;
  std::vector<std::size_t> row_sum(classes, 0), col_sum(classes, 0);
  for (std::size_t i = 0; i < classes; ++i) {
    trace += m.at(i, i);
    for (std::size_t j = 0; j < classes; ++j) {
      row_sum[i] += m.at(i, j);
      col_sum[j] += m.at(i, j);
    }
  }
  m.accuracy = static_cast<double>(trace) / total;

  m.f1.assign(classes, 0.0);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double tp = static_cast<double>(m.at(c, c));
    const double denom =
        static_cast<double>(row_sum[c] + col_sum[c]);  // 2TP + FP + FN
    if (denom == 0.0) {
      diag::warn("metrics: class " + std::to_string(c) +
                 " absent from truth and predictions; F1 defined as 0");
      m.f1[c] = 0.0;
    } else {
      m.f1[c] = 2.0 * tp / denom;
    }
    f1_sum += m.f1[c];
  }
  m.macro_f1 = f1_sum / static_cast<double>(classes);

  // kappa = (p_o - p_e) / (1 - p_e), p_e from marginal products
  const double p_o = m.accuracy;
  double p_e = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    p_e += static_cast<double>(row_sum[c]) * static_cast<double>(col_sum[c]) /
           (total * total);
  }
  if (p_e >= 1.0) {
    diag::warn("metrics: degenerate kappa denominator (p_e = 1); kappa "
               "defined as 0");
    m.kappa = 0.0;
  } else {
    m.kappa = (p_o - p_e) / (1.0 - p_e);
  }
  return m;
}

}  // namespace mstgcn
