#include <cmath>

#include "mstgcn/ops.hpp"

namespace mstgcn {

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
  Tensor y = f();
  const double v = y.value();
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: function value is not finite");
  }
  return v;
}

double max_rel_err(const std::vector<double>& analytic, const Tensor& point,
                   const std::function<Tensor()>& eval, double h) {
  double worst = 0.0;
  double* x = const_cast<Tensor&>(point).data();
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = eval_scalar(eval);
    x[i] = keep - h;
    const double fm = eval_scalar(eval);
    x[i] = keep;
    const double numeric = (fp - fm) / (2.0 * h);
    const double err =
        std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& point, double h) {
  if (h <= 0) throw ParameterError("grad_check: h must be positive");
  Tensor x = point.clone();
  x.set_requires_grad(true);
  std::vector<double> analytic;
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = f(x);
    if (y.size() != 1) {
      throw DimensionError("grad_check: function must return a scalar");
    }
    if (!std::isfinite(y.value())) {
      throw NumericError("grad_check: function value is not finite");
    }
    tape.backward(y);
    analytic = x.grad();
  }
  x.set_requires_grad(false);
  return max_rel_err(analytic, x, [&]() { return f(x); }, h);
}

double grad_check_params(const std::function<Tensor()>& f,
                         const std::vector<Tensor>& params, double h) {
  if (h <= 0) throw ParameterError("grad_check: h must be positive");
  double worst = 0.0;
  std::vector<std::vector<double>> analytic(params.size());
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = f();
    if (y.size() != 1) {
      throw DimensionError("grad_check: function must return a scalar");
    }
    if (!std::isfinite(y.value())) {
      throw NumericError("grad_check: function value is not finite");
    }
    tape.backward(y);
    for (std::size_t p = 0; p < params.size(); ++p) {
      analytic[p] = params[p].has_grad()
                        ? params[p].grad()
                        : std::vector<double>(params[p].size(), 0.0);
    }
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    worst = std::max(worst, max_rel_err(analytic[p], params[p], f, h));
  }
  return worst;
}

}  // namespace mstgcn
