#include "mstgcn/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace mstgcn {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t shape_product(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->values.assign(shape_product(shape), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.n_->values) v = value;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_product(shape) != values.size()) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.n_->values[i * n + i] = 1.0;
  return t;
}

Tensor Tensor::wrap(detail::NodePtr n) {
  Tensor t;
  t.n_ = std::move(n);
  return t;
}

double Tensor::value() const {
  if (size() != 1) {
    throw DimensionError("value() requires a scalar, got " +
                         shape_str(shape()));
  }
  return n_->values[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return n_->values.at(i * n_->shape.at(1) + j);
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return n_->values.at((i * n_->shape.at(1) + j) * n_->shape.at(2) + k);
}

double& Tensor::ref(std::size_t i, std::size_t j) {
  return n_->values.at(i * n_->shape.at(1) + j);
}

double& Tensor::ref(std::size_t i, std::size_t j, std::size_t k) {
  return n_->values.at((i * n_->shape.at(1) + j) * n_->shape.at(2) + k);
}

const std::vector<double>& Tensor::grad() const {
  if (!n_ || n_->grad.size() != n_->values.size()) {
    throw NumericError("gradient not populated; run Tape::backward first");
  }
  return n_->grad;
}

void Tensor::zero_grad() {
  if (n_ && !n_->grad.empty()) n_->grad.assign(n_->values.size(), 0.0);
}

Tensor Tensor::clone() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = n_->shape;
  n->values = n_->values;
  n->requires_grad = n_->requires_grad;
  return wrap(std::move(n));
}

bool Tensor::all_finite() const {
  for (double v : n_->values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tape::Scope::Scope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
Tape::Scope::~Scope() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

bool Tape::participates(const detail::NodePtr& n) const {
  return n->requires_grad || (n->tape == this && n->tape_epoch == epoch_);
}

bool Tape::participates(const Tensor& t) const {
  return t.defined() && participates(t.node());
}

void Tape::track(const detail::NodePtr& n) {
  if (seen_.insert(n.get()).second) tracked_.push_back(n);
}

void Tape::record(std::vector<detail::NodePtr> inputs, detail::NodePtr output,
                  std::function<void()> backward) {
  output->tape = this;
  output->tape_epoch = epoch_;
  for (const auto& in : inputs) track(in);
  track(output);
  records_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw DimensionError("backward requires a scalar loss, got " +
                         shape_str(loss.shape()));
  }
  if (!std::isfinite(loss.value())) {
    throw NumericError("backward on non-finite loss");
  }
  auto ln = loss.node();
  ln->ensure_grad();
  ln->grad[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (!it->output->grad.empty()) {
      it->backward();
    }
    // The output gradient is fully consumed once its record has run.
    if (!it->output->requires_grad && it->output.get() != ln.get()) {
      it->output->grad.clear();
      it->output->grad.shrink_to_fit();
    }
  }
}

void Tape::clear() {
  records_.clear();
  for (auto& n : tracked_) {
    if (!n->grad.empty()) n->grad.assign(n->values.size(), 0.0);
  }
  tracked_.clear();
  seen_.clear();
  ++epoch_;
}

}  // namespace mstgcn
