#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace mstgcn {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& m) : std::runtime_error(m) {}
};
struct ParameterError : std::runtime_error {
  explicit ParameterError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};
struct NormalizationError : std::runtime_error {
  explicit NormalizationError(const std::string& m) : std::runtime_error(m) {}
};
struct LabelError : std::runtime_error {
  explicit LabelError(const std::string& m) : std::runtime_error(m) {}
};
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& m) : std::runtime_error(m) {}
};

enum class Mode { Train, Eval };

class Tape;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until materialized by backward
  bool requires_grad = false;
  // Tape that produced this node, if any. Epoch guards against reuse
  // across Tape::clear().
  const Tape* tape = nullptr;
  std::uint64_t tape_epoch = 0;

  std::size_t size() const { return values.size(); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

// Dense row-major 64-bit tensor. Copies share the underlying node,
// matching tape semantics; clone() detaches.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor identity(std::size_t n);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  std::size_t rank() const { return n_->shape.size(); }
  std::size_t size() const { return n_->values.size(); }
  std::size_t dim(std::size_t axis) const { return n_->shape.at(axis); }

  double* data() { return n_->values.data(); }
  const double* data() const { return n_->values.data(); }
  const std::vector<double>& values() const { return n_->values; }

  double value() const;  // scalar tensors only
  double at(std::size_t i) const { return n_->values.at(i); }
  double at(std::size_t i, std::size_t j) const;
  double at(std::size_t i, std::size_t j, std::size_t k) const;
  double& ref(std::size_t i) { return n_->values.at(i); }
  double& ref(std::size_t i, std::size_t j);
  double& ref(std::size_t i, std::size_t j, std::size_t k);

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }

  bool has_grad() const { return n_ && !n_->grad.empty(); }
  const std::vector<double>& grad() const;
  double grad_at(std::size_t i) const { return grad().at(i); }
  void zero_grad();

  Tensor clone() const;  // deep copy, detached from any tape

  detail::NodePtr node() const { return n_; }
  static Tensor wrap(detail::NodePtr n);

  bool all_finite() const;

 private:
  detail::NodePtr n_;
};

// Wengert-list tape. One active tape per thread; ops record themselves
// when any input participates. Backward replays records in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // RAII activation scope; nesting restores the previous tape.
  class Scope {
   public:
    explicit Scope(Tape& t);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* active();

  void record(std::vector<detail::NodePtr> inputs, detail::NodePtr output,
              std::function<void()> backward);

  // Seeds d(loss)/d(loss)=1 and replays the list in reverse. Interior
  // gradients are released as soon as they are consumed; leaf gradients
  // (requires_grad inputs) survive until clear().
  void backward(const Tensor& loss);

  // Drops all records and zeroes the gradient of every touched tensor.
  void clear();

  std::size_t op_count() const { return records_.size(); }
  std::uint64_t epoch() const { return epoch_; }

  // True if t is a leaf with requires_grad or was produced on this tape.
  bool participates(const Tensor& t) const;
  bool participates(const detail::NodePtr& n) const;

 private:
  struct Record {
    std::vector<detail::NodePtr> inputs;
    detail::NodePtr output;
    std::function<void()> backward;
  };
  void track(const detail::NodePtr& n);

  std::vector<Record> records_;
  std::vector<detail::NodePtr> tracked_;
  std::unordered_set<detail::Node*> seen_;
  std::uint64_t epoch_ = 1;
};

}  // namespace mstgcn
