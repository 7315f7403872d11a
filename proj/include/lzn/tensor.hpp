#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lzn {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t numel_of(const Shape& shape);

/// Raised when operand shapes do not conform. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for inputs outside an operation's mathematical domain (t >= 1, empty sets, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a non-finite value shows up where a finite one is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};

/// Dense row-major f64 array. Copies share storage; values are treated as
/// immutable once an op has consumed them, only `grad` accumulates.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);
  static Tensor identity(std::size_t n);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  /// Direct write access. Only for leaves owned by an optimizer or loader.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](std::size_t flat) const { return impl_->data[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() const;
  void zero_grad() const { impl_->grad.clear(); }
  /// Adds `g` into the gradient buffer, allocating it on first use.
  void accumulate_grad(std::span<const double> g) const;

  /// Fresh leaf holding a copy of the values, cut from any tape history.
  Tensor detach(bool requires_grad = false) const;
  Tensor clone() const { return detach(requires_grad()); }

  const TensorImpl* impl() const { return impl_.get(); }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Wengert list of recorded primitives. Ops append to the tape that is active
/// on the calling thread; with no active tape nothing is recorded and results
/// are constants.
class Tape {
 public:
  struct Record {
    Tensor output;
    std::function<void()> backward;
    std::size_t segment = 0;
    std::size_t saved_values = 0;  // extra doubles captured besides the output
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Tensor output, std::function<void()> backward, std::size_t saved_values = 0);

  /// Seeds d(loss)/d(loss) = 1 and replays the records in reverse order.
  void backward(const Tensor& loss);
  /// Vector-Jacobian product: seeds `output` with `seed` and replays.
  void backward(const Tensor& output, std::span<const double> seed);

  void clear();
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Starts a new segment; returns its id. Records carry the id of the
  /// segment that was open when they were made.
  std::size_t mark_segment() { return ++segment_; }
  std::size_t current_segment() const { return segment_; }
  std::size_t records_in_segment(std::size_t segment) const;

  /// Number of doubles currently held by records (outputs plus saved extras).
  std::size_t recorded_values() const { return recorded_values_; }
  std::size_t peak_recorded_values() const { return peak_recorded_values_; }

 private:
  void replay();

  std::vector<Record> records_;
  std::size_t segment_ = 0;
  std::size_t recorded_values_ = 0;
  std::size_t peak_recorded_values_ = 0;
};

/// The tape ops record onto for the current thread, or nullptr.
Tape* active_tape();

/// Makes `tape` active for the lifetime of the guard; restores the previous one.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording for the lifetime of the guard.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace lzn
