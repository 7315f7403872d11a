#include "lzn/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace lzn {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  if (numel_of(shape) != values.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " needs " +
                     std::to_string(numel_of(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return matrix(n, n, std::move(v));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("tensor: rows() needs a matrix, got " + to_string(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("tensor: cols() needs a matrix, got " + to_string(shape()));
  return impl_->shape[1];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("tensor: item() needs one element, got shape " + to_string(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const { return impl_->data[row * cols() + col]; }

std::span<double> Tensor::mutable_grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::accumulate_grad(std::span<const double> g) const {
  if (g.size() != impl_->data.size()) {
    throw ShapeError("tensor: gradient of size " + std::to_string(g.size()) + " for shape " +
                     to_string(shape()));
  }
  if (impl_->grad.empty()) {
    impl_->grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) impl_->grad[i] += g[i];
}

Tensor Tensor::detach(bool requires_grad) const {
  return Tensor(impl_->shape, impl_->data, requires_grad);
}

// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void Tape::record(Tensor output, std::function<void()> backward, std::size_t saved_values) {
  recorded_values_ += output.numel() + saved_values;
  peak_recorded_values_ = std::max(peak_recorded_values_, recorded_values_);
  records_.push_back(Record{std::move(output), std::move(backward), segment_, saved_values});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1 || loss.rank() != 0) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  const double one = 1.0;
  backward(loss, std::span<const double>(&one, 1));
}

void Tape::backward(const Tensor& output, std::span<const double> seed) {
  if (records_.empty()) throw DomainError("backward: tape is empty");
  Tensor out = output;
  out.accumulate_grad(seed);
  replay();
}

void Tape::replay() {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
}

void Tape::clear() {
  records_.clear();
  recorded_values_ = 0;
}

std::size_t Tape::records_in_segment(std::size_t segment) const {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [&](const Record& r) { return r.segment == segment; }));
}

}  // namespace lzn
