#include "lzn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lzn::ops {
namespace {

// Row-major kernels with a fixed accumulation order per output element, so
// results do not depend on buffer alignment or vector width.

// c (m x n) += a (m x k) * b (k x n)
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c (k x n) += a^T * g with a (m x k), g (m x n)
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * gi[j];
    }
  }
}

std::vector<double> transposed(const double* a, std::size_t m, std::size_t n) {
  std::vector<double> t(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  }
  return t;
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor result(const Shape& shape, std::vector<double> values, bool track) {
  return Tensor(shape, std::move(values), track);
}

void push(const Tensor& out, std::function<void()> backward, std::size_t saved = 0) {
  active_tape()->record(out, std::move(backward), saved);
}

void accumulate(const Tensor& t, std::span<const double> g) {
  if (t.requires_grad()) t.accumulate_grad(g);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(a.shape()));
}

void require_vector(const char* op, const Tensor& a, std::size_t n) {
  if (a.rank() != 1 || a.numel() != n) {
    throw ShapeError(std::string(op) + ": expected vector of shape (" + std::to_string(n) + "), got " +
                     to_string(a.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto in = a.data();
  std::vector<double> v(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) v[i] = fwd(in[i]);
  const bool track = tracking({&a});
  Tensor out = result(a.shape(), std::move(v), track);
  if (track) {
    push(out, [a, out, deriv]() mutable {
      const auto x = a.data();
      const auto y = out.data();
      const auto g = out.grad();
      std::vector<double> ga(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] = g[i] * deriv(x[i], y[i]);
      a.accumulate_grad(ga);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = x[i] + y[i];
  const bool track = tracking({&a, &b});
  Tensor out = result(a.shape(), std::move(v), track);
  if (track) {
    push(out, [a, b, out]() mutable {
      accumulate(a, out.grad());
      accumulate(b, out.grad());
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = x[i] - y[i];
  const bool track = tracking({&a, &b});
  Tensor out = result(a.shape(), std::move(v), track);
  if (track) {
    push(out, [a, b, out]() mutable {
      accumulate(a, out.grad());
      if (b.requires_grad()) {
        std::vector<double> gb(out.grad().begin(), out.grad().end());
        for (auto& g : gb) g = -g;
        b.accumulate_grad(gb);
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = x[i] * y[i];
  const bool track = tracking({&a, &b});
  Tensor out = result(a.shape(), std::move(v), track);
  if (track) {
    push(out, [a, b, out]() mutable {
      const auto g = out.grad();
      if (a.requires_grad()) {
        std::vector<double> ga(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * b[i];
        a.accumulate_grad(ga);
      }
      if (b.requires_grad()) {
        std::vector<double> gb(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * a[i];
        b.accumulate_grad(gb);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> v(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), v.data(), m, k, n);
  const bool track = tracking({&a, &b});
  Tensor out = result({m, n}, std::move(v), track);
  if (track) {
    push(out, [a, b, out, m, k, n]() mutable {
      const double* g = out.grad().data();
      if (a.requires_grad()) {
        std::vector<double> ga(m * k, 0.0);
        const std::vector<double> bt = transposed(b.data().data(), k, n);
        gemm_nn(g, bt.data(), ga.data(), m, n, k);
        a.accumulate_grad(ga);
      }
      if (b.requires_grad()) {
        std::vector<double> gb(k * n, 0.0);
        gemm_tn(a.data().data(), g, gb.data(), m, k, n);
        b.accumulate_grad(gb);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> v = transposed(a.data().data(), m, n);
  const bool track = tracking({&a});
  Tensor out = result({n, m}, std::move(v), track);
  if (track) {
    push(out, [a, out, m, n]() mutable {
      a.accumulate_grad(transposed(out.grad().data(), n, m));
    });
  }
  return out;
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  const bool track = tracking({&a});
  Tensor out = result({}, {s}, track);
  if (track) {
    push(out, [a, out]() mutable {
      std::vector<double> ga(a.numel(), out.grad()[0]);
      a.accumulate_grad(ga);
    });
  }
  return out;
}

Tensor sum(const Tensor& a, std::size_t axis) {
  require_matrix("sum", a);
  if (axis > 1) throw ShapeError("sum: axis must be 0 or 1 for shape " + to_string(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  const auto x = a.data();
  std::vector<double> v(axis == 0 ? n : m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) v[axis == 0 ? j : i] += x[i * n + j];
  }
  const bool track = tracking({&a});
  const Shape shape{v.size()};
  Tensor out = result(shape, std::move(v), track);
  if (track) {
    push(out, [a, out, m, n, axis]() mutable {
      const auto g = out.grad();
      std::vector<double> ga(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] = g[axis == 0 ? j : i];
      }
      a.accumulate_grad(ga);
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw DomainError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor squared_norm(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x * x;
  const bool track = tracking({&a});
  Tensor out = result({}, {s}, track);
  if (track) {
    push(out, [a, out]() mutable {
      const double g = out.grad()[0];
      const auto x = a.data();
      std::vector<double> ga(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] = 2.0 * g * x[i];
      a.accumulate_grad(ga);
    });
  }
  return out;
}

namespace {

// Log-sum-exp over `count` entries spaced `stride` apart starting at `base`.
double lse_strided(const double* base, std::size_t count, std::size_t stride) {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < count; ++j) hi = std::max(hi, base[j * stride]);
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  double s = 0.0;
  for (std::size_t j = 0; j < count; ++j) s += std::exp(base[j * stride] - hi);
  return hi + std::log(s);
}

}  // namespace

Tensor logsumexp(const Tensor& a, std::size_t axis) {
  if (a.rank() == 1) {
    if (axis != 0) throw ShapeError("logsumexp: axis must be 0 for shape " + to_string(a.shape()));
    if (a.numel() == 0) throw DomainError("logsumexp: empty input");
    const double value = lse_strided(a.data().data(), a.numel(), 1);
    const bool track = tracking({&a});
    Tensor out = result({}, {value}, track);
    if (track) {
      push(out, [a, out]() mutable {
        const double g = out.grad()[0];
        const double l = out.item();
        const auto x = a.data();
        std::vector<double> ga(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] = g * std::exp(x[i] - l);
        a.accumulate_grad(ga);
      });
    }
    return out;
  }
  require_matrix("logsumexp", a);
  if (axis > 1) throw ShapeError("logsumexp: axis must be 0 or 1 for shape " + to_string(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  if (m == 0 || n == 0) throw DomainError("logsumexp: empty input " + to_string(a.shape()));
  const double* x = a.data().data();
  std::vector<double> v(axis == 0 ? n : m);
  if (axis == 1) {
    for (std::size_t i = 0; i < m; ++i) v[i] = lse_strided(x + i * n, n, 1);
  } else {
    for (std::size_t j = 0; j < n; ++j) v[j] = lse_strided(x + j, m, n);
  }
  const bool track = tracking({&a});
  const Shape shape{v.size()};
  Tensor out = result(shape, std::move(v), track);
  if (track) {
    push(out, [a, out, m, n, axis]() mutable {
      const auto g = out.grad();
      const auto l = out.data();
      const auto xs = a.data();
      std::vector<double> ga(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t r = axis == 0 ? j : i;
          ga[i * n + j] = g[r] * std::exp(xs[i * n + j] - l[r]);
        }
      }
      a.accumulate_grad(ga);
    });
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& a) {
  require_matrix("log_softmax_rows", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (m == 0 || n == 0) throw DomainError("log_softmax_rows: empty input " + to_string(a.shape()));
  const double* x = a.data().data();
  std::vector<double> v(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x + i * n;
    const double hi = *std::max_element(row, row + n);
    if (hi == -std::numeric_limits<double>::infinity()) throw DomainError("log_softmax_rows: row of -inf");
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - hi);
    const double ls = std::log(s);
    for (std::size_t j = 0; j < n; ++j) v[i * n + j] = (row[j] - hi) - ls;
  }
  const bool track = tracking({&a});
  Tensor out = result(a.shape(), std::move(v), track);
  if (track) {
    push(out, [a, out, m, n]() mutable {
      const auto g = out.grad();
      const auto y = out.data();
      std::vector<double> ga(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        double gs = 0.0;
        for (std::size_t j = 0; j < n; ++j) gs += g[i * n + j];
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] = g[i * n + j] - std::exp(y[i * n + j]) * gs;
      }
      a.accumulate_grad(ga);
    });
  }
  return out;
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  std::vector<Tensor> v(parts);
  return concat(std::span<const Tensor>(v), axis);
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DomainError("concat: no inputs");
  const std::size_t rank = parts[0].rank();
  if (rank == 0 || rank > 2 || axis >= rank) {
    throw ShapeError("concat: unsupported axis " + std::to_string(axis) + " for shape " + to_string(parts[0].shape()));
  }
  // Treat vectors as 1 x n for bookkeeping.
  auto rows_of = [&](const Tensor& t) { return rank == 1 ? std::size_t{1} : t.dim(0); };
  auto cols_of = [&](const Tensor& t) { return rank == 1 ? t.dim(0) : t.dim(1); };
  std::size_t total_rows = 0, total_cols = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) {
      throw ShapeError("concat: shape mismatch " + to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
    }
    const bool along_cols = rank == 1 || axis == 1;
    if (along_cols) {
      if (rows_of(p) != rows_of(parts[0])) {
        throw ShapeError("concat: shape mismatch " + to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
      }
      total_cols += cols_of(p);
    } else {
      if (cols_of(p) != cols_of(parts[0])) {
        throw ShapeError("concat: shape mismatch " + to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
      }
      total_rows += rows_of(p);
    }
  }
  const bool along_cols = rank == 1 || axis == 1;
  const std::size_t out_rows = along_cols ? rows_of(parts[0]) : total_rows;
  const std::size_t out_cols = along_cols ? total_cols : cols_of(parts[0]);
  std::vector<double> v(out_rows * out_cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t pr = rows_of(p), pc = cols_of(p);
    const auto x = p.data();
    for (std::size_t i = 0; i < pr; ++i) {
      for (std::size_t j = 0; j < pc; ++j) {
        const std::size_t oi = along_cols ? i : offset + i;
        const std::size_t oj = along_cols ? offset + j : j;
        v[oi * out_cols + oj] = x[i * pc + j];
      }
    }
    offset += along_cols ? pc : pr;
  }
  bool track = false;
  if (active_tape()) {
    for (const auto& p : parts) track = track || p.requires_grad();
  }
  const Shape shape = rank == 1 ? Shape{out_cols} : Shape{out_rows, out_cols};
  Tensor out = result(shape, std::move(v), track);
  if (track) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    push(out, [inputs, out, along_cols, out_cols, rows_of, cols_of]() mutable {
      const auto g = out.grad();
      std::size_t off = 0;
      for (auto& p : inputs) {
        const std::size_t pr = rows_of(p), pc = cols_of(p);
        if (p.requires_grad()) {
          std::vector<double> gp(pr * pc);
          for (std::size_t i = 0; i < pr; ++i) {
            for (std::size_t j = 0; j < pc; ++j) {
              const std::size_t oi = along_cols ? i : off + i;
              const std::size_t oj = along_cols ? off + j : j;
              gp[i * pc + j] = g[oi * out_cols + oj];
            }
          }
          p.accumulate_grad(gp);
        }
        off += along_cols ? pc : pr;
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || a.rank() > 2 || axis >= a.rank() || begin > end || end > a.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " invalid for shape " + to_string(a.shape()));
  }
  const std::size_t m = a.rank() == 1 ? 1 : a.dim(0);
  const std::size_t n = a.rank() == 1 ? a.dim(0) : a.dim(1);
  const bool along_cols = a.rank() == 1 || axis == 1;
  const std::size_t om = along_cols ? m : end - begin;
  const std::size_t on = along_cols ? end - begin : n;
  const auto x = a.data();
  std::vector<double> v(om * on);
  for (std::size_t i = 0; i < om; ++i) {
    for (std::size_t j = 0; j < on; ++j) {
      const std::size_t si = along_cols ? i : begin + i;
      const std::size_t sj = along_cols ? begin + j : j;
      v[i * on + j] = x[si * n + sj];
    }
  }
  const bool track = tracking({&a});
  const Shape shape = a.rank() == 1 ? Shape{on} : Shape{om, on};
  Tensor out = result(shape, std::move(v), track);
  if (track) {
    push(out, [a, out, om, on, n, begin, along_cols]() mutable {
      const auto g = out.grad();
      std::vector<double> ga(a.numel(), 0.0);
      for (std::size_t i = 0; i < om; ++i) {
        for (std::size_t j = 0; j < on; ++j) {
          const std::size_t si = along_cols ? i : begin + i;
          const std::size_t sj = along_cols ? begin + j : j;
          ga[si * n + sj] = g[i * on + j];
        }
      }
      a.accumulate_grad(ga);
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw ShapeError("reshape: shape mismatch " + to_string(a.shape()) + " vs " + to_string(shape));
  }
  std::vector<double> v(a.data().begin(), a.data().end());
  const bool track = tracking({&a});
  Tensor out = result(shape, std::move(v), track);
  if (track) {
    push(out, [a, out]() mutable { a.accumulate_grad(out.grad()); });
  }
  return out;
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  require_matrix("add_rowvec", m);
  const std::size_t rows = m.rows(), cols = m.cols();
  require_vector("add_rowvec", v, cols);
  const auto x = m.data();
  const auto b = v.data();
  std::vector<double> out_v(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out_v[i * cols + j] = x[i * cols + j] + b[j];
  }
  const bool track = tracking({&m, &v});
  Tensor out = result(m.shape(), std::move(out_v), track);
  if (track) {
    push(out, [m, v, out, rows, cols]() mutable {
      accumulate(m, out.grad());
      if (v.requires_grad()) {
        const auto g = out.grad();
        std::vector<double> gv(cols, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) gv[j] += g[i * cols + j];
        }
        v.accumulate_grad(gv);
      }
    });
  }
  return out;
}

Tensor add_colvec(const Tensor& m, const Tensor& v) {
  require_matrix("add_colvec", m);
  const std::size_t rows = m.rows(), cols = m.cols();
  require_vector("add_colvec", v, rows);
  const auto x = m.data();
  const auto b = v.data();
  std::vector<double> out_v(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out_v[i * cols + j] = x[i * cols + j] + b[i];
  }
  const bool track = tracking({&m, &v});
  Tensor out = result(m.shape(), std::move(out_v), track);
  if (track) {
    push(out, [m, v, out, rows, cols]() mutable {
      accumulate(m, out.grad());
      if (v.requires_grad()) {
        const auto g = out.grad();
        std::vector<double> gv(rows, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) gv[i] += g[i * cols + j];
        }
        v.accumulate_grad(gv);
      }
    });
  }
  return out;
}

Tensor mul_colvec(const Tensor& m, const Tensor& v) {
  require_matrix("mul_colvec", m);
  const std::size_t rows = m.rows(), cols = m.cols();
  require_vector("mul_colvec", v, rows);
  const auto x = m.data();
  const auto s = v.data();
  std::vector<double> out_v(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out_v[i * cols + j] = x[i * cols + j] * s[i];
  }
  const bool track = tracking({&m, &v});
  Tensor out = result(m.shape(), std::move(out_v), track);
  if (track) {
    push(out, [m, v, out, rows, cols]() mutable {
      const auto g = out.grad();
      if (m.requires_grad()) {
        std::vector<double> gm(rows * cols);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) gm[i * cols + j] = g[i * cols + j] * v[i];
        }
        m.accumulate_grad(gm);
      }
      if (v.requires_grad()) {
        std::vector<double> gv(rows, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) gv[i] += g[i * cols + j] * m[i * cols + j];
        }
        v.accumulate_grad(gv);
      }
    });
  }
  return out;
}

Tensor pairwise_sqdist(const Tensor& x, const Tensor& y) {
  require_matrix("pairwise_sqdist", x);
  require_matrix("pairwise_sqdist", y);
  if (x.cols() != y.cols()) {
    throw ShapeError("pairwise_sqdist: shape mismatch " + to_string(x.shape()) + " vs " + to_string(y.shape()));
  }
  const std::size_t m = x.rows(), n = y.rows(), q = x.cols();
  const double* xs = x.data().data();
  const double* ys = y.data().data();
  std::vector<double> v(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < q; ++k) {
        const double d = xs[i * q + k] - ys[j * q + k];
        s += d * d;
      }
      v[i * n + j] = s;
    }
  }
  const bool track = tracking({&x, &y});
  Tensor out = result({m, n}, std::move(v), track);
  if (track) {
    push(out, [x, y, out, m, n, q]() mutable {
      const double* g = out.grad().data();
      const double* xs = x.data().data();
      const double* ys = y.data().data();
      // d/dx_i = 2 (x_i sum_j g_ij - sum_j g_ij y_j), symmetric for y.
      if (x.requires_grad()) {
        std::vector<double> gx(m * q, 0.0);
        gemm_nn(g, ys, gx.data(), m, n, q);
        for (std::size_t i = 0; i < m; ++i) {
          double rs = 0.0;
          for (std::size_t j = 0; j < n; ++j) rs += g[i * n + j];
          for (std::size_t k = 0; k < q; ++k) gx[i * q + k] = 2.0 * (xs[i * q + k] * rs - gx[i * q + k]);
        }
        x.accumulate_grad(gx);
      }
      if (y.requires_grad()) {
        std::vector<double> gy(n * q, 0.0);
        gemm_tn(g, xs, gy.data(), m, n, q);
        std::vector<double> cs(n, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) cs[j] += g[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t k = 0; k < q; ++k) gy[j * q + k] = 2.0 * (ys[j * q + k] * cs[j] - gy[j * q + k]);
        }
        y.accumulate_grad(gy);
      }
    });
  }
  return out;
}

Tensor gather(const Tensor& m, std::span<const std::size_t> index) {
  require_matrix("gather", m);
  const std::size_t rows = m.rows(), cols = m.cols();
  if (index.size() != rows) {
    throw ShapeError("gather: " + std::to_string(index.size()) + " indices for shape " + to_string(m.shape()));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> v(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    if (idx[i] >= cols) {
      throw ShapeError("gather: index " + std::to_string(idx[i]) + " out of range for shape " + to_string(m.shape()));
    }
    v[i] = m[i * cols + idx[i]];
  }
  const bool track = tracking({&m});
  Tensor out = result({rows}, std::move(v), track);
  if (track) {
    push(out, [m, out, idx, cols]() mutable {
      const auto g = out.grad();
      std::vector<double> gm(m.numel(), 0.0);
      for (std::size_t i = 0; i < idx.size(); ++i) gm[i * cols + idx[i]] = g[i];
      m.accumulate_grad(gm);
    }, idx.size());
  }
  return out;
}

Tensor max_cols(const Tensor& m) {
  require_matrix("max_cols", m);
  const std::size_t rows = m.rows(), cols = m.cols();
  if (cols == 0) throw DomainError("max_cols: no columns in " + to_string(m.shape()));
  std::vector<std::size_t> arg(rows, 0);
  std::vector<double> v(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < cols; ++j) {
      if (m[i * cols + j] >= m[i * cols + best]) best = j;
    }
    arg[i] = best;
    v[i] = m[i * cols + best];
  }
  const bool track = tracking({&m});
  Tensor out = result({rows}, std::move(v), track);
  if (track) {
    push(out, [m, out, arg, cols]() mutable {
      const auto g = out.grad();
      std::vector<double> gm(m.numel(), 0.0);
      for (std::size_t i = 0; i < arg.size(); ++i) gm[i * cols + arg[i]] = g[i];
      m.accumulate_grad(gm);
    }, arg.size());
  }
  return out;
}

Tensor checkpoint(const std::function<Tensor(std::span<const Tensor>)>& fn, std::vector<Tensor> inputs) {
  bool track = false;
  if (active_tape()) {
    for (const auto& t : inputs) track = track || t.requires_grad();
  }
  Tensor value;
  {
    NoGradScope no_grad;
    value = fn(inputs);
  }
  Tensor out = value.detach(track);
  if (track) {
    push(out, [fn, inputs, out]() mutable {
      std::vector<Tensor> leaves;
      leaves.reserve(inputs.size());
      for (const auto& t : inputs) leaves.push_back(t.detach(t.requires_grad()));
      Tape local;
      Tensor replayed;
      {
        TapeScope scope(local);
        replayed = fn(leaves);
      }
      if (!replayed.requires_grad() || local.empty()) return;
      local.backward(replayed, out.grad());
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].requires_grad() && leaves[i].has_grad()) inputs[i].accumulate_grad(leaves[i].grad());
      }
    });
  }
  return out;
}

}  // namespace lzn::ops
