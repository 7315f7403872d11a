#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lzn/tensor.hpp"

// Differentiable primitives. Shapes are explicit: the only implicit broadcast
// is tensor-with-scalar; row/column broadcasts have their own named ops.
namespace lzn::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);

/// (m x k) * (k x n)
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);

Tensor sum(const Tensor& a);
/// Reduces a matrix along `axis`: axis 0 gives one value per column, 1 per row.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor squared_norm(const Tensor& a);
/// Max-shifted log-sum-exp. Vector input (axis 0) gives a scalar; matrix input
/// reduces along `axis`. Entries equal to -inf contribute nothing.
Tensor logsumexp(const Tensor& a, std::size_t axis);
/// Row-wise x - logsumexp(x), evaluated as (x - max) - log sum exp(x - max).
Tensor log_softmax_rows(const Tensor& a);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);

/// out[i][j] = m[i][j] + v[j]
Tensor add_rowvec(const Tensor& m, const Tensor& v);
/// out[i][j] = m[i][j] + v[i]
Tensor add_colvec(const Tensor& m, const Tensor& v);
/// out[i][j] = m[i][j] * v[i]
Tensor mul_colvec(const Tensor& m, const Tensor& v);

/// out[i][j] = ||x_i - y_j||^2 for rows of x (m x q) and y (n x q).
Tensor pairwise_sqdist(const Tensor& x, const Tensor& y);
/// out[i] = m[i][index[i]]
Tensor gather(const Tensor& m, std::span<const std::size_t> index);
/// Row-wise max of a matrix. The subgradient goes to a single entry per row;
/// ties resolve to the highest column index.
Tensor max_cols(const Tensor& m);

/// Runs `fn` without recording its internals. During backward the inputs are
/// re-materialised as fresh leaves, `fn` is replayed on a private tape and the
/// resulting vector-Jacobian product is accumulated into the inputs. Only the
/// output is held on the outer tape.
Tensor checkpoint(const std::function<Tensor(std::span<const Tensor>)>& fn, std::vector<Tensor> inputs);

}  // namespace lzn::ops
