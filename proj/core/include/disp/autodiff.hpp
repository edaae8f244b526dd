#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "disp/random.hpp"
#include "disp/tensor.hpp"

namespace disp {

struct Var {
  std::uint32_t index = 0;
};

// Reverse-mode tape over whole matrices. Nodes are appended in evaluation
// order, so reverse creation order is a valid topological order for backward.
// A non-recording graph evaluates values only.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, Var self)>;

  explicit Graph(bool record = true) : record_(record) { nodes_.reserve(64); }

  bool recording() const noexcept { return record_; }

  Var constant(Matrix<T> value);
  // Gradients flow into p.grad on backward().
  Var param(Parameter<T>& p);
  // Read-only binding; the graph must not be recording.
  Var param(const Parameter<T>& p);

  // Appends an op result. `fn` runs on backward only when at least one of the
  // `inputs` requires a gradient.
  Var push(Matrix<T> value, std::initializer_list<Var> inputs, BackwardFn fn);

  const Matrix<T>& value(Var v) const noexcept {
    const Node& n = nodes_[v.index];
    return n.value_ref ? *n.value_ref : n.value;
  }
  bool requires_grad(Var v) const noexcept { return nodes_[v.index].requires_grad; }
  // Zero-initialized on first access.
  Matrix<T>& grad(Var v);

  // Seeds d(loss)/d(loss) = 1 for a 1 x 1 loss and propagates. Throws
  // NumericError on a non-finite loss.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    const Matrix<T>* value_ref = nullptr;
    Matrix<T> grad;
    Matrix<T>* grad_ref = nullptr;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  bool record_;
  std::vector<Node> nodes_;
};

namespace ops {

template <typename T> Var add(Graph<T>& g, Var a, Var b);
// x (n x c) plus a 1 x c row broadcast over rows.
template <typename T> Var add_row(Graph<T>& g, Var x, Var row);
template <typename T> Var scale(Graph<T>& g, Var x, T factor);
// a (n x m) * b (m x p).
template <typename T> Var matmul(Graph<T>& g, Var a, Var b);
// a (n x m) * b^T where b is p x m.
template <typename T> Var matmul_transposed(Graph<T>& g, Var a, Var b);
// Rows of `table` selected by `ids`.
template <typename T> Var gather_rows(Graph<T>& g, Var table, std::span<const int> ids);
// First `count` rows of x.
template <typename T> Var leading_rows(Graph<T>& g, Var x, std::size_t count);
template <typename T> Var select_row(Graph<T>& g, Var x, std::size_t row);
template <typename T> Var layer_norm(Graph<T>& g, Var x, Var gain, Var bias, T epsilon = T(1e-5));
// Exact erf form.
template <typename T> Var gelu(Graph<T>& g, Var x);
// Inverted dropout; identity when rate is 0.
template <typename T> Var dropout(Graph<T>& g, Var x, double rate, Rng& rng);
// Scaled dot-product attention over `heads` column blocks. key_padding[j] != 0
// excludes key j; a query with no visible key yields a zero row.
template <typename T>
Var multi_head_attention(Graph<T>& g, Var q, Var k, Var v, std::size_t heads,
                         std::span<const std::uint8_t> key_padding);
// 1 x c mean over rows whose padding flag is 0 (all rows when empty).
template <typename T> Var mean_rows(Graph<T>& g, Var x, std::span<const std::uint8_t> padding);
// sum_i weight_i * CE(softmax(logits_i), labels_i) / normalizer, as 1 x 1.
template <typename T>
Var softmax_cross_entropy(Graph<T>& g, Var logits, std::span<const int> labels,
                          std::span<const T> weights, T normalizer);
// sum of squared differences / (rows * cols), as 1 x 1.
template <typename T> Var mean_squared_error(Graph<T>& g, Var prediction, const Matrix<T>& target);

}  // namespace ops

// Row-wise softmax with excluded columns; rows without a visible column are
// all zero. Shared by the attention op and its tests.
template <typename T>
void masked_softmax_rows(Matrix<T>& scores, std::span<const std::uint8_t> column_padding);

template <typename T>
std::vector<T> softmax(std::span<const T> logits);

}  // namespace disp
