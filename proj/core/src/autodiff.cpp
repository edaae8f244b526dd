#include "disp/autodiff.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "disp/error.hpp"

namespace disp {

template <typename T>
Var Graph<T>::constant(Matrix<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::param(Parameter<T>& p) {
  Node n;
  n.value_ref = &p.value;
  if (record_) {
    if (!p.grad.same_shape(p.value)) p.zero_grad();
    n.grad_ref = &p.grad;
    n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::param(const Parameter<T>& p) {
  if (record_) throw std::logic_error("read-only parameter bound to a recording graph");
  Node n;
  n.value_ref = &p.value;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::push(Matrix<T> value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (Var in : inputs) {
      if (nodes_[in.index].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Matrix<T>& Graph<T>::grad(Var v) {
  Node& n = nodes_[v.index];
  if (n.grad_ref) {
    n.has_grad = true;
    return *n.grad_ref;
  }
  if (!n.has_grad) {
    const auto& val = n.value_ref ? *n.value_ref : n.value;
    n.grad = Matrix<T>(val.rows(), val.cols());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (!record_) throw std::logic_error("backward on a non-recording graph");
  const auto& lv = value(loss);
  if (lv.size() != 1) throw std::logic_error("backward requires a 1 x 1 loss");
  if (!std::isfinite(static_cast<double>(lv[0]))) throw NumericError("non-finite loss");
  if (!nodes_[loss.index].requires_grad) return;
  grad(loss)[0] += T(1);
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.has_grad) n.backward(*this, Var{static_cast<std::uint32_t>(i)});
  }
}

namespace {

template <typename T>
void accumulate(Matrix<T>& dst, const Matrix<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

// out += a * b with a n x m, b m x p.
template <typename T>
void gemm_acc(const T* a, const T* b, T* out, std::size_t n, std::size_t m, std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    T* orow = out + i * p;
    const T* arow = a + i * m;
    for (std::size_t k = 0; k < m; ++k) {
      const T aik = arow[k];
      if (aik == T(0)) continue;
      const T* brow = b + k * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
}

// out += a^T * b with a n x m, b n x p -> out m x p.
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* out, std::size_t n, std::size_t m, std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = a + i * m;
    const T* brow = b + i * p;
    for (std::size_t k = 0; k < m; ++k) {
      const T aik = arow[k];
      if (aik == T(0)) continue;
      T* orow = out + k * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& m) {
  Matrix<T> t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  }
  return t;
}

template <typename T>
void check_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

template <typename T>
void masked_softmax_rows(Matrix<T>& scores, std::span<const std::uint8_t> column_padding) {
  const std::size_t cols = scores.cols();
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    T* row = scores.row(r);
    T max_v = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      if (column_padding.empty() || !column_padding[c]) max_v = std::max(max_v, row[c]);
    }
    if (max_v == -std::numeric_limits<T>::infinity()) {
      std::fill(row, row + cols, T(0));
      continue;
    }
    T sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (column_padding.empty() || !column_padding[c]) {
        row[c] = std::exp(row[c] - max_v);
        sum += row[c];
      } else {
        row[c] = 0;
      }
    }
    const T inv = T(1) / sum;
    for (std::size_t c = 0; c < cols; ++c) row[c] *= inv;
  }
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  Matrix<T> m(1, logits.size());
  std::copy(logits.begin(), logits.end(), m.data());
  masked_softmax_rows<T>(m, {});
  return {m.data(), m.data() + m.size()};
}

namespace ops {

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  check_same_shape(av, bv, "add");
  Matrix<T> out = av;
  accumulate(out, bv);
  return g.push(std::move(out), {a, b}, [a, b](Graph<T>& gr, Var self) {
    const auto& go = gr.grad(self);
    if (gr.requires_grad(a)) accumulate(gr.grad(a), go);
    if (gr.requires_grad(b)) accumulate(gr.grad(b), go);
  });
}

template <typename T>
Var add_row(Graph<T>& g, Var x, Var row) {
  const auto& xv = g.value(x);
  const auto& rv = g.value(row);
  if (rv.rows() != 1 || rv.cols() != xv.cols()) throw std::invalid_argument("add_row: shape mismatch");
  Matrix<T> out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    T* o = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) o[c] += rv[c];
  }
  return g.push(std::move(out), {x, row}, [x, row](Graph<T>& gr, Var self) {
    const auto& go = gr.grad(self);
    if (gr.requires_grad(x)) accumulate(gr.grad(x), go);
    if (gr.requires_grad(row)) {
      auto& gb = gr.grad(row);
      for (std::size_t r = 0; r < go.rows(); ++r) {
        const T* o = go.row(r);
        for (std::size_t c = 0; c < go.cols(); ++c) gb[c] += o[c];
      }
    }
  });
}

template <typename T>
Var scale(Graph<T>& g, Var x, T factor) {
  Matrix<T> out = g.value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  return g.push(std::move(out), {x}, [x, factor](Graph<T>& gr, Var self) {
    const auto& go = gr.grad(self);
    auto& gx = gr.grad(x);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += factor * go[i];
  });
}

template <typename T>
Var matmul(Graph<T>& g, Var a, Var b) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  if (av.cols() != bv.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix<T> out(av.rows(), bv.cols());
  gemm_acc(av.data(), bv.data(), out.data(), av.rows(), av.cols(), bv.cols());
  return g.push(std::move(out), {a, b}, [a, b](Graph<T>& gr, Var self) {
    const auto& go = gr.grad(self);
    const auto& av = gr.value(a);
    const auto& bv = gr.value(b);
    if (gr.requires_grad(a)) {
      const auto bt = transpose(bv);
      gemm_acc(go.data(), bt.data(), gr.grad(a).data(), go.rows(), go.cols(), bt.cols());
    }
    if (gr.requires_grad(b)) {
      gemm_tn_acc(av.data(), go.data(), gr.grad(b).data(), av.rows(), av.cols(), go.cols());
    }
  });
}

template <typename T>
Var matmul_transposed(Graph<T>& g, Var a, Var b) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  if (av.cols() != bv.cols()) throw std::invalid_argument("matmul_transposed: dimension mismatch");
  const auto bt = transpose(bv);
  Matrix<T> out(av.rows(), bv.rows());
  gemm_acc(av.data(), bt.data(), out.data(), av.rows(), av.cols(), bt.cols());
  return g.push(std::move(out), {a, b}, [a, b](Graph<T>& gr, Var self) {
    const auto& go = gr.grad(self);
    const auto& av = gr.value(a);
    const auto& bv = gr.value(b);
    if (gr.requires_grad(a)) {
      gemm_acc(go.data(), bv.data(), gr.grad(a).data(), go.rows(), go.cols(), bv.cols());
    }
    if (gr.requires_grad(b)) {
      gemm_tn_acc(go.data(), av.data(), gr.grad(b).data(), go.rows(), go.cols(), av.cols());
    }
  });
}

template <typename T>
Var gather_rows(Graph<T>& g, Var table, std::span<const int> ids) {
  const auto& tv = g.value(table);
  Matrix<T> out(ids.size(), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto id = static_cast<std::size_t>(ids[i]);
    if (ids[i] < 0 || id >= tv.rows()) throw std::out_of_range("gather_rows: id out of range");
    std::copy(tv.row(id), tv.row(id) + tv.cols(), out.row(i));
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return g.push(std::move(out), {table}, [table, idx = std::move(idx)](Graph<T>& gr, Var self) {
    const auto& go = gr.grad(self);
    auto& gt = gr.grad(table);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      T* dst = gt.row(static_cast<std::size_t>(idx[i]));
      const T* src = go.row(i);
      for (std::size_t c = 0; c < go.cols(); ++c) dst[c] += src[c];
    }
  });
}

template <typename T>
Var leading_rows(Graph<T>& g, Var x, std::size_t count) {
  const auto& xv = g.value(x);
  if (count > xv.rows()) throw std::out_of_range("leading_rows: count exceeds rows");
  Matrix<T> out(count, xv.cols());
  std::copy(xv.data(), xv.data() + out.size(), out.data());
  return g.push(std::move(out), {x}, [x](Graph<T>& gr, Var self) {
    const auto& go = gr.grad(self);
    auto& gx = gr.grad(x);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
  });
}

template <typename T>
Var select_row(Graph<T>& g, Var x, std::size_t row) {
  const auto& xv = g.value(x);
  if (row >= xv.rows()) throw std::out_of_range("select_row: row out of range");
  Matrix<T> out(1, xv.cols());
  std::copy(xv.row(row), xv.row(row) + xv.cols(), out.data());
  return g.push(std::move(out), {x}, [x, row](Graph<T>& gr, Var self) {
    const auto& go = gr.grad(self);
    T* dst = gr.grad(x).row(row);
    for (std::size_t c = 0; c < go.cols(); ++c) dst[c] += go[c];
  });
}

template <typename T>
Var layer_norm(Graph<T>& g, Var x, Var gain, Var bias, T epsilon) {
  const auto& xv = g.value(x);
  const auto& gv = g.value(gain);
  const auto& bv = g.value(bias);
  const std::size_t rows = xv.rows();
  const std::size_t d = xv.cols();
  if (gv.size() != d || bv.size() != d) throw std::invalid_argument("layer_norm: shape mismatch");

  auto normalized = std::make_shared<Matrix<T>>(rows, d);
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  Matrix<T> out(rows, d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.row(r);
    T mean = 0;
    for (std::size_t c = 0; c < d; ++c) mean += in[c];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + epsilon);
    (*inv_std)[r] = inv;
    T* xh = normalized->row(r);
    T* o = out.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      xh[c] = (in[c] - mean) * inv;
      o[c] = gv[c] * xh[c] + bv[c];
    }
  }
  return g.push(std::move(out), {x, gain, bias},
                [x, gain, bias, normalized, inv_std](Graph<T>& gr, Var self) {
                  const auto& go = gr.grad(self);
                  const auto& gv = gr.value(gain);
                  const std::size_t rows = go.rows();
                  const std::size_t d = go.cols();
                  if (gr.requires_grad(gain) || gr.requires_grad(bias)) {
                    auto& gg = gr.grad(gain);
                    auto& gb = gr.grad(bias);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const T* dy = go.row(r);
                      const T* xh = normalized->row(r);
                      for (std::size_t c = 0; c < d; ++c) {
                        gg[c] += dy[c] * xh[c];
                        gb[c] += dy[c];
                      }
                    }
                  }
                  if (gr.requires_grad(x)) {
                    auto& gx = gr.grad(x);
                    std::vector<T> dxhat(d);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const T* dy = go.row(r);
                      const T* xh = normalized->row(r);
                      T m1 = 0;
                      T m2 = 0;
                      for (std::size_t c = 0; c < d; ++c) {
                        dxhat[c] = dy[c] * gv[c];
                        m1 += dxhat[c];
                        m2 += dxhat[c] * xh[c];
                      }
                      m1 /= static_cast<T>(d);
                      m2 /= static_cast<T>(d);
                      const T inv = (*inv_std)[r];
                      T* dx = gx.row(r);
                      for (std::size_t c = 0; c < d; ++c) dx[c] += inv * (dxhat[c] - m1 - xh[c] * m2);
                    }
                  }
                });
}

template <typename T>
Var gelu(Graph<T>& g, Var x) {
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  const auto& xv = g.value(x);
  Matrix<T> out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * kInvSqrt2));
  }
  return g.push(std::move(out), {x}, [x](Graph<T>& gr, Var self) {
    constexpr T kInvSqrt2Pi = T(0.39894228040143267794);
    const auto& go = gr.grad(self);
    const auto& xv = gr.value(x);
    auto& gx = gr.grad(x);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T v = xv[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * kInvSqrt2));
      const T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * v * v);
      gx[i] += go[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var dropout(Graph<T>& g, Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be below 1");
  const auto& xv = g.value(x);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(xv.size());
  Matrix<T> out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    (*mask)[i] = rng.uniform01() < rate ? T(0) : keep_scale;
    out[i] = xv[i] * (*mask)[i];
  }
  return g.push(std::move(out), {x}, [x, mask](Graph<T>& gr, Var self) {
    const auto& go = gr.grad(self);
    auto& gx = gr.grad(x);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * (*mask)[i];
  });
}

template <typename T>
Var multi_head_attention(Graph<T>& g, Var q, Var k, Var v, std::size_t heads,
                         std::span<const std::uint8_t> key_padding) {
  const auto& qv = g.value(q);
  const auto& kv = g.value(k);
  const auto& vv = g.value(v);
  const std::size_t lq = qv.rows();
  const std::size_t lk = kv.rows();
  const std::size_t d = qv.cols();
  if (heads == 0 || d % heads != 0 || kv.cols() != d || vv.cols() != d || vv.rows() != lk) {
    throw std::invalid_argument("multi_head_attention: shape mismatch");
  }
  if (!key_padding.empty() && key_padding.size() != lk) {
    throw std::invalid_argument("multi_head_attention: padding length mismatch");
  }
  const std::size_t dh = d / heads;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<std::uint8_t> padding(key_padding.begin(), key_padding.end());

  auto probs = std::make_shared<std::vector<Matrix<T>>>();
  probs->reserve(heads);
  Matrix<T> out(lq, d);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    Matrix<T> p(lq, lk);
    for (std::size_t i = 0; i < lq; ++i) {
      const T* qi = qv.row(i) + off;
      for (std::size_t j = 0; j < lk; ++j) {
        const T* kj = kv.row(j) + off;
        T s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        p(i, j) = s * scale_factor;
      }
    }
    masked_softmax_rows<T>(p, padding);
    for (std::size_t i = 0; i < lq; ++i) {
      T* oi = out.row(i) + off;
      for (std::size_t j = 0; j < lk; ++j) {
        const T pij = p(i, j);
        if (pij == T(0)) continue;
        const T* vj = vv.row(j) + off;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += pij * vj[c];
      }
    }
    probs->push_back(std::move(p));
  }

  return g.push(std::move(out), {q, k, v},
                [q, k, v, heads, dh, scale_factor, probs](Graph<T>& gr, Var self) {
                  const auto& go = gr.grad(self);
                  const auto& qv = gr.value(q);
                  const auto& kv = gr.value(k);
                  const auto& vv = gr.value(v);
                  const std::size_t lq = qv.rows();
                  const std::size_t lk = kv.rows();
                  Matrix<T>* gq = gr.requires_grad(q) ? &gr.grad(q) : nullptr;
                  Matrix<T>* gk = gr.requires_grad(k) ? &gr.grad(k) : nullptr;
                  Matrix<T>* gv = gr.requires_grad(v) ? &gr.grad(v) : nullptr;
                  std::vector<T> dp(lk);
                  for (std::size_t h = 0; h < heads; ++h) {
                    const std::size_t off = h * dh;
                    const auto& p = (*probs)[h];
                    for (std::size_t i = 0; i < lq; ++i) {
                      const T* goi = go.row(i) + off;
                      T weighted = 0;
                      for (std::size_t j = 0; j < lk; ++j) {
                        const T* vj = vv.row(j) + off;
                        T s = 0;
                        for (std::size_t c = 0; c < dh; ++c) s += goi[c] * vj[c];
                        dp[j] = s;
                        weighted += p(i, j) * s;
                      }
                      const T* qi = qv.row(i) + off;
                      for (std::size_t j = 0; j < lk; ++j) {
                        const T pij = p(i, j);
                        if (pij == T(0)) continue;
                        if (gv) {
                          T* gvj = gv->row(j) + off;
                          for (std::size_t c = 0; c < dh; ++c) gvj[c] += pij * goi[c];
                        }
                        const T ds = pij * (dp[j] - weighted) * scale_factor;
                        if (gq) {
                          T* gqi = gq->row(i) + off;
                          const T* kj = kv.row(j) + off;
                          for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                        }
                        if (gk) {
                          T* gkj = gk->row(j) + off;
                          for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                        }
                      }
                    }
                  }
                });
}

template <typename T>
Var mean_rows(Graph<T>& g, Var x, std::span<const std::uint8_t> padding) {
  const auto& xv = g.value(x);
  if (!padding.empty() && padding.size() != xv.rows()) {
    throw std::invalid_argument("mean_rows: padding length mismatch");
  }
  std::vector<std::uint8_t> pad(padding.begin(), padding.end());
  std::size_t count = 0;
  Matrix<T> out(1, xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    if (!pad.empty() && pad[r]) continue;
    ++count;
    const T* row = xv.row(r);
    for (std::size_t c = 0; c < xv.cols(); ++c) out[c] += row[c];
  }
  const T inv = count ? T(1) / static_cast<T>(count) : T(0);
  for (std::size_t c = 0; c < out.cols(); ++c) out[c] *= inv;
  return g.push(std::move(out), {x}, [x, inv, pad = std::move(pad)](Graph<T>& gr, Var self) {
    const auto& go = gr.grad(self);
    auto& gx = gr.grad(x);
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      if (!pad.empty() && pad[r]) continue;
      T* dst = gx.row(r);
      for (std::size_t c = 0; c < gx.cols(); ++c) dst[c] += go[c] * inv;
    }
  });
}

template <typename T>
Var softmax_cross_entropy(Graph<T>& g, Var logits, std::span<const int> labels,
                          std::span<const T> weights, T normalizer) {
  const auto& lv = g.value(logits);
  const std::size_t n = lv.rows();
  const std::size_t classes = lv.cols();
  if (labels.size() != n || (!weights.empty() && weights.size() != n)) {
    throw std::invalid_argument("softmax_cross_entropy: length mismatch");
  }
  if (!(normalizer > T(0))) throw std::invalid_argument("softmax_cross_entropy: normalizer must be positive");
  auto probs = std::make_shared<Matrix<T>>(lv);
  masked_softmax_rows<T>(*probs, {});
  std::vector<int> y(labels.begin(), labels.end());
  std::vector<T> w(n, T(1));
  if (!weights.empty()) std::copy(weights.begin(), weights.end(), w.begin());

  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i] == T(0)) continue;
    const auto label = static_cast<std::size_t>(y[i]);
    if (y[i] < 0 || label >= classes) throw std::out_of_range("softmax_cross_entropy: label out of range");
    const T* row = lv.row(i);
    T max_v = row[0];
    for (std::size_t c = 1; c < classes; ++c) max_v = std::max(max_v, row[c]);
    T sum = 0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - max_v);
    total += w[i] * (std::log(sum) + max_v - row[label]);
  }
  Matrix<T> out(1, 1, total / normalizer);
  return g.push(std::move(out), {logits},
                [logits, probs, y = std::move(y), w = std::move(w), normalizer](Graph<T>& gr, Var self) {
                  const T go = gr.grad(self)[0];
                  auto& gl = gr.grad(logits);
                  for (std::size_t i = 0; i < probs->rows(); ++i) {
                    if (w[i] == T(0)) continue;
                    const T f = go * w[i] / normalizer;
                    const T* p = probs->row(i);
                    T* dst = gl.row(i);
                    for (std::size_t c = 0; c < probs->cols(); ++c) {
                      dst[c] += f * (p[c] - (static_cast<int>(c) == y[i] ? T(1) : T(0)));
                    }
                  }
                });
}

template <typename T>
Var mean_squared_error(Graph<T>& g, Var prediction, const Matrix<T>& target) {
  const auto& pv = g.value(prediction);
  check_same_shape(pv, target, "mean_squared_error");
  const T denom = static_cast<T>(pv.size());
  auto diff = std::make_shared<Matrix<T>>(pv.rows(), pv.cols());
  T total = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    (*diff)[i] = pv[i] - target[i];
    total += (*diff)[i] * (*diff)[i];
  }
  Matrix<T> out(1, 1, total / denom);
  return g.push(std::move(out), {prediction}, [prediction, diff, denom](Graph<T>& gr, Var self) {
    const T f = T(2) * gr.grad(self)[0] / denom;
    auto& gp = gr.grad(prediction);
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += f * (*diff)[i];
  });
}

}  // namespace ops

#define DISP_INSTANTIATE_AUTODIFF(T)                                                              \
  template class Graph<T>;                                                                        \
  template void masked_softmax_rows<T>(Matrix<T>&, std::span<const std::uint8_t>);                \
  template std::vector<T> softmax<T>(std::span<const T>);                                         \
  template Var ops::add<T>(Graph<T>&, Var, Var);                                                  \
  template Var ops::add_row<T>(Graph<T>&, Var, Var);                                              \
  template Var ops::scale<T>(Graph<T>&, Var, T);                                                  \
  template Var ops::matmul<T>(Graph<T>&, Var, Var);                                               \
  template Var ops::matmul_transposed<T>(Graph<T>&, Var, Var);                                    \
  template Var ops::gather_rows<T>(Graph<T>&, Var, std::span<const int>);                         \
  template Var ops::leading_rows<T>(Graph<T>&, Var, std::size_t);                                 \
  template Var ops::select_row<T>(Graph<T>&, Var, std::size_t);                                   \
  template Var ops::layer_norm<T>(Graph<T>&, Var, Var, Var, T);                                   \
  template Var ops::gelu<T>(Graph<T>&, Var);                                                      \
  template Var ops::dropout<T>(Graph<T>&, Var, double, Rng&);                                     \
  template Var ops::multi_head_attention<T>(Graph<T>&, Var, Var, Var, std::size_t,                \
                                            std::span<const std::uint8_t>);                       \
  template Var ops::mean_rows<T>(Graph<T>&, Var, std::span<const std::uint8_t>);                  \
  template Var ops::softmax_cross_entropy<T>(Graph<T>&, Var, std::span<const int>,                \
                                             std::span<const T>, T);                              \
  template Var ops::mean_squared_error<T>(Graph<T>&, Var, const Matrix<T>&);

DISP_INSTANTIATE_AUTODIFF(float)
DISP_INSTANTIATE_AUTODIFF(double)

#undef DISP_INSTANTIATE_AUTODIFF

}  // namespace disp
