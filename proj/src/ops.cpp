#include "vitals/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "vitals/random.hpp"

namespace vitals::ops {

namespace {

template <typename T>
const Tensor<T>& matrix(const Tape<T>& tape, Var v, const char* what) {
  const Tensor<T>& t = tape.value(v);
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + " must be a matrix, got shape " +
                     shape_str(t.shape()));
  }
  return t;
}

// C[m x p] (+)= A[m x k] * B[k x p]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * p;
    const T* arow = a + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      const T av = arow[t];
      if (av == T{0}) continue;
      const T* brow = b + t * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += A[m x p] * B[k x p]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t p,
             std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * p;
    T* crow = c + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      const T* brow = b + t * p;
      T acc{0};
      for (std::size_t j = 0; j < p; ++j) acc += arow[j] * brow[j];
      crow[t] += acc;
    }
  }
}

// C[k x p] += A[m x k]^T * B[m x p]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * p;
    for (std::size_t t = 0; t < k; ++t) {
      const T av = arow[t];
      if (av == T{0}) continue;
      T* crow = c + t * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void softmax_row(const T* in, T* out, std::size_t k) {
  T mx = in[0];
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, in[j]);
  T total{0};
  for (std::size_t j = 0; j < k; ++j) {
    out[j] = std::exp(in[j] - mx);
    total += out[j];
  }
  for (std::size_t j = 0; j < k; ++j) out[j] /= total;
}

}  // namespace

template <typename T>
Tensor<T> softmax_rows_value(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const std::size_t k = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    softmax_row(x.data().data() + r * k, y.data().data() + r * k, k);
  }
  return y;
}

template <typename T>
Tensor<T> log_softmax_rows_value(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const std::size_t k = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    const T mx = *std::max_element(in.begin(), in.end());
    T total{0};
    for (std::size_t j = 0; j < k; ++j) total += std::exp(in[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < k; ++j) out[j] = in[j] - lse;
  }
  return y;
}

std::vector<int> argmax_rows(const Tensor<float>& x) {
  std::vector<int> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) -
                              row.begin());
  }
  return out;
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  if (av.shape() != bv.shape()) {
    throw ShapeError("add: shapes " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()) + " differ");
  }
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  return tape.record(OpKind::kAdd, std::move(out), {a, b},
                     [a, b](Tape<T>& tp, const Tensor<T>& g) {
                       tp.accumulate(a, g.data());
                       tp.accumulate(b, g.data());
                     });
}

template <typename T>
Var add_bias(Tape<T>& tape, Var x, Var bias) {
  const Tensor<T>& xv = matrix(tape, x, "add_bias input");
  const Tensor<T>& bv = tape.value(bias);
  if (bv.numel() != xv.cols()) {
    throw ShapeError("add_bias: bias " + shape_str(bv.shape()) +
                     " does not match input " + shape_str(xv.shape()));
  }
  Tensor<T> out = xv;
  const std::size_t c = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t j = 0; j < c; ++j) out.at(r, j) += bv[j];
  }
  return tape.record(OpKind::kAddBias, std::move(out), {x, bias},
                     [x, bias, c](Tape<T>& tp, const Tensor<T>& g) {
                       tp.accumulate(x, g.data());
                       if (tp.requires_grad(bias)) {
                         std::vector<T> db(c, T{0});
                         for (std::size_t r = 0; r < g.rows(); ++r) {
                           for (std::size_t j = 0; j < c; ++j) db[j] += g.at(r, j);
                         }
                         tp.accumulate(bias, db);
                       }
                     });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  if (av.shape() != bv.shape()) {
    throw ShapeError("mul: shapes " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()) + " differ");
  }
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return tape.record(
      OpKind::kMul, std::move(out), {a, b}, [a, b](Tape<T>& tp, const Tensor<T>& g) {
        const Tensor<T>& av = tp.value(a);
        const Tensor<T>& bv = tp.value(b);
        std::vector<T> d(g.numel());
        if (tp.requires_grad(a)) {
          for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * bv[i];
          tp.accumulate(a, d);
        }
        if (tp.requires_grad(b)) {
          for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * av[i];
          tp.accumulate(b, d);
        }
      });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor) {
  Tensor<T> out = tape.value(x);
  for (T& v : out.data()) v *= factor;
  return tape.record(OpKind::kScale, std::move(out), {x},
                     [x, factor](Tape<T>& tp, const Tensor<T>& g) {
                       std::vector<T> d(g.data().begin(), g.data().end());
                       for (T& v : d) v *= factor;
                       tp.accumulate(x, d);
                     });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  T total{0};
  for (T v : tape.value(x).data()) total += v;
  return tape.record(OpKind::kSum, Tensor<T>::scalar(total), {x},
                     [x](Tape<T>& tp, const Tensor<T>& g) {
                       std::vector<T> d(tp.value(x).numel(), g[0]);
                       tp.accumulate(x, d);
                     });
}

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = matrix(tape, a, "matmul lhs");
  const Tensor<T>& bv = matrix(tape, b, "matmul rhs");
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ for " +
                     shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), p = bv.cols();
  Tensor<T> out({m, p});
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, p);
  return tape.record(
      OpKind::kMatMul, std::move(out), {a, b},
      [a, b, m, k, p](Tape<T>& tp, const Tensor<T>& g) {
        if (tp.requires_grad(a)) {
          Tensor<T>& da = tp.grad_slot(a);
          gemm_nt(g.data().data(), tp.value(b).data().data(), da.data().data(),
                  m, p, k);
        }
        if (tp.requires_grad(b)) {
          Tensor<T>& db = tp.grad_slot(b);
          gemm_tn(tp.value(a).data().data(), g.data().data(), db.data().data(),
                  m, k, p);
        }
      });
}

template <typename T>
Var dilated_conv1d(Tape<T>& tape, Var x, Var kernel, std::size_t dilation) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& kv = tape.value(kernel);
  if (dilation == 0) {
    throw ParameterError("dilated_conv1d: dilation must be positive");
  }
  if (xv.rank() != 2 || xv.rows() == 0) {
    throw EmptySequenceError("dilated_conv1d: input sequence is empty");
  }
  if (kv.rank() != 3 || kv.dim(0) != kConvTaps || kv.dim(1) != xv.cols()) {
    throw ShapeError("dilated_conv1d: kernel " + shape_str(kv.shape()) +
                     " incompatible with input " + shape_str(xv.shape()));
  }
  const std::size_t n = xv.rows(), cin = kv.dim(1), cout = kv.dim(2);
  const std::size_t tap_size = cin * cout;
  Tensor<T> out({n, cout});

  // Each tap j contributes x shifted by (j-1)*dilation times kernel slice j.
  auto for_each_tap = [n, dilation](auto&& fn) {
    for (std::size_t j = 0; j < kConvTaps; ++j) {
      // Rows t for which src = t + (j-1)*dilation lies in [0, n).
      std::size_t t0 = 0, t1 = n, src0 = 0;
      if (j == 0) {
        if (dilation >= n) continue;
        t0 = dilation;
        src0 = 0;
      } else if (j == 2) {
        if (dilation >= n) continue;
        t1 = n - dilation;
        src0 = dilation;
      }
      fn(j, t0, t1 - t0, src0);
    }
  };

  for_each_tap([&](std::size_t j, std::size_t t0, std::size_t len,
                   std::size_t src0) {
    gemm_nn(xv.data().data() + src0 * cin, kv.data().data() + j * tap_size,
            out.data().data() + t0 * cout, len, cin, cout);
  });

  return tape.record(
      OpKind::kDilatedConv1d, std::move(out), {x, kernel},
      [x, kernel, cin, cout, tap_size, for_each_tap](Tape<T>& tp,
                                                     const Tensor<T>& g) {
        const bool need_x = tp.requires_grad(x);
        const bool need_k = tp.requires_grad(kernel);
        T* dx = need_x ? tp.grad_slot(x).data().data() : nullptr;
        T* dk = need_k ? tp.grad_slot(kernel).data().data() : nullptr;
        const T* xs = tp.value(x).data().data();
        const T* ks = tp.value(kernel).data().data();
        for_each_tap([&](std::size_t j, std::size_t t0, std::size_t len,
                         std::size_t src0) {
          const T* gs = g.data().data() + t0 * cout;
          if (need_x) gemm_nt(gs, ks + j * tap_size, dx + src0 * cin, len, cout, cin);
          if (need_k) gemm_tn(xs + src0 * cin, gs, dk + j * tap_size, len, cin, cout);
        });
      });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (T& v : out.data()) v = v > T{0} ? v : T{0};
  return tape.record(OpKind::kRelu, std::move(out), {x},
                     [x](Tape<T>& tp, const Tensor<T>& g) {
                       const Tensor<T>& xv = tp.value(x);
                       std::vector<T> d(g.numel());
                       for (std::size_t i = 0; i < d.size(); ++i) {
                         d[i] = xv[i] > T{0} ? g[i] : T{0};
                       }
                       tp.accumulate(x, d);
                     });
}

template <typename T>
Var dropout(Tape<T>& tape, Var x, double rate, std::uint64_t seed,
            bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout: rate must lie in [0, 1), got " +
                         std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const Tensor<T>& xv = tape.value(x);
  Rng rng(seed);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(xv.numel());
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? T{0} : keep_scale;
    out[i] *= (*mask)[i];
  }
  return tape.record(OpKind::kDropout, std::move(out), {x},
                     [x, mask](Tape<T>& tp, const Tensor<T>& g) {
                       std::vector<T> d(g.numel());
                       for (std::size_t i = 0; i < d.size(); ++i) {
                         d[i] = g[i] * (*mask)[i];
                       }
                       tp.accumulate(x, d);
                     });
}

template <typename T>
Var softmax_rows(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = matrix(tape, x, "softmax_rows input");
  if (xv.rows() == 0 || xv.cols() == 0) {
    throw ShapeError("softmax_rows: empty input " + shape_str(xv.shape()));
  }
  return tape.record(
      OpKind::kSoftmaxRows, softmax_rows_value(xv), {x},
      [x](Tape<T>& tp, const Tensor<T>& g) {
        const Tensor<T> y = softmax_rows_value(tp.value(x));
        const std::size_t k = y.cols();
        std::vector<T> d(y.numel());
        for (std::size_t r = 0; r < y.rows(); ++r) {
          T dot{0};
          for (std::size_t j = 0; j < k; ++j) dot += g.at(r, j) * y.at(r, j);
          for (std::size_t j = 0; j < k; ++j) {
            d[r * k + j] = y.at(r, j) * (g.at(r, j) - dot);
          }
        }
        tp.accumulate(x, d);
      });
}

template <typename T>
Var concat_cols(Tape<T>& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t n = matrix(tape, parts[0], "concat_cols input").rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor<T>& pv = matrix(tape, p, "concat_cols input");
    if (pv.rows() != n) {
      throw ShapeError("concat_cols: row counts differ (" + std::to_string(n) +
                       " vs " + std::to_string(pv.rows()) + ")");
    }
    widths.push_back(pv.cols());
    total += pv.cols();
  }
  Tensor<T> out({n, total});
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor<T>& pv = tape.value(parts[i]);
    for (std::size_t r = 0; r < n; ++r) {
      std::copy(pv.row(r).begin(), pv.row(r).end(),
                out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += widths[i];
  }
  return tape.record(
      OpKind::kConcatCols, std::move(out), parts,
      [parts, widths, n, total](Tape<T>& tp, const Tensor<T>& g) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < parts.size(); ++i) {
          if (tp.requires_grad(parts[i])) {
            std::vector<T> d(n * widths[i]);
            for (std::size_t r = 0; r < n; ++r) {
              std::copy_n(g.data().begin() + static_cast<std::ptrdiff_t>(r * total + off),
                          widths[i], d.begin() + static_cast<std::ptrdiff_t>(r * widths[i]));
            }
            tp.accumulate(parts[i], d);
          }
          off += widths[i];
        }
      });
}

template <typename T>
Var chunked_attention(Tape<T>& tape, Var query, Var key, Var value,
                      std::size_t window) {
  const Tensor<T>& q = matrix(tape, query, "attention query");
  const Tensor<T>& k = matrix(tape, key, "attention key");
  const Tensor<T>& v = matrix(tape, value, "attention value");
  if (window == 0) throw ParameterError("attention window must be positive");
  if (q.rows() == 0) throw EmptySequenceError("attention over empty sequence");
  if (q.shape() != k.shape() || k.rows() != v.rows()) {
    throw ShapeError("attention: query " + shape_str(q.shape()) + ", key " +
                     shape_str(k.shape()) + ", value " + shape_str(v.shape()) +
                     " are incompatible");
  }
  const std::size_t n = q.rows(), h = q.cols(), hv = v.cols();
  const T scale_factor = static_cast<T>(1.0 / std::sqrt(static_cast<double>(h)));
  const bool keep = tape.requires_grad(query) || tape.requires_grad(key) ||
                    tape.requires_grad(value);

  // Attention weights, chunk after chunk, each chunk stored as len x len.
  auto weights = std::make_shared<std::vector<T>>();
  std::vector<T> scratch;
  Tensor<T> out({n, hv});
  for (std::size_t s = 0; s < n; s += window) {
    const std::size_t len = std::min(window, n - s);
    scratch.assign(len * len, T{0});
    gemm_nt(q.data().data() + s * h, k.data().data() + s * h, scratch.data(),
            len, h, len);
    for (T& x : scratch) x *= scale_factor;
    for (std::size_t i = 0; i < len; ++i) {
      softmax_row(scratch.data() + i * len, scratch.data() + i * len, len);
    }
    gemm_nn(scratch.data(), v.data().data() + s * hv, out.data().data() + s * hv,
            len, len, hv);
    if (keep) weights->insert(weights->end(), scratch.begin(), scratch.end());
  }

  return tape.record(
      OpKind::kChunkedAttention, std::move(out), {query, key, value},
      [query, key, value, window, n, h, hv, scale_factor, weights](
          Tape<T>& tp, const Tensor<T>& g) {
        const bool need_q = tp.requires_grad(query);
        const bool need_k = tp.requires_grad(key);
        const bool need_v = tp.requires_grad(value);
        const T* qs = tp.value(query).data().data();
        const T* ks = tp.value(key).data().data();
        const T* vs = tp.value(value).data().data();
        T* dq = need_q ? tp.grad_slot(query).data().data() : nullptr;
        T* dk = need_k ? tp.grad_slot(key).data().data() : nullptr;
        T* dv = need_v ? tp.grad_slot(value).data().data() : nullptr;
        std::vector<T> dp;
        std::size_t woff = 0;
        for (std::size_t s = 0; s < n; s += window) {
          const std::size_t len = std::min(window, n - s);
          const T* p = weights->data() + woff;
          woff += len * len;
          const T* gs = g.data().data() + s * hv;
          if (need_v) gemm_tn(p, gs, dv + s * hv, len, len, hv);
          if (!need_q && !need_k) continue;
          dp.assign(len * len, T{0});
          gemm_nt(gs, vs + s * hv, dp.data(), len, hv, len);
          // Softmax backward, then fold in the score scale.
          for (std::size_t i = 0; i < len; ++i) {
            T dot{0};
            for (std::size_t j = 0; j < len; ++j) dot += dp[i * len + j] * p[i * len + j];
            for (std::size_t j = 0; j < len; ++j) {
              dp[i * len + j] = p[i * len + j] * (dp[i * len + j] - dot) * scale_factor;
            }
          }
          if (need_q) gemm_nn(dp.data(), ks + s * h, dq + s * h, len, len, h);
          if (need_k) gemm_tn(dp.data(), qs + s * h, dk + s * h, len, len, h);
        }
      });
}

template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const int> labels,
                  std::span<const double> class_weights) {
  const Tensor<T>& z = matrix(tape, logits, "cross_entropy logits");
  const std::size_t n = z.rows(), k = z.cols();
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " frames");
  }
  if (class_weights.size() != k) {
    throw ShapeError("cross_entropy: " + std::to_string(class_weights.size()) +
                     " class weights for " + std::to_string(k) + " classes");
  }
  for (double w : class_weights) {
    if (!(w >= 0.0)) throw ParameterError("cross_entropy: negative class weight");
  }
  double weight_total = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const int y = labels[t];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw DataError("label " + std::to_string(y) + " at frame " +
                      std::to_string(t) + " is outside [0, " +
                      std::to_string(k) + ")");
    }
    weight_total += class_weights[static_cast<std::size_t>(y)];
  }
  if (!(weight_total > 0.0)) {
    throw ParameterError("cross_entropy: total class weight over frames is zero");
  }

  auto probs = std::make_shared<Tensor<T>>(softmax_rows_value(z));
  double loss = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const auto y = static_cast<std::size_t>(labels[t]);
    const double p = std::max(static_cast<double>(probs->at(t, y)), kProbFloor);
    loss += class_weights[y] * -std::log(p);
  }
  loss /= weight_total;

  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<double> cw(class_weights.begin(), class_weights.end());
  return tape.record(
      OpKind::kCrossEntropy, Tensor<T>::scalar(static_cast<T>(loss)), {logits},
      [logits, probs, lab = std::move(lab), cw = std::move(cw), weight_total, n,
       k](Tape<T>& tp, const Tensor<T>& g) {
        std::vector<T> d(n * k, T{0});
        for (std::size_t t = 0; t < n; ++t) {
          const auto y = static_cast<std::size_t>(lab[t]);
          // Clamped probabilities have zero slope.
          if (static_cast<double>(probs->at(t, y)) < kProbFloor) continue;
          const T coef = static_cast<T>(cw[y] / weight_total) * g[0];
          for (std::size_t j = 0; j < k; ++j) {
            d[t * k + j] = coef * (probs->at(t, j) - (j == y ? T{1} : T{0}));
          }
        }
        tp.accumulate(logits, d);
      });
}

template <typename T>
Var smoothing_loss(Tape<T>& tape, Var logits, double tau,
                   const Tensor<T>* anchor) {
  const Tensor<T>& z = matrix(tape, logits, "smoothing_loss logits");
  if (!(tau > 0.0)) throw ParameterError("smoothing_loss: tau must be positive");
  const std::size_t n = z.rows(), k = z.cols();
  if (n < 2) {
    return tape.record(OpKind::kSmoothingLoss, Tensor<T>::scalar(T{0}), {logits},
                       [](Tape<T>&, const Tensor<T>&) {});
  }
  if (anchor && anchor->shape() != z.shape()) {
    throw ShapeError("smoothing_loss: anchor " + shape_str(anchor->shape()) +
                     " does not match logits " + shape_str(z.shape()));
  }
  Tensor<T> lp = log_softmax_rows_value(z);
  const Tensor<T>& prev = anchor ? *anchor : lp;
  const double count = static_cast<double>((n - 1) * k);

  // dloss/dlp[t,k] for t >= 1; zero where the clamp is active.
  auto dlp = std::make_shared<std::vector<T>>(n * k, T{0});
  double loss = 0.0;
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      const double delta = static_cast<double>(lp.at(t, j)) -
                           static_cast<double>(prev.at(t - 1, j));
      if (std::abs(delta) < tau) {
        loss += delta * delta;
        (*dlp)[t * k + j] = static_cast<T>(2.0 * delta / count);
      } else {
        loss += tau * tau;
      }
    }
  }
  loss /= count;
  auto probs = std::make_shared<Tensor<T>>(softmax_rows_value(z));
  return tape.record(
      OpKind::kSmoothingLoss, Tensor<T>::scalar(static_cast<T>(loss)), {logits},
      [logits, dlp, probs, n, k](Tape<T>& tp, const Tensor<T>& g) {
        std::vector<T> d(n * k, T{0});
        for (std::size_t t = 1; t < n; ++t) {
          T row_total{0};
          for (std::size_t j = 0; j < k; ++j) row_total += (*dlp)[t * k + j];
          for (std::size_t j = 0; j < k; ++j) {
            d[t * k + j] =
                g[0] * ((*dlp)[t * k + j] - probs->at(t, j) * row_total);
          }
        }
        tp.accumulate(logits, d);
      });
}

#define VITALS_INSTANTIATE_OPS(T)                                              \
  template Var add<T>(Tape<T>&, Var, Var);                                     \
  template Var add_bias<T>(Tape<T>&, Var, Var);                                \
  template Var mul<T>(Tape<T>&, Var, Var);                                     \
  template Var scale<T>(Tape<T>&, Var, T);                                     \
  template Var sum<T>(Tape<T>&, Var);                                          \
  template Var matmul<T>(Tape<T>&, Var, Var);                                  \
  template Var dilated_conv1d<T>(Tape<T>&, Var, Var, std::size_t);             \
  template Var relu<T>(Tape<T>&, Var);                                         \
  template Var dropout<T>(Tape<T>&, Var, double, std::uint64_t, bool);         \
  template Var softmax_rows<T>(Tape<T>&, Var);                                 \
  template Var concat_cols<T>(Tape<T>&, const std::vector<Var>&);              \
  template Var chunked_attention<T>(Tape<T>&, Var, Var, Var, std::size_t);     \
  template Var cross_entropy<T>(Tape<T>&, Var, std::span<const int>,           \
                                std::span<const double>);                      \
  template Var smoothing_loss<T>(Tape<T>&, Var, double, const Tensor<T>*);     \
  template Tensor<T> softmax_rows_value<T>(const Tensor<T>&);                  \
  template Tensor<T> log_softmax_rows_value<T>(const Tensor<T>&);

VITALS_INSTANTIATE_OPS(float)
VITALS_INSTANTIATE_OPS(double)

#undef VITALS_INSTANTIATE_OPS

}  // namespace vitals::ops
