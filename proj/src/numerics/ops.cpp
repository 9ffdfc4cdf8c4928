#include "dgpo/numerics/ops.hpp"

#include <algorithm>
#include <cmath>

#include "dgpo/numerics/kernels.hpp"

namespace dgpo::numerics {

using detail::Node;

namespace {

using Backward = std::function<void(Node&)>;

DiffArray make(Shape shape, std::vector<double> value, std::initializer_list<DiffArray> parents,
               Backward bw) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  for (const auto& p : parents) {
    if (p.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(bw);
  }
  return DiffArray::from_node(std::move(node));
}

// Gradient buffer of parent i, or nullptr when it does not take gradient.
double* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

const std::vector<double>& parent_value(const Node& self, std::size_t i) {
  return self.parents[i]->value;
}

void require_same_shape(const char* op, const DiffArray& a, const DiffArray& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, {a.shape(), b.shape()});
}

void require_rank(const char* op, const DiffArray& a, std::size_t rank) {
  if (a.rank() != rank) throw ShapeError(op, {a.shape()});
}

template <class F, class D>
DiffArray unary(const DiffArray& a, F f, D dfdx) {
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return make(a.shape(), std::move(out), {a}, [dfdx](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    const auto& x = parent_value(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * dfdx(x[i], self.value[i]);
  });
}

}  // namespace

DiffArray matmul(const DiffArray& a, const DiffArray& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul", {a.shape(), b.shape()});
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  kernels::matmul(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* go = self.grad.data();
    if (double* ga = parent_grad(self, 0)) {
      const double* bv = parent_value(self, 1).data();
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* brow = bv + p * n;
          const double* grow = go + i * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga[i * k + p] += s;
        }
      }
    }
    if (double* gb = parent_grad(self, 1)) {
      const double* av = parent_value(self, 0).data();
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = go + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

DiffArray add(const DiffArray& a, const DiffArray& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

DiffArray sub(const DiffArray& a, const DiffArray& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

DiffArray mul(const DiffArray& a, const DiffArray& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = parent_value(self, 0);
    const auto& bv = parent_value(self, 1);
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (double* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

DiffArray add_bias(const DiffArray& a, const DiffArray& bias) {
  if (a.rank() != 2 || bias.rank() != 1 || bias.size() != a.cols()) {
    throw ShapeError("add_bias", {a.shape(), bias.shape()});
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.values().begin(), a.values().end());
  kernels::add_bias(out.data(), bias.values().data(), m, n);
  return make(a.shape(), std::move(out), {a, bias}, [m, n](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
      }
    }
  });
}

DiffArray scale(const DiffArray& a, double s) {
  return unary(
      a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

DiffArray add_scalar(const DiffArray& a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

DiffArray exp(const DiffArray& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

DiffArray log(const DiffArray& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

DiffArray tanh(const DiffArray& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

DiffArray gelu(const DiffArray& a) {
  return unary(
      a, [](double x) { return kernels::gelu(x); },
      [](double x, double) { return kernels::gelu_derivative(x); });
}

DiffArray square(const DiffArray& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

DiffArray clamp(const DiffArray& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

DiffArray minimum(const DiffArray& a, const DiffArray& b) {
  require_same_shape("minimum", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.at(i), b.at(i));
  return make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = parent_value(self, 0);
    const auto& bv = parent_value(self, 1);
    double* ga = parent_grad(self, 0);
    double* gb = parent_grad(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (av[i] <= bv[i]) {
        if (ga) ga[i] += self.grad[i];
      } else if (gb) {
        gb[i] += self.grad[i];
      }
    }
  });
}

DiffArray softmax(const DiffArray& a) {
  if (a.rank() < 1) throw ShapeError("softmax", {a.shape()});
  const std::size_t n = a.shape().back();
  const std::size_t m = n == 0 ? 0 : a.size() / n;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i) kernels::softmax_row(a.values().data() + i * n, out.data() + i * n, n);
  return make(a.shape(), std::move(out), {a}, [m, n](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.value.data() + i * n;
      const double* gy = self.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * gy[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (gy[j] - dot);
    }
  });
}

DiffArray log_softmax(const DiffArray& a) {
  if (a.rank() < 1) throw ShapeError("log_softmax", {a.shape()});
  const std::size_t n = a.shape().back();
  const std::size_t m = n == 0 ? 0 : a.size() / n;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i) {
    kernels::log_softmax_row(a.values().data() + i * n, out.data() + i * n, n);
  }
  return make(a.shape(), std::move(out), {a}, [m, n](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.value.data() + i * n;
      const double* gy = self.grad.data() + i * n;
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += gy[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += gy[j] - std::exp(y[j]) * total;
    }
  });
}

DiffArray layer_norm(const DiffArray& x, const DiffArray& gain, const DiffArray& bias, double eps) {
  if (x.rank() != 2 || gain.rank() != 1 || bias.rank() != 1 || gain.size() != x.cols() ||
      bias.size() != x.cols()) {
    throw ShapeError("layer_norm", {x.shape(), gain.shape(), bias.shape()});
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  auto stats = std::make_shared<std::vector<double>>(2 * m);
  for (std::size_t i = 0; i < m; ++i) {
    kernels::layer_norm_row(x.values().data() + i * n, gain.values().data(), bias.values().data(),
                            out.data() + i * n, n, eps, &(*stats)[2 * i], &(*stats)[2 * i + 1]);
  }
  return make(x.shape(), std::move(out), {x, gain, bias}, [m, n, stats](Node& self) {
    const auto& xv = parent_value(self, 0);
    const auto& gv = parent_value(self, 1);
    double* gx = parent_grad(self, 0);
    double* gg = parent_grad(self, 1);
    double* gb = parent_grad(self, 2);
    std::vector<double> xhat(n), dxhat(n);
    for (std::size_t i = 0; i < m; ++i) {
      const double mu = (*stats)[2 * i], rs = (*stats)[2 * i + 1];
      const double* gy = self.grad.data() + i * n;
      double sum_d = 0.0, sum_dx = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        xhat[j] = (xv[i * n + j] - mu) * rs;
        dxhat[j] = gy[j] * gv[j];
        sum_d += dxhat[j];
        sum_dx += dxhat[j] * xhat[j];
        if (gg) gg[j] += gy[j] * xhat[j];
        if (gb) gb[j] += gy[j];
      }
      if (gx) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          gx[i * n + j] += rs * (dxhat[j] - inv_n * sum_d - xhat[j] * inv_n * sum_dx);
        }
      }
    }
  });
}

DiffArray embedding(const DiffArray& table, std::span<const int> ids) {
  require_rank("embedding", table, 2);
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw ShapeError("embedding(id out of range)", {table.shape(), Shape{static_cast<std::size_t>(ids[i])}});
    }
    std::copy_n(table.values().data() + ids[i] * d, d, out.data() + i * d);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make({ids.size(), d}, std::move(out), {table}, [idx = std::move(idx), d](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
    }
  });
}

DiffArray select_rows(const DiffArray& a, std::span<const std::size_t> indices) {
  require_rank("select_rows", a, 2);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(indices.size() * n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= m) throw ShapeError("select_rows(index out of range)", {a.shape(), Shape{indices[i]}});
    std::copy_n(a.values().data() + indices[i] * n, n, out.data() + i * n);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make({indices.size(), n}, std::move(out), {a}, [idx = std::move(idx), n](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < n; ++j) g[idx[i] * n + j] += self.grad[i * n + j];
    }
  });
}

DiffArray pick(const DiffArray& a, std::span<const int> cols) {
  require_rank("pick", a, 2);
  const std::size_t m = a.rows(), n = a.cols();
  if (cols.size() != m) throw ShapeError("pick", {a.shape(), Shape{cols.size()}});
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (cols[i] < 0 || static_cast<std::size_t>(cols[i]) >= n) {
      throw ShapeError("pick(index out of range)", {a.shape(), Shape{static_cast<std::size_t>(cols[i])}});
    }
    out[i] = a.at(i * n + cols[i]);
  }
  std::vector<int> idx(cols.begin(), cols.end());
  return make({m}, std::move(out), {a}, [idx = std::move(idx), n](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < idx.size(); ++i) g[i * n + idx[i]] += self.grad[i];
  });
}

DiffArray cross_entropy(const DiffArray& logits, std::span<const int> targets) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m) throw ShapeError("cross_entropy", {logits.shape(), Shape{targets.size()}});
  auto logp = std::make_shared<std::vector<double>>(m * n);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= n) {
      throw ShapeError("cross_entropy(target out of range)", {logits.shape()});
    }
    kernels::log_softmax_row(logits.values().data() + i * n, logp->data() + i * n, n);
    out[i] = -(*logp)[i * n + targets[i]];
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  return make({m}, std::move(out), {logits}, [logp, tgt = std::move(tgt), n](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < tgt.size(); ++i) {
      const double gi = self.grad[i];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += gi * std::exp((*logp)[i * n + j]);
      g[i * n + tgt[i]] -= gi;
    }
  });
}

DiffArray causal_attention(const DiffArray& q, const DiffArray& k, const DiffArray& v,
                           std::size_t heads) {
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape() || heads == 0 ||
      q.cols() % heads != 0) {
    throw ShapeError("causal_attention", {q.shape(), k.shape(), v.shape(), Shape{heads}});
  }
  const std::size_t len = q.rows(), d = q.cols(), hd = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
  // probs[h][t][j] for j <= t, stored densely as [heads, len, len].
  auto probs = std::make_shared<std::vector<double>>(heads * len * len, 0.0);
  std::vector<double> out(len * d);
  const double* qv = q.values().data();
  const double* kv = k.values().data();
  const double* vv = v.values().data();
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t h = 0; h < heads; ++h) {
      kernels::attention_row(qv + t * d, kv, vv, t + 1, d, h * hd, hd, sc,
                             probs->data() + (h * len + t) * len, out.data() + t * d + h * hd);
    }
  }
  return make(q.shape(), std::move(out), {q, k, v}, [probs, len, d, hd, heads, sc](Node& self) {
    const double* qv = parent_value(self, 0).data();
    const double* kv = parent_value(self, 1).data();
    const double* vv = parent_value(self, 2).data();
    double* gq = parent_grad(self, 0);
    double* gk = parent_grad(self, 1);
    double* gv = parent_grad(self, 2);
    std::vector<double> dp(len);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t t = 0; t < len; ++t) {
        const double* p = probs->data() + (h * len + t) * len;
        const double* go = self.grad.data() + t * d + off;
        double dot = 0.0;
        for (std::size_t j = 0; j <= t; ++j) {
          const double* vr = vv + j * d + off;
          double s = 0.0;
          for (std::size_t c = 0; c < hd; ++c) s += go[c] * vr[c];
          dp[j] = s;
          dot += p[j] * s;
          if (gv) {
            double* gvr = gv + j * d + off;
            for (std::size_t c = 0; c < hd; ++c) gvr[c] += p[j] * go[c];
          }
        }
        for (std::size_t j = 0; j <= t; ++j) {
          const double ds = p[j] * (dp[j] - dot) * sc;
          if (ds == 0.0) continue;
          if (gq) {
            const double* kr = kv + j * d + off;
            double* gqr = gq + t * d + off;
            for (std::size_t c = 0; c < hd; ++c) gqr[c] += ds * kr[c];
          }
          if (gk) {
            const double* qr = qv + t * d + off;
            double* gkr = gk + j * d + off;
            for (std::size_t c = 0; c < hd; ++c) gkr[c] += ds * qr[c];
          }
        }
      }
    }
  });
}

DiffArray reshape(const DiffArray& a, Shape shape) {
  if (shape_size(shape) != a.size()) throw ShapeError("reshape", {a.shape(), shape});
  std::vector<double> out(a.values().begin(), a.values().end());
  return make(std::move(shape), std::move(out), {a}, [](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

DiffArray row_sum(const DiffArray& a) {
  require_rank("row_sum", a, 2);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i] += a.at(i * n + j);
  }
  return make({m}, std::move(out), {a}, [m, n](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i];
    }
  });
}

DiffArray sum(const DiffArray& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return make({}, {s}, {a}, [](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

DiffArray mean(const DiffArray& a) {
  if (a.size() == 0) throw ShapeError("mean", {a.shape()});
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

DiffArray weighted_sum(const DiffArray& a, std::span<const double> weights) {
  if (weights.size() != a.size()) throw ShapeError("weighted_sum", {a.shape(), Shape{weights.size()}});
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += a.at(i) * weights[i];
  std::vector<double> w(weights.begin(), weights.end());
  return make({}, {s}, {a}, [w = std::move(w)](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < w.size(); ++i) g[i] += self.grad[0] * w[i];
  });
}

}  // namespace dgpo::numerics
