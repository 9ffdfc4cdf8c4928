#include "dgpo/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dgpo::numerics::kernels {

void matmul(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
            std::size_t n) {
  std::fill(out, out + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void add_bias(double* x, const double* bias, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* row = x + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += bias[j];
  }
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu(double x) {
  const double inner = kGeluC * (x + kGeluA * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

double gelu_derivative(double x) {
  const double inner = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(inner);
  const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

void layer_norm_row(const double* x, const double* gain, const double* bias, double* out,
                    std::size_t n, double eps, double* mean, double* rstd) {
  double mu = 0.0;
  for (std::size_t j = 0; j < n; ++j) mu += x[j];
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = x[j] - mu;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double rs = 1.0 / std::sqrt(var + eps);
  for (std::size_t j = 0; j < n; ++j) out[j] = (x[j] - mu) * rs * gain[j] + bias[j];
  if (mean != nullptr) *mean = mu;
  if (rstd != nullptr) *rstd = rs;
}

void log_softmax_row(const double* x, double* out, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += std::exp(x[j] - mx);
  const double lse = mx + std::log(s);
  for (std::size_t j = 0; j < n; ++j) out[j] = x[j] - lse;
}

void softmax_row(const double* x, double* out, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(x[j] - mx);
    s += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= s;
}

void attention_row(const double* query, const double* keys, const double* vals,
                   std::size_t count, std::size_t stride, std::size_t offset, std::size_t dim,
                   double scale, double* probs, double* out) {
  const double* q = query + offset;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < count; ++j) {
    const double* kr = keys + j * stride + offset;
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) s += q[c] * kr[c];
    probs[j] = s * scale;
    mx = std::max(mx, probs[j]);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < count; ++j) {
    probs[j] = std::exp(probs[j] - mx);
    total += probs[j];
  }
  for (std::size_t j = 0; j < count; ++j) probs[j] /= total;
  std::fill(out, out + dim, 0.0);
  for (std::size_t j = 0; j < count; ++j) {
    const double* vr = vals + j * stride + offset;
    const double p = probs[j];
    for (std::size_t c = 0; c < dim; ++c) out[c] += p * vr[c];
  }
}

}  // namespace dgpo::numerics::kernels
