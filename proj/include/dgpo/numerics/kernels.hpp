#pragma once

#include <cstddef>

// Raw row kernels shared by the taped ops and the incremental decoder.
// Every kernel computes an output row from the matching input row with a
// fixed summation order, so a row produced by a full-sequence forward is
// bitwise identical to the same row produced one position at a time.
namespace dgpo::numerics::kernels {

// out[m,n] = a[m,k] * b[k,n]; out is overwritten.
void matmul(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
            std::size_t n);

void add_bias(double* x, const double* bias, std::size_t m, std::size_t n);

double gelu(double x);
double gelu_derivative(double x);

// Writes normalized output; mean and reciprocal std are returned through the
// out-params for the backward pass.
void layer_norm_row(const double* x, const double* gain, const double* bias, double* out,
                    std::size_t n, double eps, double* mean, double* rstd);

void log_softmax_row(const double* x, double* out, std::size_t n);
void softmax_row(const double* x, double* out, std::size_t n);

// One query row attending over positions [0, count). keys/vals are row-major
// with row stride `stride`; the head occupies columns [offset, offset + dim).
// probs receives `count` attention weights; out receives `dim` values.
void attention_row(const double* query, const double* keys, const double* vals,
                   std::size_t count, std::size_t stride, std::size_t offset, std::size_t dim,
                   double scale, double* probs, double* out);

}  // namespace dgpo::numerics::kernels
