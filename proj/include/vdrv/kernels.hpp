#pragma once

#include <cstddef>

namespace vdrv::kernels {

// Dense row-major kernels. Each kernel exists twice: the serial reference in
// kernels::serial, and the OpenMP build in kernels:: with the identical loop
// body parallelized over independent output rows. Because every C[i][j]
// accumulates over k in ascending order in both builds, the two produce
// bit-identical results; tests and the bench target rely on that.

namespace serial {

// C[m x n] = A[m x k] * B[k x n]
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

// out[n x m] = in[m x n]^T
void transpose(const double* in, double* out, int m, int n);

}  // namespace serial

void matmul(const double* a, const double* b, double* c, int m, int k, int n);
void transpose(const double* in, double* out, int m, int n);

}  // namespace vdrv::kernels
