#pragma once

// Data-parallel inner loops used by the network engine and the neighbor search.
//
// Every kernel has a scalar reference implementation. SIMD variants are selected
// once at startup from the CPU's capabilities; set CRITSAMP_ISA=scalar to force the
// reference path. Results of different variants agree to rounding, not bitwise,
// so bitwise reproducibility holds for a fixed variant.

#include <cstddef>
#include <string_view>

namespace critsamp::kernels {

enum class Isa { scalar, avx2 };

struct Table {
    Isa isa;
    const char* name;

    /// Y[b][o] = bias[o] + sum_i W[o][i] * X[b][i].  W is row-major out x in.
    void (*affine)(const double* W, const double* bias, const double* X, double* Y,
                   std::size_t batch, std::size_t in, std::size_t out);

    /// dX[b][i] = sum_o dY[b][o] * W[o][i]  (overwrites dX).
    void (*affine_grad_input)(const double* W, const double* dY, double* dX,
                              std::size_t batch, std::size_t in, std::size_t out);

    /// dW[o][i] += sum_b dY[b][o] * X[b][i];  db[o] += sum_b dY[b][o].
    void (*affine_grad_params)(const double* X, const double* dY, double* dW, double* db,
                               std::size_t batch, std::size_t in, std::size_t out);

    /// x[i] = tanh(x[i]).
    void (*tanh_inplace)(double* x, std::size_t n);

    /// out[j] = || points[j] - q ||^2 for row-major points (count x dim).
    void (*sqdist)(const double* points, const double* q, double* out, std::size_t count,
                   std::size_t dim);
};

const Table& scalar_table();

/// nullptr when the variant was not compiled in or the CPU lacks the features.
const Table* avx2_table();

/// The table in use by the library.
const Table& active();

/// Switch the active table; throws InvalidArgument if `isa` is unavailable.
void select(Isa isa);

Isa isa_from_name(std::string_view name);

}  // namespace critsamp::kernels
