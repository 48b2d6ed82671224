#pragma once

#include <cstddef>

namespace critsamp::kernels {

namespace scalar {
void affine(const double* W, const double* bias, const double* X, double* Y, std::size_t batch,
            std::size_t in, std::size_t out);
void affine_grad_input(const double* W, const double* dY, double* dX, std::size_t batch,
                       std::size_t in, std::size_t out);
void affine_grad_params(const double* X, const double* dY, double* dW, double* db,
                        std::size_t batch, std::size_t in, std::size_t out);
void tanh_inplace(double* x, std::size_t n);
void sqdist(const double* points, const double* q, double* out, std::size_t count,
            std::size_t dim);
}  // namespace scalar

#if defined(CRITSAMP_HAVE_AVX2)
namespace avx2 {
void affine(const double* W, const double* bias, const double* X, double* Y, std::size_t batch,
            std::size_t in, std::size_t out);
void affine_grad_input(const double* W, const double* dY, double* dX, std::size_t batch,
                       std::size_t in, std::size_t out);
void affine_grad_params(const double* X, const double* dY, double* dW, double* db,
                        std::size_t batch, std::size_t in, std::size_t out);
void tanh_inplace(double* x, std::size_t n);
void sqdist(const double* points, const double* q, double* out, std::size_t count,
            std::size_t dim);
}  // namespace avx2
#endif

}  // namespace critsamp::kernels
