#include <cmath>

#include "impl.hpp"

namespace critsamp::kernels::scalar {

void affine(const double* W, const double* bias, const double* X, double* Y, std::size_t batch,
            std::size_t in, std::size_t out) {
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = X + b * in;
        double* y = Y + b * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* w = W + o * in;
            double s = 0.0;
            for (std::size_t i = 0; i < in; ++i) s += w[i] * x[i];
            y[o] = bias[o] + s;
        }
    }
}

void affine_grad_input(const double* W, const double* dY, double* dX, std::size_t batch,
                       std::size_t in, std::size_t out) {
    for (std::size_t b = 0; b < batch; ++b) {
        double* dx = dX + b * in;
        const double* dy = dY + b * out;
        for (std::size_t i = 0; i < in; ++i) dx[i] = 0.0;
        for (std::size_t o = 0; o < out; ++o) {
            const double g = dy[o];
            const double* w = W + o * in;
            for (std::size_t i = 0; i < in; ++i) dx[i] += g * w[i];
        }
    }
}

void affine_grad_params(const double* X, const double* dY, double* dW, double* db,
                        std::size_t batch, std::size_t in, std::size_t out) {
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = X + b * in;
        const double* dy = dY + b * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double g = dy[o];
            double* dw = dW + o * in;
            for (std::size_t i = 0; i < in; ++i) dw[i] += g * x[i];
            db[o] += g;
        }
    }
}

void tanh_inplace(double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
}

void sqdist(const double* points, const double* q, double* out, std::size_t count,
            std::size_t dim) {
    for (std::size_t j = 0; j < count; ++j) {
        const double* p = points + j * dim;
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double d = p[i] - q[i];
            s += d * d;
        }
        out[j] = s;
    }
}

}  // namespace critsamp::kernels::scalar
