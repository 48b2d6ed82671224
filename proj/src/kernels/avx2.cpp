// Compiled with -mavx2 -mfma; only reached through the dispatch table after a
// runtime CPU check.

#include <immintrin.h>

#include <cmath>

#include "impl.hpp"

namespace critsamp::kernels::avx2 {
namespace {

inline __m256d reduce4(__m256d a0, __m256d a1, __m256d a2, __m256d a3) {
    const __m256d t0 = _mm256_hadd_pd(a0, a1);
    const __m256d t1 = _mm256_hadd_pd(a2, a3);
    const __m256d lo = _mm256_permute2f128_pd(t0, t1, 0x20);
    const __m256d hi = _mm256_permute2f128_pd(t0, t1, 0x31);
    return _mm256_add_pd(lo, hi);
}

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double dot(const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    __m256d acc = _mm256_setzero_pd();
    for (; i + 4 <= n; i += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d a = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

// expm1 of y <= 0 (y >= -708), and exp(y), sharing one range reduction.
// y = k ln2 + r with |r| <= ln2/2; Taylor series to degree 13 on r.
inline void exp_expm1(__m256d y, __m256d& e, __m256d& em1) {
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
    const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
    const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
    const __m256d k = _mm256_round_pd(_mm256_mul_pd(y, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(k, ln2_hi, y);
    r = _mm256_fnmadd_pd(k, ln2_lo, r);

    // q = expm1(r) = r * (1 + r/2 * (1 + r/3 * (... (1 + r/13))))
    __m256d q = _mm256_set1_pd(1.0);
    for (int j = 13; j >= 2; --j) {
        q = _mm256_fmadd_pd(_mm256_mul_pd(r, _mm256_set1_pd(1.0 / j)), q, _mm256_set1_pd(1.0));
    }
    q = _mm256_mul_pd(r, q);

    // 2^k via exponent bits.
    const __m128i ki = _mm256_cvtpd_epi32(k);
    __m256i bits = _mm256_cvtepi32_epi64(ki);
    bits = _mm256_add_epi64(bits, _mm256_set1_epi64x(1023));
    bits = _mm256_slli_epi64(bits, 52);
    const __m256d scale = _mm256_castsi256_pd(bits);

    const __m256d one = _mm256_set1_pd(1.0);
    e = _mm256_mul_pd(_mm256_add_pd(q, one), scale);
    const __m256d k_is_zero = _mm256_cmp_pd(k, _mm256_setzero_pd(), _CMP_EQ_OQ);
    em1 = _mm256_blendv_pd(_mm256_sub_pd(e, one), q, k_is_zero);
}

}  // namespace

void affine(const double* W, const double* bias, const double* X, double* Y, std::size_t batch,
            std::size_t in, std::size_t out) {
    const std::size_t vin = in & ~std::size_t{3};
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = X + b * in;
        double* y = Y + b * out;
        std::size_t o = 0;
        for (; o + 4 <= out; o += 4) {
            const double* w0 = W + o * in;
            const double* w1 = w0 + in;
            const double* w2 = w1 + in;
            const double* w3 = w2 + in;
            __m256d a0 = _mm256_setzero_pd(), a1 = a0, a2 = a0, a3 = a0;
            for (std::size_t i = 0; i < vin; i += 4) {
                const __m256d xv = _mm256_loadu_pd(x + i);
                a0 = _mm256_fmadd_pd(_mm256_loadu_pd(w0 + i), xv, a0);
                a1 = _mm256_fmadd_pd(_mm256_loadu_pd(w1 + i), xv, a1);
                a2 = _mm256_fmadd_pd(_mm256_loadu_pd(w2 + i), xv, a2);
                a3 = _mm256_fmadd_pd(_mm256_loadu_pd(w3 + i), xv, a3);
            }
            __m256d s = _mm256_add_pd(reduce4(a0, a1, a2, a3), _mm256_loadu_pd(bias + o));
            if (vin < in) {
                alignas(32) double t[4];
                _mm256_store_pd(t, s);
                for (std::size_t i = vin; i < in; ++i) {
                    t[0] += w0[i] * x[i];
                    t[1] += w1[i] * x[i];
                    t[2] += w2[i] * x[i];
                    t[3] += w3[i] * x[i];
                }
                s = _mm256_load_pd(t);
            }
            _mm256_storeu_pd(y + o, s);
        }
        for (; o < out; ++o) y[o] = bias[o] + dot(W + o * in, x, in);
    }
}

void affine_grad_input(const double* W, const double* dY, double* dX, std::size_t batch,
                       std::size_t in, std::size_t out) {
    for (std::size_t b = 0; b < batch; ++b) {
        double* dx = dX + b * in;
        const double* dy = dY + b * out;
        for (std::size_t i = 0; i < in; ++i) dx[i] = 0.0;
        for (std::size_t o = 0; o < out; ++o) axpy(dy[o], W + o * in, dx, in);
    }
}

void affine_grad_params(const double* X, const double* dY, double* dW, double* db,
                        std::size_t batch, std::size_t in, std::size_t out) {
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = X + b * in;
        const double* dy = dY + b * out;
        for (std::size_t o = 0; o < out; ++o) {
            axpy(dy[o], x, dW + o * in, in);
            db[o] += dy[o];
        }
    }
}

void tanh_inplace(double* x, std::size_t n) {
    const __m256d sign_mask = _mm256_set1_pd(-0.0);
    const __m256d two = _mm256_set1_pd(2.0);
    const __m256d floor_arg = _mm256_set1_pd(-700.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        const __m256d sign = _mm256_and_pd(v, sign_mask);
        const __m256d a = _mm256_andnot_pd(sign_mask, v);
        // tanh|v| = -expm1(-2|v|) / (2 + expm1(-2|v|)); operand order keeps NaN.
        const __m256d y = _mm256_max_pd(floor_arg, _mm256_mul_pd(a, _mm256_set1_pd(-2.0)));
        __m256d e, em1;
        exp_expm1(y, e, em1);
        const __m256d t = _mm256_div_pd(_mm256_sub_pd(_mm256_setzero_pd(), em1), _mm256_add_pd(two, em1));
        _mm256_storeu_pd(x + i, _mm256_or_pd(t, sign));
    }
    for (; i < n; ++i) x[i] = std::tanh(x[i]);
}

void sqdist(const double* points, const double* q, double* out, std::size_t count,
            std::size_t dim) {
    std::size_t j = 0;
    if (dim == 2) {
        const __m256d qq = _mm256_setr_pd(q[0], q[1], q[0], q[1]);
        for (; j + 4 <= count; j += 4) {
            const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(points + 2 * j), qq);
            const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(points + 2 * j + 4), qq);
            const __m256d h = _mm256_hadd_pd(_mm256_mul_pd(d0, d0), _mm256_mul_pd(d1, d1));
            _mm256_storeu_pd(out + j, _mm256_permute4x64_pd(h, 0xD8));
        }
    }
    for (; j < count; ++j) {
        const double* p = points + j * dim;
        std::size_t i = 0;
        __m256d acc = _mm256_setzero_pd();
        for (; i + 4 <= dim; i += 4) {
            const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(p + i), _mm256_loadu_pd(q + i));
            acc = _mm256_fmadd_pd(d, d, acc);
        }
        double s = hsum(acc);
        for (; i < dim; ++i) {
            const double d = p[i] - q[i];
            s += d * d;
        }
        out[j] = s;
    }
}

}  // namespace critsamp::kernels::avx2
