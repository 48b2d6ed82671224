#include <cstdlib>
#include <string>

#include "critsamp/common.hpp"
#include "critsamp/kernels.hpp"
#include "impl.hpp"

namespace critsamp::kernels {
namespace {

const Table kScalar{Isa::scalar,
                    "scalar",
                    &scalar::affine,
                    &scalar::affine_grad_input,
                    &scalar::affine_grad_params,
                    &scalar::tanh_inplace,
                    &scalar::sqdist};

#if defined(CRITSAMP_HAVE_AVX2)
const Table kAvx2{Isa::avx2,
                  "avx2",
                  &avx2::affine,
                  &avx2::affine_grad_input,
                  &avx2::affine_grad_params,
                  &avx2::tanh_inplace,
                  &avx2::sqdist};
#endif

bool cpu_has_avx2() {
#if defined(CRITSAMP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Table* initial_table() {
    if (const char* env = std::getenv("CRITSAMP_ISA")) {
        const Isa want = isa_from_name(env);
        if (want == Isa::scalar) return &kScalar;
        if (const Table* t = avx2_table()) return t;
        return &kScalar;
    }
    if (const Table* t = avx2_table()) return t;
    return &kScalar;
}

const Table*& current() {
    static const Table* table = initial_table();
    return table;
}

}  // namespace

const Table& scalar_table() { return kScalar; }

const Table* avx2_table() {
#if defined(CRITSAMP_HAVE_AVX2)
    static const bool ok = cpu_has_avx2();
    return ok ? &kAvx2 : nullptr;
#else
    return nullptr;
#endif
}

const Table& active() { return *current(); }

void select(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            current() = &kScalar;
            return;
        case Isa::avx2:
            if (const Table* t = avx2_table()) {
                current() = t;
                return;
            }
            throw InvalidArgument("avx2 kernels are not available on this build/CPU");
    }
}

Isa isa_from_name(std::string_view name) {
    if (name == "scalar") return Isa::scalar;
    if (name == "avx2") return Isa::avx2;
    throw InvalidArgument("unknown kernel ISA '" + std::string(name) + "'");
}

}  // namespace critsamp::kernels
