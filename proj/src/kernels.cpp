#include "qflow/kernels.hpp"

#include <atomic>
#include <stdexcept>

namespace qflow::kernels {

namespace {

struct Vtable {
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    double (*l2sq)(const double*, const double*, std::size_t);
};

constexpr Vtable kScalarVt{scalar::dot, scalar::axpy, scalar::l2sq};
constexpr Vtable kAvx2Vt{avx2::dot, avx2::axpy, avx2::l2sq};

bool detect_avx2() {
#if defined(QFLOW_HAVE_AVX2) && defined(__GNUC__)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

std::atomic<const Vtable*> g_vt{nullptr};
std::atomic<Backend> g_backend{Backend::Scalar};

const Vtable* vt() {
    const Vtable* p = g_vt.load(std::memory_order_acquire);
    if (p) return p;
    if (detect_avx2()) {
        g_backend.store(Backend::Avx2, std::memory_order_relaxed);
        g_vt.store(&kAvx2Vt, std::memory_order_release);
        return &kAvx2Vt;
    }
    g_backend.store(Backend::Scalar, std::memory_order_relaxed);
    g_vt.store(&kScalarVt, std::memory_order_release);
    return &kScalarVt;
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) { return vt()->dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { vt()->axpy(alpha, x, y, n); }
double l2sq(const double* a, const double* b, std::size_t n) { return vt()->l2sq(a, b, n); }

Backend active_backend() {
    vt();
    return g_backend.load(std::memory_order_relaxed);
}

std::string_view backend_name(Backend b) {
    switch (b) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
    }
    return "?";
}

bool avx2_available() { return detect_avx2(); }

void set_backend(Backend b) {
    if (b == Backend::Avx2 && !avx2_available())
        throw std::runtime_error("AVX2 backend not available on this CPU/build");
    g_backend.store(b, std::memory_order_relaxed);
    g_vt.store(b == Backend::Avx2 ? &kAvx2Vt : &kScalarVt, std::memory_order_release);
}

}  // namespace qflow::kernels
