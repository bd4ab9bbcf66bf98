#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision primitives used by the hot loops (MLP training,
// nearest-neighbor projection). Scalar reference implementations plus AVX2
// variants; the fastest supported variant is selected once at runtime.

namespace qflow::kernels {

enum class Backend { Scalar, Avx2 };

// dot(a, b) = sum_i a[i]*b[i]
double dot(const double* a, const double* b, std::size_t n);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

// squared L2 distance: sum_i (a[i]-b[i])^2
double l2sq(const double* a, const double* b, std::size_t n);

Backend active_backend();
std::string_view backend_name(Backend b);

// True if the AVX2 variants were compiled in and the CPU supports them.
bool avx2_available();

// Force a specific backend (equivalence tests); throws if unavailable.
void set_backend(Backend b);

// Reference implementations, always available for cross-checking.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double l2sq(const double* a, const double* b, std::size_t n);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double l2sq(const double* a, const double* b, std::size_t n);
}  // namespace avx2

}  // namespace qflow::kernels
