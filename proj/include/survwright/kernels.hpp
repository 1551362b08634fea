#pragma once

// Dense double-precision kernels used by the Cox accumulators and the neural
// layers. Every kernel has a scalar reference implementation; an AVX2/FMA
// variant is selected at runtime when the CPU supports it. The scalar and
// vector paths are kept side by side so tests can compare them directly.

#include <cstddef>
#include <span>
#include <string_view>

namespace survwright::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// ISA used by the dispatching entry points below. Chosen once from cpuid;
// SURVWRIGHT_ISA=scalar in the environment pins the reference path.
Isa active_isa();

// Overrides the dispatch choice (tests and benchmarks). Requesting avx2 on a
// CPU without it falls back to scalar; the effective choice is returned.
Isa set_isa(Isa requested);

bool cpu_has_avx2();

double dot(std::span<const double> x, std::span<const double> y);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double sum(std::span<const double> x);
// x *= alpha
void scale(double alpha, std::span<double> x);

namespace scalar {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
}  // namespace scalar

namespace avx2 {
// Only callable when cpu_has_avx2() is true.
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
}  // namespace avx2

}  // namespace survwright::kernels
