#include <atomic>
#include <cassert>
#include <cstdlib>
#include <string_view>

#include "survwright/kernels.hpp"

namespace survwright::kernels {

namespace {

Isa detect() {
  if (const char* forced = std::getenv("SURVWRIGHT_ISA")) {
    if (std::string_view(forced) == "scalar") return Isa::scalar;
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  static const bool has = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return has;
#else
  return false;
#endif
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

Isa set_isa(Isa requested) {
  Isa effective = (requested == Isa::avx2 && !cpu_has_avx2()) ? Isa::scalar : requested;
  current().store(effective, std::memory_order_relaxed);
  return effective;
}

double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  if (active_isa() == Isa::avx2) return avx2::dot(x.data(), y.data(), x.size());
  return scalar::dot(x.data(), y.data(), x.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  if (active_isa() == Isa::avx2) {
    avx2::axpy(alpha, x.data(), y.data(), x.size());
  } else {
    scalar::axpy(alpha, x.data(), y.data(), x.size());
  }
}

double sum(std::span<const double> x) {
  if (active_isa() == Isa::avx2) return avx2::sum(x.data(), x.size());
  return scalar::sum(x.data(), x.size());
}

void scale(double alpha, std::span<double> x) {
  if (active_isa() == Isa::avx2) {
    avx2::scale(alpha, x.data(), x.size());
  } else {
    scalar::scale(alpha, x.data(), x.size());
  }
}

}  // namespace survwright::kernels
