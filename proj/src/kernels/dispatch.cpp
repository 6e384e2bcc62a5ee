#include <atomic>
#include <cstdlib>
#include <string>

#include "tsd/kernels.hpp"

namespace tsd::kernels {

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
  static const bool ok = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") != 0;
  }();
  return ok;
#else
  return false;
#endif
}

namespace {

Backend detect() {
  if (const char* env = std::getenv("TSD_SIMD")) {
    if (std::string(env) == "scalar") return Backend::Scalar;
  }
  return avx2_available() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{detect()};
  return b;
}

}  // namespace

Backend active_backend() { return current().load(std::memory_order_relaxed); }

std::string_view backend_name(Backend b) { return b == Backend::Avx2 ? "avx2" : "scalar"; }

void set_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_available()) b = Backend::Scalar;
  current().store(b, std::memory_order_relaxed);
}

double max_step(std::span<const double> x, std::span<const double> dx, double tau) {
  return active_backend() == Backend::Avx2 ? avx2::max_step(x, dx, tau)
                                           : scalar::max_step(x, dx, tau);
}

void complementarity(std::span<const double> s, std::span<const double> lam, double mu,
                     std::span<double> out) {
  if (active_backend() == Backend::Avx2)
    avx2::complementarity(s, lam, mu, out);
  else
    scalar::complementarity(s, lam, mu, out);
}

void minmax_complementarity(std::span<const double> s, std::span<const double> lam,
                            std::span<double> out) {
  if (active_backend() == Backend::Avx2)
    avx2::minmax_complementarity(s, lam, out);
  else
    scalar::minmax_complementarity(s, lam, out);
}

void ratio(std::span<const double> lam, std::span<const double> s, std::span<double> out) {
  if (active_backend() == Backend::Avx2)
    avx2::ratio(lam, s, out);
  else
    scalar::ratio(lam, s, out);
}

double inf_norm(std::span<const double> v) {
  return active_backend() == Backend::Avx2 ? avx2::inf_norm(v) : scalar::inf_norm(v);
}

}  // namespace tsd::kernels
