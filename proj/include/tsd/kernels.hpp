#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Element-wise interior-point kernels. Each kernel has a scalar reference
// implementation and an AVX2 variant; the variant is picked once at startup
// from the CPU feature bits (override with TSD_SIMD=scalar).

namespace tsd::kernels {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
std::string_view backend_name(Backend b);
/// Force a backend. Requesting Avx2 on a CPU without it falls back to Scalar.
void set_backend(Backend b);
bool avx2_available();

/// Largest a in (0,1] with x + a*dx >= (1-tau)*x for all components.
double max_step(std::span<const double> x, std::span<const double> dx, double tau);
/// out = s*lam - mu
void complementarity(std::span<const double> s, std::span<const double> lam, double mu,
                     std::span<double> out);
/// out = max(min(s,lam), -s, -lam)
void minmax_complementarity(std::span<const double> s, std::span<const double> lam,
                            std::span<double> out);
/// out = lam / s
void ratio(std::span<const double> lam, std::span<const double> s, std::span<double> out);
double inf_norm(std::span<const double> v);

namespace scalar {
double max_step(std::span<const double> x, std::span<const double> dx, double tau);
void complementarity(std::span<const double> s, std::span<const double> lam, double mu,
                     std::span<double> out);
void minmax_complementarity(std::span<const double> s, std::span<const double> lam,
                            std::span<double> out);
void ratio(std::span<const double> lam, std::span<const double> s, std::span<double> out);
double inf_norm(std::span<const double> v);
}  // namespace scalar

namespace avx2 {
double max_step(std::span<const double> x, std::span<const double> dx, double tau);
void complementarity(std::span<const double> s, std::span<const double> lam, double mu,
                     std::span<double> out);
void minmax_complementarity(std::span<const double> s, std::span<const double> lam,
                            std::span<double> out);
void ratio(std::span<const double> lam, std::span<const double> s, std::span<double> out);
double inf_norm(std::span<const double> v);
}  // namespace avx2

}  // namespace tsd::kernels
