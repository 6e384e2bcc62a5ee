#include "tsd/kernels.hpp"

#include <algorithm>
#include <cmath>

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#define TSD_HAVE_X86 1
#define TSD_AVX2 __attribute__((target("avx2")))
#else
#define TSD_HAVE_X86 0
#endif

namespace tsd::kernels::avx2 {

#if TSD_HAVE_X86

namespace {
TSD_AVX2 inline double hmin(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_min_pd(lo, hi);
  return std::min(_mm_cvtsd_f64(lo), _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo)));
}
TSD_AVX2 inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  return std::max(_mm_cvtsd_f64(lo), _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo)));
}
}  // namespace

TSD_AVX2 double max_step(std::span<const double> x, std::span<const double> dx, double tau) {
  const std::size_t n = x.size();
  const __m256d vtau = _mm256_set1_pd(tau);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  __m256d acc = one;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d xv = _mm256_loadu_pd(x.data() + i);
    __m256d dv = _mm256_loadu_pd(dx.data() + i);
    __m256d neg = _mm256_cmp_pd(dv, zero, _CMP_LT_OQ);
    __m256d cand = _mm256_div_pd(_mm256_mul_pd(vtau, xv), _mm256_sub_pd(zero, dv));
    acc = _mm256_min_pd(acc, _mm256_blendv_pd(one, cand, neg));
  }
  double a = hmin(acc);
  for (; i < n; ++i) {
    if (dx[i] < 0.0) a = std::min(a, (tau * x[i]) / (-dx[i]));
  }
  return a;
}

TSD_AVX2 void complementarity(std::span<const double> s, std::span<const double> lam, double mu,
                              std::span<double> out) {
  const std::size_t n = s.size();
  const __m256d vmu = _mm256_set1_pd(mu);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(s.data() + i), _mm256_loadu_pd(lam.data() + i));
    _mm256_storeu_pd(out.data() + i, _mm256_sub_pd(prod, vmu));
  }
  for (; i < n; ++i) out[i] = s[i] * lam[i] - mu;
}

TSD_AVX2 void minmax_complementarity(std::span<const double> s, std::span<const double> lam,
                                     std::span<double> out) {
  const std::size_t n = s.size();
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d sv = _mm256_loadu_pd(s.data() + i);
    __m256d lv = _mm256_loadu_pd(lam.data() + i);
    __m256d r = _mm256_min_pd(sv, lv);
    r = _mm256_max_pd(r, _mm256_sub_pd(zero, sv));
    r = _mm256_max_pd(r, _mm256_sub_pd(zero, lv));
    _mm256_storeu_pd(out.data() + i, r);
  }
  for (; i < n; ++i) out[i] = std::max(std::max(std::min(s[i], lam[i]), -s[i]), -lam[i]);
}

TSD_AVX2 void ratio(std::span<const double> lam, std::span<const double> s, std::span<double> out) {
  const std::size_t n = s.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out.data() + i,
                     _mm256_div_pd(_mm256_loadu_pd(lam.data() + i), _mm256_loadu_pd(s.data() + i)));
  }
  for (; i < n; ++i) out[i] = lam[i] / s[i];
}

TSD_AVX2 double inf_norm(std::span<const double> v) {
  const std::size_t n = v.size();
  const __m256d signmask = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_max_pd(acc, _mm256_andnot_pd(signmask, _mm256_loadu_pd(v.data() + i)));
  }
  double m = hmax(acc);
  for (; i < n; ++i) m = std::max(m, std::abs(v[i]));
  return m;
}

#else

double max_step(std::span<const double> x, std::span<const double> dx, double tau) {
  return scalar::max_step(x, dx, tau);
}
void complementarity(std::span<const double> s, std::span<const double> lam, double mu,
                     std::span<double> out) {
  scalar::complementarity(s, lam, mu, out);
}
void minmax_complementarity(std::span<const double> s, std::span<const double> lam,
                            std::span<double> out) {
  scalar::minmax_complementarity(s, lam, out);
}
void ratio(std::span<const double> lam, std::span<const double> s, std::span<double> out) {
  scalar::ratio(lam, s, out);
}
double inf_norm(std::span<const double> v) { return scalar::inf_norm(v); }

#endif

}  // namespace tsd::kernels::avx2
