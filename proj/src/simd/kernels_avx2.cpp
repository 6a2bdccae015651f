#include <immintrin.h>

#include <cmath>
#include <vector>

#include "gpode/simd/kernels.hpp"

namespace gpode::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

inline __m256d poly(__m256d x, const double* c, int n) {
  __m256d r = _mm256_set1_pd(c[0]);
  for (int i = 1; i < n; ++i) r = _mm256_fmadd_pd(r, x, _mm256_set1_pd(c[i]));
  return r;
}

// Cephes sin/cos polynomials on [-pi/4, pi/4].
constexpr double kSinCoef[] = {1.58962301576546568060E-10, -2.50507477628578072866E-8,
                               2.75573136213857245213E-6,  -1.98412698295895385996E-4,
                               8.33333333332211858878E-3,  -1.66666666666666307295E-1};
constexpr double kCosCoef[] = {-1.13585365213876817300E-11, 2.08757008419747316778E-9,
                               -2.75573141792967388112E-7,  2.48015872888517045348E-5,
                               -1.38888888888730564116E-3,  4.16666666666665929218E-2};
// pi/2 split in three parts (fdlibm).
constexpr double kPio2_1 = 1.57079632673412561417e+00;
constexpr double kPio2_2 = 6.07710050630396597660e-11;
constexpr double kPio2_3 = 2.02226624871116645580e-21;
// Beyond this the three-part reduction loses accuracy.
constexpr double kSinCosLimit = 1e5;

inline void sincos4(__m256d x, __m256d& s_out, __m256d& c_out) {
  const __m256d q = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(0.63661977236758134308)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(q, _mm256_set1_pd(kPio2_1), x);
  r = _mm256_fnmadd_pd(q, _mm256_set1_pd(kPio2_2), r);
  r = _mm256_fnmadd_pd(q, _mm256_set1_pd(kPio2_3), r);
  const __m256d r2 = _mm256_mul_pd(r, r);
  const __m256d sr = _mm256_fmadd_pd(_mm256_mul_pd(r, r2), poly(r2, kSinCoef, 6), r);
  const __m256d cr = _mm256_add_pd(
      _mm256_fnmadd_pd(_mm256_set1_pd(0.5), r2, _mm256_set1_pd(1.0)),
      _mm256_mul_pd(_mm256_mul_pd(r2, r2), poly(r2, kCosCoef, 6)));

  // Quadrant bits from the low mantissa bits of q + 1.5 * 2^52.
  const __m256i qi = _mm256_castpd_si256(_mm256_add_pd(q, _mm256_set1_pd(6755399441055744.0)));
  const __m256i one = _mm256_set1_epi64x(1), two = _mm256_set1_epi64x(2);
  const __m256d swap = _mm256_castsi256_pd(_mm256_cmpeq_epi64(_mm256_and_si256(qi, one), one));
  const __m256d neg_s = _mm256_castsi256_pd(_mm256_cmpeq_epi64(_mm256_and_si256(qi, two), two));
  const __m256d neg_c = _mm256_castsi256_pd(
      _mm256_cmpeq_epi64(_mm256_and_si256(_mm256_add_epi64(qi, one), two), two));
  const __m256d sign = _mm256_set1_pd(-0.0);
  s_out = _mm256_xor_pd(_mm256_blendv_pd(sr, cr, swap), _mm256_and_pd(neg_s, sign));
  c_out = _mm256_xor_pd(_mm256_blendv_pd(cr, sr, swap), _mm256_and_pd(neg_c, sign));
}

// Cephes exp. Inputs below -708 flush to zero.
constexpr double kExpP[] = {1.26177193074810590878E-4, 3.02994407707441961300E-2,
                            9.99999999999999999910E-1};
constexpr double kExpQ[] = {3.00198505138664455042E-6, 2.52448340349684104192E-3,
                            2.27265548208155028766E-1, 2.00000000000000000009E0};

inline __m256d exp4(__m256d x) {
  const __m256d tiny = _mm256_cmp_pd(x, _mm256_set1_pd(-708.0), _CMP_LT_OQ);
  x = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(-708.0)), _mm256_set1_pd(708.0));
  const __m256d n = _mm256_floor_pd(_mm256_fmadd_pd(x, _mm256_set1_pd(1.4426950408889634074),
                                                    _mm256_set1_pd(0.5)));
  x = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125E-1), x);
  x = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212E-6), x);
  const __m256d xx = _mm256_mul_pd(x, x);
  const __m256d px = _mm256_mul_pd(x, poly(xx, kExpP, 3));
  __m256d e = _mm256_div_pd(px, _mm256_sub_pd(poly(xx, kExpQ, 4), px));
  e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));
  const __m256i ni = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(n));
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(ni, _mm256_set1_epi64x(1023)), 52);
  e = _mm256_mul_pd(e, _mm256_castsi256_pd(bits));
  return _mm256_andnot_pd(tiny, e);
}

void sincos_avx2(const double* x, std::size_t n, double* s, double* c) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d a = _mm256_andnot_pd(_mm256_set1_pd(-0.0), v);
    if (_mm256_movemask_pd(_mm256_cmp_pd(a, _mm256_set1_pd(kSinCosLimit), _CMP_NLT_UQ))) {
      for (std::size_t k = i; k < i + 4; ++k) {
        s[k] = std::sin(x[k]);
        c[k] = std::cos(x[k]);
      }
      continue;
    }
    __m256d sv, cv;
    sincos4(v, sv, cv);
    _mm256_storeu_pd(s + i, sv);
    _mm256_storeu_pd(c + i, cv);
  }
  for (; i < n; ++i) {
    s[i] = std::sin(x[i]);
    c[i] = std::cos(x[i]);
  }
}

void exp_avx2(const double* x, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = std::exp(x[i]);
}

void rff_forward_avx2(const RffArgs& a, double* out, double* cos_buf, double* sin_buf) {
  const std::size_t F = a.features, D = a.dim, P = a.outputs;
  std::vector<double> proj(F);
  for (std::size_t b = 0; b < a.rows; ++b) {
    const double* xb = a.x + b * D;
    std::size_t f = 0;
    for (; f + 4 <= F; f += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t d = 0; d < D; ++d)
        acc = _mm256_fmadd_pd(_mm256_set1_pd(xb[d]), _mm256_loadu_pd(a.omega_t + d * F + f), acc);
      _mm256_storeu_pd(proj.data() + f, acc);
    }
    for (; f < F; ++f) {
      double s = 0.0;
      for (std::size_t d = 0; d < D; ++d) s += xb[d] * a.omega_t[d * F + f];
      proj[f] = s;
    }
    double* cb = cos_buf + b * F;
    double* sb = sin_buf + b * F;
    sincos_avx2(proj.data(), F, sb, cb);
    for (std::size_t p = 0; p < P; ++p) {
      const double* wc = a.wc_t + p * F;
      const double* ws = a.ws_t + p * F;
      __m256d acc = _mm256_setzero_pd();
      std::size_t k = 0;
      for (; k + 4 <= F; k += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(wc + k), _mm256_loadu_pd(cb + k), acc);
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(ws + k), _mm256_loadu_pd(sb + k), acc);
      }
      double tail = hsum(acc);
      for (; k < F; ++k) tail += wc[k] * cb[k] + ws[k] * sb[k];
      out[b * P + p] = a.scale * tail;
    }
  }
}

void rff_backward_avx2(const RffArgs& a, const double* g, const double* cos_buf, const double* sin_buf,
                       const RffGrads& out) {
  const std::size_t F = a.features, D = a.dim, P = a.outputs;
  std::vector<double> dproj(F);
  const __m256d scale = _mm256_set1_pd(a.scale);
  __m256d gs = _mm256_setzero_pd();
  double gs_tail = 0.0;
  for (std::size_t b = 0; b < a.rows; ++b) {
    const double* cb = cos_buf + b * F;
    const double* sb = sin_buf + b * F;
    const double* gb = g + b * P;
    std::size_t f = 0;
    for (; f + 4 <= F; f += 4) {
      __m256d u = _mm256_setzero_pd(), v = _mm256_setzero_pd();
      for (std::size_t p = 0; p < P; ++p) {
        const __m256d gp = _mm256_set1_pd(gb[p]);
        u = _mm256_fmadd_pd(gp, _mm256_loadu_pd(a.wc_t + p * F + f), u);
        v = _mm256_fmadd_pd(gp, _mm256_loadu_pd(a.ws_t + p * F + f), v);
      }
      const __m256d c = _mm256_loadu_pd(cb + f), s = _mm256_loadu_pd(sb + f);
      gs = _mm256_fmadd_pd(u, c, _mm256_fmadd_pd(v, s, gs));
      _mm256_storeu_pd(dproj.data() + f, _mm256_mul_pd(scale, _mm256_fmsub_pd(v, c, _mm256_mul_pd(u, s))));
    }
    for (; f < F; ++f) {
      double u = 0.0, v = 0.0;
      for (std::size_t p = 0; p < P; ++p) {
        u += gb[p] * a.wc_t[p * F + f];
        v += gb[p] * a.ws_t[p * F + f];
      }
      gs_tail += u * cb[f] + v * sb[f];
      dproj[f] = a.scale * (v * cb[f] - u * sb[f]);
    }
    const double* xb = a.x + b * D;
    for (std::size_t d = 0; d < D; ++d) {
      const double* om = a.omega_t + d * F;
      double* gom = out.omega_t ? out.omega_t + d * F : nullptr;
      const __m256d xd = _mm256_set1_pd(xb[d]);
      __m256d acc = _mm256_setzero_pd();
      std::size_t k = 0;
      for (; k + 4 <= F; k += 4) {
        const __m256d dp = _mm256_loadu_pd(dproj.data() + k);
        acc = _mm256_fmadd_pd(dp, _mm256_loadu_pd(om + k), acc);
        if (gom) _mm256_storeu_pd(gom + k, _mm256_fmadd_pd(dp, xd, _mm256_loadu_pd(gom + k)));
      }
      double gx = hsum(acc);
      for (; k < F; ++k) {
        gx += dproj[k] * om[k];
        if (gom) gom[k] += dproj[k] * xb[d];
      }
      if (out.x) out.x[b * D + d] += gx;
    }
  }
  if (out.scale) *out.scale += hsum(gs) + gs_tail;
}

void se_forward_avx2(const SeArgs& a, double* out, double* q_buf) {
  const std::size_t M = a.points, D = a.dim, P = a.outputs;
  std::vector<double> r(M), inv(D);
  for (std::size_t d = 0; d < D; ++d) inv[d] = 1.0 / (a.ls[d] * a.ls[d]);
  for (std::size_t b = 0; b < a.rows; ++b) {
    const double* xb = a.x + b * D;
    std::size_t m = 0;
    for (; m + 4 <= M; m += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t d = 0; d < D; ++d) {
        const __m256d diff = _mm256_sub_pd(_mm256_set1_pd(xb[d]), _mm256_loadu_pd(a.z_t + d * M + m));
        acc = _mm256_fmadd_pd(_mm256_mul_pd(diff, diff), _mm256_set1_pd(inv[d]), acc);
      }
      _mm256_storeu_pd(r.data() + m, _mm256_mul_pd(acc, _mm256_set1_pd(-0.5)));
    }
    for (; m < M; ++m) {
      double s = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = xb[d] - a.z_t[d * M + m];
        s += diff * diff * inv[d];
      }
      r[m] = -0.5 * s;
    }
    double* qb = q_buf + b * M;
    exp_avx2(r.data(), M, qb);
    for (std::size_t p = 0; p < P; ++p) {
      const double* nu = a.nu_t + p * M;
      __m256d acc = _mm256_setzero_pd();
      std::size_t k = 0;
      for (; k + 4 <= M; k += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(qb + k), _mm256_loadu_pd(nu + k), acc);
      double s = hsum(acc);
      for (; k < M; ++k) s += qb[k] * nu[k];
      out[b * P + p] = a.sf2 * s;
    }
  }
}

void se_backward_avx2(const SeArgs& a, const double* g, const double* q_buf, const SeGrads& out) {
  const std::size_t M = a.points, D = a.dim, P = a.outputs;
  std::vector<double> inv(D), w(M);
  for (std::size_t d = 0; d < D; ++d) inv[d] = 1.0 / (a.ls[d] * a.ls[d]);
  const __m256d sf2 = _mm256_set1_pd(a.sf2);
  __m256d gsf2 = _mm256_setzero_pd();
  double gsf2_tail = 0.0;
  for (std::size_t b = 0; b < a.rows; ++b) {
    const double* qb = q_buf + b * M;
    const double* gb = g + b * P;
    const double* xb = a.x + b * D;
    std::size_t m = 0;
    for (; m + 4 <= M; m += 4) {
      const __m256d q = _mm256_loadu_pd(qb + m);
      __m256d h = _mm256_setzero_pd();
      for (std::size_t p = 0; p < P; ++p) h = _mm256_fmadd_pd(_mm256_set1_pd(gb[p]), _mm256_loadu_pd(a.nu_t + p * M + m), h);
      gsf2 = _mm256_fmadd_pd(h, q, gsf2);
      _mm256_storeu_pd(w.data() + m, _mm256_mul_pd(_mm256_mul_pd(h, q), sf2));
      if (out.nu_t) {
        const __m256d qs = _mm256_mul_pd(q, sf2);
        for (std::size_t p = 0; p < P; ++p) {
          double* dst = out.nu_t + p * M + m;
          _mm256_storeu_pd(dst, _mm256_fmadd_pd(_mm256_set1_pd(gb[p]), qs, _mm256_loadu_pd(dst)));
        }
      }
    }
    for (; m < M; ++m) {
      double h = 0.0;
      for (std::size_t p = 0; p < P; ++p) h += gb[p] * a.nu_t[p * M + m];
      gsf2_tail += h * qb[m];
      w[m] = h * qb[m] * a.sf2;
      if (out.nu_t)
        for (std::size_t p = 0; p < P; ++p) out.nu_t[p * M + m] += gb[p] * (qb[m] * a.sf2);
    }
    for (std::size_t d = 0; d < D; ++d) {
      const __m256d xd = _mm256_set1_pd(xb[d]), id = _mm256_set1_pd(inv[d]);
      __m256d gx = _mm256_setzero_pd(), gl = _mm256_setzero_pd();
      std::size_t k = 0;
      for (; k + 4 <= M; k += 4) {
        const __m256d diff = _mm256_sub_pd(xd, _mm256_loadu_pd(a.z_t + d * M + k));
        const __m256d t = _mm256_mul_pd(_mm256_mul_pd(_mm256_loadu_pd(w.data() + k), diff), id);
        gx = _mm256_sub_pd(gx, t);
        gl = _mm256_fmadd_pd(t, diff, gl);
        if (out.z_t) {
          double* dst = out.z_t + d * M + k;
          _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), t));
        }
      }
      double gxs = hsum(gx), gls = hsum(gl);
      for (; k < M; ++k) {
        const double diff = xb[d] - a.z_t[d * M + k];
        const double t = w[k] * diff * inv[d];
        gxs -= t;
        gls += t * diff;
        if (out.z_t) out.z_t[d * M + k] += t;
      }
      if (out.x) out.x[b * D + d] += gxs;
      if (out.ls) out.ls[d] += gls / a.ls[d];
    }
  }
  if (out.sf2) *out.sf2 += hsum(gsf2) + gsf2_tail;
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{"avx2",           sincos_avx2,     exp_avx2,        rff_forward_avx2,
                                 rff_backward_avx2, se_forward_avx2, se_backward_avx2};
  return table;
}

}  // namespace gpode::simd
