#include <cmath>
#include <vector>

#include "gpode/simd/kernels.hpp"

namespace gpode::simd {
namespace {

void sincos_ref(const double* x, std::size_t n, double* s, double* c) {
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = std::sin(x[i]);
    c[i] = std::cos(x[i]);
  }
}

void exp_ref(const double* x, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

void rff_forward_ref(const RffArgs& a, double* out, double* cos_buf, double* sin_buf) {
  const std::size_t F = a.features;
  std::vector<double> proj(F);
  for (std::size_t b = 0; b < a.rows; ++b) {
    const double* xb = a.x + b * a.dim;
    for (std::size_t f = 0; f < F; ++f) {
      double s = 0.0;
      for (std::size_t d = 0; d < a.dim; ++d) s += xb[d] * a.omega_t[d * F + f];
      proj[f] = s;
    }
    double* cb = cos_buf + b * F;
    double* sb = sin_buf + b * F;
    sincos_ref(proj.data(), F, sb, cb);
    for (std::size_t p = 0; p < a.outputs; ++p) {
      const double* wc = a.wc_t + p * F;
      const double* ws = a.ws_t + p * F;
      double acc = 0.0;
      for (std::size_t f = 0; f < F; ++f) acc += wc[f] * cb[f] + ws[f] * sb[f];
      out[b * a.outputs + p] = a.scale * acc;
    }
  }
}

void rff_backward_ref(const RffArgs& a, const double* g, const double* cos_buf, const double* sin_buf,
                      const RffGrads& out) {
  const std::size_t F = a.features, P = a.outputs;
  std::vector<double> dproj(F);
  double gscale = 0.0;
  for (std::size_t b = 0; b < a.rows; ++b) {
    const double* cb = cos_buf + b * F;
    const double* sb = sin_buf + b * F;
    const double* gb = g + b * P;
    for (std::size_t f = 0; f < F; ++f) {
      double u = 0.0, v = 0.0;
      for (std::size_t p = 0; p < P; ++p) {
        u += gb[p] * a.wc_t[p * F + f];
        v += gb[p] * a.ws_t[p * F + f];
      }
      gscale += u * cb[f] + v * sb[f];
      dproj[f] = a.scale * (v * cb[f] - u * sb[f]);
    }
    const double* xb = a.x + b * a.dim;
    for (std::size_t d = 0; d < a.dim; ++d) {
      const double* om = a.omega_t + d * F;
      double gx = 0.0;
      for (std::size_t f = 0; f < F; ++f) gx += dproj[f] * om[f];
      if (out.x) out.x[b * a.dim + d] += gx;
      if (out.omega_t)
        for (std::size_t f = 0; f < F; ++f) out.omega_t[d * F + f] += dproj[f] * xb[d];
    }
  }
  if (out.scale) *out.scale += gscale;
}

void se_forward_ref(const SeArgs& a, double* out, double* q_buf) {
  const std::size_t M = a.points, D = a.dim, P = a.outputs;
  std::vector<double> r(M), inv(D);
  for (std::size_t d = 0; d < D; ++d) inv[d] = 1.0 / (a.ls[d] * a.ls[d]);
  for (std::size_t b = 0; b < a.rows; ++b) {
    const double* xb = a.x + b * D;
    for (std::size_t m = 0; m < M; ++m) {
      double s = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = xb[d] - a.z_t[d * M + m];
        s += diff * diff * inv[d];
      }
      r[m] = -0.5 * s;
    }
    double* qb = q_buf + b * M;
    exp_ref(r.data(), M, qb);
    for (std::size_t p = 0; p < P; ++p) {
      const double* nu = a.nu_t + p * M;
      double acc = 0.0;
      for (std::size_t m = 0; m < M; ++m) acc += qb[m] * nu[m];
      out[b * P + p] = a.sf2 * acc;
    }
  }
}

void se_backward_ref(const SeArgs& a, const double* g, const double* q_buf, const SeGrads& out) {
  const std::size_t M = a.points, D = a.dim, P = a.outputs;
  std::vector<double> inv(D), w(M);
  for (std::size_t d = 0; d < D; ++d) inv[d] = 1.0 / (a.ls[d] * a.ls[d]);
  double gsf2 = 0.0;
  for (std::size_t b = 0; b < a.rows; ++b) {
    const double* qb = q_buf + b * M;
    const double* gb = g + b * P;
    const double* xb = a.x + b * D;
    for (std::size_t m = 0; m < M; ++m) {
      double h = 0.0;
      for (std::size_t p = 0; p < P; ++p) h += gb[p] * a.nu_t[p * M + m];
      gsf2 += h * qb[m];
      w[m] = h * qb[m] * a.sf2;
      if (out.nu_t)
        for (std::size_t p = 0; p < P; ++p) out.nu_t[p * M + m] += gb[p] * qb[m] * a.sf2;
    }
    for (std::size_t d = 0; d < D; ++d) {
      double gx = 0.0, gl = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        const double diff = xb[d] - a.z_t[d * M + m];
        const double t = w[m] * diff * inv[d];
        gx -= t;
        gl += t * diff;
        if (out.z_t) out.z_t[d * M + m] += t;
      }
      if (out.x) out.x[b * D + d] += gx;
      if (out.ls) out.ls[d] += gl / a.ls[d];
    }
  }
  if (out.sf2) *out.sf2 += gsf2;
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar",        sincos_ref,       exp_ref,         rff_forward_ref,
                                 rff_backward_ref, se_forward_ref, se_backward_ref};
  return table;
}

}  // namespace gpode::simd
