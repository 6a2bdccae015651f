#pragma once

#include <cstddef>

// Value-level inner loops of the path evaluator. One scalar reference table and,
// when the CPU supports it, an AVX2/FMA table with the same contracts.
//
// Layouts are row-major. Per-row results never depend on the number of rows, so
// batched and one-row evaluations agree bitwise within a table.
namespace gpode::simd {

struct RffArgs {
  const double* x;       // B x D
  std::size_t rows;      // B
  std::size_t dim;       // D
  const double* omega_t; // D x F
  std::size_t features;  // F
  const double* wc_t;    // P x F, cosine weights
  const double* ws_t;    // P x F, sine weights
  std::size_t outputs;   // P
  double scale;
};

struct RffGrads {
  double* x;       // B x D, accumulated
  double* omega_t; // D x F, accumulated
  double* scale;   // one value, accumulated
};

struct SeArgs {
  const double* x;       // B x D
  std::size_t rows;
  std::size_t dim;
  const double* z_t;     // D x M
  std::size_t points;    // M
  const double* nu_t;    // P x M
  std::size_t outputs;   // P
  const double* ls;      // D lengthscales
  double sf2;
};

struct SeGrads {
  double* x;    // B x D
  double* z_t;  // D x M
  double* nu_t; // P x M
  double* ls;   // D
  double* sf2;  // one value
};

struct KernelTable {
  const char* name;
  // s[i] = sin(x[i]), c[i] = cos(x[i]).
  void (*sincos)(const double* x, std::size_t n, double* s, double* c);
  // out[i] = exp(x[i]).
  void (*exp)(const double* x, std::size_t n, double* out);
  // out (B x P) = scale * (cos(X Omega^T) Wc^T + sin(X Omega^T) Ws^T).
  // cos_buf and sin_buf (B x F) receive the trigonometric features for backward.
  void (*rff_forward)(const RffArgs& a, double* out, double* cos_buf, double* sin_buf);
  void (*rff_backward)(const RffArgs& a, const double* grad_out, const double* cos_buf,
                       const double* sin_buf, const RffGrads& g);
  // out (B x P) = sum_m sf2 exp(-0.5 sum_d (x_d - z_md)^2 / ls_d^2) nu_m.
  // q_buf (B x M) receives the unscaled exponentials for backward.
  void (*se_forward)(const SeArgs& a, double* out, double* q_buf);
  void (*se_backward)(const SeArgs& a, const double* grad_out, const double* q_buf, const SeGrads& g);
};

const KernelTable& scalar_kernels();
// nullptr when not compiled in or not supported by the running CPU.
const KernelTable* avx2_kernels();
// AVX2 when available unless GPODE_SIMD=scalar is set in the environment.
const KernelTable& kernels();

}  // namespace gpode::simd
