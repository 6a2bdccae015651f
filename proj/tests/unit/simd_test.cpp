#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "gpode/simd/kernels.hpp"

using namespace gpode::simd;

namespace {

std::vector<double> normals(std::size_t n, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> d(0.0, s);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CAPTURE(i);
    CHECK(std::abs(a[i] - b[i]) <= tol * std::max(1.0, std::abs(b[i])));
  }
}

}  // namespace

TEST_CASE("dispatch selects a table") {
  const auto& k = kernels();
  CHECK(k.sincos != nullptr);
  if (avx2_kernels()) MESSAGE("avx2 kernels available");
}

TEST_CASE("vector sincos and exp match the reference") {
  const KernelTable* fast = avx2_kernels();
  if (!fast) return;
  const auto& ref = scalar_kernels();
  std::mt19937_64 rng(1);
  std::vector<double> x;
  for (double s : {0.1, 1.0, 10.0, 100.0, 1e4}) {
    auto v = normals(1001, rng, s);
    x.insert(x.end(), v.begin(), v.end());
  }
  for (double v : {0.0, -0.0, 1e5, 3e5, -2e6, 1.5707963267948966, 3.141592653589793, -0.7853981633974483})
    x.push_back(v);
  std::vector<double> s1(x.size()), c1(x.size()), s2(x.size()), c2(x.size());
  ref.sincos(x.data(), x.size(), s1.data(), c1.data());
  fast->sincos(x.data(), x.size(), s2.data(), c2.data());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CAPTURE(x[i]);
    const double tol = 2e-16 * std::max(4.0, std::abs(x[i]) * 1e-2);
    CHECK(std::abs(s1[i] - s2[i]) <= tol);
    CHECK(std::abs(c1[i] - c2[i]) <= tol);
  }

  std::vector<double> e;
  for (double v = -750.0; v <= 0.0; v += 0.37) e.push_back(v);
  for (double v : normals(200, rng)) e.push_back(v);
  std::vector<double> e1(e.size()), e2(e.size());
  ref.exp(e.data(), e.size(), e1.data());
  fast->exp(e.data(), e.size(), e2.data());
  for (std::size_t i = 0; i < e.size(); ++i) {
    CAPTURE(e[i]);
    if (e[i] < -708.0)
      CHECK(e2[i] <= 1e-300);
    else
      CHECK(std::abs(e1[i] - e2[i]) <= 4e-16 * e1[i]);
  }
}

TEST_CASE("path kernels agree across tables") {
  const KernelTable* fast = avx2_kernels();
  if (!fast) return;
  const auto& ref = scalar_kernels();
  std::mt19937_64 rng(7);
  for (std::size_t features : {1u, 6u, 64u, 67u}) {
    for (std::size_t points : {1u, 5u, 16u}) {
      const std::size_t B = 5, D = 3, P = 3;
      auto x = normals(B * D, rng), om = normals(D * features, rng), wc = normals(P * features, rng),
           ws = normals(P * features, rng), z = normals(D * points, rng), nu = normals(P * points, rng),
           g = normals(B * P, rng);
      std::vector<double> ls{0.7, 1.3, 2.0};
      RffArgs ra{x.data(), B, D, om.data(), features, wc.data(), ws.data(), P, 0.37};
      std::vector<double> o1(B * P), o2(B * P), cb1(B * features), sb1(B * features), cb2(B * features),
          sb2(B * features);
      ref.rff_forward(ra, o1.data(), cb1.data(), sb1.data());
      fast->rff_forward(ra, o2.data(), cb2.data(), sb2.data());
      check_close(o1, o2, 1e-12);
      std::vector<double> gx1(B * D), gx2(B * D), go1(D * features), go2(D * features);
      double gs1 = 0, gs2 = 0;
      ref.rff_backward(ra, g.data(), cb1.data(), sb1.data(), {gx1.data(), go1.data(), &gs1});
      fast->rff_backward(ra, g.data(), cb2.data(), sb2.data(), {gx2.data(), go2.data(), &gs2});
      check_close(gx1, gx2, 1e-12);
      check_close(go1, go2, 1e-12);
      CHECK(std::abs(gs1 - gs2) <= 1e-12 * std::max(1.0, std::abs(gs1)));

      SeArgs sa{x.data(), B, D, z.data(), points, nu.data(), P, ls.data(), 1.7};
      std::vector<double> q1(B * points), q2(B * points);
      ref.se_forward(sa, o1.data(), q1.data());
      fast->se_forward(sa, o2.data(), q2.data());
      check_close(o1, o2, 1e-12);
      std::vector<double> gz1(D * points), gz2(D * points), gn1(P * points), gn2(P * points), gl1(D), gl2(D);
      std::fill(gx1.begin(), gx1.end(), 0.0);
      std::fill(gx2.begin(), gx2.end(), 0.0);
      double gf1 = 0, gf2 = 0;
      ref.se_backward(sa, g.data(), q1.data(), {gx1.data(), gz1.data(), gn1.data(), gl1.data(), &gf1});
      fast->se_backward(sa, g.data(), q2.data(), {gx2.data(), gz2.data(), gn2.data(), gl2.data(), &gf2});
      check_close(gx1, gx2, 1e-12);
      check_close(gz1, gz2, 1e-12);
      check_close(gn1, gn2, 1e-12);
      check_close(gl1, gl2, 1e-12);
      CHECK(std::abs(gf1 - gf2) <= 1e-12 * std::max(1.0, std::abs(gf1)));
    }
  }
}

TEST_CASE("row results do not depend on the batch size") {
  std::vector<const KernelTable*> tables{&scalar_kernels()};
  if (avx2_kernels()) tables.push_back(avx2_kernels());
  std::mt19937_64 rng(9);
  const std::size_t B = 4, D = 2, P = 2, F = 37, M = 7;
  auto x = normals(B * D, rng), om = normals(D * F, rng), wc = normals(P * F, rng), ws = normals(P * F, rng),
       z = normals(D * M, rng), nu = normals(P * M, rng);
  std::vector<double> ls{0.9, 1.1};
  for (const auto* t : tables) {
    CAPTURE(t->name);
    std::vector<double> all(B * P), cb(B * F), sb(B * F), q(B * M), all_se(B * P);
    t->rff_forward({x.data(), B, D, om.data(), F, wc.data(), ws.data(), P, 0.5}, all.data(), cb.data(), sb.data());
    t->se_forward({x.data(), B, D, z.data(), M, nu.data(), P, ls.data(), 1.0}, all_se.data(), q.data());
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<double> one(P), c1(F), s1(F), q1(M), one_se(P);
      t->rff_forward({x.data() + b * D, 1, D, om.data(), F, wc.data(), ws.data(), P, 0.5}, one.data(), c1.data(),
                     s1.data());
      t->se_forward({x.data() + b * D, 1, D, z.data(), M, nu.data(), P, ls.data(), 1.0}, one_se.data(), q1.data());
      for (std::size_t p = 0; p < P; ++p) {
        CHECK(one[p] == all[b * P + p]);
        CHECK(one_se[p] == all_se[b * P + p]);
      }
    }
  }
}
