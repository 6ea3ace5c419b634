#include <catch2/catch_amalgamated.hpp>

#include "entobs/uhlmann.hpp"

using namespace entobs;

namespace {

// degree of the unit map k -> h(k)/|h(k)| via triangulated solid angles
double sphere_degree(const std::function<Eigen::Vector3d(double, double)>& h,
                     int n) {
  TorusMesh mesh(n);
  auto unit = [&](int i, int j) {
    Eigen::Vector3d v = h(mesh.kx(i), mesh.ky(j));
    return Eigen::Vector3d(v / v.norm());
  };
  auto tri = [](const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                const Eigen::Vector3d& c) {
    double num = a.dot(b.cross(c));
    double den = 1.0 + a.dot(b) + a.dot(c) + b.dot(c);
    return 2.0 * std::atan2(num, den);
  };
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Eigen::Vector3d v00 = unit(i, j), v10 = unit(i + 1, j);
      Eigen::Vector3d v01 = unit(i, j + 1), v11 = unit(i + 1, j + 1);
      total += tri(v00, v10, v11) + tri(v00, v11, v01);
    }
  return total / (4.0 * M_PI);
}

Eigen::Vector3d qwz_field(double m, double kx, double ky) {
  return Eigen::Vector3d(std::sin(kx), std::sin(ky),
                         m + std::cos(kx) + std::cos(ky));
}

// Gauss-Legendre nodes and weights on [0, 1]
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(static_cast<size_t>(n), 0.0);
  w.assign(static_cast<size_t>(n), 0.0);
  for (int k = 0; k < n; ++k) {
    double t = std::cos(M_PI * (k + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int j = 2; j <= n; ++j) {
        double p2 = ((2.0 * j - 1.0) * t * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      double dp = n * (t * p1 - p0) / (t * t - 1.0);
      double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    double p0 = 1.0, p1 = t;
    for (int j = 2; j <= n; ++j) {
      double p2 = ((2.0 * j - 1.0) * t * p1 - (j - 1.0) * p0) / j;
      p0 = p1;
      p1 = p2;
    }
    double dp = n * (t * p1 - p0) / (t * t - 1.0);
    x[static_cast<size_t>(k)] = 0.5 * (1.0 + t);
    w[static_cast<size_t>(k)] = 1.0 / ((1.0 - t * t) * dp * dp);
  }
}

// curvature families used by the frozen-value checks
std::function<Mat(double, double)> bkm_family() {
  return [](double t1, double t2) {
    Mat sx(2, 2), sy(2, 2), sz(2, 2);
    sx << 0, 1, 1, 0;
    sy << 0, cxd(0, -1), cxd(0, 1), 0;
    sz << 1, 0, 0, -1;
    Mat H = std::cos(t1) * sx + std::sin(t1) * std::cos(t2) * sy +
            std::sin(t1) * std::sin(t2) * sz + 0.3 * std::cos(t2) * sx;
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    RVec p = (-1.7 * (es.eigenvalues().array() - es.eigenvalues().minCoeff()))
                 .exp()
                 .matrix();
    p /= p.sum();
    return Mat(es.eigenvectors() * p.asDiagonal() * es.eigenvectors().adjoint());
  };
}

Mat mat_pow(const Mat& rho, double s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(rho);
  RVec p = es.eigenvalues().array().pow(s).matrix();
  return es.eigenvectors() * p.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace

TEST_CASE("two-band chern numbers across the mass phase diagram") {
  TorusMesh mesh(24);
  struct Row {
    double m;
    int c;
  };
  for (Row row : {Row{1.0, 1}, Row{-1.0, -1}, Row{3.0, 0}, Row{-3.0, 0}}) {
    LatticeBundle b = build_band_bundle(qwz_model(row.m), mesh);
    REQUIRE(b.frame_cols == 1);
    REQUIRE(b.r_plus == 1);
    REQUIRE(b.r_minus == 0);
    ChernResult c = fhs_abelian_chern(b, Sector::Plus);
    REQUIRE(c.chern == row.c);
    REQUIRE(std::abs(c.raw - c.chern) < 1e-6);
  }
}

TEST_CASE("chern number is mesh independent once converged") {
  ChernResult c24 = fhs_abelian_chern(
      build_band_bundle(qwz_model(1.0), TorusMesh(24)), Sector::Plus);
  ChernResult c48 = fhs_abelian_chern(
      build_band_bundle(qwz_model(1.0), TorusMesh(48)), Sector::Plus);
  REQUIRE(c24.chern == c48.chern);
}

TEST_CASE("chern number matches the solid angle degree oracle") {
  TorusMesh mesh(24);
  for (double m : {1.0, -1.0, 3.0}) {
    double deg = sphere_degree(
        [m](double kx, double ky) { return qwz_field(m, kx, ky); }, 48);
    REQUIRE(std::abs(deg - std::llround(deg)) < 1e-8);
    LatticeBundle b = build_band_bundle(qwz_model(m), mesh);
    ChernResult c = fhs_abelian_chern(b, Sector::Plus);
    REQUIRE(c.chern == -std::llround(deg));
  }
}

TEST_CASE("thermal amplitude frames reproduce the band invariant") {
  TorusMesh mesh(24);
  LatticeBundle gb = build_gibbs_bundle(qwz_model(1.0), mesh, 40.0);
  REQUIRE(gb.kind == FrameKind::Amplitude);
  REQUIRE(gb.r_plus == 1);
  REQUIRE(gb.r_minus == 0);
  NuEntResult nu = nu_ent(gb);
  REQUIRE(nu.c_plus == 1);
  REQUIRE(nu.nu == 1);
  REQUIRE(nu.min_link_modulus > 0.9);
  REQUIRE(nu.min_link_modulus < 1.0);
}

TEST_CASE("stacked copies cancel in total but split under the witness") {
  TorusMesh mesh(24);
  LatticeBundle b = build_band_bundle(stacked_model(1.0, -1.0), mesh);
  REQUIRE(b.frame_cols == 2);
  REQUIRE(b.r_plus == 1);
  REQUIRE(b.r_minus == 1);
  ChernResult total = fhs_abelian_chern(b, Sector::All);
  REQUIRE(total.chern == 0);
  NuEntResult nu = nu_ent(b);
  REQUIRE(nu.c_plus == 1);
  REQUIRE(nu.c_minus == -1);
  REQUIRE(nu.nu == 2);
}

TEST_CASE("replica multiplicity scales the sector invariants") {
  TorusMesh mesh(24);
  LatticeBundle b = build_band_bundle(replicated_model(1.0, 2, 1), mesh);
  REQUIRE(b.frame_cols == 3);
  REQUIRE(b.r_plus == 2);
  REQUIRE(b.r_minus == 1);
  NuEntResult nu = nu_ent(b);
  REQUIRE(nu.c_plus == 2);
  REQUIRE(nu.c_minus == 1);
  REQUIRE(nu.nu == 1);
}

TEST_CASE("sector gauge transformations do not move plaquette phases") {
  TorusMesh mesh(12);
  LatticeBundle b = build_band_bundle(stacked_model(1.0, -1.0), mesh);
  LatticeBundle g = randomize_sector_gauge(b, 424242);
  NuEntResult n0 = nu_ent(b);
  NuEntResult n1 = nu_ent(g);
  REQUIRE(n0.nu == n1.nu);
  for (Sector s : {Sector::Plus, Sector::Minus}) {
    ChernResult c0 = fhs_abelian_chern(b, s);
    ChernResult c1 = fhs_abelian_chern(g, s);
    REQUIRE(c0.chern == c1.chern);
    for (size_t p = 0; p < c0.plaquette_phase.size(); ++p)
      REQUIRE(std::abs(c0.plaquette_phase[p] - c1.plaquette_phase[p]) <=
              1e-10);
  }
}

TEST_CASE("holonomy character around an elementary plaquette") {
  TorusMesh mesh(12);
  LatticeBundle b = build_band_bundle(qwz_model(1.0), mesh);
  std::vector<std::pair<int, int>> loop = {
      {0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 0}};
  cxd w = wilson_loop(b, loop);
  REQUIRE(std::abs(std::abs(w) - 1.0) < 1e-12);
  ChernResult c = fhs_abelian_chern(b, Sector::Plus);
  cxd expect = std::polar(1.0, c.plaquette_phase[static_cast<size_t>(
                                   mesh.idx(0, 0))]);
  REQUIRE(std::abs(w - expect) < 1e-10);

  std::vector<std::pair<int, int>> rev(loop.rbegin(), loop.rend());
  REQUIRE(std::abs(wilson_loop(b, rev) - std::conj(w)) < 1e-12);
}

TEST_CASE("invariant jumps by an integer across the transition") {
  auto bundle_at = [](double m) {
    return build_band_bundle(qwz_model(m), TorusMesh(12));
  };
  QeiJump qj = qei_jump(bundle_at, 1.5, 2.5);
  REQUIRE(qj.at_a.nu == 1);
  REQUIRE(qj.at_b.nu == 0);
  REQUIRE(qj.jump == -1);
}

TEST_CASE("non parallel witness splittings are rejected") {
  ModelField f = qwz_model(1.0);
  f.witness = [](double, double) {
    Mat S(2, 2);
    S << 1, 0, 0, -1;
    return S;
  };
  try {
    build_band_bundle(f, TorusMesh(6));
    FAIL("expected NonParallelSplitting");
  } catch (const Error& e) {
    REQUIRE(e.code == Err::NonParallelSplitting);
  }
}

TEST_CASE("gap closing at a mesh point is rejected") {
  try {
    build_band_bundle(qwz_model(2.0), TorusMesh(24));
    FAIL("expected SingularLink");
  } catch (const Error& e) {
    REQUIRE(e.code == Err::SingularLink);
  }
}

TEST_CASE("curvature value agrees with the integral representation") {
  auto fam = bkm_family();
  BkmResult r = bkm_curvature(fam, 0.7, 1.1, 1e-4);
  REQUIRE(r.value == Catch::Approx(1.771955430799).margin(1e-8));
  REQUIRE(r.richardson_err <= 1e-4 * std::max(1.0, std::abs(r.refined)));

  // independent oracle: (i/2) integral of tr(rho^s [C, D] rho^{1-s}) ds
  const double h = 1e-4;
  auto mlog = [](const Mat& rho) {
    Eigen::SelfAdjointEigenSolver<Mat> es(rho);
    RVec lw = es.eigenvalues().array().log().matrix();
    return Mat(es.eigenvectors() * (-lw).asDiagonal() *
               es.eigenvectors().adjoint());
  };
  Mat C = (mlog(fam(0.7 + h, 1.1)) - mlog(fam(0.7 - h, 1.1))) / (2.0 * h);
  Mat D = (mlog(fam(0.7, 1.1 + h)) - mlog(fam(0.7, 1.1 - h))) / (2.0 * h);
  Mat rho = fam(0.7, 1.1);
  std::vector<double> xs, ws;
  gauss_legendre(256, xs, ws);
  double quad = 0.0;
  for (size_t k = 0; k < xs.size(); ++k) {
    Mat integrand = mat_pow(rho, xs[k]) * (C * D - D * C) *
                    mat_pow(rho, 1.0 - xs[k]);
    quad += ws[k] * (cxd(0.0, 0.5) * integrand.trace()).real();
  }
  REQUIRE(r.value == Catch::Approx(quad).margin(1e-6));
}

TEST_CASE("curvature is antisymmetric in the parameter order") {
  BkmResult r = bkm_curvature(bkm_family(), 0.7, 1.1, 1e-4);
  REQUIRE(std::abs(r.value + r.value_swapped) <= 1e-8);
}

TEST_CASE("commuting families carry zero curvature") {
  auto fam = [](double t1, double t2) {
    Mat sz(2, 2);
    sz << 1, 0, 0, -1;
    Mat H = (std::cos(t1) + std::sin(t2)) * sz;
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    RVec p = (-(es.eigenvalues().array() - es.eigenvalues().minCoeff()))
                 .exp()
                 .matrix();
    p /= p.sum();
    return Mat(es.eigenvectors() * p.asDiagonal() *
               es.eigenvectors().adjoint());
  };
  BkmResult r = bkm_curvature(fam, 0.4, 0.9, 1e-4);
  REQUIRE(std::abs(r.value) <= 1e-10);
}

TEST_CASE("coarse difference steps are refused") {
  try {
    bkm_curvature(bkm_family(), 0.7, 1.1, 0.5);
    FAIL("expected StepTooLarge");
  } catch (const Error& e) {
    REQUIRE(e.code == Err::StepTooLarge);
  }
}

TEST_CASE("rank deficient states are refused") {
  auto fam = [](double, double) {
    Mat rho(2, 2);
    rho << 1.0 - 1e-14, 0, 0, 1e-14;
    return rho;
  };
  try {
    bkm_curvature(fam, 0.0, 0.0, 1e-4);
    FAIL("expected NotFullRank");
  } catch (const Error& e) {
    REQUIRE(e.code == Err::NotFullRank);
  }
}
