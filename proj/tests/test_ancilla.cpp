#include <catch2/catch_amalgamated.hpp>

#include "entobs/ancilla.hpp"

using namespace entobs;

namespace {

// level-q basis element for a flat column index of matricize_delta_E
Mat level_element(const Thickening& th, long col) {
  ProductBasis pb(th.base);
  const auto& ab = site_herm_basis(th.aux_dim);
  const long da = static_cast<long>(ab.size());
  long legs = 1;
  for (int l = 0; l < th.q; ++l) legs *= da;
  Mat el = pb.element(col / legs);
  long rest = col % legs;
  std::vector<long> digs(static_cast<size_t>(th.q));
  for (int l = th.q - 1; l >= 0; --l) {
    digs[static_cast<size_t>(l)] = rest % da;
    rest /= da;
  }
  for (int l = 0; l < th.q; ++l)
    el = detail::append_factor(el, ab[static_cast<size_t>(digs[static_cast<size_t>(l)])]);
  return el;
}

RVec level_expand(const Thickening& th, const Mat& X) {
  long n = 1;
  ProductBasis pb(th.base);
  const long da = static_cast<long>(site_herm_basis(th.aux_dim).size());
  n = pb.size();
  for (int l = 0; l < th.q; ++l) n *= da;
  RVec v(n);
  for (long c = 0; c < n; ++c)
    v(c) = (level_element(th, c).adjoint() * X).trace().real();
  return v;
}

}  // namespace

TEST_CASE("reset channel is idempotent and trace preserving") {
  SiteSystem sys({2});
  Thickening th = Thickening::maximally_mixed(Subsystem(sys, {0}), 2);
  std::mt19937_64 rng(3);
  Mat X = random_herm_matrix(th.dim(), rng);
  Mat r0 = reset_map(X, 0, th);
  REQUIRE((reset_map(r0, 0, th) - r0).norm() < 1e-12);
  REQUIRE(std::abs(r0.trace().real() - X.trace().real()) < 1e-12);
  // resets on different legs commute
  Mat a = reset_map(reset_map(X, 0, th), 1, th);
  Mat b = reset_map(reset_map(X, 1, th), 0, th);
  REQUIRE((a - b).norm() < 1e-12);
}

TEST_CASE("differential squares to zero") {
  SiteSystem sys({2});
  std::mt19937_64 rng(7);
  for (int q = 0; q <= 2; ++q) {
    Thickening th = Thickening::maximally_mixed(Subsystem(sys, {0}), q);
    Mat X = random_herm_matrix(th.dim(), rng);
    Mat d1 = delta_E(X, th);
    Mat d2 = delta_E(d1, th.level(q + 1));
    REQUIRE(d2.norm() < 1e-12 * std::max(1.0, X.norm()));
  }
}

TEST_CASE("cofaces satisfy the cosimplicial identities") {
  SiteSystem sys({2});
  std::mt19937_64 rng(5);
  for (int q = 0; q <= 2; ++q) {
    Thickening th = Thickening::maximally_mixed(Subsystem(sys, {0}), q);
    Thickening up = th.level(q + 1);
    Mat X = random_herm_matrix(th.dim(), rng);
    // the two insert-only cofaces agree on all inputs
    REQUIRE((coface(X, 0, th) - coface(X, 1, th)).cwiseAbs().maxCoeff() <=
            1e-12);
    for (int i = 0; i <= q + 1; ++i) {
      for (int j = i + 1; j <= q + 2; ++j) {
        Mat lhs = coface(coface(X, i, th), j, up);
        Mat rhs = coface(coface(X, j - 1, th), i, up);
        REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
      }
    }
  }
}

TEST_CASE("parity collapse on admissible candidates") {
  SiteSystem sys({2, 2});
  Subsystem patch(sys, {0, 1});
  DensityOp rho = bell_state(sys, 0, 1, BellKind::PhiPlus);
  std::mt19937_64 rng(11);
  for (int q : {1, 2, 3}) {
    Thickening th = Thickening::maximally_mixed(patch, q);
    for (int rep = 0; rep < 5; ++rep) {
      Mat Y = random_candidate(rho, th, rng);
      REQUIRE(candidate_residual(Y, rho, th) < 1e-10);
      Mat d = delta_E(Y, th);
      if (q % 2 == 0) {
        REQUIRE(d.norm() <= 1e-10);
      } else {
        Mat want = thicken_state(rho, th.level(q + 1));
        REQUIRE((d - want).norm() <= 1e-10);
      }
    }
  }
}

TEST_CASE("matricized differential matches the literal operator") {
  SiteSystem sys({2});
  Subsystem patch(sys, {0});
  std::mt19937_64 rng(13);
  Mat tau_rand = random_density(Subsystem(SiteSystem({3}), {0}), rng).matrix();
  // faithful bump
  tau_rand = 0.8 * tau_rand + 0.2 * Mat::Identity(3, 3) / 3.0;
  for (int q : {0, 1, 2}) {
    for (const Mat& t : {Mat(Mat::Identity(2, 2) / 2.0), tau_rand}) {
      const int d = static_cast<int>(t.rows());
      Thickening th(patch, q, d, t);
      RMat D = matricize_delta_E(th);
      const long ncols = D.cols();
      for (long col = 0; col < std::min<long>(ncols, 20); ++col) {
        Mat el = level_element(th, col);
        Mat de = delta_E(el, th);
        RVec lit = level_expand(th.level(q + 1), de);
        REQUIRE((D.col(col) - lit).norm() < 1e-10);
      }
    }
  }
}

TEST_CASE("local group dimensions on a qubit patch") {
  SiteSystem sys({2});
  Subsystem patch(sys, {0});
  Thickening proto = Thickening::maximally_mixed(patch, 0);
  auto dims = local_groups(patch, 2, proto);
  REQUIRE(dims.size() == 3);
  REQUIRE(dims[0].space_dim == 4);
  REQUIRE(dims[0].dim_eq == 4);
  CHECK(dims[0].rank_delta == 0);
  REQUIRE(dims[1].space_dim == 16);
  REQUIRE(dims[1].dim_eq == 12);
  REQUIRE(dims[2].space_dim == 64);
  REQUIRE(dims[2].dim_eq == 48);
}

TEST_CASE("local group dimension on a two-qubit patch") {
  SiteSystem sys({2, 2});
  Subsystem patch(sys, {0, 1});
  Thickening proto = Thickening::maximally_mixed(patch, 0);
  auto dims = local_groups(patch, 1, proto);
  REQUIRE(dims[0].dim_eq == 16);
  REQUIRE(dims[1].dim_eq == 48);
}

TEST_CASE("signed pairing cross-checks its two evaluation routes") {
  SiteSystem sys({2, 2});
  Subsystem patch(sys, {0, 1});
  DensityOp rho = bell_state(sys, 0, 1, BellKind::PhiPlus);
  Thickening th = Thickening::maximally_mixed(patch, 1);
  std::mt19937_64 rng(17);
  Mat Y = random_candidate(rho, th, rng);
  Mat W = random_herm_matrix(th.dim() * th.aux_dim, rng);
  REQUIRE_NOTHROW(signed_pairing(W, Y, th));
}

TEST_CASE("detectability ladder fires the transpose rung on bell") {
  SiteSystem sys({2, 2});
  Subsystem patch(sys, {0, 1});
  DensityOp bell = bell_state(sys, 0, 1, BellKind::PhiPlus);
  Thickening proto = Thickening::maximally_mixed(patch, 0);

  LedResult r0 = led_test(bell, 0, proto);
  REQUIRE(r0.status == LedStatus::Detected);
  REQUIRE(r0.stage == LedStage::Transpose);
  REQUIRE(r0.value == Catch::Approx(-0.5).margin(1e-9));
  REQUIRE(r0.base_witness.has_value());
  REQUIRE(r0.base_witness->status == WitnessStatus::Verified);
}

TEST_CASE("even orders are impossible, odd orders inherit the base value") {
  SiteSystem sys({2, 2});
  Subsystem patch(sys, {0, 1});
  DensityOp bell = bell_state(sys, 0, 1, BellKind::PhiPlus);
  Thickening proto = Thickening::maximally_mixed(patch, 0);

  LedResult r2 = led_test(bell, 2, proto);
  REQUIRE(r2.status == LedStatus::ImpossibleParity);

  LedResult r0 = led_test(bell, 0, proto);
  for (int q : {1, 3}) {
    LedResult rq = led_test(bell, q, proto);
    REQUIRE(rq.status == LedStatus::Detected);
    REQUIRE(rq.value == r0.value);  // bit-identical
    REQUIRE(rq.thick_candidate.has_value());
    REQUIRE(rq.thick_witness.has_value());
    // the exhibits pair to the same value on the thickening
    double thick = (*rq.thick_witness * *rq.thick_candidate).trace().real();
    REQUIRE(thick == Catch::Approx(r0.value).margin(1e-12));
    // and the differential route reproduces it one level up
    Thickening th(patch, q, proto.aux_dim, proto.tau);
    Mat Wup = detail::append_factor(
        *rq.thick_witness, Mat::Identity(proto.aux_dim, proto.aux_dim));
    double via_delta = signed_pairing(Wup, *rq.thick_candidate, th);
    REQUIRE(via_delta == Catch::Approx(r0.value).margin(1e-10));
  }
}

TEST_CASE("separable patches are not detected") {
  SiteSystem sys({2, 2});
  Subsystem patch(sys, {0, 1});
  Mat d0(2, 2), d1(2, 2);
  d0 << 0.3, 0, 0, 0.7;
  d1 << 0.6, 0, 0, 0.4;
  DensityOp prod = product_state({DensityOp(Subsystem(sys, {0}), d0),
                                  DensityOp(Subsystem(sys, {1}), d1)});
  Thickening proto = Thickening::maximally_mixed(patch, 0);
  LedResult r = led_test(prod, 0, proto);
  REQUIRE(r.status == LedStatus::NotDetected);
  // single-site patches are never detected
  DensityOp single(Subsystem(sys, {0}), d0);
  Thickening sproto = Thickening::maximally_mixed(Subsystem(sys, {0}), 0);
  REQUIRE(led_test(single, 0, sproto).status == LedStatus::NotDetected);
}

TEST_CASE("group dimensions are independent of the ancilla reference") {
  SiteSystem sys({2});
  Subsystem patch(sys, {0});
  Mat tau = Mat::Identity(2, 2) / 2.0;
  Mat tau_prime(2, 2);
  tau_prime << 0.65, cxd(0.1, 0.05), cxd(0.1, -0.05), 0.35;
  TauIndependence ti = tau_independence_check(patch, 1, tau, tau_prime, 2);
  REQUIRE(ti.ok);
  REQUIRE(ti.max_intertwine_err <= 1e-10);
  REQUIRE(ti.dims.size() == ti.dims_prime.size());
  for (size_t i = 0; i < ti.dims.size(); ++i)
    REQUIRE(ti.dims[i].dim_eq == ti.dims_prime[i].dim_eq);
}
