#include <catch2/catch_amalgamated.hpp>

#include "entobs/pure.hpp"

using namespace entobs;

namespace {

PureVec basis_vec(const Subsystem& supp, long k) {
  Vec v = Vec::Zero(supp.dim());
  v(k) = 1.0;
  return PureVec(supp, v);
}

// chain family |phi_0 phi_1 ... > restricted to overlapping two-site patches
PurePatchFamily chain_family(const SiteSystem& sys,
                             const std::vector<Vec>& site_vecs,
                             std::vector<cxd> patch_phases = {}) {
  std::vector<std::vector<int>> patches;
  for (int s = 0; s + 1 < sys.num_sites(); ++s) patches.push_back({s, s + 1});
  Cover cov(sys, patches);
  std::vector<PureVec> vecs;
  for (int s = 0; s + 1 < sys.num_sites(); ++s) {
    PureVec a(Subsystem(sys, {s}), site_vecs[static_cast<size_t>(s)]);
    PureVec b(Subsystem(sys, {s + 1}), site_vecs[static_cast<size_t>(s + 1)]);
    PureVec pv = tensor(a, b);
    if (!patch_phases.empty()) pv = PureVec(pv.support(), patch_phases[static_cast<size_t>(s)] * pv.vec());
    vecs.push_back(pv);
  }
  return PurePatchFamily(cov, vecs);
}

}  // namespace

TEST_CASE("schmidt split of a product vector pins a deterministic factor") {
  SiteSystem sys({2, 3});
  Subsystem both(sys, {0, 1});
  Vec a(2), b(3);
  a << cxd(0.6, 0.0), cxd(0.0, 0.8);
  b << cxd(0.2, 0.1), cxd(0.7, -0.3), cxd(0.1, 0.55);
  b.normalize();
  Vec psi = tensor(PureVec(Subsystem(sys, {0}), a), PureVec(both.minus(Subsystem(sys, {0})), b)).vec();

  auto s1 = detail::schmidt_rank_one(both, psi, Subsystem(sys, {1}));
  auto s2 = detail::schmidt_rank_one(both, cxd(0.0, 1.0) * psi, Subsystem(sys, {1}));
  // complement factor is pinned: real positive largest entry
  REQUIRE((s1.chi - s2.chi).norm() < 1e-10);
  long pin;
  s1.chi.cwiseAbs().maxCoeff(&pin);
  REQUIRE(std::abs(std::arg(s1.chi(pin))) < 1e-10);
  // phase moved into the kept factor
  REQUIRE((s2.xi - cxd(0.0, 1.0) * s1.xi).norm() < 1e-10);
}

TEST_CASE("schmidt split rejects vectors entangled across the cut") {
  SiteSystem sys({2, 2});
  Subsystem both(sys, {0, 1});
  Vec bell = bell_vec(sys, 0, 1, BellKind::PhiPlus).vec();
  try {
    detail::schmidt_rank_one(both, bell, Subsystem(sys, {1}));
    FAIL("expected SchmidtRankExceedsOne");
  } catch (const Error& e) {
    REQUIRE(e.code == Err::SchmidtRankExceedsOne);
  }
}

TEST_CASE("product chain family glues back to the product state") {
  SiteSystem sys({2, 2, 2, 2});
  std::mt19937_64 rng(5);
  std::vector<Vec> sv;
  for (int s = 0; s < 4; ++s) sv.push_back(random_unit_vec(2, rng));
  PurePatchFamily fam = chain_family(sys, sv);

  PureGlueOutcome out = glue_pure_family(fam);
  REQUIRE(out.cls.trivial);
  REQUIRE(out.cls.max_holonomy_err <= 1e-8);
  REQUIRE(out.glued.has_value());
  REQUIRE(out.glued->max_marginal_err <= 1e-8);

  PureVec want = tensor(tensor(PureVec(Subsystem(sys, {0}), sv[0]),
                               PureVec(Subsystem(sys, {1}), sv[1])),
                        tensor(PureVec(Subsystem(sys, {2}), sv[2]),
                               PureVec(Subsystem(sys, {3}), sv[3])));
  cxd ov = want.vec().dot(out.glued->state.vec());
  REQUIRE(std::norm(ov) >= 1.0 - 1e-10);
}

TEST_CASE("per-patch rephasing leaves holonomies invariant") {
  SiteSystem sys({2, 2, 2, 2});
  std::mt19937_64 rng(6);
  std::vector<Vec> sv;
  for (int s = 0; s < 4; ++s) sv.push_back(random_unit_vec(2, rng));

  PhaseCocycle base = extract_phase_cocycle(chain_family(sys, sv));
  std::vector<cxd> ph = {std::polar(1.0, 0.4), std::polar(1.0, -1.3),
                         std::polar(1.0, 2.2)};
  PhaseCocycle shifted = extract_phase_cocycle(chain_family(sys, sv, ph));
  REQUIRE(base.edges == shifted.edges);

  // both classes are trivial and gluing succeeds either way
  REQUIRE(cocycle_class(base).trivial);
  REQUIRE(cocycle_class(shifted).trivial);
  for (size_t e = 0; e < base.edges.size(); ++e) {
    auto [i, j] = base.edges[e];
    cxd expected = base.g[e] * std::conj(ph[static_cast<size_t>(i)]) * ph[static_cast<size_t>(j)];
    REQUIRE(std::abs(shifted.g[e] - expected) < 1e-9);
  }
}

TEST_CASE("triple identity holds on a cover with a common site") {
  SiteSystem sys({2, 2, 2, 2});
  std::mt19937_64 rng(7);
  std::vector<Vec> sv;
  for (int s = 0; s < 4; ++s) sv.push_back(random_unit_vec(2, rng));
  Cover cov(sys, {{0, 1}, {0, 2}, {0, 3}});
  auto pv = [&](int a, int b) {
    return tensor(PureVec(Subsystem(sys, {a}), sv[static_cast<size_t>(a)]),
                  PureVec(Subsystem(sys, {b}), sv[static_cast<size_t>(b)]));
  };
  PurePatchFamily fam(cov, {pv(0, 1), pv(0, 2), pv(0, 3)});
  PhaseCocycle pc = extract_phase_cocycle(fam);
  REQUIRE(pc.edges.size() == 3);
  REQUIRE(pc.max_triple_residual <= 1e-9);
  REQUIRE(cocycle_class(pc).trivial);
}

TEST_CASE("entangled overlap marginal is reported with its purity") {
  SiteSystem sys({2, 2, 2});
  Cover cov(sys, {{0, 1}, {1, 2}});
  PureVec b01 = bell_vec(sys, 0, 1, BellKind::PhiPlus);
  PureVec b12 = bell_vec(sys, 1, 2, BellKind::PhiPlus);
  PurePatchFamily fam(cov, {b01, b12});
  try {
    extract_phase_cocycle(fam);
    FAIL("expected OverlapNotPure");
  } catch (const Error& e) {
    REQUIRE(e.code == Err::OverlapNotPure);
    REQUIRE(std::string(e.what()).find("0.5") != std::string::npos);
  }
}

TEST_CASE("mismatched overlap marginals are rejected") {
  SiteSystem sys({2, 2});
  Cover cov(sys, {{0}, {0, 1}});
  Vec up(2), mixed(4);
  up << 1.0, 0.0;
  Vec a(2), b(2);
  a << cxd(1.0 / std::sqrt(2.0), 0), cxd(1.0 / std::sqrt(2.0), 0);
  b << 1.0, 0.0;
  PureVec big = tensor(PureVec(Subsystem(sys, {0}), a), PureVec(Subsystem(sys, {1}), b));
  PurePatchFamily fam(cov, {PureVec(Subsystem(sys, {0}), up), big});
  try {
    extract_phase_cocycle(fam);
    FAIL("expected NotCompatible");
  } catch (const Error& e) {
    REQUIRE(e.code == Err::NotCompatible);
  }
}

TEST_CASE("hollow triangle supports a nontrivial injected cocycle") {
  SiteSystem sys({2, 2, 2});
  Cover cov(sys, {{0, 1}, {1, 2}, {0, 2}});
  PhaseCocycle pc{cov,
                  {{0, 1}, {0, 2}, {1, 2}},
                  {cxd(1.0, 0.0), std::polar(1.0, M_PI / 3.0), cxd(1.0, 0.0)},
                  0.0};
  CocycleClass cls = cocycle_class(pc);
  REQUIRE_FALSE(cls.trivial);
  REQUIRE(cls.max_holonomy_err ==
          Catch::Approx(std::abs(std::polar(1.0, -M_PI / 3.0) - 1.0)).margin(1e-10));

  // flattening the phase restores triviality
  pc.g[1] = 1.0;
  CocycleClass flat = cocycle_class(pc);
  REQUIRE(flat.trivial);
  REQUIRE(flat.max_holonomy_err <= 1e-12);
}

TEST_CASE("gluing refuses a nontrivial class") {
  SiteSystem sys({2, 2, 2});
  std::mt19937_64 rng(8);
  std::vector<Vec> sv;
  for (int s = 0; s < 3; ++s) sv.push_back(random_unit_vec(2, rng));
  PurePatchFamily fam = chain_family(sys, sv);
  CocycleClass fake;
  fake.trivial = false;
  try {
    tree_glue(fam, fake);
    FAIL("expected NotClosed");
  } catch (const Error& e) {
    REQUIRE(e.code == Err::NotClosed);
  }
}

TEST_CASE("disconnected covers glue component by component") {
  SiteSystem sys({2, 2, 2, 2});
  std::mt19937_64 rng(9);
  std::vector<Vec> sv;
  for (int s = 0; s < 4; ++s) sv.push_back(random_unit_vec(2, rng));
  Cover cov(sys, {{0, 1}, {2, 3}});
  auto pv = [&](int a, int b) {
    return tensor(PureVec(Subsystem(sys, {a}), sv[static_cast<size_t>(a)]),
                  PureVec(Subsystem(sys, {b}), sv[static_cast<size_t>(b)]));
  };
  PurePatchFamily fam(cov, {pv(0, 1), pv(2, 3)});
  PureGlueOutcome out = glue_pure_family(fam);
  REQUIRE(out.glued.has_value());
  PureVec want = tensor(pv(0, 1), pv(2, 3));
  REQUIRE(std::norm(want.vec().dot(out.glued->state.vec())) >= 1.0 - 1e-10);
}
