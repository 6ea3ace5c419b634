#include <catch2/catch_amalgamated.hpp>

#include "entobs/pipeline.hpp"

using namespace entobs;

namespace {

MarginalInstance monogamy_instance() {
  SiteSystem sys({2, 2, 2});
  Cover cov(sys, {{0, 1}, {1, 2}});
  return MarginalInstance(cov, {bell_state(sys, 0, 1, BellKind::PhiPlus),
                                bell_state(sys, 1, 2, BellKind::PhiPlus)});
}

MarginalInstance product_instance() {
  SiteSystem sys({2, 2, 2});
  Cover cov(sys, {{0, 1}, {1, 2}});
  Mat d0(2, 2), d1(2, 2), d2(2, 2);
  d0 << 0.3, 0, 0, 0.7;
  d1 << 0.6, 0, 0, 0.4;
  d2 << 0.5, 0, 0, 0.5;
  DensityOp s0(Subsystem(sys, {0}), d0);
  DensityOp s1(Subsystem(sys, {1}), d1);
  DensityOp s2(Subsystem(sys, {2}), d2);
  return MarginalInstance(cov, {product_state({s0, s1}),
                                product_state({s1, s2})});
}

}  // namespace

TEST_CASE("digest matches the reference fnv1a vectors") {
  REQUIRE(io::digest_hex("") == "cbf29ce484222325");
  REQUIRE(io::digest_hex("a") == "af63dc4c8601ec8c");
  REQUIRE(io::digest_hex("entobs") == io::digest_hex("entobs"));
}

TEST_CASE("matrix and vector json round trips") {
  std::mt19937_64 rng(2);
  Mat m = random_herm_matrix(3, rng);
  REQUIRE((io::matrix_from_json(io::matrix_to_json(m)) - m).norm() == 0.0);
  Vec v = random_unit_vec(5, rng);
  REQUIRE((io::vector_from_json(io::vector_to_json(v)) - v).norm() == 0.0);
}

TEST_CASE("state files round trip in all three kinds") {
  SiteSystem sys({2, 3});
  std::mt19937_64 rng(3);

  DensityOp rho = random_density(Subsystem(sys, {0, 1}), rng);
  io::StateFile sf = io::read_state(io::write_state(rho));
  REQUIRE(sf.kind == "density");
  REQUIRE(sf.sys == sys);
  REQUIRE((sf.density().matrix() - rho.matrix()).norm() == 0.0);

  HermOp h(Subsystem(sys, {1}), random_herm_matrix(3, rng));
  io::StateFile hf = io::read_state(io::write_state(h));
  REQUIRE(hf.kind == "herm");
  REQUIRE((hf.herm().matrix() - h.matrix()).norm() == 0.0);

  PureVec p(Subsystem(sys, {0}), random_unit_vec(2, rng));
  io::StateFile pf = io::read_state(io::write_state(p));
  REQUIRE(pf.kind == "pure");
  REQUIRE((pf.pure().vec() - p.vec()).norm() == 0.0);

  // support defaults to all sites, kind to density
  io::json j = io::write_state(random_density(Subsystem(sys, {0, 1}), rng));
  j.erase("support");
  j.erase("kind");
  REQUIRE(io::read_state(j).support.sites() == std::vector<int>({0, 1}));
}

TEST_CASE("malformed state files are parse errors") {
  try {
    io::read_state(io::json::object());
    FAIL("expected ParseError");
  } catch (const Error& e) {
    REQUIRE(e.code == Err::ParseError);
  }
}

TEST_CASE("covers and cochains round trip") {
  SiteSystem sys({2, 2, 3});
  Cover cov(sys, {{0, 1}, {1, 2}});
  io::json cj = io::write_cover(cov);
  REQUIRE(io::read_cover(cj) == cov);
  REQUIRE(io::read_cover(cj, sys) == cov);

  std::mt19937_64 rng(4);
  Cochain c = Cochain::zero(cov, 1);
  auto ts = index_tuples(cov.num_patches(), 2);
  for (size_t t = 0; t < ts.size(); ++t)
    c.comp(t) = random_herm_matrix(cov.isect(ts[t]).dim(), rng);
  Cochain back = io::read_cochain(io::write_cochain(c));
  REQUIRE(back.degree() == 1);
  REQUIRE((back - c).norm() == 0.0);
}

TEST_CASE("witnesses round trip with structure and refuter") {
  SiteSystem sys({2, 2});
  DensityOp bell = bell_state(sys, 0, 1, BellKind::PhiPlus);
  ChshDesign d = chsh_optimal_for(bell);
  io::json wj = io::write_witness(d.witness);
  Witness back = io::read_witness(wj);
  REQUIRE(back.status == d.witness.status);
  REQUIRE((back.op.matrix() - d.witness.op.matrix()).norm() == 0.0);
  REQUIRE(back.structure.groups == d.witness.structure.groups);
}

TEST_CASE("instances and certificates round trip") {
  MarginalInstance inst = monogamy_instance();
  MarginalInstance back = io::read_instance(io::write_instance(inst));
  REQUIRE(back.cover == inst.cover);
  for (size_t i = 0; i < inst.marginals.size(); ++i)
    REQUIRE((back.marginals[i].matrix() - inst.marginals[i].matrix()).norm() ==
            0.0);

  FaithfulProduct tau =
      FaithfulProduct::maximally_mixed(inst.cover.system(), 2);
  SolveResult sol = solve_psd_extension(inst, tau);
  REQUIRE(sol.status == SolveStatus::Infeasible);
  InfeasibilityCertificate cert = extract_certificate(inst, sol);
  InfeasibilityCertificate cback =
      io::read_certificate(io::write_certificate(cert, true));
  REQUIRE(cback.kind == InfeasibilityCertificate::Kind::PsdExtension);
  REQUIRE(cback.alpha == cert.alpha);
  REQUIRE(verify_certificate(cback, inst).valid);

  auto sep = separable_infeasibility(inst);
  REQUIRE(sep.has_value());
  InfeasibilityCertificate sback =
      io::read_certificate(io::write_certificate(*sep, true));
  REQUIRE(sback.kind == InfeasibilityCertificate::Kind::SeparableExtension);
  REQUIRE(sback.patch == sep->patch);
  REQUIRE(verify_certificate(sback, inst).valid);
}

TEST_CASE("pure families match vectors to patches by site set") {
  SiteSystem sys({2, 2, 2});
  std::mt19937_64 rng(5);
  Vec a = random_unit_vec(2, rng), b = random_unit_vec(2, rng),
      c = random_unit_vec(2, rng);
  auto pv = [&](int s0, int s1, const Vec& x, const Vec& y) {
    return tensor(PureVec(Subsystem(sys, {s0}), x),
                  PureVec(Subsystem(sys, {s1}), y));
  };
  io::json j;
  j["sites"] = std::vector<int>{2, 2, 2};
  // patches listed out of order relative to the sorted cover
  j["patches"] = io::json::array({io::json::array({1, 2}), io::json::array({0, 1})});
  j["vectors"] = io::json::array({io::vector_to_json(pv(1, 2, b, c).vec()),
                                  io::vector_to_json(pv(0, 1, a, b).vec())});
  PurePatchFamily fam = io::read_pure_family(j);
  REQUIRE(fam.cover().patch(0).sites() == std::vector<int>({0, 1}));
  // the family renormalizes on construction; serialization itself is exact
  REQUIRE((fam.vec(0).vec() - pv(0, 1, a, b).normalized().vec()).norm() == 0.0);
  REQUIRE((fam.vec(1).vec() - pv(1, 2, b, c).normalized().vec()).norm() == 0.0);

  PurePatchFamily rt = io::read_pure_family(io::write_pure_family(fam));
  REQUIRE((rt.vec(0).vec() - fam.vec(0).normalized().vec()).norm() == 0.0);
}

TEST_CASE("config round trips and missing keys take defaults") {
  PipelineConfig c;
  c.tol = 1e-7;
  c.q_schedule = {0, 2};
  c.mesh = 12;
  c.seed = 99;
  PipelineConfig back = read_config(write_config(c));
  REQUIRE(back.tol == c.tol);
  REQUIRE(back.q_schedule == c.q_schedule);
  REQUIRE(back.mesh == c.mesh);
  REQUIRE(back.seed == c.seed);

  PipelineConfig defaults = read_config(io::json::object());
  REQUIRE(defaults.dykstra_max_iter == 20000);
  REQUIRE(defaults.q_schedule == std::vector<int>({0, 1, 3}));
}

TEST_CASE("report json round trips losslessly") {
  PipelineConfig cfg;
  TestReport r = run_pipeline(monogamy_instance(), cfg);
  io::json j = report_to_json(r);
  io::json j2 = report_to_json(report_from_json(j));
  REQUIRE(j.dump() == j2.dump());
}

TEST_CASE("nonunique marginals of an entangled state are an obstruction") {
  SiteSystem sys({2, 2});
  DensityOp bell = bell_state(sys, 0, 1, BellKind::PhiPlus);
  Cover cov(sys, {{0}, {1}});
  PipelineConfig cfg;
  TestReport r = run_pipeline(bell, cov, cfg);
  REQUIRE(r.compatible);
  REQUIRE(r.dim_r0 == 9);
  REQUIRE(r.nonuniqueness_exhibited);
  REQUIRE(r.separation > 0.5);
  REQUIRE(r.feas_status == "feasible");
  REQUIRE(r.verdict == "obstruction_found");
}

TEST_CASE("product marginals raise no flags") {
  PipelineConfig cfg;
  TestReport r = run_pipeline(product_instance(), cfg);
  REQUIRE(r.compatible);
  REQUIRE(r.feas_status == "feasible");
  REQUIRE_FALSE(r.psd_certificate.has_value());
  REQUIRE_FALSE(r.separable_certificate.has_value());
  for (const auto& e : r.led) REQUIRE(e.status != "detected");
  REQUIRE(r.verdict == "no_detection_at_effort");
}

TEST_CASE("overlapping bell pairs are certified entangled") {
  PipelineConfig cfg;
  TestReport r = run_pipeline(monogamy_instance(), cfg);
  REQUIRE(r.compatible);
  REQUIRE(r.feas_status == "infeasible");
  REQUIRE(r.psd_certificate.has_value());
  REQUIRE(r.psd_certificate_verified);
  REQUIRE(r.separable_certificate.has_value());
  REQUIRE(r.separable_certificate_verified);
  bool any_detected = false;
  for (const auto& e : r.led)
    if (e.status == "detected" && e.witness_status == "verified")
      any_detected = true;
  REQUIRE(any_detected);
  REQUIRE(r.verdict == "entangled_certified");
}

TEST_CASE("pure product marginals reach the gluing stage") {
  SiteSystem sys({2, 2, 2});
  std::mt19937_64 rng(6);
  std::vector<PureVec> site_vecs;
  for (int s = 0; s < 3; ++s)
    site_vecs.emplace_back(Subsystem(sys, {s}), random_unit_vec(2, rng));
  Cover cov(sys, {{0, 1}, {1, 2}});
  MarginalInstance inst(
      cov, {tensor(site_vecs[0], site_vecs[1]).to_density(),
            tensor(site_vecs[1], site_vecs[2]).to_density()});
  PipelineConfig cfg;
  TestReport r = run_pipeline(inst, cfg);
  REQUIRE(r.pure_applicable);
  REQUIRE(r.pure_class_trivial);
  REQUIRE(r.glued_state.has_value());
  REQUIRE(r.pure_marginal_err <= 1e-8);
  REQUIRE(r.verdict == "no_detection_at_effort");
}

TEST_CASE("identical seeds produce byte identical reports") {
  PipelineConfig cfg;
  TestReport a = run_pipeline(monogamy_instance(), cfg);
  TestReport b = run_pipeline(monogamy_instance(), cfg);
  REQUIRE(emit_report(a, "json") == emit_report(b, "json"));
  REQUIRE(emit_report(a, "text") == emit_report(b, "text"));
}

TEST_CASE("stored evidence re-verifies and tampering is caught") {
  PipelineConfig cfg;
  MarginalInstance inst = monogamy_instance();
  TestReport r = run_pipeline(inst, cfg);
  REQUIRE(r.verdict == "entangled_certified");
  io::json j = report_to_json(r);
  REQUIRE(reverify_evidence(j, inst));

  io::json tampered = j;
  tampered["feasibility"]["psd_certificate"]["alpha"] =
      tampered["feasibility"]["psd_certificate"]["alpha"].get<double>() + 10.0;
  REQUIRE_FALSE(reverify_evidence(tampered, inst));

  io::json tampered2 = j;
  for (auto& e : tampered2["detectability"]["entries"])
    if (e["status"] == "detected") e["value"] = 0.25;
  REQUIRE_FALSE(reverify_evidence(tampered2, inst));
}

TEST_CASE("cover refinement ignores duplicates and appends new patches") {
  SiteSystem sys({2, 2, 2});
  Cover cov(sys, {{0, 1}, {1, 2}});
  REQUIRE(refine_cover(cov, {1, 0}) == cov);
  Cover fine = refine_cover(cov, {0, 2});
  REQUIRE(fine.num_patches() == 3);
  REQUIRE(fine.patch(0).sites() == std::vector<int>({0, 1}));
}
