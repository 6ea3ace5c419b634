// Command-line front end: cech / marginal / pure / led / egroups / uhlmann /
// pipeline, JSON in, JSON (or text/CSV) out.
// Exit codes: 0 completed, 2 parse or validation error, 3 size budget.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "entobs/ancilla.hpp"
#include "entobs/cech.hpp"
#include "entobs/core.hpp"
#include "entobs/io.hpp"
#include "entobs/marginal.hpp"
#include "entobs/pipeline.hpp"
#include "entobs/pure.hpp"
#include "entobs/uhlmann.hpp"
#include "entobs/witness.hpp"

namespace {

using entobs::io::json;

json load_json(const std::string& path) {
  std::ifstream in(path);
  entobs::require(in.good(), entobs::Err::ParseError,
                  "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    throw entobs::Error(entobs::Err::ParseError,
                        path + ": " + std::string(e.what()));
  }
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  entobs::require(out.good(), entobs::Err::ParseError,
                  "cannot write " + out_path);
  out << text;
}

void emit_json(const json& j, const std::string& out_path) {
  emit(j.dump(2) + "\n", out_path);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    entobs::require(!tok.empty(), entobs::Err::ParseError,
                    "empty entry in integer list");
    out.push_back(std::stoi(tok));
  }
  entobs::require(!out.empty(), entobs::Err::ParseError,
                  "expected a comma-separated integer list");
  return out;
}

struct CommonOpts {
  std::string config_path;
  std::string out_path;
  std::optional<uint64_t> seed;

  entobs::PipelineConfig config() const {
    entobs::PipelineConfig cfg;
    if (!config_path.empty()) cfg = entobs::read_config(load_json(config_path));
    if (seed) cfg.seed = *seed;
    return cfg;
  }
};

entobs::Cover cover_from_files(const std::string& cover_path,
                               const std::string& state_path,
                               std::optional<entobs::io::StateFile>* state_out) {
  json jc = load_json(cover_path);
  if (!state_path.empty()) {
    entobs::io::StateFile sf = entobs::io::read_state(load_json(state_path));
    entobs::Cover cov = entobs::io::read_cover(jc, sf.sys);
    if (state_out) *state_out = std::move(sf);
    return cov;
  }
  return entobs::io::read_cover(jc);
}

entobs::ModelField model_from_flags(const std::string& model, double m,
                                    double m1, double m2, int r_plus,
                                    int r_minus) {
  if (model == "qwz") return entobs::qwz_model(m);
  if (model == "stacked") return entobs::stacked_model(m1, m2);
  if (model == "replicated")
    return entobs::replicated_model(m, r_plus, r_minus);
  throw entobs::Error(entobs::Err::ParseError,
                      "unknown model: " + model);
}

entobs::LatticeBundle bundle_for(const entobs::ModelField& model, int mesh,
                                 double beta) {
  entobs::TorusMesh tm(mesh);
  if (beta > 0.0) return entobs::build_gibbs_bundle(model, tm, beta);
  return entobs::build_band_bundle(model, tm);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cohomological entanglement obstructions"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonOpts common;
  app.add_option("--config", common.config_path, "JSON config file");
  app.add_option("--out", common.out_path, "output file (default stdout)");
  uint64_t seed_flag = 0;
  auto* seed_opt = app.add_option("--seed", seed_flag, "seed override");

  // ---- cech ----
  auto* cech = app.add_subcommand("cech", "presheaf cohomology of a cover");
  std::string cech_state, cech_cover, cech_cochain;
  auto* cech_r0 = cech->add_subcommand("r0", "uniqueness defect dimensions");
  cech_r0->add_option("--state", cech_state, "state file (for dimensions)");
  cech_r0->add_option("--cover", cech_cover, "cover file")->required();
  auto* cech_q0 = cech->add_subcommand("q0", "gluing defect dimensions");
  cech_q0->add_option("--state", cech_state, "state file (for dimensions)");
  cech_q0->add_option("--cover", cech_cover, "cover file")->required();
  auto* cech_class = cech->add_subcommand("class", "does a closed cochain bound");
  cech_class->add_option("--cochain", cech_cochain, "cochain file")->required();

  // ---- marginal ----
  auto* marg = app.add_subcommand("marginal", "quantum marginal feasibility");
  std::string marg_instance, marg_cert, marg_emit_cert;
  auto* marg_solve = marg->add_subcommand("solve", "search for a PSD extension");
  marg_solve->add_option("--instance", marg_instance, "instance file")->required();
  marg_solve->add_option("--emit-cert", marg_emit_cert,
                         "write an infeasibility certificate here");
  auto* marg_verify = marg->add_subcommand("verify", "check a certificate");
  marg_verify->add_option("--cert", marg_cert, "certificate file")->required();
  marg_verify->add_option("--instance", marg_instance, "instance file")->required();

  // ---- pure ----
  auto* pure = app.add_subcommand("pure", "pure-state gluing");
  std::string pure_family;
  auto* pure_glue = pure->add_subcommand("glue", "glue a pure patch family");
  pure_glue->add_option("--family", pure_family, "family file")->required();

  // ---- led ----
  auto* led = app.add_subcommand("led", "local entanglement detectability");
  std::string led_state, led_patch;
  int led_q = 0;
  led->add_option("--state", led_state, "state file")->required();
  led->add_option("--patch", led_patch, "patch sites, e.g. 0,1")->required();
  led->add_option("--q", led_q, "ancilla order");

  // ---- egroups ----
  auto* eg = app.add_subcommand("egroups", "local entanglement group dimensions");
  std::string eg_patch, eg_tau, eg_dims;
  int eg_qmax = 1;
  int eg_aux = 2;
  eg->add_option("--patch", eg_patch, "patch sites, e.g. 0,1")->required();
  eg->add_option("--qmax", eg_qmax, "largest ancilla order");
  eg->add_option("--tau", eg_tau, "ancilla reference state file (JSON matrix)");
  eg->add_option("--dims", eg_dims, "site dimensions, e.g. 2,2 (default qubits)");
  eg->add_option("--aux-dim", eg_aux, "ancilla dimension when --tau is absent");

  // ---- uhlmann ----
  auto* uh = app.add_subcommand("uhlmann", "lattice invariants");
  std::string uh_model = "qwz", uh_param = "m", uh_emit = "csv", uh_dump;
  double uh_m = 1.0, uh_m1 = 1.0, uh_m2 = -1.0, uh_beta = 0.0;
  double uh_from = 0.5, uh_to = 3.5;
  int uh_rp = 1, uh_rm = 0, uh_mesh = 24, uh_steps = 31;
  auto add_model_flags = [&](CLI::App* c) {
    c->add_option("--model", uh_model, "qwz | stacked | replicated");
    c->add_option("--m", uh_m, "mass (qwz, replicated)");
    c->add_option("--m1", uh_m1, "first mass (stacked)");
    c->add_option("--m2", uh_m2, "second mass (stacked)");
    c->add_option("--r-plus", uh_rp, "plus replicas (replicated)");
    c->add_option("--r-minus", uh_rm, "minus replicas (replicated)");
    c->add_option("--mesh", uh_mesh, "mesh points per direction");
    c->add_option("--beta", uh_beta,
                  "Gibbs inverse temperature (0 = spectral frames)");
  };
  auto* uh_chern = uh->add_subcommand("chern", "sector Chern numbers");
  add_model_flags(uh_chern);
  uh_chern->add_option("--dump-curvature", uh_dump,
                       "write the plaquette phase grid as CSV");
  auto* uh_nu = uh->add_subcommand("nu-ent", "witness-filtered invariant");
  add_model_flags(uh_nu);
  auto* uh_sweep = uh->add_subcommand("sweep", "invariant across a parameter");
  add_model_flags(uh_sweep);
  uh_sweep->add_option("--param", uh_param, "m | m1 | m2");
  uh_sweep->add_option("--from", uh_from, "sweep start")->required();
  uh_sweep->add_option("--to", uh_to, "sweep end")->required();
  uh_sweep->add_option("--steps", uh_steps, "number of samples");
  uh_sweep->add_option("--emit", uh_emit, "csv | json");

  // ---- pipeline ----
  auto* pipe = app.add_subcommand("pipeline", "run the obstruction battery");
  std::string pipe_state, pipe_cover, pipe_instance, pipe_emit = "json";
  pipe->add_option("--state", pipe_state, "global state file");
  pipe->add_option("--cover", pipe_cover, "cover file");
  pipe->add_option("--instance", pipe_instance,
                   "marginal instance file (alternative to state+cover)");
  pipe->add_option("--emit", pipe_emit, "json | text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) common.seed = seed_flag;

  try {
    entobs::PipelineConfig cfg = common.config();

    if (cech_r0->parsed() || cech_q0->parsed()) {
      std::optional<entobs::io::StateFile> sf;
      entobs::Cover cov = cover_from_files(cech_cover, cech_state, &sf);
      json out;
      if (cech_r0->parsed()) {
        entobs::ProductBasis gb(cov.full());
        long dim_global = gb.size();
        entobs::RMat J = entobs::matricize_marginal_map(cov);
        int rank = entobs::numeric_rank(J);
        out["dim_global"] = dim_global;
        out["rank_marginal_map"] = rank;
        out["dim_r0"] = dim_global - rank;
      } else {
        entobs::CokernelQ0 q0 = entobs::cokernel_Q0(cov);
        out["q0"] = q0.q0;
        out["dim_h0"] = q0.dim_h0;
        out["rank_j"] = q0.rank_j;
        out["dim_c0"] = q0.dim_c0;
      }
      emit_json(out, common.out_path);
      return 0;
    }
    if (cech_class->parsed()) {
      entobs::Cochain c = entobs::io::read_cochain(load_json(cech_cochain));
      entobs::ClassVanishing v = entobs::class_vanishes(c);
      json out;
      out["vanishes"] = v.vanishes;
      out["image_test"] = v.image_test;
      out["pairing_test"] = v.pairing_test;
      out["residual"] = v.residual;
      out["max_pairing"] = v.max_pairing;
      emit_json(out, common.out_path);
      return 0;
    }

    if (marg_solve->parsed()) {
      entobs::MarginalInstance inst =
          entobs::io::read_instance(load_json(marg_instance));
      entobs::FaithfulProduct tau = entobs::FaithfulProduct::maximally_mixed(
          inst.cover.system(), cfg.aux_dim);
      entobs::DykstraOpts dopts;
      dopts.max_iter = cfg.dykstra_max_iter;
      entobs::SolveResult sol = entobs::solve_psd_extension(inst, tau, dopts);
      json out;
      out["status"] = entobs::to_string(sol.status);
      out["gap"] = sol.gap;
      out["marginal_err"] = sol.marginal_err;
      out["iterations"] = sol.iterations;
      if (sol.rho) out["extension"] = entobs::io::write_state(*sol.rho);
      std::optional<entobs::InfeasibilityCertificate> cert;
      if (sol.status == entobs::SolveStatus::Infeasible)
        cert = entobs::extract_certificate(inst, sol);
      else if (auto sep = entobs::separable_infeasibility(inst))
        cert = std::move(sep);
      if (cert) {
        entobs::CertificateCheck chk = entobs::verify_certificate(*cert, inst);
        json jc = entobs::io::write_certificate(*cert, chk.valid);
        out["certificate"] = jc;
        if (!marg_emit_cert.empty()) emit_json(jc, marg_emit_cert);
      }
      emit_json(out, common.out_path);
      return 0;
    }
    if (marg_verify->parsed()) {
      entobs::MarginalInstance inst =
          entobs::io::read_instance(load_json(marg_instance));
      entobs::InfeasibilityCertificate cert =
          entobs::io::read_certificate(load_json(marg_cert));
      entobs::CertificateCheck chk = entobs::verify_certificate(cert, inst);
      json out;
      out["valid"] = chk.valid;
      out["margin"] = chk.margin;
      out["psd_slack"] = chk.psd_slack;
      emit_json(out, common.out_path);
      return 0;
    }

    if (pure_glue->parsed()) {
      entobs::PurePatchFamily fam =
          entobs::io::read_pure_family(load_json(pure_family));
      json out;
      try {
        entobs::PureGlueOutcome g = entobs::glue_pure_family(fam);
        out["class_trivial"] = g.cls.trivial;
        out["max_holonomy_err"] = g.cls.max_holonomy_err;
        out["max_triple_residual"] = g.cocycle.max_triple_residual;
        if (g.glued) {
          out["glued_state"] = entobs::io::write_state(g.glued->state);
          out["max_marginal_err"] = g.glued->max_marginal_err;
        }
      } catch (const entobs::Error& e) {
        out["error_code"] = entobs::err_name(e.code);
        out["error_message"] = e.what();
      }
      emit_json(out, common.out_path);
      return 0;
    }

    if (led->parsed()) {
      entobs::io::StateFile sf = entobs::io::read_state(load_json(led_state));
      entobs::DensityOp rho = sf.density();
      entobs::Subsystem patch(sf.sys, parse_int_list(led_patch));
      if (!(patch == rho.support()))
        rho = entobs::partial_trace(rho, patch);
      entobs::Thickening proto =
          entobs::Thickening::maximally_mixed(patch, 0, cfg.aux_dim);
      entobs::SeesawOpts sopts;
      sopts.restarts = cfg.seesaw_restarts;
      sopts.max_sweeps = cfg.seesaw_max_sweeps;
      sopts.seed = cfg.seed;
      entobs::LedResult lr = entobs::led_test(rho, led_q, proto, sopts);
      json out;
      out["patch"] = patch.sites();
      out["q"] = lr.q;
      out["status"] = entobs::to_string(lr.status);
      out["stage"] = entobs::to_string(lr.stage);
      out["value"] = lr.value;
      if (lr.base_witness)
        out["witness"] = entobs::io::write_witness(*lr.base_witness);
      emit_json(out, common.out_path);
      return 0;
    }

    if (eg->parsed()) {
      std::vector<int> sites = parse_int_list(eg_patch);
      int max_site = *std::max_element(sites.begin(), sites.end());
      std::vector<int> dims(static_cast<size_t>(max_site) + 1, 2);
      if (!eg_dims.empty()) {
        std::vector<int> given = parse_int_list(eg_dims);
        entobs::require(given.size() == sites.size(), entobs::Err::ParseError,
                        "--dims must list one dimension per patch site");
        for (size_t i = 0; i < sites.size(); ++i)
          dims[static_cast<size_t>(sites[i])] = given[i];
      }
      entobs::SiteSystem sys(dims);
      entobs::Subsystem patch(sys, sites);
      entobs::Mat tau;
      int aux_dim = eg_aux;
      if (!eg_tau.empty()) {
        tau = entobs::io::matrix_from_json(load_json(eg_tau));
        aux_dim = static_cast<int>(tau.rows());
      } else {
        tau = entobs::Mat::Identity(aux_dim, aux_dim) /
              static_cast<double>(aux_dim);
      }
      entobs::Thickening proto(patch, 0, aux_dim, tau);
      auto groups = entobs::local_groups(patch, eg_qmax, proto);
      json out = json::array();
      for (const auto& g : groups) {
        json e;
        e["q"] = g.q;
        e["space_dim"] = g.space_dim;
        e["rank_delta"] = g.rank_delta;
        e["rank_prev"] = g.rank_prev;
        e["nullity"] = g.nullity;
        e["dim_eq"] = g.dim_eq;
        out.push_back(std::move(e));
      }
      emit_json(out, common.out_path);
      return 0;
    }

    if (uh_chern->parsed() || uh_nu->parsed()) {
      entobs::ModelField model =
          model_from_flags(uh_model, uh_m, uh_m1, uh_m2, uh_rp, uh_rm);
      entobs::LatticeBundle b = bundle_for(model, uh_mesh, uh_beta);
      json out;
      out["model"] = uh_model;
      out["mesh"] = uh_mesh;
      out["beta"] = uh_beta;
      out["r_plus"] = b.r_plus;
      out["r_minus"] = b.r_minus;
      if (uh_chern->parsed()) {
        entobs::ChernResult cp =
            entobs::fhs_abelian_chern(b, entobs::Sector::Plus);
        entobs::ChernResult cm =
            entobs::fhs_abelian_chern(b, entobs::Sector::Minus);
        entobs::ChernResult ca =
            entobs::fhs_abelian_chern(b, entobs::Sector::All);
        out["c_plus"] = cp.chern;
        out["c_minus"] = cm.chern;
        out["c_total"] = ca.chern;
        out["min_link_modulus"] =
            std::min({cp.min_link_modulus, cm.min_link_modulus,
                      ca.min_link_modulus});
        if (!uh_dump.empty()) {
          std::string csv;
          for (int i = 0; i < b.mesh.nx; ++i) {
            for (int j = 0; j < b.mesh.ny; ++j) {
              if (j) csv += ',';
              csv += std::to_string(
                  ca.plaquette_phase[static_cast<size_t>(b.mesh.idx(i, j))]);
            }
            csv += '\n';
          }
          emit(csv, uh_dump);
        }
      } else {
        entobs::NuEntResult nu = entobs::nu_ent(b);
        out["nu_ent"] = nu.nu;
        out["c_plus"] = nu.c_plus;
        out["c_minus"] = nu.c_minus;
        out["min_link_modulus"] = nu.min_link_modulus;
      }
      emit_json(out, common.out_path);
      return 0;
    }
    if (uh_sweep->parsed()) {
      entobs::require(uh_steps >= 2, entobs::Err::ParseError,
                      "sweep needs at least 2 steps");
      std::string csv = "param,C_plus,C_minus,nu_ent,min_link_modulus\n";
      json rows = json::array();
      for (int k = 0; k < uh_steps; ++k) {
        double t = uh_from + (uh_to - uh_from) * k / (uh_steps - 1);
        double m = uh_param == "m" ? t : uh_m;
        double m1 = uh_param == "m1" ? t : uh_m1;
        double m2 = uh_param == "m2" ? t : uh_m2;
        try {
          entobs::ModelField model =
              model_from_flags(uh_model, m, m1, m2, uh_rp, uh_rm);
          entobs::NuEntResult nu =
              entobs::nu_ent(bundle_for(model, uh_mesh, uh_beta));
          csv += std::to_string(t) + ',' + std::to_string(nu.c_plus) + ',' +
                 std::to_string(nu.c_minus) + ',' + std::to_string(nu.nu) +
                 ',' + std::to_string(nu.min_link_modulus) + '\n';
          json row;
          row["param"] = t;
          row["C_plus"] = nu.c_plus;
          row["C_minus"] = nu.c_minus;
          row["nu_ent"] = nu.nu;
          row["min_link_modulus"] = nu.min_link_modulus;
          rows.push_back(std::move(row));
        } catch (const entobs::Error& e) {
          csv += "# param=" + std::to_string(t) +
                 " skipped: " + e.what() + "\n";
        }
      }
      if (uh_emit == "json")
        emit_json(rows, common.out_path);
      else
        emit(csv, common.out_path);
      return 0;
    }

    if (pipe->parsed()) {
      entobs::TestReport report = [&] {
        if (!pipe_instance.empty()) {
          entobs::MarginalInstance inst =
              entobs::io::read_instance(load_json(pipe_instance));
          return entobs::run_pipeline(inst, cfg);
        }
        entobs::require(!pipe_state.empty() && !pipe_cover.empty(),
                        entobs::Err::ParseError,
                        "pipeline needs --instance or --state with --cover");
        entobs::io::StateFile sf =
            entobs::io::read_state(load_json(pipe_state));
        entobs::Cover cov =
            entobs::io::read_cover(load_json(pipe_cover), sf.sys);
        return entobs::run_pipeline(sf.density(), cov, cfg);
      }();
      emit(entobs::emit_report(report, pipe_emit), common.out_path);
      return 0;
    }

    throw entobs::Error(entobs::Err::ParseError, "no subcommand selected");
  } catch (const entobs::Error& e) {
    std::cerr << "error [" << entobs::err_name(e.code) << "]: " << e.what()
              << "\n";
    return e.code == entobs::Err::SizeBudgetExceeded ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
