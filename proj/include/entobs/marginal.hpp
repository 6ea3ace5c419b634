#pragma once

// Quantum marginal feasibility. Stage one checks exact linear compatibility
// of the prescribed marginals (closedness of the 0-cochain) and rebuilds a
// Hermitian global extension by the augmented homotopy. Stage two asks for a
// PSD extension via Dykstra alternating projections between the marginal
// affine slab and the PSD cone; a persistent gap yields a dual certificate
// (Y_i, alpha) with sum_i e_id(Y_i) + alpha 1 >= 0 and
// sum_i Tr(Y_i sigma_i) + alpha < 0, which no global state can satisfy.

#include "entobs/cech.hpp"
#include "entobs/witness.hpp"

#include <deque>

namespace entobs {

struct MarginalInstance {
  Cover cover;
  std::vector<DensityOp> marginals;  // aligned with cover.patches()

  MarginalInstance(Cover c, std::vector<DensityOp> m)
      : cover(std::move(c)), marginals(std::move(m)) {
    require(static_cast<int>(marginals.size()) == cover.num_patches(),
            Err::CoverMismatch, "one marginal per patch required");
    for (int i = 0; i < cover.num_patches(); ++i)
      require(marginals[static_cast<size_t>(i)].support() == cover.patch(i),
              Err::SupportMismatch, "marginal support must equal its patch");
  }

  Cochain to_cochain() const {
    Cochain s = Cochain::zero(cover, 0);
    for (int i = 0; i < cover.num_patches(); ++i)
      s.at({i}) = marginals[static_cast<size_t>(i)].matrix();
    return s;
  }
};

struct CompatibilityResult {
  bool compatible = false;
  double defect = 0.0;               // ||delta sigma||
  std::optional<HermOp> extension;   // Hermitian witness of compatibility
  double extension_err = 0.0;        // max marginal deviation of the extension
};

inline CompatibilityResult check_compatibility(const Cochain& sigma,
                                               const FaithfulProduct& tau,
                                               double tol = 1e-9) {
  require(sigma.degree() == 0, Err::DegreeMismatch,
          "compatibility check takes a 0-cochain");
  CompatibilityResult out;
  out.defect = cech_d(sigma).norm();
  out.compatible = out.defect <= tol * std::max(1.0, sigma.norm());
  if (out.compatible) {
    HermOp X = homotopy_global_extension(sigma, tau);
    double err = 0.0;
    for (int i = 0; i < sigma.cover().num_patches(); ++i) {
      Mat ri = partial_trace_matrix(X.support(), X.matrix(),
                                    sigma.cover().patch(i));
      err = std::max(err, (ri - sigma.at({i})).norm());
    }
    out.extension = std::move(X);
    out.extension_err = err;
  }
  return out;
}

inline CompatibilityResult check_compatibility(const MarginalInstance& inst,
                                               const FaithfulProduct& tau,
                                               double tol = 1e-9) {
  return check_compatibility(inst.to_cochain(), tau, tol);
}

// ---------------------------------------------------------------------------
// Dykstra projections

struct DykstraOpts {
  double tol = 1e-8;          // success when ||x - y|| <= tol
  int max_iter = 20000;
  int plateau_window = 100;   // infeasibility: gap stable over this window
  double plateau_rel = 1e-6;
  double gap_factor = 10.0;   // ... and gap > gap_factor * tol
};

enum class SolveStatus { Feasible, Infeasible, IterationLimit };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Feasible: return "feasible";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::IterationLimit: return "iteration_limit";
  }
  return "?";
}

struct SolveResult {
  SolveStatus status = SolveStatus::IterationLimit;
  std::optional<DensityOp> rho;  // PSD extension when feasible
  double gap = 0.0;              // final ||x - y||
  double marginal_err = 0.0;     // max ||r_i(rho) - sigma_i||
  int iterations = 0;
  Mat pre_projection;            // x + p at the stop, feeds the certificate
  Mat cone_point;                // its PSD projection
};

struct InfeasibilityCertificate {
  enum class Kind { PsdExtension, SeparableExtension };
  Kind kind = Kind::PsdExtension;
  // PsdExtension: dual variables per patch
  std::vector<HermOp> y;
  double alpha = 0.0;
  double margin = 0.0;        // -(sum_i Tr(Y_i sigma_i) + alpha) > 0
  double psd_slack = 0.0;     // lambda_min of the assembled global operator
  // SeparableExtension: a witness on one patch marginal
  int patch = -1;
  std::optional<Witness> witness;
  double witness_value = 0.0;
};

namespace detail {

// the affine marginal slab {X : r_{U_i} X = sigma_i, Tr X = 1} and its
// least-norm projector through the small Gram matrix of the constraint map
class MarginalSlab {
 public:
  MarginalSlab(const MarginalInstance& inst) : inst_(&inst) {
    const Cover& cov = inst.cover;
    full_ = cov.full();
    for (int i = 0; i < cov.num_patches(); ++i) {
      bases_.emplace_back(cov.patch(i));
      offsets_.push_back(rows_);
      rows_ += bases_.back().size();
    }
    trace_row_ = rows_;
    rows_ += 1;

    RMat J = matricize_marginal_map(cov);
    RMat M(rows_, J.cols());
    M.topRows(J.rows()) = J;
    M.bottomRows(1).setZero();
    M(trace_row_, 0) = std::sqrt(static_cast<double>(full_.dim()));
    RMat G = M * M.transpose();
    Eigen::SelfAdjointEigenSolver<RMat> es(G);
    RVec w = es.eigenvalues();
    const double cut = 1e-12 * std::max(w.maxCoeff(), 1e-300);
    RVec winv = RVec::Zero(w.size());
    for (long i = 0; i < w.size(); ++i)
      if (w(i) > cut) winv(i) = 1.0 / w(i);
    gpinv_ = es.eigenvectors() * winv.asDiagonal() *
             es.eigenvectors().transpose();

    b_ = RVec(rows_);
    for (int i = 0; i < cov.num_patches(); ++i)
      b_.segment(offsets_[static_cast<size_t>(i)],
                 bases_[static_cast<size_t>(i)].size()) =
          bases_[static_cast<size_t>(i)].expand(
              inst.marginals[static_cast<size_t>(i)].matrix());
    b_(trace_row_) = 1.0;
  }

  RVec apply_M(const Mat& X) const {
    RVec v(rows_);
    for (int i = 0; i < inst_->cover.num_patches(); ++i) {
      Mat ri = partial_trace_matrix(full_, X, inst_->cover.patch(i));
      v.segment(offsets_[static_cast<size_t>(i)],
                bases_[static_cast<size_t>(i)].size()) =
          bases_[static_cast<size_t>(i)].expand(ri);
    }
    v(trace_row_) = X.trace().real();
    return v;
  }

  Mat apply_Mstar(const RVec& w) const {
    Mat X = Mat::Zero(full_.dim(), full_.dim());
    for (int i = 0; i < inst_->cover.num_patches(); ++i) {
      Mat wi = bases_[static_cast<size_t>(i)].synth(
          w.segment(offsets_[static_cast<size_t>(i)],
                    bases_[static_cast<size_t>(i)].size()));
      X += extend_identity_matrix(inst_->cover.patch(i), wi, full_);
    }
    X += w(trace_row_) * Mat::Identity(full_.dim(), full_.dim());
    return X;
  }

  Mat project(const Mat& X) const {
    RVec res = b_ - apply_M(X);
    return X + apply_Mstar(gpinv_ * res);
  }

  // least-squares dual solve M* w = V; returns (w, residual)
  std::pair<RVec, double> dual_decompose(const Mat& V) const {
    RVec w = gpinv_ * apply_M(V);
    const double res = (apply_Mstar(w) - V).norm();
    return {w, res};
  }

  const std::vector<ProductBasis>& bases() const { return bases_; }
  const std::vector<long>& offsets() const { return offsets_; }
  long trace_row() const { return trace_row_; }
  const Subsystem& full() const { return full_; }

 private:
  const MarginalInstance* inst_;
  Subsystem full_;
  std::vector<ProductBasis> bases_;
  std::vector<long> offsets_;
  long rows_ = 0;
  long trace_row_ = 0;
  RVec b_;
  RMat gpinv_;
};

inline Mat psd_project(const Mat& X) {
  Eigen::SelfAdjointEigenSolver<Mat> es((X + X.adjoint()) / 2.0);
  RVec w = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * w.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace detail

inline SolveResult solve_psd_extension(const MarginalInstance& inst,
                                       const FaithfulProduct& tau,
                                       const DykstraOpts& opts = {}) {
  detail::MarginalSlab slab(inst);
  const long D = slab.full().dim();

  Mat x = slab.project(tau.on(slab.full()));
  Mat p = Mat::Zero(D, D);
  std::deque<double> window;

  SolveResult out;
  for (int k = 1; k <= opts.max_iter; ++k) {
    Mat a = x + p;
    Mat y = detail::psd_project(a);
    p = a - y;
    Mat xn = slab.project(y);
    const double d = (xn - y).norm();
    x = xn;
    out.iterations = k;
    out.gap = d;

    if (d <= opts.tol) {
      out.status = SolveStatus::Feasible;
      out.pre_projection = a;
      out.cone_point = y;
      Mat rho = detail::psd_project(x);
      rho /= rho.trace().real();
      out.rho = DensityOp(slab.full(), rho);
      double err = 0.0;
      for (int i = 0; i < inst.cover.num_patches(); ++i)
        err = std::max(
            err, (partial_trace_matrix(slab.full(), out.rho->matrix(),
                                       inst.cover.patch(i)) -
                  inst.marginals[static_cast<size_t>(i)].matrix())
                     .norm());
      out.marginal_err = err;
      return out;
    }

    window.push_back(d);
    if (static_cast<int>(window.size()) > opts.plateau_window + 1)
      window.pop_front();
    if (static_cast<int>(window.size()) == opts.plateau_window + 1 &&
        d > opts.gap_factor * opts.tol &&
        std::abs(window.front() - d) <= opts.plateau_rel * std::max(d, 1.0)) {
      out.status = SolveStatus::Infeasible;
      out.pre_projection = a;
      out.cone_point = y;
      return out;
    }
  }
  out.status = SolveStatus::IterationLimit;
  out.pre_projection = x + p;
  out.cone_point = detail::psd_project(x + p);
  return out;
}

// Dual certificate from the stalled Dykstra iterate: the gap vector
// v = P_A(y) - y at the stalled cone point y is in the range of the
// constraint adjoint by construction (P_A moves along it), and is normal to
// the PSD cone at y in the limit. Decomposing v = sum_i e_id(w_i) + w_tr 1,
// folding the trace dual into patch 0, and shifting by alpha makes the
// assembled operator exactly PSD; the margin is ~ gap^2 when genuinely
// infeasible, and the margin check below is what certifies.
inline InfeasibilityCertificate extract_certificate(
    const MarginalInstance& inst, const SolveResult& sol) {
  require(sol.status == SolveStatus::Infeasible,
          Err::CertificateExtractionFailed,
          "certificate extraction needs an infeasible solve");
  detail::MarginalSlab slab(inst);
  Mat v = slab.project(sol.cone_point) - sol.cone_point;
  const double vnorm = v.norm();
  require(vnorm > 0.0, Err::CertificateExtractionFailed,
          "degenerate normal vector");

  auto [w, res] = slab.dual_decompose(v);
  require(res <= 1e-6 * vnorm, Err::CertificateExtractionFailed,
          "normal vector is not in the constraint range");

  InfeasibilityCertificate cert;
  cert.kind = InfeasibilityCertificate::Kind::PsdExtension;
  const auto& bases = slab.bases();
  const auto& off = slab.offsets();
  std::vector<Mat> y(static_cast<size_t>(inst.cover.num_patches()));
  for (int i = 0; i < inst.cover.num_patches(); ++i)
    y[static_cast<size_t>(i)] = -bases[static_cast<size_t>(i)].synth(
        w.segment(off[static_cast<size_t>(i)], bases[static_cast<size_t>(i)].size()));
  // fold the trace dual into patch 0: e_id(1_{U_0}) = 1_I
  const long d0 = inst.cover.patch(0).dim();
  y[0] -= w(slab.trace_row()) * Mat::Identity(d0, d0);

  Mat xi = Mat::Zero(slab.full().dim(), slab.full().dim());
  for (int i = 0; i < inst.cover.num_patches(); ++i)
    xi += extend_identity_matrix(inst.cover.patch(i), y[static_cast<size_t>(i)],
                                 slab.full());
  Eigen::SelfAdjointEigenSolver<Mat> es((xi + xi.adjoint()) / 2.0);
  cert.alpha = -es.eigenvalues().minCoeff();

  double value = cert.alpha;
  for (int i = 0; i < inst.cover.num_patches(); ++i) {
    cert.y.emplace_back(inst.cover.patch(i), y[static_cast<size_t>(i)]);
    value += (y[static_cast<size_t>(i)] *
              inst.marginals[static_cast<size_t>(i)].matrix())
                 .trace()
                 .real();
  }
  cert.margin = -value;
  require(cert.margin > 0.0, Err::CertificateExtractionFailed,
          "extracted certificate has no positive margin");
  cert.psd_slack = 0.0;
  return cert;
}

struct CertificateCheck {
  bool valid = false;
  double margin = 0.0;     // -(sum Tr(Y_i sigma_i) + alpha)
  double psd_slack = 0.0;  // lambda_min of sum e_id(Y_i) + alpha 1
};

inline CertificateCheck verify_certificate(const InfeasibilityCertificate& cert,
                                           const MarginalInstance& inst) {
  CertificateCheck out;
  if (cert.kind == InfeasibilityCertificate::Kind::PsdExtension) {
    require(static_cast<int>(cert.y.size()) == inst.cover.num_patches(),
            Err::CoverMismatch, "certificate arity mismatch");
    Subsystem full = inst.cover.full();
    Mat xi = cert.alpha * Mat::Identity(full.dim(), full.dim());
    double value = cert.alpha;
    for (int i = 0; i < inst.cover.num_patches(); ++i) {
      require(cert.y[static_cast<size_t>(i)].support() == inst.cover.patch(i),
              Err::SupportMismatch, "certificate support mismatch");
      xi += extend_identity_matrix(inst.cover.patch(i),
                                   cert.y[static_cast<size_t>(i)].matrix(), full);
      value += trace_pairing(
          cert.y[static_cast<size_t>(i)],
          HermOp(inst.cover.patch(i),
                 inst.marginals[static_cast<size_t>(i)].matrix()));
    }
    Eigen::SelfAdjointEigenSolver<Mat> es((xi + xi.adjoint()) / 2.0);
    out.psd_slack = es.eigenvalues().minCoeff();
    out.margin = -value;
    const double scale = std::max(1.0, xi.cwiseAbs().maxCoeff());
    out.valid = out.psd_slack >= -1e-9 * scale && out.margin > 0.0;
  } else {
    require(cert.witness.has_value() && cert.patch >= 0 &&
                cert.patch < inst.cover.num_patches(),
            Err::BadParameter, "malformed separable certificate");
    const auto& w = *cert.witness;
    const auto& sigma = inst.marginals[static_cast<size_t>(cert.patch)];
    require(w.op.support() == sigma.support(), Err::SupportMismatch,
            "witness support mismatch");
    const double value =
        trace_pairing(w.op, HermOp(sigma.support(), sigma.matrix()));
    out.margin = -value;
    out.valid = value < 0.0 && w.status != WitnessStatus::Refuted;
  }
  return out;
}

// Separable-extension variant: a global extension that is separable across
// the given structure restricts to a separable state on every patch, so an
// entanglement witness firing on one marginal certifies infeasibility.
inline std::optional<InfeasibilityCertificate> separable_infeasibility(
    const MarginalInstance& inst) {
  for (int i = 0; i < inst.cover.num_patches(); ++i) {
    const auto& sigma = inst.marginals[static_cast<size_t>(i)];
    if (sigma.support().num_sites() < 2) continue;
    const auto& sites = sigma.support().sites();
    const int ns = static_cast<int>(sites.size());
    // complements give the same transpose spectrum, so half the masks suffice
    for (int mask = 1; mask < (1 << (ns - 1)); ++mask) {
      std::vector<int> side;
      for (int k = 0; k < ns; ++k)
        if (mask & (1 << k)) side.push_back(sites[static_cast<size_t>(k)]);
      Mat gamma = partial_transpose_matrix(sigma.support(), sigma.matrix(), side);
      Eigen::SelfAdjointEigenSolver<Mat> es((gamma + gamma.adjoint()) / 2.0,
                                            Eigen::EigenvaluesOnly);
      if (es.eigenvalues()(0) < -1e-10) {
        Witness w = npt_witness(sigma, side);
        InfeasibilityCertificate cert;
        cert.kind = InfeasibilityCertificate::Kind::SeparableExtension;
        cert.patch = i;
        cert.witness_value =
            trace_pairing(w.op, HermOp(sigma.support(), sigma.matrix()));
        cert.witness = std::move(w);
        cert.margin = -cert.witness_value;
        return cert;
      }
    }
  }
  return std::nullopt;
}

}  // namespace entobs
