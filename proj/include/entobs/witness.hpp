#pragma once

// Entanglement witnesses with a declared locality structure (a partition of
// the support into parties), plus the numeric see-saw that tries to refute a
// candidate witness by minimizing over product states. Two constructions come
// with a structural validity proof: CHSH operators built from +-1-spectrum
// observables, and partial-transpose witnesses from NPT states.

#include "entobs/core.hpp"

#include <array>

namespace entobs {

// partial transpose on the listed sites (subset of the support)
inline Mat partial_transpose_matrix(const Subsystem& supp, const Mat& X,
                                    const std::vector<int>& t_sites) {
  Subsystem tpart(supp.system(), t_sites);
  require(supp.contains(tpart), Err::NotSubsystem,
          "transpose sites must lie in the support");
  auto strides = site_strides(supp);
  const auto& ss = supp.sites();
  std::vector<bool> flip(ss.size(), false);
  for (int s : tpart.sites()) {
    auto it = std::lower_bound(ss.begin(), ss.end(), s);
    flip[static_cast<size_t>(it - ss.begin())] = true;
  }
  const long D = supp.dim();
  Mat out(D, D);
  for (long r = 0; r < D; ++r)
    for (long c = 0; c < D; ++c) {
      long rr = 0, cc = 0;
      for (size_t i = 0; i < ss.size(); ++i) {
        const int d = supp.system().dim(ss[i]);
        const long st = strides[i];
        int rd = digit_at(r, st, d), cd = digit_at(c, st, d);
        if (flip[i]) std::swap(rd, cd);
        rr += static_cast<long>(rd) * st;
        cc += static_cast<long>(cd) * st;
      }
      out(rr, cc) = X(r, c);
    }
  return out;
}

inline HermOp partial_transpose(const HermOp& X, const std::vector<int>& t_sites) {
  return HermOp(X.support(),
                partial_transpose_matrix(X.support(), X.matrix(), t_sites));
}

// ---------------------------------------------------------------------------
// locality structures

// partition of a subsystem's sites into parties
struct LocalStructure {
  std::vector<std::vector<int>> groups;

  void validate(const Subsystem& supp) const {
    require(!groups.empty(), Err::NotPartition, "structure needs >= 1 group");
    std::vector<int> all;
    for (const auto& g : groups) {
      require(!g.empty(), Err::NotPartition, "empty party in structure");
      for (int s : g) all.push_back(s);
    }
    std::sort(all.begin(), all.end());
    require(all == supp.sites(), Err::NotPartition,
            "structure groups must partition the support sites");
  }

  static LocalStructure fully_local(const Subsystem& supp) {
    LocalStructure st;
    for (int s : supp.sites()) st.groups.push_back({s});
    return st;
  }

  static LocalStructure bipartition(const Subsystem& supp,
                                    const std::vector<int>& side_a) {
    Subsystem a(supp.system(), side_a);
    LocalStructure st;
    st.groups.push_back(a.sites());
    st.groups.push_back(supp.minus(a).sites());
    return st;
  }
};

enum class WitnessStatus { Verified, Probable, Refuted };

inline const char* to_string(WitnessStatus s) {
  switch (s) {
    case WitnessStatus::Verified: return "verified";
    case WitnessStatus::Probable: return "probable";
    case WitnessStatus::Refuted: return "refuted";
  }
  return "?";
}

struct Witness {
  HermOp op;
  LocalStructure structure;
  WitnessStatus status = WitnessStatus::Probable;
  double product_min = 0.0;          // best known min over product states
  std::vector<PureVec> refuter;      // per-group vectors when refuted
};

// ---------------------------------------------------------------------------
// see-saw over product states

struct SeesawOpts {
  int restarts = 8;
  int max_sweeps = 200;
  double sweep_tol = 1e-12;
  std::uint64_t seed = 0x5eed5eedULL;
};

namespace detail {

// composite index of each group inside the support index
struct GroupIndexer {
  std::vector<std::vector<long>> gidx;  // [group][full index] -> group index
  std::vector<long> gdim;

  GroupIndexer(const Subsystem& supp, const std::vector<std::vector<int>>& groups) {
    auto strides = site_strides(supp);
    const auto& ss = supp.sites();
    const long D = supp.dim();
    for (const auto& g : groups) {
      Subsystem gs(supp.system(), g);
      auto gstr = site_strides(gs);
      std::vector<long> map(static_cast<size_t>(D), 0);
      for (size_t i = 0; i < gs.sites().size(); ++i) {
        auto it = std::lower_bound(ss.begin(), ss.end(), gs.sites()[i]);
        const size_t pos = static_cast<size_t>(it - ss.begin());
        const int d = supp.system().dim(ss[pos]);
        for (long f = 0; f < D; ++f)
          map[static_cast<size_t>(f)] +=
              static_cast<long>(digit_at(f, strides[pos], d)) * gstr[i];
      }
      gidx.push_back(std::move(map));
      gdim.push_back(gs.dim());
    }
  }
};

// effective single-party operator after contracting all other parties
inline Mat contract_environment(const Mat& H, const GroupIndexer& gi,
                                const std::vector<Vec>& vecs, size_t g) {
  const long D = H.rows();
  const long dg = gi.gdim[g];
  Mat M = Mat::Zero(dg, dg);
  for (long r = 0; r < D; ++r) {
    cxd wr = 1.0;
    for (size_t h = 0; h < vecs.size(); ++h)
      if (h != g) wr *= std::conj(vecs[h](gi.gidx[h][static_cast<size_t>(r)]));
    if (wr == cxd(0.0, 0.0)) continue;
    for (long c = 0; c < D; ++c) {
      cxd wc = 1.0;
      for (size_t h = 0; h < vecs.size(); ++h)
        if (h != g) wc *= vecs[h](gi.gidx[h][static_cast<size_t>(c)]);
      M(gi.gidx[g][static_cast<size_t>(r)], gi.gidx[g][static_cast<size_t>(c)]) +=
          wr * wc * H(r, c);
    }
  }
  return ((M + M.adjoint()) / 2.0).eval();
}

inline double product_value(const Mat& H, const GroupIndexer& gi,
                            const std::vector<Vec>& vecs) {
  const long D = H.rows();
  Vec full(D);
  for (long f = 0; f < D; ++f) {
    cxd v = 1.0;
    for (size_t h = 0; h < vecs.size(); ++h)
      v *= vecs[h](gi.gidx[h][static_cast<size_t>(f)]);
    full(f) = v;
  }
  return (full.adjoint() * H * full).value().real();
}

}  // namespace detail

struct SeesawResult {
  double value = 0.0;
  std::vector<Vec> vectors;
  int restarts_used = 0;
};

// minimize <prod| H |prod> over product states of the given partition
inline SeesawResult seesaw_product_min(const HermOp& H,
                                       const LocalStructure& st,
                                       const SeesawOpts& opts = {}) {
  st.validate(H.support());
  detail::GroupIndexer gi(H.support(), st.groups);
  std::mt19937_64 rng(opts.seed);
  SeesawResult best;
  best.value = std::numeric_limits<double>::infinity();
  for (int r = 0; r < opts.restarts; ++r) {
    std::vector<Vec> vecs;
    for (long d : gi.gdim) vecs.push_back(random_unit_vec(d, rng));
    double prev = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
      for (size_t g = 0; g < vecs.size(); ++g) {
        Mat M = detail::contract_environment(H.matrix(), gi, vecs, g);
        Eigen::SelfAdjointEigenSolver<Mat> es(M);
        vecs[g] = es.eigenvectors().col(0);
      }
      double val = detail::product_value(H.matrix(), gi, vecs);
      if (prev - val < opts.sweep_tol) {
        prev = val;
        break;
      }
      prev = val;
    }
    if (prev < best.value) {
      best.value = prev;
      best.vectors = vecs;
    }
    best.restarts_used = r + 1;
  }
  return best;
}

// maximize <prod| H |prod>: run the minimizer on -H
inline SeesawResult seesaw_product_max(const HermOp& H,
                                       const LocalStructure& st,
                                       const SeesawOpts& opts = {}) {
  SeesawResult r = seesaw_product_min(HermOp(H.support(), (-H.matrix()).eval()), st, opts);
  r.value = -r.value;
  return r;
}

// Numeric audit of a candidate witness: search for a product state with a
// negative expectation. Finding one refutes the candidate; not finding one
// leaves it probable (the search is a heuristic, not a proof).
inline Witness validate_witness(const HermOp& W, const LocalStructure& st,
                                const SeesawOpts& opts = {}) {
  SeesawResult r = seesaw_product_min(W, st, opts);
  Witness out;
  out.op = W;
  out.structure = st;
  out.product_min = r.value;
  const double tol = 1e-9 * std::max(1.0, W.matrix().cwiseAbs().maxCoeff());
  if (r.value < -tol) {
    out.status = WitnessStatus::Refuted;
    for (size_t g = 0; g < st.groups.size(); ++g)
      out.refuter.emplace_back(Subsystem(W.support().system(), st.groups[g]),
                               r.vectors[g]);
  } else {
    out.status = WitnessStatus::Probable;
  }
  return out;
}

// ---------------------------------------------------------------------------
// verified constructions

inline Mat pauli_x() { Mat m(2, 2); m << 0, 1, 1, 0; return m; }
inline Mat pauli_y() { Mat m(2, 2); m << cxd(0, 0), cxd(0, -1), cxd(0, 1), cxd(0, 0); return m; }
inline Mat pauli_z() { Mat m(2, 2); m << 1, 0, 0, -1; return m; }

inline Mat pauli_obs(const std::array<double, 3>& n) {
  return n[0] * pauli_x() + n[1] * pauli_y() + n[2] * pauli_z();
}

// W = 2*1 - [A0 (x) (B0 + B1) + A1 (x) (B0 - B1)] on qubit sites (a, b).
// Each observable must have spectrum {+1, -1}; then product states across
// {a} | {b} satisfy Tr(W sigma) >= 0 and the witness is structurally valid.
inline Witness chsh_witness(const SiteSystem& sys, int a, int b, const Mat& A0,
                            const Mat& A1, const Mat& B0, const Mat& B1) {
  require(sys.dim(a) == 2 && sys.dim(b) == 2, Err::BadParameter,
          "CHSH needs qubit sites");
  auto check_pm1 = [](const Mat& m) {
    require(m.rows() == 2 && m.cols() == 2, Err::BadParameter,
            "CHSH observables are 2x2");
    HermOp h(Subsystem(SiteSystem({2}), {0}), m);
    Eigen::SelfAdjointEigenSolver<Mat> es(h.matrix(), Eigen::EigenvaluesOnly);
    require(std::abs(es.eigenvalues()(0) + 1.0) <= 1e-9 &&
                std::abs(es.eigenvalues()(1) - 1.0) <= 1e-9,
            Err::SpectrumNotPM1, "CHSH observable spectrum is not {+1,-1}");
  };
  check_pm1(A0);
  check_pm1(A1);
  check_pm1(B0);
  check_pm1(B1);
  Subsystem supp(sys, {a, b});
  HermOp opA0(Subsystem(sys, {a}), A0), opA1(Subsystem(sys, {a}), A1);
  HermOp opB0(Subsystem(sys, {b}), B0), opB1(Subsystem(sys, {b}), B1);
  Mat bell = tensor(opA0, HermOp(Subsystem(sys, {b}), (B0 + B1).eval())).matrix() +
             tensor(opA1, HermOp(Subsystem(sys, {b}), (B0 - B1).eval())).matrix();
  Mat W = 2.0 * Mat::Identity(supp.dim(), supp.dim()) - bell;
  Witness out;
  out.op = HermOp(supp, W);
  out.structure = LocalStructure::fully_local(supp);
  out.status = WitnessStatus::Verified;
  return out;
}

struct ChshDesign {
  Witness witness;
  double predicted = 0.0;  // max CHSH value of rho at these settings
  double s1 = 0.0, s2 = 0.0;
};

// settings maximizing the CHSH value of a two-qubit state: SVD of the
// correlation matrix T_ab = Tr(rho sigma_a (x) sigma_b)
inline ChshDesign chsh_optimal_for(const DensityOp& rho) {
  require(rho.support().num_sites() == 2 && rho.dim() == 4, Err::BadParameter,
          "CHSH design needs a two-qubit state");
  const auto& sys = rho.support().system();
  const int a = rho.support().sites()[0], b = rho.support().sites()[1];
  std::array<Mat, 3> sig = {pauli_x(), pauli_y(), pauli_z()};
  Eigen::Matrix3d T;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      HermOp si(Subsystem(sys, {a}), sig[static_cast<size_t>(i)]);
      HermOp sj(Subsystem(sys, {b}), sig[static_cast<size_t>(j)]);
      T(i, j) = trace_pairing(HermOp(rho.support(), rho.matrix()),
                              tensor(si, sj));
    }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      T, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double s1 = svd.singularValues()(0), s2 = svd.singularValues()(1);
  const double denom = std::sqrt(s1 * s1 + s2 * s2);
  Eigen::Vector3d u1 = svd.matrixU().col(0), u2 = svd.matrixU().col(1);
  Eigen::Vector3d v1 = svd.matrixV().col(0), v2 = svd.matrixV().col(1);
  Eigen::Vector3d b0 = (s1 * v1 + s2 * v2) / denom;
  Eigen::Vector3d b1 = (s1 * v1 - s2 * v2) / denom;
  auto obs = [&](const Eigen::Vector3d& n) {
    return pauli_obs({n(0), n(1), n(2)});
  };
  ChshDesign out;
  out.witness = chsh_witness(sys, a, b, obs(u1), obs(u2), obs(b0), obs(b1));
  out.predicted = 2.0 * denom;
  out.s1 = s1;
  out.s2 = s2;
  return out;
}

// Partial-transpose witness from an NPT state: W = (|phi><phi|)^T_B for the
// most negative eigenvector phi of rho^T_B. Tr(W rho) = lambda_min < 0 while
// Tr(W sigma) >= 0 for every state separable across the cut.
inline Witness npt_witness(const DensityOp& rho, const std::vector<int>& side_b) {
  Subsystem bpart(rho.support().system(), side_b);
  require(rho.support().contains(bpart) && !bpart.empty() &&
              bpart.num_sites() < rho.support().num_sites(),
          Err::BadParameter, "cut must be a proper nonempty subset");
  Mat gamma = partial_transpose_matrix(rho.support(), rho.matrix(), bpart.sites());
  Eigen::SelfAdjointEigenSolver<Mat> es((gamma + gamma.adjoint()) / 2.0);
  require(es.eigenvalues()(0) < -1e-10, Err::NoNegativeEigenvalue,
          "state is PPT across this cut; no transpose witness");
  Vec phi = es.eigenvectors().col(0);
  Mat W = partial_transpose_matrix(rho.support(), (phi * phi.adjoint()).eval(),
                                   bpart.sites());
  Witness out;
  out.op = HermOp(rho.support(), W);
  out.structure = LocalStructure::bipartition(rho.support(), bpart.sites());
  out.status = WitnessStatus::Verified;
  out.product_min = 0.0;
  return out;
}

// restriction of a witness along the faithful product: contract discarded
// sites with tau, r_V(W) = Tr_{U\V}[ W (1_V (x) tau_{U\V}) ]
inline HermOp witness_restrict(const HermOp& W, const Subsystem& target,
                               const FaithfulProduct& tau) {
  require(W.support().contains(target), Err::NotSubsystem,
          "witness restriction target must lie in the support");
  if (target == W.support()) return W;
  Subsystem rest = W.support().minus(target);
  std::vector<detail::Factor> fs;
  std::vector<Mat> ids;
  ids.reserve(target.sites().size());
  for (int s : target.sites()) {
    ids.push_back(Mat::Identity(W.support().system().dim(s),
                                W.support().system().dim(s)));
    fs.push_back({{s}, &ids.back()});
  }
  Mat taurest = tau.on(rest);
  if (!rest.empty()) fs.push_back({rest.sites(), &taurest});
  Mat pad = detail::assemble_product(W.support(), fs);
  Mat prod = W.matrix() * pad;
  Mat out = partial_trace_matrix(W.support(), ((prod + prod.adjoint()) / 2.0).eval(),
                                 target);
  return HermOp(target, out);
}

}  // namespace entobs
