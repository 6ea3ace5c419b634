#pragma once

// Ancilla-reset cohomology on a fixed patch: thickenings U^(q) with q ancilla
// legs, the reset channel E, the coface maps (insert a fresh tau slot, then
// reset a trailing block of legs), the alternating differential delta_E with
// delta_E^2 = 0, the local group dimensions E^q, and the order-q detectability
// test whose outcome collapses on parity. Ancilla legs sit after the physical
// block, ordered left to right; leg indices are 0-based in code.

#include "entobs/basis.hpp"
#include "entobs/witness.hpp"

namespace entobs {

struct Thickening {
  Subsystem base;
  int q = 0;
  int aux_dim = 2;
  Mat tau;  // faithful ancilla state

  Thickening(Subsystem b, int q_, int d, Mat t)
      : base(std::move(b)), q(q_), aux_dim(d), tau(std::move(t)) {
    require(q >= 0, Err::BadParameter, "ancilla count must be >= 0");
    require(d >= 2, Err::BadParameter, "ancilla dimension must be >= 2");
    require(tau.rows() == d && tau.cols() == d, Err::BadParameter,
            "ancilla state dimension mismatch");
    require(std::abs(tau.trace().real() - 1.0) <= kTraceTol, Err::TraceNotOne,
            "ancilla state trace is not 1");
    Eigen::SelfAdjointEigenSolver<Mat> es((tau + tau.adjoint()) / 2.0,
                                          Eigen::EigenvaluesOnly);
    require(es.eigenvalues().minCoeff() > 1e-12, Err::NotFaithful,
            "ancilla state must be faithful");
    long dim = base.dim();
    for (int l = 0; l < q; ++l) {
      dim *= d;
      require(dim <= kSizeBudget, Err::SizeBudgetExceeded,
              "thickened space exceeds the size budget");
    }
  }

  static Thickening maximally_mixed(Subsystem b, int q_, int d = 2) {
    return Thickening(std::move(b), q_, d,
                      Mat::Identity(d, d) / static_cast<double>(d));
  }

  long dim() const {
    long t = base.dim();
    for (int l = 0; l < q; ++l) t *= aux_dim;
    return t;
  }

  long leg_stride(int leg) const {
    require(leg >= 0 && leg < q, Err::BadParameter, "ancilla leg out of range");
    long s = 1;
    for (int l = leg + 1; l < q; ++l) s *= aux_dim;
    return s;
  }

  Thickening level(int q_) const { return Thickening(base, q_, aux_dim, tau); }
};

namespace detail {

// Tr_leg(Z) (x)_leg M at the given stride
inline Mat leg_replace(const Mat& Z, long stride, int d, const Mat& M) {
  const long D = Z.rows();
  Mat out = Mat::Zero(D, D);
  for (long r = 0; r < D; ++r) {
    const int ra = digit_at(r, stride, d);
    const long rz = r - static_cast<long>(ra) * stride;
    for (long c = 0; c < D; ++c) {
      const int ca = digit_at(c, stride, d);
      const long cz = c - static_cast<long>(ca) * stride;
      if (M(ra, ca) == cxd(0.0, 0.0)) continue;
      cxd acc = 0.0;
      for (int k = 0; k < d; ++k)
        acc += Z(rz + static_cast<long>(k) * stride,
                 cz + static_cast<long>(k) * stride);
      out(r, c) = M(ra, ca) * acc;
    }
  }
  return out;
}

// X (x) M appended as the least significant factor
inline Mat append_factor(const Mat& X, const Mat& M) {
  const long D = X.rows(), d = M.rows();
  Mat out(D * d, D * d);
  for (long r = 0; r < D * d; ++r)
    for (long c = 0; c < D * d; ++c)
      out(r, c) = X(r / d, c / d) * M(r % d, c % d);
  return out;
}

}  // namespace detail

// reset channel on one ancilla leg: E(Z) = Tr_leg(Z) (x) tau
inline Mat reset_map(const Mat& Z, int leg, const Thickening& th) {
  require(Z.rows() == th.dim() && Z.cols() == th.dim(), Err::BadParameter,
          "operator does not live on the thickening");
  return detail::leg_replace(Z, th.leg_stride(leg), th.aux_dim, th.tau);
}

// coface d_q^(m): insert a fresh tau slot; m = 1 resets the fresh slot
// (a no-op since E(tau) = tau), m >= 2 resets the trailing m-1 pre-existing
// legs. Because the fresh slot lands at the end, resetting a trailing block
// absorbs later resets and the cosimplicial identities
// d^(j) o d^(i) = d^(i) o d^(j-1) hold exactly for all i < j.
inline Mat coface(const Mat& X, int m, const Thickening& th) {
  require(X.rows() == th.dim() && X.cols() == th.dim(), Err::BadParameter,
          "operator does not live on the thickening");
  require(m >= 0 && m <= th.q + 1, Err::BadParameter, "coface index out of range");
  if (m == 0) return detail::append_factor(X, th.tau);
  if (m == 1) {
    Mat up = detail::append_factor(X, th.tau);
    return detail::leg_replace(up, 1, th.aux_dim, th.tau);
  }
  Mat reset = X;
  for (int l = th.q - (m - 1); l < th.q; ++l) reset = reset_map(reset, l, th);
  return detail::append_factor(reset, th.tau);
}

inline Mat delta_E(const Mat& X, const Thickening& th) {
  Mat out = Mat::Zero(th.dim() * th.aux_dim, th.dim() * th.aux_dim);
  double sign = 1.0;
  for (int m = 0; m <= th.q + 1; ++m) {
    out += sign * coface(X, m, th);
    sign = -sign;
  }
  return out;
}

// canonical thickened state rho (x) tau^{(x) q}
inline Mat thicken_state(const DensityOp& rho, const Thickening& th) {
  require(rho.support() == th.base, Err::SupportMismatch,
          "state support must equal the thickening base");
  Mat out = rho.matrix();
  for (int l = 0; l < th.q; ++l) out = detail::append_factor(out, th.tau);
  return out;
}

// ---------------------------------------------------------------------------
// matricized differential and local group dimensions
//
// Basis at level q: (physical product basis) x (per-leg Hermitian basis with
// the normalized identity first). Appending tau contributes a fresh digit b
// with weight tvec_b = Tr(e_b tau); resetting a leg kills nonzero digits and
// maps digit 0 to sqrt(d) * tau. The two insert-only cofaces cancel in the
// alternating sum, and the coface m >= 2 resets the trailing m-1 legs, so a
// term survives iff those digits all read zero. The assembled matrix is
// exactly delta_E in that basis; unit tests cross-check columns against the
// literal operator.

inline RMat matricize_delta_E(const Thickening& th) {
  ProductBasis pb(th.base);
  const long nb = pb.size();
  const auto& ab = site_herm_basis(th.aux_dim);
  const long da = static_cast<long>(ab.size());
  long ncols = nb;
  for (int l = 0; l < th.q; ++l) ncols *= da;
  const long nrows = ncols * da;

  RVec tvec(da);
  for (long b = 0; b < da; ++b)
    tvec(b) = (ab[static_cast<size_t>(b)].adjoint() * th.tau).trace().real();
  const double rd = std::sqrt(static_cast<double>(th.aux_dim));

  std::vector<long> stride(static_cast<size_t>(th.q));
  {
    long s = 1;
    for (int l = th.q - 1; l >= 0; --l) {
      stride[static_cast<size_t>(l)] = s;
      s *= da;
    }
  }

  RMat D = RMat::Zero(nrows, ncols);
  std::vector<long> digits(static_cast<size_t>(th.q), 0);
  for (long col = 0; col < ncols; ++col) {
    for (int l = 0; l < th.q; ++l)
      digits[static_cast<size_t>(l)] =
          (col / stride[static_cast<size_t>(l)]) % da;
    int trail = 0;
    while (trail < th.q &&
           digits[static_cast<size_t>(th.q - 1 - trail)] == 0)
      ++trail;
    double sign = 1.0;  // (-1)^m at m = 2
    for (int m = 2; m <= th.q + 1; ++m, sign = -sign) {
      const int k = m - 1;  // trailing legs reset by this coface
      if (k > trail) break;
      const double w0 = sign * std::pow(rd, k);
      // odometer over the k replacement digits plus the fresh digit
      std::vector<long> rep(static_cast<size_t>(k) + 1, 0);
      while (true) {
        double w = w0;
        long moved = col;
        for (int i = 0; i < k; ++i) {
          const long b = rep[static_cast<size_t>(i)];
          w *= tvec(b);
          moved += b * stride[static_cast<size_t>(th.q - k + i)];
        }
        const long bn = rep[static_cast<size_t>(k)];
        w *= tvec(bn);
        if (w != 0.0) D(moved * da + bn, col) += w;
        int pos = 0;
        while (pos <= k && ++rep[static_cast<size_t>(pos)] == da) {
          rep[static_cast<size_t>(pos)] = 0;
          ++pos;
        }
        if (pos > k) break;
      }
    }
  }
  return D;
}

struct LocalGroupDim {
  int q = 0;
  long space_dim = 0;   // dim of the level-q operator space
  int rank_delta = 0;   // rank of delta_E out of level q
  int rank_prev = 0;    // rank of delta_E into level q
  long nullity = 0;
  long dim_eq = 0;      // dim E^q = nullity - rank_prev
};

inline std::vector<LocalGroupDim> local_groups(const Subsystem& base, int q_max,
                                               const Thickening& proto) {
  require(q_max >= 0, Err::BadParameter, "q_max must be >= 0");
  std::vector<LocalGroupDim> out;
  int rank_prev = 0;
  for (int q = 0; q <= q_max; ++q) {
    Thickening th(base, q, proto.aux_dim, proto.tau);
    th.level(q + 1);  // throws SizeBudgetExceeded when level q+1 is too big
    RMat D = matricize_delta_E(th);
    LocalGroupDim g;
    g.q = q;
    g.space_dim = D.cols();
    g.rank_delta = numeric_rank(D);
    g.rank_prev = rank_prev;
    g.nullity = g.space_dim - g.rank_delta;
    g.dim_eq = g.nullity - g.rank_prev;
    out.push_back(g);
    rank_prev = g.rank_delta;
  }
  return out;
}

// ---------------------------------------------------------------------------
// admissible candidates: Y in rho (x) tau^q + V(U) (x) V0^{(x) q}

// distance of Y - rho(x)tau^q from the all-legs-traceless subspace
inline double candidate_residual(const Mat& Y, const DensityOp& rho,
                                 const Thickening& th) {
  Mat R = Y - thicken_state(rho, th);
  // project onto all-legs-traceless: compose (id - E_leg) over legs
  Mat P = R;
  for (int l = 0; l < th.q; ++l) P -= reset_map(P, l, th);
  return (R - P).norm();
}

// rho (x) tau^q plus a random all-legs-traceless term
inline Mat random_candidate(const DensityOp& rho, const Thickening& th,
                            std::mt19937_64& rng, double amp = 0.5) {
  Mat Y = thicken_state(rho, th);
  if (th.q == 0) return Y;
  Mat T = random_herm_matrix(th.dim(), rng);
  for (int l = 0; l < th.q; ++l) T -= reset_map(T, l, th);
  Y += amp * T / std::max(1.0, T.norm());
  return Y;
}

// signed stabilize-reset pairing, evaluated two ways and cross-checked
inline double signed_pairing(const Mat& W, const Mat& Y, const Thickening& th) {
  require(W.rows() == th.dim() * th.aux_dim, Err::BadParameter,
          "witness must live one level above the candidate");
  require(Y.rows() == th.dim(), Err::BadParameter,
          "candidate does not live on the thickening");
  double terms = 0.0, sign = 1.0;
  for (int m = 0; m <= th.q + 1; ++m) {
    terms += sign * (W * coface(Y, m, th)).trace().real();
    sign = -sign;
  }
  const double assembled = (W * delta_E(Y, th)).trace().real();
  require(std::abs(terms - assembled) <=
              1e-10 * std::max(1.0, std::abs(assembled)),
          Err::InternalCheckFailed, "signed pairing routes disagree");
  return assembled;
}

// ---------------------------------------------------------------------------
// order-q detectability

enum class LedStatus { Detected, NotDetected, ImpossibleParity };

inline const char* to_string(LedStatus s) {
  switch (s) {
    case LedStatus::Detected: return "detected";
    case LedStatus::NotDetected: return "not_detected";
    case LedStatus::ImpossibleParity: return "impossible_parity";
  }
  return "?";
}

enum class LedStage { None, Transpose, Chsh, Overlap };

inline const char* to_string(LedStage s) {
  switch (s) {
    case LedStage::None: return "none";
    case LedStage::Transpose: return "transpose";
    case LedStage::Chsh: return "chsh";
    case LedStage::Overlap: return "overlap";
  }
  return "?";
}

struct LedResult {
  LedStatus status = LedStatus::NotDetected;
  int q = 0;
  LedStage stage = LedStage::None;
  std::optional<Witness> base_witness;  // on the physical patch
  double value = 0.0;                   // Tr(W rho), negative when detected
  // odd-q exhibit: Y = rho (x) tau^q and W (x) 1 pair off to the same value
  std::optional<Mat> thick_candidate;
  std::optional<Mat> thick_witness;
};

namespace detail {

// order-0 ladder: transpose witnesses across every bipartition, then optimal
// CHSH on two-qubit patches, then the product-overlap candidate audited by
// the see-saw
inline LedResult led_order0(const DensityOp& rho, const SeesawOpts& opts) {
  LedResult out;
  out.q = 0;
  const auto& sites = rho.support().sites();
  const int ns = static_cast<int>(sites.size());
  if (ns < 2) {
    out.status = LedStatus::NotDetected;
    return out;
  }
  double best = 0.0;
  std::optional<Witness> best_w;
  for (int mask = 1; mask < (1 << (ns - 1)); ++mask) {
    std::vector<int> side;
    for (int k = 0; k < ns; ++k)
      if (mask & (1 << k)) side.push_back(sites[static_cast<size_t>(k)]);
    Mat gamma =
        partial_transpose_matrix(rho.support(), rho.matrix(), side);
    Eigen::SelfAdjointEigenSolver<Mat> es((gamma + gamma.adjoint()) / 2.0,
                                          Eigen::EigenvaluesOnly);
    if (es.eigenvalues()(0) < -1e-10) {
      Witness w = npt_witness(rho, side);
      const double val =
          trace_pairing(w.op, HermOp(rho.support(), rho.matrix()));
      if (val < best) {
        best = val;
        best_w = std::move(w);
      }
    }
  }
  if (best_w) {
    out.status = LedStatus::Detected;
    out.stage = LedStage::Transpose;
    out.base_witness = std::move(best_w);
    out.value = best;
    return out;
  }

  if (ns == 2 && rho.dim() == 4) {
    ChshDesign d = chsh_optimal_for(rho);
    if (d.predicted > 2.0 + 1e-9) {
      out.status = LedStatus::Detected;
      out.stage = LedStage::Chsh;
      out.value = 2.0 - d.predicted;
      out.base_witness = std::move(d.witness);
      return out;
    }
  }

  HermOp rho_h(rho.support(), rho.matrix());
  LocalStructure st = LocalStructure::fully_local(rho.support());
  SeesawResult mx = seesaw_product_max(rho_h, st, opts);
  const double val = mx.value - rho.purity();
  if (val < -1e-9) {
    Mat W = mx.value * Mat::Identity(rho.dim(), rho.dim()) - rho.matrix();
    Witness w = validate_witness(HermOp(rho.support(), W), st, opts);
    if (w.status != WitnessStatus::Refuted) {
      out.status = LedStatus::Detected;
      out.stage = LedStage::Overlap;
      out.base_witness = std::move(w);
      out.value = val;
      return out;
    }
  }
  out.status = LedStatus::NotDetected;
  return out;
}

}  // namespace detail

// Order-q test with parity collapse: even q >= 1 can never detect (delta_E
// kills every admissible candidate), odd q reduces to the order-0 witness
// test with the explicit exhibit Y = rho (x) tau^q, W = W_U (x) 1.
inline LedResult led_test(const DensityOp& rho, int q,
                          const Thickening& proto,
                          const SeesawOpts& opts = {}) {
  require(q >= 0, Err::BadParameter, "order must be >= 0");
  if (q >= 1 && q % 2 == 0) {
    LedResult out;
    out.status = LedStatus::ImpossibleParity;
    out.q = q;
    return out;
  }
  LedResult out = detail::led_order0(rho, opts);
  out.q = q;
  if (q == 0 || out.status != LedStatus::Detected) return out;

  Thickening th(rho.support(), q, proto.aux_dim, proto.tau);
  out.thick_candidate = thicken_state(rho, th);
  Mat W = out.base_witness->op.matrix();
  for (int l = 0; l < q; ++l)
    W = detail::append_factor(
        W, Mat::Identity(proto.aux_dim, proto.aux_dim));
  out.thick_witness = std::move(W);
  return out;
}

// ---------------------------------------------------------------------------
// independence of the ancilla reference state

struct TauIndependence {
  bool ok = false;
  double max_intertwine_err = 0.0;
  std::vector<LocalGroupDim> dims;
  std::vector<LocalGroupDim> dims_prime;
};

// T(X) = X + Tr(X)(tau' - tau) is trace-preserving with T(tau) = tau';
// F_q = id (x) T^{(x) q} intertwines the coface maps of the two references
// and the group dimensions agree.
inline TauIndependence tau_independence_check(const Subsystem& base, int q_max,
                                              const Mat& tau, const Mat& tau_prime,
                                              int aux_dim,
                                              std::uint64_t seed = 99) {
  Thickening pt(base, 0, aux_dim, tau);
  Thickening pp(base, 0, aux_dim, tau_prime);
  TauIndependence out;

  auto apply_T_leg = [&](const Mat& Z, const Thickening& th, int leg) {
    return (Z + detail::leg_replace(Z, th.leg_stride(leg), aux_dim,
                                    (tau_prime - tau).eval()))
        .eval();
  };
  auto apply_F = [&](Mat Z, const Thickening& th) {
    for (int l = 0; l < th.q; ++l) Z = apply_T_leg(Z, th, l);
    return Z;
  };

  std::mt19937_64 rng(seed);
  double max_err = 0.0;
  for (int q = 0; q <= q_max; ++q) {
    Thickening tht(base, q, aux_dim, tau);
    Thickening thp(base, q, aux_dim, tau_prime);
    Thickening tht1(base, q + 1, aux_dim, tau);
    Thickening thp1(base, q + 1, aux_dim, tau_prime);
    for (int rep = 0; rep < 3; ++rep) {
      Mat X = random_herm_matrix(tht.dim(), rng);
      Mat FX = apply_F(X, thp);
      for (int m = 0; m <= q + 1; ++m) {
        Mat lhs = coface(FX, m, thp);
        Mat rhs = apply_F(coface(X, m, tht), thp1);
        max_err = std::max(max_err, (lhs - rhs).cwiseAbs().maxCoeff() /
                                        std::max(1.0, X.cwiseAbs().maxCoeff()));
      }
    }
  }
  out.dims = local_groups(base, q_max, pt);
  out.dims_prime = local_groups(base, q_max, pp);
  out.max_intertwine_err = max_err;
  bool dims_match = out.dims.size() == out.dims_prime.size();
  if (dims_match)
    for (size_t i = 0; i < out.dims.size(); ++i)
      dims_match = dims_match && out.dims[i].dim_eq == out.dims_prime[i].dim_eq;
  out.ok = dims_match && max_err <= 1e-10;
  return out;
}

}  // namespace entobs
