#pragma once

// Multi-qudit operator algebra: site systems, subsystem-supported Hermitian
// operators, partial trace / tensor embedding, spectral sign data, and the
// standard state constructors. Composite indices are mixed-radix big-endian
// over ascending site order (lowest site index is most significant).

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace entobs {

using cxd = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double kHermTol = 1e-12;      // relative hermiticity tolerance
inline constexpr double kPsdTol = 1e-10;       // density operators: lambda_min >= -kPsdTol
inline constexpr double kTraceTol = 1e-10;     // |Tr rho - 1| tolerance
inline constexpr double kRankCutoff = 1e-9;    // singular values below cutoff*sigma_max are zero
inline constexpr double kZeroEigTol = 1e-9;    // spectral_sign zero band, relative
inline constexpr long kSizeBudget = 1 << 14;   // max total Hilbert dimension

enum class Err {
  BadParameter,
  SizeBudgetExceeded,
  NotHermitian,
  NotPSD,
  TraceNotOne,
  NotSubsystem,
  SupportMismatch,
  OverlappingSupport,
  NotFaithful,
  CoverMismatch,
  DegreeMismatch,
  NotClosed,
  NotCompatible,
  CertificateExtractionFailed,
  IterationLimit,
  SpectrumNotPM1,
  NoNegativeEigenvalue,
  NotPure,
  OverlapNotPure,
  SchmidtRankExceedsOne,
  GlueConsistencyFailure,
  NotPartition,
  NotFullRank,
  SingularLink,
  NonParallelSplitting,
  StepTooLarge,
  ParseError,
  InternalCheckFailed,
};

struct Error : std::runtime_error {
  Err code;
  Error(Err c, const std::string& what) : std::runtime_error(what), code(c) {}
};

inline void require(bool ok, Err code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

// ---------------------------------------------------------------------------
// Site systems and subsystems

class SiteSystem {
 public:
  SiteSystem() = default;
  explicit SiteSystem(std::vector<int> dims) : dims_(std::move(dims)) {
    require(!dims_.empty(), Err::BadParameter, "site system needs at least one site");
    long total = 1;
    for (int d : dims_) {
      require(d >= 2, Err::BadParameter, "site dimension must be >= 2");
      total *= d;
      require(total <= kSizeBudget, Err::SizeBudgetExceeded,
              "total dimension exceeds the size budget");
    }
  }

  int num_sites() const { return static_cast<int>(dims_.size()); }
  int dim(int site) const { return dims_.at(static_cast<size_t>(site)); }
  const std::vector<int>& dims() const { return dims_; }

  long total_dim() const {
    long t = 1;
    for (int d : dims_) t *= d;
    return t;
  }

  std::vector<int> all_sites() const {
    std::vector<int> s(dims_.size());
    std::iota(s.begin(), s.end(), 0);
    return s;
  }

  bool operator==(const SiteSystem& o) const { return dims_ == o.dims_; }

 private:
  std::vector<int> dims_;
};

// A sorted, duplicate-free subset of sites. The empty subsystem is legal and
// carries the one-dimensional scalar space.
class Subsystem {
 public:
  Subsystem() = default;
  Subsystem(SiteSystem sys, std::vector<int> sites)
      : sys_(std::move(sys)), sites_(std::move(sites)) {
    std::sort(sites_.begin(), sites_.end());
    for (size_t i = 0; i < sites_.size(); ++i) {
      require(sites_[i] >= 0 && sites_[i] < sys_.num_sites(), Err::NotSubsystem,
              "site index out of range");
      require(i == 0 || sites_[i] != sites_[i - 1], Err::NotSubsystem,
              "duplicate site in subsystem");
    }
  }

  const SiteSystem& system() const { return sys_; }
  const std::vector<int>& sites() const { return sites_; }
  int num_sites() const { return static_cast<int>(sites_.size()); }
  bool empty() const { return sites_.empty(); }

  long dim() const {
    long t = 1;
    for (int s : sites_) t *= sys_.dim(s);
    return t;
  }

  bool contains(const Subsystem& other) const {
    return std::includes(sites_.begin(), sites_.end(), other.sites_.begin(),
                         other.sites_.end());
  }

  bool contains_site(int s) const {
    return std::binary_search(sites_.begin(), sites_.end(), s);
  }

  Subsystem intersect(const Subsystem& other) const {
    std::vector<int> out;
    std::set_intersection(sites_.begin(), sites_.end(), other.sites_.begin(),
                          other.sites_.end(), std::back_inserter(out));
    return Subsystem(sys_, out);
  }

  Subsystem unite(const Subsystem& other) const {
    std::vector<int> out;
    std::set_union(sites_.begin(), sites_.end(), other.sites_.begin(),
                   other.sites_.end(), std::back_inserter(out));
    return Subsystem(sys_, out);
  }

  Subsystem minus(const Subsystem& other) const {
    std::vector<int> out;
    std::set_difference(sites_.begin(), sites_.end(), other.sites_.begin(),
                        other.sites_.end(), std::back_inserter(out));
    return Subsystem(sys_, out);
  }

  bool operator==(const Subsystem& o) const {
    return sites_ == o.sites_ && sys_ == o.sys_;
  }

 private:
  SiteSystem sys_;
  std::vector<int> sites_;
};

// ---------------------------------------------------------------------------
// Mixed-radix digit helpers (big-endian over ascending sites)

inline std::vector<long> site_strides(const Subsystem& sub) {
  const auto& sites = sub.sites();
  std::vector<long> strides(sites.size());
  long acc = 1;
  for (int i = static_cast<int>(sites.size()) - 1; i >= 0; --i) {
    strides[static_cast<size_t>(i)] = acc;
    acc *= sub.system().dim(sites[static_cast<size_t>(i)]);
  }
  return strides;
}

inline int digit_at(long idx, long stride, int dim) {
  return static_cast<int>((idx / stride) % dim);
}

// ---------------------------------------------------------------------------
// Hermitian operators on a subsystem

class HermOp {
 public:
  HermOp() = default;
  HermOp(Subsystem supp, Mat m) : supp_(std::move(supp)), m_(std::move(m)) {
    require(m_.rows() == supp_.dim() && m_.cols() == supp_.dim(),
            Err::BadParameter, "matrix shape does not match subsystem dimension");
    const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
    const double dev = (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
    require(dev <= kHermTol * scale, Err::NotHermitian,
            "matrix is not Hermitian within tolerance");
    m_ = ((m_ + m_.adjoint()) / 2.0).eval();
  }

  const Subsystem& support() const { return supp_; }
  const Mat& matrix() const { return m_; }
  long dim() const { return supp_.dim(); }

  double trace() const { return m_.trace().real(); }
  double fnorm() const { return m_.norm(); }

 private:
  Subsystem supp_;
  Mat m_;
};

class DensityOp : public HermOp {
 public:
  DensityOp() = default;
  DensityOp(Subsystem supp, Mat m) : HermOp(std::move(supp), std::move(m)) {
    Eigen::SelfAdjointEigenSolver<Mat> es(matrix(), Eigen::EigenvaluesOnly);
    require(es.eigenvalues().minCoeff() >= -kPsdTol, Err::NotPSD,
            "density operator has a negative eigenvalue");
    require(std::abs(trace() - 1.0) <= kTraceTol, Err::TraceNotOne,
            "density operator trace is not 1");
  }

  double purity() const { return (matrix() * matrix()).trace().real(); }
  bool is_pure(double tol = 1e-9) const { return purity() >= 1.0 - tol; }
};

// ---------------------------------------------------------------------------
// Tensor embedding and partial trace

namespace detail {

struct Factor {
  std::vector<int> sites;
  const Mat* m;
};

// Product of operator factors with pairwise disjoint supports, written on the
// target subsystem; missing sites are an error.
inline Mat assemble_product(const Subsystem& target,
                            const std::vector<Factor>& factors) {
  const auto& tsites = target.sites();
  std::vector<int> owner(tsites.size(), -1);
  for (size_t f = 0; f < factors.size(); ++f) {
    for (int s : factors[f].sites) {
      auto it = std::lower_bound(tsites.begin(), tsites.end(), s);
      require(it != tsites.end() && *it == s, Err::NotSubsystem,
              "factor site not contained in target");
      size_t pos = static_cast<size_t>(it - tsites.begin());
      require(owner[pos] == -1, Err::OverlappingSupport,
              "factor supports overlap");
      owner[pos] = static_cast<int>(f);
    }
  }
  for (int o : owner)
    require(o != -1, Err::BadParameter, "target site not covered by any factor");

  const long D = target.dim();
  auto strides = site_strides(target);

  // per-factor strides of its own composite index, and target positions
  struct FInfo {
    std::vector<size_t> tpos;   // positions in target site list
    std::vector<long> fstride;  // factor-internal strides
    std::vector<int> fdim;
    const Mat* m;
  };
  std::vector<FInfo> infos;
  for (const auto& f : factors) {
    FInfo fi;
    fi.m = f.m;
    long acc = 1;
    fi.fstride.resize(f.sites.size());
    fi.fdim.resize(f.sites.size());
    for (int i = static_cast<int>(f.sites.size()) - 1; i >= 0; --i) {
      fi.fstride[static_cast<size_t>(i)] = acc;
      acc *= target.system().dim(f.sites[static_cast<size_t>(i)]);
    }
    for (size_t i = 0; i < f.sites.size(); ++i) {
      auto it = std::lower_bound(tsites.begin(), tsites.end(), f.sites[i]);
      fi.tpos.push_back(static_cast<size_t>(it - tsites.begin()));
      fi.fdim[i] = target.system().dim(f.sites[i]);
    }
    infos.push_back(std::move(fi));
  }

  Mat out(D, D);
  for (long r = 0; r < D; ++r) {
    for (long c = 0; c < D; ++c) {
      cxd v = 1.0;
      for (const auto& fi : infos) {
        long fr = 0, fc = 0;
        for (size_t i = 0; i < fi.tpos.size(); ++i) {
          const long st = strides[fi.tpos[i]];
          const int d = fi.fdim[i];
          fr += static_cast<long>(digit_at(r, st, d)) * fi.fstride[i];
          fc += static_cast<long>(digit_at(c, st, d)) * fi.fstride[i];
        }
        v *= (*fi.m)(fr, fc);
        if (v == cxd(0.0, 0.0)) break;
      }
      out(r, c) = v;
    }
  }
  return out;
}

}  // namespace detail

// Tensor product of operators with disjoint (possibly interleaved) supports.
inline HermOp tensor(const HermOp& a, const HermOp& b) {
  require(a.support().system() == b.support().system(), Err::BadParameter,
          "tensor factors live on different site systems");
  Subsystem target = a.support().unite(b.support());
  require(target.num_sites() ==
              a.support().num_sites() + b.support().num_sites(),
          Err::OverlappingSupport, "tensor factors have overlapping support");
  std::vector<detail::Factor> fs = {{a.support().sites(), &a.matrix()},
                                    {b.support().sites(), &b.matrix()}};
  return HermOp(target, detail::assemble_product(target, fs));
}

// Partial trace onto `keep` (must be contained in the operator support).
inline Mat partial_trace_matrix(const Subsystem& supp, const Mat& X,
                                const Subsystem& keep) {
  require(supp.contains(keep), Err::NotSubsystem,
          "partial trace target is not contained in the support");
  const long D = supp.dim();
  const long Dk = keep.dim();
  if (Dk == D) return X;

  auto strides = site_strides(supp);
  const auto& ssites = supp.sites();
  std::vector<long> keep_stride(ssites.size(), 0);
  std::vector<bool> kept(ssites.size(), false);
  {
    auto kst = site_strides(keep);
    const auto& ks = keep.sites();
    for (size_t i = 0; i < ks.size(); ++i) {
      auto it = std::lower_bound(ssites.begin(), ssites.end(), ks[i]);
      size_t pos = static_cast<size_t>(it - ssites.begin());
      kept[pos] = true;
      keep_stride[pos] = kst[i];
    }
  }

  // enumerate traced composite index
  std::vector<size_t> tr_pos;
  long Dt = 1;
  for (size_t i = 0; i < ssites.size(); ++i)
    if (!kept[i]) {
      tr_pos.push_back(i);
      Dt *= supp.system().dim(ssites[i]);
    }

  // map keep-index + traced-index -> full index
  std::vector<long> keep_map(static_cast<size_t>(Dk), 0);
  for (long k = 0; k < Dk; ++k) {
    long full = 0;
    for (size_t i = 0; i < ssites.size(); ++i)
      if (kept[i])
        full += static_cast<long>(
                    digit_at(k, keep_stride[i], supp.system().dim(ssites[i]))) *
                strides[i];
    keep_map[static_cast<size_t>(k)] = full;
  }
  std::vector<long> tr_map(static_cast<size_t>(Dt), 0);
  {
    std::vector<int> digits(tr_pos.size(), 0);
    for (long t = 0; t < Dt; ++t) {
      long full = 0;
      for (size_t i = 0; i < tr_pos.size(); ++i)
        full += static_cast<long>(digits[i]) * strides[tr_pos[i]];
      tr_map[static_cast<size_t>(t)] = full;
      for (int i = static_cast<int>(tr_pos.size()) - 1; i >= 0; --i) {
        int d = supp.system().dim(ssites[tr_pos[static_cast<size_t>(i)]]);
        if (++digits[static_cast<size_t>(i)] < d) break;
        digits[static_cast<size_t>(i)] = 0;
      }
    }
  }

  Mat out = Mat::Zero(Dk, Dk);
  for (long r = 0; r < Dk; ++r)
    for (long c = 0; c < Dk; ++c) {
      cxd acc = 0.0;
      for (long t = 0; t < Dt; ++t)
        acc += X(keep_map[static_cast<size_t>(r)] + tr_map[static_cast<size_t>(t)],
                 keep_map[static_cast<size_t>(c)] + tr_map[static_cast<size_t>(t)]);
      out(r, c) = acc;
    }
  return out;
}

inline HermOp partial_trace(const HermOp& X, const Subsystem& keep) {
  return HermOp(keep, partial_trace_matrix(X.support(), X.matrix(), keep));
}

inline DensityOp partial_trace(const DensityOp& X, const Subsystem& keep) {
  return DensityOp(keep, partial_trace_matrix(X.support(), X.matrix(), keep));
}

// ---------------------------------------------------------------------------
// Faithful product reference states

class FaithfulProduct {
 public:
  FaithfulProduct() = default;

  // maximally mixed per site, aux dimension d with tau_aux = I/d
  static FaithfulProduct maximally_mixed(const SiteSystem& sys, int aux_dim = 2) {
    FaithfulProduct fp;
    fp.sys_ = sys;
    for (int j = 0; j < sys.num_sites(); ++j)
      fp.site_tau_.push_back(Mat::Identity(sys.dim(j), sys.dim(j)) /
                             static_cast<double>(sys.dim(j)));
    fp.aux_tau_ = Mat::Identity(aux_dim, aux_dim) / static_cast<double>(aux_dim);
    fp.validate();
    return fp;
  }

  FaithfulProduct(SiteSystem sys, std::vector<Mat> site_tau, Mat aux_tau)
      : sys_(std::move(sys)), site_tau_(std::move(site_tau)),
        aux_tau_(std::move(aux_tau)) {
    validate();
  }

  const SiteSystem& system() const { return sys_; }
  const Mat& site(int j) const { return site_tau_.at(static_cast<size_t>(j)); }
  const Mat& aux() const { return aux_tau_; }
  int aux_dim() const { return static_cast<int>(aux_tau_.rows()); }

  // product state on a subsystem
  Mat on(const Subsystem& sub) const {
    if (sub.empty()) return Mat::Ones(1, 1);
    std::vector<detail::Factor> fs;
    for (int s : sub.sites()) fs.push_back({{s}, &site_tau_[static_cast<size_t>(s)]});
    return detail::assemble_product(sub, fs);
  }

 private:
  void validate() {
    require(static_cast<int>(site_tau_.size()) == sys_.num_sites(),
            Err::BadParameter, "faithful product needs one factor per site");
    auto check = [](const Mat& m, int d) {
      require(m.rows() == d && m.cols() == d, Err::BadParameter,
              "faithful factor has wrong dimension");
      require((m - m.adjoint()).cwiseAbs().maxCoeff() <= kHermTol * std::max(1.0, m.cwiseAbs().maxCoeff()),
              Err::NotHermitian, "faithful factor not Hermitian");
      require(std::abs(m.trace().real() - 1.0) <= kTraceTol, Err::TraceNotOne,
              "faithful factor trace is not 1");
      Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
      require(es.eigenvalues().minCoeff() > 1e-12, Err::NotFaithful,
              "faithful factor must be full rank");
    };
    for (int j = 0; j < sys_.num_sites(); ++j) check(site_tau_[static_cast<size_t>(j)], sys_.dim(j));
    check(aux_tau_, static_cast<int>(aux_tau_.rows()));
  }

  SiteSystem sys_;
  std::vector<Mat> site_tau_;
  Mat aux_tau_;
};

// Extension e_V^U(X) = X (tensor) tau_{U \ V}; V may be empty (scalar input).
inline Mat extend_matrix(const Subsystem& from, const Mat& X,
                         const Subsystem& to, const FaithfulProduct& tau) {
  require(to.contains(from), Err::NotSubsystem, "extension target must contain source");
  if (from.sites() == to.sites()) return X;
  std::vector<detail::Factor> fs;
  if (!from.empty()) fs.push_back({from.sites(), &X});
  Subsystem rest = to.minus(from);
  for (int s : rest.sites()) fs.push_back({{s}, &tau.site(s)});
  Mat out = detail::assemble_product(to, fs);
  if (from.empty()) out *= X(0, 0);
  return out;
}

// identity-padded extension (adjoint of the plain partial trace)
inline Mat extend_identity_matrix(const Subsystem& from, const Mat& X,
                                  const Subsystem& to) {
  require(to.contains(from), Err::NotSubsystem, "extension target must contain source");
  if (from.sites() == to.sites()) return X;
  std::vector<detail::Factor> fs;
  std::vector<Mat> ids;
  Subsystem rest = to.minus(from);
  ids.reserve(rest.sites().size());
  if (!from.empty()) fs.push_back({from.sites(), &X});
  for (int s : rest.sites()) {
    ids.push_back(Mat::Identity(to.system().dim(s), to.system().dim(s)));
    fs.push_back({{s}, &ids.back()});
  }
  Mat out = detail::assemble_product(to, fs);
  if (from.empty()) out *= X(0, 0);
  return out;
}

// ---------------------------------------------------------------------------
// trace pairing and spectral sign data

inline double trace_pairing(const HermOp& X, const HermOp& Y) {
  require(X.support() == Y.support(), Err::SupportMismatch,
          "trace pairing needs equal supports");
  return (X.matrix() * Y.matrix()).trace().real();
}

struct SpectralSign {
  HermOp sign;      // S = P_plus - P_minus
  HermOp p_plus;
  HermOp p_minus;
  HermOp p_zero;
  int rank_plus = 0;
  int rank_minus = 0;
};

inline SpectralSign spectral_sign(const HermOp& X) {
  Eigen::SelfAdjointEigenSolver<Mat> es(X.matrix());
  const auto& w = es.eigenvalues();
  const auto& V = es.eigenvectors();
  const double scale = w.cwiseAbs().maxCoeff();
  const double tol = kZeroEigTol * std::max(scale, 1e-300);
  const long n = X.dim();
  Mat Pp = Mat::Zero(n, n), Pm = Mat::Zero(n, n), P0 = Mat::Zero(n, n);
  int rp = 0, rm = 0;
  for (long i = 0; i < n; ++i) {
    Mat proj = V.col(i) * V.col(i).adjoint();
    if (w(i) > tol) {
      Pp += proj;
      ++rp;
    } else if (w(i) < -tol) {
      Pm += proj;
      ++rm;
    } else {
      P0 += proj;
    }
  }
  SpectralSign out;
  out.sign = HermOp(X.support(), Pp - Pm);
  out.p_plus = HermOp(X.support(), Pp);
  out.p_minus = HermOp(X.support(), Pm);
  out.p_zero = HermOp(X.support(), P0);
  out.rank_plus = rp;
  out.rank_minus = rm;
  return out;
}

// ---------------------------------------------------------------------------
// Pure state vectors

class PureVec {
 public:
  PureVec() = default;
  PureVec(Subsystem supp, Vec v) : supp_(std::move(supp)), v_(std::move(v)) {
    require(v_.size() == supp_.dim(), Err::BadParameter,
            "vector length does not match subsystem dimension");
  }

  const Subsystem& support() const { return supp_; }
  const Vec& vec() const { return v_; }
  double norm() const { return v_.norm(); }

  PureVec normalized() const { return PureVec(supp_, v_ / v_.norm()); }

  DensityOp to_density() const {
    Vec u = v_ / v_.norm();
    return DensityOp(supp_, u * u.adjoint());
  }

 private:
  Subsystem supp_;
  Vec v_;
};

// tensor of pure vectors on disjoint (possibly interleaved) supports
inline PureVec tensor(const PureVec& a, const PureVec& b) {
  Subsystem target = a.support().unite(b.support());
  require(target.num_sites() ==
              a.support().num_sites() + b.support().num_sites(),
          Err::OverlappingSupport, "pure factors overlap");
  auto strides = site_strides(target);
  const auto& tsites = target.sites();
  auto part_index = [&](const Subsystem& part, long full) {
    auto pst = site_strides(part);
    long idx = 0;
    for (size_t i = 0; i < part.sites().size(); ++i) {
      auto it = std::lower_bound(tsites.begin(), tsites.end(), part.sites()[i]);
      size_t pos = static_cast<size_t>(it - tsites.begin());
      idx += static_cast<long>(digit_at(full, strides[pos],
                                        part.system().dim(part.sites()[i]))) *
             pst[i];
    }
    return idx;
  };
  Vec out(target.dim());
  for (long k = 0; k < target.dim(); ++k)
    out(k) = a.vec()(part_index(a.support(), k)) *
             b.vec()(part_index(b.support(), k));
  return PureVec(target, out);
}

// ---------------------------------------------------------------------------
// Standard states

enum class BellKind { PhiPlus, PhiMinus, PsiPlus, PsiMinus };

inline PureVec bell_vec(const SiteSystem& sys, int a, int b, BellKind kind) {
  Subsystem supp(sys, {a, b});
  require(sys.dim(a) == 2 && sys.dim(b) == 2, Err::BadParameter,
          "Bell states need qubit sites");
  Vec v = Vec::Zero(4);
  const double s = 1.0 / std::sqrt(2.0);
  switch (kind) {
    case BellKind::PhiPlus: v(0) = s; v(3) = s; break;
    case BellKind::PhiMinus: v(0) = s; v(3) = -s; break;
    case BellKind::PsiPlus: v(1) = s; v(2) = s; break;
    case BellKind::PsiMinus: v(1) = s; v(2) = -s; break;
  }
  return PureVec(supp, v);
}

inline DensityOp bell_state(const SiteSystem& sys, int a, int b, BellKind kind) {
  return bell_vec(sys, a, b, kind).to_density();
}

inline PureVec ghz_vec(const SiteSystem& sys, const std::vector<int>& sites) {
  Subsystem supp(sys, sites);
  require(supp.num_sites() >= 2, Err::BadParameter, "GHZ needs >= 2 sites");
  for (int s : supp.sites())
    require(sys.dim(s) == 2, Err::BadParameter, "GHZ here is qubit-only");
  Vec v = Vec::Zero(supp.dim());
  const double s = 1.0 / std::sqrt(2.0);
  v(0) = s;
  v(supp.dim() - 1) = s;
  return PureVec(supp, v);
}

inline DensityOp ghz_state(const SiteSystem& sys, const std::vector<int>& sites) {
  return ghz_vec(sys, sites).to_density();
}

inline PureVec w_vec(const SiteSystem& sys, const std::vector<int>& sites) {
  Subsystem supp(sys, sites);
  const int n = supp.num_sites();
  require(n >= 2, Err::BadParameter, "W state needs >= 2 sites");
  for (int s : supp.sites())
    require(sys.dim(s) == 2, Err::BadParameter, "W state is qubit-only");
  Vec v = Vec::Zero(supp.dim());
  const double amp = 1.0 / std::sqrt(static_cast<double>(n));
  for (int j = 0; j < n; ++j) v(1L << (n - 1 - j)) = amp;
  return PureVec(supp, v);
}

inline DensityOp w_state(const SiteSystem& sys, const std::vector<int>& sites) {
  return w_vec(sys, sites).to_density();
}

inline DensityOp gibbs_state(const HermOp& H, double beta) {
  require(beta >= 0.0, Err::BadParameter, "inverse temperature must be >= 0");
  Eigen::SelfAdjointEigenSolver<Mat> es(H.matrix());
  RVec w = es.eigenvalues();
  const double wmin = w.minCoeff();
  RVec e = (-beta * (w.array() - wmin)).exp();
  e /= e.sum();
  Mat rho = es.eigenvectors() * e.asDiagonal() * es.eigenvectors().adjoint();
  return DensityOp(H.support(), rho);
}

inline DensityOp product_state(const std::vector<DensityOp>& parts) {
  require(!parts.empty(), Err::BadParameter, "empty product");
  Subsystem target = parts[0].support();
  long nsites = parts[0].support().num_sites();
  for (size_t i = 1; i < parts.size(); ++i) {
    target = target.unite(parts[i].support());
    nsites += parts[i].support().num_sites();
  }
  require(nsites == target.num_sites(), Err::OverlappingSupport,
          "product factors overlap");
  std::vector<detail::Factor> fs;
  for (const auto& p : parts) fs.push_back({p.support().sites(), &p.matrix()});
  return DensityOp(target, detail::assemble_product(target, fs));
}

// ---------------------------------------------------------------------------
// Random Hermitians (GUE-style), seeded

inline Mat random_herm_matrix(long n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Mat a(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) a(i, j) = cxd(g(rng), g(rng));
  return ((a + a.adjoint()) / 2.0).eval();
}

inline HermOp random_herm(const Subsystem& supp, std::mt19937_64& rng) {
  return HermOp(supp, random_herm_matrix(supp.dim(), rng));
}

inline Vec random_unit_vec(long n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(n);
  for (long i = 0; i < n; ++i) v(i) = cxd(g(rng), g(rng));
  return v / v.norm();
}

inline DensityOp random_density(const Subsystem& supp, std::mt19937_64& rng) {
  Mat a(supp.dim(), supp.dim());
  std::normal_distribution<double> g(0.0, 1.0);
  for (long i = 0; i < supp.dim(); ++i)
    for (long j = 0; j < supp.dim(); ++j) a(i, j) = cxd(g(rng), g(rng));
  Mat rho = a * a.adjoint();
  rho /= rho.trace().real();
  return DensityOp(supp, rho);
}

}  // namespace entobs
