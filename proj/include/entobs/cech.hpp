#pragma once

// Cech complex of the Hermitian-operator presheaf attached to a patch cover:
// restriction is the plain partial trace, intersections may be empty (the
// scalar space), and the coboundary uses the alternating face convention
// (delta w)_T = sum_m (-1)^m r(w_{T drop m}). A faithful product state tau
// supplies the extension maps e(X) = X (x) tau used by the contracting
// homotopy; the homotopy itself is telescoped over patch indices so that
// delta H + H delta = id holds on every degree >= 1 for arbitrary covers.

#include "entobs/basis.hpp"
#include "entobs/core.hpp"

namespace entobs {

// lexicographic k-element subsets of {0..n-1}
inline std::vector<std::vector<int>> index_tuples(int n, int k) {
  std::vector<std::vector<int>> out;
  if (k < 0 || k > n) return out;
  std::vector<int> cur(static_cast<size_t>(k));
  std::iota(cur.begin(), cur.end(), 0);
  while (true) {
    out.push_back(cur);
    int i = k - 1;
    while (i >= 0 && cur[static_cast<size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++cur[static_cast<size_t>(i)];
    for (int j = i + 1; j < k; ++j)
      cur[static_cast<size_t>(j)] = cur[static_cast<size_t>(j - 1)] + 1;
  }
  return out;
}

inline long comb_count(int n, int k) {
  if (k < 0 || k > n) return 0;
  long r = 1;
  for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
  return r;
}

// lexicographic rank of a sorted k-subset of {0..n-1}
inline long tuple_rank(int n, const std::vector<int>& t) {
  long rank = 0;
  int prev = -1;
  const int k = static_cast<int>(t.size());
  for (int i = 0; i < k; ++i) {
    for (int v = prev + 1; v < t[static_cast<size_t>(i)]; ++v)
      rank += comb_count(n - 1 - v, k - 1 - i);
    prev = t[static_cast<size_t>(i)];
  }
  return rank;
}

class Cover {
 public:
  Cover() = default;
  Cover(SiteSystem sys, std::vector<std::vector<int>> patches)
      : sys_(std::move(sys)), patches_(std::move(patches)) {
    require(!patches_.empty(), Err::BadParameter, "cover needs at least one patch");
    std::vector<bool> seen(static_cast<size_t>(sys_.num_sites()), false);
    for (auto& p : patches_) {
      require(!p.empty(), Err::BadParameter, "cover patches must be nonempty");
      std::sort(p.begin(), p.end());
      for (size_t i = 0; i < p.size(); ++i) {
        require(p[i] >= 0 && p[i] < sys_.num_sites(), Err::BadParameter,
                "patch site out of range");
        require(i == 0 || p[i] != p[i - 1], Err::BadParameter,
                "duplicate site in patch");
        seen[static_cast<size_t>(p[i])] = true;
      }
    }
    std::sort(patches_.begin(), patches_.end());
    for (size_t i = 1; i < patches_.size(); ++i)
      require(patches_[i] != patches_[i - 1], Err::BadParameter,
              "duplicate patch in cover");
    for (bool b : seen)
      require(b, Err::BadParameter, "patches do not cover every site");
  }

  const SiteSystem& system() const { return sys_; }
  int num_patches() const { return static_cast<int>(patches_.size()); }
  const std::vector<std::vector<int>>& patches() const { return patches_; }

  Subsystem patch(int i) const {
    return Subsystem(sys_, patches_.at(static_cast<size_t>(i)));
  }

  Subsystem full() const { return Subsystem(sys_, sys_.all_sites()); }

  // intersection subsystem of a tuple of patch indices (may be empty)
  Subsystem isect(const std::vector<int>& tuple) const {
    require(!tuple.empty(), Err::BadParameter, "empty patch tuple");
    Subsystem s = patch(tuple[0]);
    for (size_t i = 1; i < tuple.size(); ++i) s = s.intersect(patch(tuple[i]));
    return s;
  }

  bool operator==(const Cover& o) const {
    return sys_ == o.sys_ && patches_ == o.patches_;
  }

 private:
  SiteSystem sys_;
  std::vector<std::vector<int>> patches_;
};

// A degree-p cochain assigns a Hermitian matrix (1x1 for empty intersections)
// to every (p+1)-tuple of patch indices, stored in lexicographic tuple order.
class Cochain {
 public:
  Cochain() = default;

  static Cochain zero(const Cover& cover, int degree) {
    Cochain c;
    c.cover_ = cover;
    c.degree_ = degree;
    auto ts = index_tuples(cover.num_patches(), degree + 1);
    c.comps_.reserve(ts.size());
    for (const auto& t : ts) {
      long d = cover.isect(t).dim();
      c.comps_.push_back(Mat::Zero(d, d));
    }
    return c;
  }

  Cochain(const Cover& cover, int degree, std::vector<Mat> comps)
      : cover_(cover), degree_(degree), comps_(std::move(comps)) {
    auto ts = index_tuples(cover.num_patches(), degree + 1);
    require(comps_.size() == ts.size(), Err::DegreeMismatch,
            "cochain component count does not match tuple count");
    for (size_t i = 0; i < ts.size(); ++i) {
      long d = cover.isect(ts[i]).dim();
      require(comps_[i].rows() == d && comps_[i].cols() == d,
              Err::SupportMismatch, "cochain component has wrong dimension");
    }
  }

  const Cover& cover() const { return cover_; }
  int degree() const { return degree_; }
  size_t num_comps() const { return comps_.size(); }

  const Mat& at(const std::vector<int>& tuple) const {
    return comps_.at(static_cast<size_t>(
        tuple_rank(cover_.num_patches(), tuple)));
  }
  Mat& at(const std::vector<int>& tuple) {
    return comps_.at(static_cast<size_t>(
        tuple_rank(cover_.num_patches(), tuple)));
  }
  const Mat& comp(size_t i) const { return comps_[i]; }
  Mat& comp(size_t i) { return comps_[i]; }

  double norm() const {
    double s = 0.0;
    for (const auto& m : comps_) s += m.squaredNorm();
    return std::sqrt(s);
  }

  Cochain& operator+=(const Cochain& o) {
    check_shape(o);
    for (size_t i = 0; i < comps_.size(); ++i) comps_[i] += o.comps_[i];
    return *this;
  }
  Cochain& operator-=(const Cochain& o) {
    check_shape(o);
    for (size_t i = 0; i < comps_.size(); ++i) comps_[i] -= o.comps_[i];
    return *this;
  }
  Cochain& operator*=(double a) {
    for (auto& m : comps_) m *= a;
    return *this;
  }
  friend Cochain operator+(Cochain a, const Cochain& b) { return a += b; }
  friend Cochain operator-(Cochain a, const Cochain& b) { return a -= b; }
  friend Cochain operator*(double a, Cochain c) { return c *= a; }

 private:
  void check_shape(const Cochain& o) const {
    require(cover_ == o.cover_ && degree_ == o.degree_, Err::DegreeMismatch,
            "cochain shape mismatch");
  }

  Cover cover_;
  int degree_ = 0;
  std::vector<Mat> comps_;
};

// (delta w)_T = sum_m (-1)^m PartialTrace(w_{T drop m} -> U_T)
inline Cochain cech_d(const Cochain& w) {
  const Cover& cov = w.cover();
  const int p = w.degree();
  Cochain out = Cochain::zero(cov, p + 1);
  auto ts = index_tuples(cov.num_patches(), p + 2);
  for (const auto& T : ts) {
    Subsystem ut = cov.isect(T);
    Mat acc = Mat::Zero(ut.dim(), ut.dim());
    double sign = 1.0;
    for (size_t m = 0; m < T.size(); ++m) {
      std::vector<int> face = T;
      face.erase(face.begin() + static_cast<long>(m));
      Subsystem uf = cov.isect(face);
      acc += sign * partial_trace_matrix(uf, w.at(face), ut);
      sign = -sign;
    }
    out.at(T) = acc;
  }
  return out;
}

// adjoint coboundary w.r.t. the Frobenius pairing; restriction adjoint is the
// identity-padded extension
inline Cochain cech_adjoint_d(const Cochain& c) {
  const Cover& cov = c.cover();
  const int p = c.degree();
  require(p >= 1, Err::DegreeMismatch, "adjoint coboundary needs degree >= 1");
  Cochain out = Cochain::zero(cov, p - 1);
  auto ts = index_tuples(cov.num_patches(), p + 1);
  for (const auto& T : ts) {
    Subsystem ut = cov.isect(T);
    for (size_t m = 0; m < T.size(); ++m) {
      std::vector<int> face = T;
      face.erase(face.begin() + static_cast<long>(m));
      Subsystem uf = cov.isect(face);
      const double sign = (m % 2 == 0) ? 1.0 : -1.0;
      out.at(face) += sign * extend_identity_matrix(ut, c.at(T), uf);
    }
  }
  return out;
}

// restriction of a global operator to the degree-0 cochain of patch marginals
inline Cochain restrict_global(const HermOp& X, const Cover& cov) {
  require(X.support() == cov.full(), Err::SupportMismatch,
          "restrict_global expects a globally supported operator");
  Cochain out = Cochain::zero(cov, 0);
  for (int i = 0; i < cov.num_patches(); ++i)
    out.at({i}) = partial_trace_matrix(X.support(), X.matrix(), cov.patch(i));
  return out;
}

namespace detail {

// single-index homotopy: (h_j c)_T = 0 if j in T, else
// (-1)^{pos of j in sort(T+{j})} e(c_{sort(T+{j})} -> U_T)
inline Cochain homotopy_h(const Cochain& c, int j, const FaithfulProduct& tau) {
  const Cover& cov = c.cover();
  const int p = c.degree();
  require(p >= 1, Err::DegreeMismatch, "homotopy needs degree >= 1");
  Cochain out = Cochain::zero(cov, p - 1);
  auto ts = index_tuples(cov.num_patches(), p);
  for (const auto& T : ts) {
    if (std::binary_search(T.begin(), T.end(), j)) continue;
    std::vector<int> up = T;
    auto it = std::lower_bound(up.begin(), up.end(), j);
    const long pos = it - up.begin();
    up.insert(it, j);
    const double sign = (pos % 2 == 0) ? 1.0 : -1.0;
    Subsystem target = cov.isect(T);
    Subsystem source = cov.isect(up);
    out.at(T) = sign * extend_matrix(source, c.at(up), target, tau);
  }
  return out;
}

// chain-map defect pi_j = id - (delta h_j + h_j delta)
inline Cochain homotopy_pi(const Cochain& c, int j, const FaithfulProduct& tau) {
  Cochain out = c;
  out -= cech_d(homotopy_h(c, j, tau));
  out -= homotopy_h(cech_d(c), j, tau);
  return out;
}

}  // namespace detail

// Telescoped contracting homotopy H with delta H + H delta = id on degree >= 1:
// accumulate h_j along the telescope of defect maps pi_0, pi_1, ...
inline Cochain contracting_homotopy(const Cochain& c, const FaithfulProduct& tau) {
  require(c.degree() >= 1, Err::DegreeMismatch,
          "contracting homotopy needs degree >= 1");
  Cochain work = c;
  Cochain total = Cochain::zero(c.cover(), c.degree() - 1);
  for (int j = 0; j < c.cover().num_patches(); ++j) {
    total += detail::homotopy_h(work, j, tau);
    if (j + 1 < c.cover().num_patches())
      work = detail::homotopy_pi(work, j, tau);
  }
  return total;
}

// Augmented telescope in degree 0: rebuilds a global operator X with
// r_{U_i}(X) = sigma_i for every compatible 0-cochain (delta sigma = 0).
// The augmented column adjoins C^{-1} = Herm(V(I)) with coboundary
// X -> (r_{U_i} X)_i and augmented homotopy h_j(sigma) = e(sigma_j -> I);
// the telescope then runs exactly as in degree >= 1.
inline HermOp homotopy_global_extension(const Cochain& sigma,
                                        const FaithfulProduct& tau) {
  require(sigma.degree() == 0, Err::DegreeMismatch,
          "global extension starts from a 0-cochain");
  const Cover& cov = sigma.cover();
  const Subsystem full = cov.full();
  Cochain work = sigma;
  Mat X = Mat::Zero(full.dim(), full.dim());
  for (int j = 0; j < cov.num_patches(); ++j) {
    Mat piece = extend_matrix(cov.patch(j), work.at({j}), full, tau);
    X += piece;
    if (j + 1 == cov.num_patches()) break;
    // pi_j = id - (delta_{-1} h_j + h_j delta_0), both terms from the same input
    Cochain next = work;
    next -= detail::homotopy_h(cech_d(work), j, tau);
    for (int i = 0; i < cov.num_patches(); ++i)
      next.at({i}) -= partial_trace_matrix(full, piece, cov.patch(i));
    work = next;
  }
  return HermOp(full, X);
}

// ---------------------------------------------------------------------------
// Matricization in the Hermitian product basis.
//
// The partial trace of a product basis element is combinatorial: tracing out
// site j kills every element whose factor there is non-identity and yields a
// factor sqrt(d_j) otherwise. All restriction matrices below are assembled
// from that rule; ranks still go through singular values.

namespace detail {

// coefficient of Tr_{from \ to}(basis element) and the surviving digit index,
// or nullopt when a traced-out digit is non-identity
inline std::optional<std::pair<double, long>> restrict_basis_index(
    const ProductBasis& from, long idx, const ProductBasis& to) {
  auto digs = from.digits(idx);
  const auto& fs = from.support().sites();
  double coeff = 1.0;
  std::vector<int> kept;
  for (size_t i = 0; i < fs.size(); ++i) {
    if (to.support().contains_site(fs[i])) {
      kept.push_back(digs[i]);
    } else if (digs[i] == 0) {
      coeff *= std::sqrt(static_cast<double>(from.support().system().dim(fs[i])));
    } else {
      return std::nullopt;
    }
  }
  return std::make_pair(coeff, to.index_of(kept));
}

}  // namespace detail

// flat coefficient vector of a cochain over the per-tuple product bases
inline RVec cochain_coeffs(const Cochain& c) {
  const Cover& cov = c.cover();
  auto ts = index_tuples(cov.num_patches(), c.degree() + 1);
  std::vector<ProductBasis> bases;
  long total = 0;
  for (const auto& t : ts) {
    bases.emplace_back(cov.isect(t));
    total += bases.back().size();
  }
  RVec v(total);
  long off = 0;
  for (size_t i = 0; i < ts.size(); ++i) {
    v.segment(off, bases[i].size()) = bases[i].expand(c.comp(i));
    off += bases[i].size();
  }
  return v;
}

inline Cochain cochain_from_coeffs(const Cover& cov, int degree, const RVec& v) {
  auto ts = index_tuples(cov.num_patches(), degree + 1);
  std::vector<Mat> comps;
  long off = 0;
  for (const auto& t : ts) {
    ProductBasis b(cov.isect(t));
    comps.push_back(b.synth(v.segment(off, b.size())));
    off += b.size();
  }
  require(off == v.size(), Err::BadParameter, "coefficient length mismatch");
  return Cochain(cov, degree, std::move(comps));
}

// matrix of delta: C^p -> C^{p+1} in the product bases
inline RMat matricize_delta(const Cover& cov, int p) {
  auto dom = index_tuples(cov.num_patches(), p + 1);
  auto cod = index_tuples(cov.num_patches(), p + 2);
  std::vector<ProductBasis> domb, codb;
  std::vector<long> domoff(dom.size() + 1, 0), codoff(cod.size() + 1, 0);
  for (size_t i = 0; i < dom.size(); ++i) {
    domb.emplace_back(cov.isect(dom[i]));
    domoff[i + 1] = domoff[i] + domb.back().size();
  }
  for (size_t i = 0; i < cod.size(); ++i) {
    codb.emplace_back(cov.isect(cod[i]));
    codoff[i + 1] = codoff[i] + codb.back().size();
  }
  RMat D = RMat::Zero(codoff.back(), domoff.back());
  for (size_t ci = 0; ci < cod.size(); ++ci) {
    const auto& T = cod[ci];
    double sign = 1.0;
    for (size_t m = 0; m < T.size(); ++m) {
      std::vector<int> face = T;
      face.erase(face.begin() + static_cast<long>(m));
      const size_t di =
          static_cast<size_t>(tuple_rank(cov.num_patches(), face));
      for (long a = 0; a < domb[di].size(); ++a) {
        auto hit = detail::restrict_basis_index(domb[di], a, codb[ci]);
        if (hit)
          D(codoff[ci] + hit->second, domoff[di] + a) += sign * hit->first;
      }
      sign = -sign;
    }
  }
  return D;
}

// matrix of the marginal map j: Herm(V(I)) -> C^0, X -> (r_{U_i} X)_i
inline RMat matricize_marginal_map(const Cover& cov) {
  ProductBasis gb(cov.full());
  std::vector<ProductBasis> pb;
  std::vector<long> off(static_cast<size_t>(cov.num_patches()) + 1, 0);
  for (int i = 0; i < cov.num_patches(); ++i) {
    pb.emplace_back(cov.patch(i));
    off[static_cast<size_t>(i) + 1] =
        off[static_cast<size_t>(i)] + pb.back().size();
  }
  RMat J = RMat::Zero(off.back(), gb.size());
  for (long a = 0; a < gb.size(); ++a)
    for (int i = 0; i < cov.num_patches(); ++i) {
      auto hit = detail::restrict_basis_index(gb, a, pb[static_cast<size_t>(i)]);
      if (hit) J(off[static_cast<size_t>(i)] + hit->second, a) += hit->first;
    }
  return J;
}

struct KernelR0 {
  int dim = 0;
  std::vector<HermOp> basis;  // orthonormal w.r.t. the Frobenius pairing
};

// R^0 = ker j: global Hermitians with vanishing patch marginals
inline KernelR0 kernel_R0(const Cover& cov, long basis_dim_cap = 2048) {
  ProductBasis gb(cov.full());
  require(gb.size() <= basis_dim_cap, Err::SizeBudgetExceeded,
          "global operator space too large for an explicit kernel basis");
  RMat J = matricize_marginal_map(cov);
  RMat K = kernel_basis(J);
  KernelR0 out;
  out.dim = static_cast<int>(K.cols());
  const Subsystem full = cov.full();
  for (long k = 0; k < K.cols(); ++k)
    out.basis.emplace_back(full, gb.synth(K.col(k)));
  return out;
}

struct CokernelQ0 {
  int q0 = 0;       // dim H^0 - rank j
  int dim_h0 = 0;   // dim ker delta^0
  int rank_j = 0;
  long dim_c0 = 0;
};

// Q^0 measures compatible marginal families that no global operator realizes
inline CokernelQ0 cokernel_Q0(const Cover& cov) {
  RMat D0 = matricize_delta(cov, 0);
  RMat J = matricize_marginal_map(cov);
  CokernelQ0 out;
  out.dim_c0 = D0.cols();
  out.dim_h0 = static_cast<int>(D0.cols() - numeric_rank(D0));
  out.rank_j = numeric_rank(J);
  out.q0 = out.dim_h0 - out.rank_j;
  return out;
}

struct ClassVanishing {
  bool vanishes = false;
  bool image_test = false;    // least-squares distance to im(delta)
  bool pairing_test = false;  // pairing against harmonic representatives
  double residual = 0.0;      // image-test relative residual
  double max_pairing = 0.0;   // largest |<c, harmonic>| (unit harmonics)
  Cochain primitive;          // least-squares preimage under delta
};

// Decides [c] = 0 in degree >= 1 two independent ways and insists they agree.
inline ClassVanishing class_vanishes(const Cochain& c,
                                     double tol = 1e-9) {
  const int p = c.degree();
  require(p >= 1, Err::DegreeMismatch, "class test needs degree >= 1");
  const double cnorm = c.norm();
  {
    Cochain dc = cech_d(c);
    require(dc.norm() <= 1e-9 * std::max(1.0, cnorm), Err::NotClosed,
            "cochain is not closed");
  }
  const Cover& cov = c.cover();
  RVec v = cochain_coeffs(c);
  RMat Dprev = matricize_delta(cov, p - 1);
  const double scale = std::max(1.0, v.norm());

  ClassVanishing out;
  Eigen::BDCSVD<RMat> svd(Dprev, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(kRankCutoff);
  RVec x = svd.solve(v);
  out.residual = (Dprev * x - v).norm() / scale;
  out.image_test = out.residual <= tol;
  out.primitive = cochain_from_coeffs(cov, p - 1, x);

  RMat Dnext = matricize_delta(cov, p);
  RMat stacked(Dnext.rows() + Dprev.cols(), Dnext.cols());
  stacked.topRows(Dnext.rows()) = Dnext;
  stacked.bottomRows(Dprev.cols()) = Dprev.transpose();
  RMat harmonics = kernel_basis(stacked);
  out.max_pairing = harmonics.cols() == 0
                        ? 0.0
                        : (harmonics.transpose() * v).cwiseAbs().maxCoeff() / scale;
  out.pairing_test = out.max_pairing <= tol;

  require(out.image_test == out.pairing_test, Err::InternalCheckFailed,
          "image and pairing vanishing tests disagree");
  out.vanishes = out.image_test;
  return out;
}

}  // namespace entobs
