#pragma once

// Gluing of pure patch vectors: Schmidt splits over overlaps, the U(1)
// phase 1-cocycle they induce on the nerve, and reconstruction of a global
// pure state when the cocycle class is trivial.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "entobs/cech.hpp"
#include "entobs/core.hpp"

namespace entobs {

inline constexpr double kOverlapPurityTol = 1e-9;
inline constexpr double kSchmidtRankTol = 1e-9;
inline constexpr double kTripleTol = 1e-9;
inline constexpr double kHolonomyTol = 1e-8;
inline constexpr double kGlueMarginalTol = 1e-8;

// family of unit vectors, one per cover patch
class PurePatchFamily {
 public:
  PurePatchFamily(Cover cover, std::vector<PureVec> vectors)
      : cover_(std::move(cover)), vecs_(std::move(vectors)) {
    require(static_cast<int>(vecs_.size()) == cover_.num_patches(),
            Err::CoverMismatch, "one vector per patch required");
    for (int i = 0; i < cover_.num_patches(); ++i) {
      require(vecs_[i].support() == cover_.patch(i), Err::CoverMismatch,
              "vector support must equal its patch");
      require(std::abs(vecs_[i].norm() - 1.0) <= 1e-9, Err::NotPure,
              "patch vectors must be normalized");
      vecs_[i] = vecs_[i].normalized();
    }
  }

  const Cover& cover() const { return cover_; }
  const PureVec& vec(int i) const { return vecs_[static_cast<size_t>(i)]; }
  int size() const { return cover_.num_patches(); }

  // reduced state of patch i on a sub-support
  Mat marginal(int i, const Subsystem& keep) const {
    const PureVec& v = vecs_[static_cast<size_t>(i)];
    Mat rho = v.vec() * v.vec().adjoint();
    return partial_trace_matrix(v.support(), rho, keep);
  }

  double overlap_purity(int i, int j) const {
    Subsystem o = cover_.patch(i).intersect(cover_.patch(j));
    require(!o.empty(), Err::BadParameter, "patches do not overlap");
    Mat r = marginal(i, o);
    return (r * r).trace().real();
  }

 private:
  Cover cover_;
  std::vector<PureVec> vecs_;
};

namespace detail {

// psi on supp split across cut | supp∖cut.  Requires Schmidt rank one.
struct SchmidtSplit {
  Vec xi;   // factor on the cut, carries the leftover phase
  Vec chi;  // factor on the complement, pinned real-positive
  double sigma2_ratio = 0.0;
};

inline SchmidtSplit schmidt_rank_one(const Subsystem& supp, const Vec& psi,
                                     const Subsystem& cut) {
  Subsystem rest = supp.minus(cut);
  if (rest.empty()) {
    SchmidtSplit s;
    s.xi = psi;
    s.chi = Vec::Ones(1);
    return s;
  }
  auto strides = site_strides(supp);
  const auto& ssites = supp.sites();
  auto part_index = [&](const Subsystem& part, long full) {
    auto pst = site_strides(part);
    long idx = 0;
    for (size_t i = 0; i < part.sites().size(); ++i) {
      auto it =
          std::lower_bound(ssites.begin(), ssites.end(), part.sites()[i]);
      size_t pos = static_cast<size_t>(it - ssites.begin());
      idx += static_cast<long>(digit_at(full, strides[pos],
                                        supp.system().dim(part.sites()[i]))) *
             pst[i];
    }
    return idx;
  };
  Mat A = Mat::Zero(cut.dim(), rest.dim());
  for (long k = 0; k < supp.dim(); ++k)
    A(part_index(cut, k), part_index(rest, k)) = psi(k);

  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  double ratio = sv.size() > 1 ? sv(1) / sv(0) : 0.0;
  require(ratio <= kSchmidtRankTol, Err::SchmidtRankExceedsOne,
          "Schmidt rank across the overlap cut exceeds one (sigma2/sigma1 = " +
              std::to_string(ratio) + ")");

  SchmidtSplit s;
  s.sigma2_ratio = ratio;
  s.xi = svd.matrixU().col(0);
  s.chi = svd.matrixV().col(0).conjugate();

  // pin the complement factor: largest-magnitude entry real positive,
  // ties broken by lowest index
  long pin = 0;
  double best = -1.0;
  for (long m = 0; m < s.chi.size(); ++m) {
    double a = std::abs(s.chi(m));
    if (a > best + 1e-12) {
      best = a;
      pin = m;
    }
  }
  cxd ph = s.chi(pin) / std::abs(s.chi(pin));
  s.chi /= ph;
  s.xi *= ph;
  return s;
}

}  // namespace detail

// U(1)-valued 1-cochain on the nerve of a cover (edges = overlapping pairs)
struct PhaseCocycle {
  Cover cover;
  std::vector<std::pair<int, int>> edges;  // i < j, nonempty overlap
  std::vector<cxd> g;                      // unit modulus, one per edge
  double max_triple_residual = 0.0;        // over nonempty triple overlaps

  int edge_index(int i, int j) const {
    for (size_t e = 0; e < edges.size(); ++e)
      if (edges[e].first == i && edges[e].second == j)
        return static_cast<int>(e);
    return -1;
  }
};

// phase between the pinned overlap factors of adjacent patches
inline PhaseCocycle extract_phase_cocycle(const PurePatchFamily& fam) {
  const Cover& cov = fam.cover();
  PhaseCocycle pc{cov, {}, {}, 0.0};
  const int n = cov.num_patches();

  std::vector<std::vector<int>> edge_at(static_cast<size_t>(n),
                                        std::vector<int>(n, -1));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      Subsystem o = cov.patch(i).intersect(cov.patch(j));
      if (o.empty()) continue;

      Mat ri = fam.marginal(i, o);
      double pur = (ri * ri).trace().real();
      require(pur >= 1.0 - kOverlapPurityTol, Err::OverlapNotPure,
              "overlap marginal is mixed (purity = " + std::to_string(pur) +
                  ")");
      Mat rj = fam.marginal(j, o);
      double purj = (rj * rj).trace().real();
      require(purj >= 1.0 - kOverlapPurityTol, Err::OverlapNotPure,
              "overlap marginal is mixed (purity = " + std::to_string(purj) +
                  ")");
      require((ri - rj).norm() <= kGlueMarginalTol * std::sqrt(double(o.dim())),
              Err::NotCompatible,
              "patch marginals disagree on the overlap");

      auto si = detail::schmidt_rank_one(cov.patch(i), fam.vec(i).vec(), o);
      auto sj = detail::schmidt_rank_one(cov.patch(j), fam.vec(j).vec(), o);
      cxd inner = si.xi.adjoint() * sj.xi;
      require(std::abs(inner) >= 1.0 - 1e-6, Err::NotCompatible,
              "overlap factors are not proportional");
      edge_at[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          static_cast<int>(pc.edges.size());
      pc.edges.emplace_back(i, j);
      pc.g.push_back(inner / std::abs(inner));
    }
  }

  // cocycle identity g_ij g_jk = g_ik on triangles with nonempty triple
  // overlap; hollow triangles are exempt and may carry holonomy
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k) {
        int eij = edge_at[static_cast<size_t>(i)][static_cast<size_t>(j)];
        int ejk = edge_at[static_cast<size_t>(j)][static_cast<size_t>(k)];
        int eik = edge_at[static_cast<size_t>(i)][static_cast<size_t>(k)];
        if (eij < 0 || ejk < 0 || eik < 0) continue;
        if (cov.isect({i, j, k}).empty()) continue;
        double res = std::abs(pc.g[static_cast<size_t>(eij)] *
                                  pc.g[static_cast<size_t>(ejk)] -
                              pc.g[static_cast<size_t>(eik)]);
        pc.max_triple_residual = std::max(pc.max_triple_residual, res);
        require(res <= kTripleTol, Err::NotClosed,
                "phase cocycle violates the triple identity (residual = " +
                    std::to_string(res) + ")");
      }
  return pc;
}

// triviality test: gauge away tree edges, inspect leftover holonomies
struct CocycleClass {
  bool trivial = true;
  std::vector<double> alpha;            // rephasing angles, one per patch
  std::vector<char> in_tree;            // per edge
  double max_holonomy_err = 0.0;        // max |g~ - 1| over non-tree edges
};

inline CocycleClass cocycle_class(const PhaseCocycle& pc,
                                  double tol = kHolonomyTol) {
  const int n = pc.cover.num_patches();
  CocycleClass out;
  out.alpha.assign(static_cast<size_t>(n), 0.0);
  out.in_tree.assign(pc.edges.size(), 0);

  std::vector<std::vector<std::pair<int, int>>> adj(static_cast<size_t>(n));
  for (size_t e = 0; e < pc.edges.size(); ++e) {
    auto [i, j] = pc.edges[e];
    adj[static_cast<size_t>(i)].emplace_back(j, static_cast<int>(e));
    adj[static_cast<size_t>(j)].emplace_back(i, static_cast<int>(e));
  }

  std::vector<char> seen(static_cast<size_t>(n), 0);
  for (int root = 0; root < n; ++root) {
    if (seen[static_cast<size_t>(root)]) continue;
    seen[static_cast<size_t>(root)] = 1;
    std::queue<int> q;
    q.push(root);
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (auto [v, e] : adj[static_cast<size_t>(u)]) {
        if (seen[static_cast<size_t>(v)]) continue;
        seen[static_cast<size_t>(v)] = 1;
        out.in_tree[static_cast<size_t>(e)] = 1;
        // orient the stored phase from lower to higher patch index
        cxd guv = pc.g[static_cast<size_t>(e)];
        if (pc.edges[static_cast<size_t>(e)].first != u) guv = std::conj(guv);
        // rephased edge value g~_uv = g_uv e^{i(alpha_v - alpha_u)} = 1
        out.alpha[static_cast<size_t>(v)] =
            out.alpha[static_cast<size_t>(u)] - std::arg(guv);
        q.push(v);
      }
    }
  }

  for (size_t e = 0; e < pc.edges.size(); ++e) {
    if (out.in_tree[e]) continue;
    auto [i, j] = pc.edges[e];
    cxd hol = pc.g[e] * std::exp(cxd(0.0, out.alpha[static_cast<size_t>(j)] -
                                              out.alpha[static_cast<size_t>(
                                                  i)]));
    out.max_holonomy_err = std::max(out.max_holonomy_err,
                                    std::abs(hol - cxd(1.0, 0.0)));
  }
  out.trivial = out.max_holonomy_err <= tol;
  return out;
}

// glue a family with trivial class into one pure vector on the patch union
struct GlueResult {
  PureVec state;
  std::vector<double> alpha;
  double max_marginal_err = 0.0;
};

inline GlueResult tree_glue(const PurePatchFamily& fam,
                            const CocycleClass& cls) {
  const Cover& cov = fam.cover();
  const int n = cov.num_patches();
  require(cls.trivial, Err::NotClosed,
          "cocycle class is nontrivial; no global pure extension");

  std::vector<std::vector<int>> adj(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (!cov.patch(i).intersect(cov.patch(j)).empty()) {
        adj[static_cast<size_t>(i)].push_back(j);
        adj[static_cast<size_t>(j)].push_back(i);
      }

  std::vector<char> seen(static_cast<size_t>(n), 0);
  std::optional<PureVec> total;
  for (int root = 0; root < n; ++root) {
    if (seen[static_cast<size_t>(root)]) continue;
    seen[static_cast<size_t>(root)] = 1;

    Vec v0 = fam.vec(root).vec() *
             std::exp(cxd(0.0, cls.alpha[static_cast<size_t>(root)]));
    PureVec comp(cov.patch(root), v0);
    std::queue<int> q;
    q.push(root);
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[static_cast<size_t>(u)]) {
        if (seen[static_cast<size_t>(v)]) continue;
        seen[static_cast<size_t>(v)] = 1;
        Subsystem cut = cov.patch(v).intersect(comp.support());
        Subsystem fresh = cov.patch(v).minus(cut);
        Vec vv = fam.vec(v).vec() *
                 std::exp(cxd(0.0, cls.alpha[static_cast<size_t>(v)]));
        if (!fresh.empty()) {
          auto split = detail::schmidt_rank_one(cov.patch(v), vv, cut);
          comp = tensor(comp, PureVec(fresh, split.chi));
        }
        q.push(v);
      }
    }
    total = total ? tensor(*total, comp) : comp;
  }

  GlueResult out{std::move(*total), cls.alpha, 0.0};
  Mat rho = out.state.vec() * out.state.vec().adjoint();
  for (int i = 0; i < n; ++i) {
    Mat got = partial_trace_matrix(out.state.support(), rho, cov.patch(i));
    Mat want = fam.marginal(i, cov.patch(i));
    out.max_marginal_err = std::max(out.max_marginal_err,
                                    (got - want).cwiseAbs().maxCoeff());
  }
  require(out.max_marginal_err <= kGlueMarginalTol, Err::GlueConsistencyFailure,
          "glued state fails to reproduce a patch marginal (err = " +
              std::to_string(out.max_marginal_err) + ")");
  return out;
}

// end-to-end: extract, classify, glue when trivial
struct PureGlueOutcome {
  PhaseCocycle cocycle;
  CocycleClass cls;
  std::optional<GlueResult> glued;
};

inline PureGlueOutcome glue_pure_family(const PurePatchFamily& fam,
                                        double tol = kHolonomyTol) {
  PureGlueOutcome out{extract_phase_cocycle(fam), {}, std::nullopt};
  out.cls = cocycle_class(out.cocycle, tol);
  if (out.cls.trivial) out.glued = tree_glue(fam, out.cls);
  return out;
}

}  // namespace entobs
