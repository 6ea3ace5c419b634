#pragma once

// Lattice invariants of Uhlmann amplitude bundles over a discretized torus:
// witness-filtered sector Chern numbers (FHS link-variable scheme), their
// difference nu_ent, jumps under parameter sweeps, sector Wilson loops, and
// the Kubo-Mori curvature two-form of parametrized faithful states.

#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "entobs/core.hpp"

namespace entobs {

inline constexpr double kLinkTol = 1e-8;
inline constexpr double kBranchTol = 1e-6;
inline constexpr double kChernIntTol = 1e-6;
inline constexpr double kSectorSplitTol = 1e-8;
inline constexpr double kDominanceFactor = 1e3;
inline constexpr double kGapTol = 1e-9;

struct TorusMesh {
  int nx = 0;
  int ny = 0;

  TorusMesh(int nx_, int ny_) : nx(nx_), ny(ny_) {
    require(nx >= 3 && ny >= 3, Err::BadParameter, "mesh must be at least 3x3");
  }
  explicit TorusMesh(int n) : TorusMesh(n, n) {}

  int nodes() const { return nx * ny; }
  int idx(int i, int j) const {
    i = ((i % nx) + nx) % nx;
    j = ((j % ny) + ny) % ny;
    return i * ny + j;
  }
  double kx(int i) const { return 2.0 * M_PI * i / nx; }
  double ky(int j) const { return 2.0 * M_PI * j / ny; }
};

// Bloch-type field: Hamiltonian and witness at each point of the torus
struct ModelField {
  std::string name;
  int dim = 0;
  std::function<Mat(double, double)> hamiltonian;
  std::function<Mat(double, double)> witness;
};

namespace detail {

inline Mat kron_mat(const Mat& A, const Mat& B) {
  Mat out(A.rows() * B.rows(), A.cols() * B.cols());
  for (long i = 0; i < A.rows(); ++i)
    for (long j = 0; j < A.cols(); ++j)
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return out;
}

inline Mat pauli_vec_ham(double hx, double hy, double hz) {
  Mat H(2, 2);
  H << cxd(hz, 0), cxd(hx, -hy), cxd(hx, hy), cxd(-hz, 0);
  return H;
}

}  // namespace detail

// two-band model with mass m: h(k) = (sin kx, sin ky, m + cos kx + cos ky)
inline ModelField qwz_model(double m) {
  ModelField f;
  f.name = "qwz";
  f.dim = 2;
  f.hamiltonian = [m](double kx, double ky) {
    return detail::pauli_vec_ham(std::sin(kx), std::sin(ky),
                                 m + std::cos(kx) + std::cos(ky));
  };
  f.witness = [m](double kx, double ky) {
    Mat H = detail::pauli_vec_ham(std::sin(kx), std::sin(ky),
                                  m + std::cos(kx) + std::cos(ky));
    double hn = std::sqrt((H * H).trace().real() / 2.0);
    require(hn >= 1e-12, Err::SingularLink, "band gap closes at a mesh point");
    return Mat(-H / hn);
  };
  return f;
}

// two decoupled copies with masses m1, m2; witness separates the copies
inline ModelField stacked_model(double m1, double m2) {
  ModelField f;
  f.name = "stacked";
  f.dim = 4;
  f.hamiltonian = [m1, m2](double kx, double ky) {
    Mat H = Mat::Zero(4, 4);
    H.block(0, 0, 2, 2) = detail::pauli_vec_ham(
        std::sin(kx), std::sin(ky), m1 + std::cos(kx) + std::cos(ky));
    H.block(2, 2, 2, 2) = detail::pauli_vec_ham(
        std::sin(kx), std::sin(ky), m2 + std::cos(kx) + std::cos(ky));
    return H;
  };
  f.witness = [](double, double) {
    Mat S = Mat::Zero(4, 4);
    S(0, 0) = S(1, 1) = 1.0;
    S(2, 2) = S(3, 3) = -1.0;
    return S;
  };
  return f;
}

// one copy replicated r_plus + r_minus times; witness weights the replicas
inline ModelField replicated_model(double m, int r_plus, int r_minus) {
  require(r_plus >= 0 && r_minus >= 0 && r_plus + r_minus >= 1,
          Err::BadParameter, "replica counts must be nonnegative, not both 0");
  const int n = r_plus + r_minus;
  ModelField f;
  f.name = "replicated";
  f.dim = 2 * n;
  f.hamiltonian = [m, n](double kx, double ky) {
    Mat h = detail::pauli_vec_ham(std::sin(kx), std::sin(ky),
                                  m + std::cos(kx) + std::cos(ky));
    return detail::kron_mat(h, Mat::Identity(n, n));
  };
  f.witness = [n, r_plus](double, double) {
    Mat D = Mat::Zero(n, n);
    for (int a = 0; a < n; ++a) D(a, a) = a < r_plus ? 1.0 : -1.0;
    return detail::kron_mat(Mat::Identity(2, 2), D);
  };
  return f;
}

enum class FrameKind { Band, Amplitude };

// per-node frame plus the witness-induced sector bases inside it
struct LatticeBundle {
  TorusMesh mesh;
  FrameKind kind = FrameKind::Band;
  int dim = 0;
  int frame_cols = 0;
  int r_plus = 0;
  int r_minus = 0;
  std::vector<Mat> frame;    // dim x frame_cols
  std::vector<Mat> y_plus;   // frame_cols x r_plus
  std::vector<Mat> y_minus;  // frame_cols x r_minus
};

namespace detail {

// split the compressed witness frame†·W·frame into sign sectors
inline void attach_sectors(LatticeBundle& b, const ModelField& model) {
  b.y_plus.clear();
  b.y_minus.clear();
  b.y_plus.reserve(b.frame.size());
  b.y_minus.reserve(b.frame.size());
  b.r_plus = -1;
  b.r_minus = -1;
  for (int i = 0; i < b.mesh.nx; ++i)
    for (int j = 0; j < b.mesh.ny; ++j) {
      const Mat& phi = b.frame[static_cast<size_t>(b.mesh.idx(i, j))];
      Mat M = phi.adjoint() * model.witness(b.mesh.kx(i), b.mesh.ky(j)) * phi;
      Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (M + M.adjoint()));
      int rp = 0, rm = 0;
      for (long a = 0; a < es.eigenvalues().size(); ++a) {
        if (es.eigenvalues()(a) > kSectorSplitTol) ++rp;
        if (es.eigenvalues()(a) < -kSectorSplitTol) ++rm;
      }
      if (b.r_plus < 0) {
        b.r_plus = rp;
        b.r_minus = rm;
      } else {
        require(rp == b.r_plus && rm == b.r_minus, Err::NonParallelSplitting,
                "witness sector ranks vary across the mesh");
      }
      // ascending eigenvalues: minus sector first, plus sector last
      b.y_minus.push_back(es.eigenvectors().leftCols(rm));
      b.y_plus.push_back(es.eigenvectors().rightCols(rp));
    }
}

}  // namespace detail

// frames from the strictly negative-energy eigenspaces
inline LatticeBundle build_band_bundle(const ModelField& model,
                                       const TorusMesh& mesh) {
  LatticeBundle b{mesh, FrameKind::Band, model.dim, 0, 0, 0, {}, {}, {}};
  b.frame.resize(static_cast<size_t>(mesh.nodes()));
  int n_occ = -1;
  for (int i = 0; i < mesh.nx; ++i)
    for (int j = 0; j < mesh.ny; ++j) {
      Mat H = model.hamiltonian(mesh.kx(i), mesh.ky(j));
      Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (H + H.adjoint()));
      int occ = 0;
      for (long a = 0; a < es.eigenvalues().size(); ++a) {
        require(std::abs(es.eigenvalues()(a)) > kGapTol, Err::SingularLink,
                "band gap closes at a mesh point");
        if (es.eigenvalues()(a) < 0.0) ++occ;
      }
      if (n_occ < 0)
        n_occ = occ;
      else
        require(occ == n_occ, Err::SingularLink,
                "occupied band count varies across the mesh");
      b.frame[static_cast<size_t>(mesh.idx(i, j))] =
          es.eigenvectors().leftCols(occ);
    }
  require(n_occ >= 1, Err::BadParameter, "model has no occupied bands");
  b.frame_cols = n_occ;
  detail::attach_sectors(b, model);
  return b;
}

// amplitude frames rho(k)^{1/2} of the Gibbs family of the model
inline LatticeBundle build_gibbs_bundle(const ModelField& model,
                                        const TorusMesh& mesh, double beta) {
  require(beta > 0.0, Err::BadParameter, "beta must be positive");
  LatticeBundle b{mesh, FrameKind::Amplitude, model.dim, model.dim,
                  0,    0,                    {},        {},
                  {}};
  b.frame.resize(static_cast<size_t>(mesh.nodes()));
  for (int i = 0; i < mesh.nx; ++i)
    for (int j = 0; j < mesh.ny; ++j) {
      Mat H = model.hamiltonian(mesh.kx(i), mesh.ky(j));
      Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (H + H.adjoint()));
      RVec p = (-beta * (es.eigenvalues().array() -
                         es.eigenvalues().minCoeff()))
                   .exp()
                   .matrix();
      p /= p.sum();
      require(p.minCoeff() >= 1e-300, Err::NotFullRank,
              "Gibbs state underflowed to a singular amplitude");
      b.frame[static_cast<size_t>(mesh.idx(i, j))] =
          es.eigenvectors() * p.cwiseSqrt().asDiagonal() *
          es.eigenvectors().adjoint();
    }
  detail::attach_sectors(b, model);
  return b;
}

enum class Sector { Plus, Minus, All };

namespace detail {

inline const Mat& sector_basis(const LatticeBundle& b, Sector s, int node,
                               const Mat& ident) {
  if (s == Sector::Plus) return b.y_plus[static_cast<size_t>(node)];
  if (s == Sector::Minus) return b.y_minus[static_cast<size_t>(node)];
  return ident;
}

inline int sector_rank(const LatticeBundle& b, Sector s) {
  if (s == Sector::Plus) return b.r_plus;
  if (s == Sector::Minus) return b.r_minus;
  return b.frame_cols;
}

// normalized determinant of the sector-compressed frame overlap
inline cxd link_phase(const LatticeBundle& b, Sector s, int from, int to,
                      const Mat& ident, double* min_mod) {
  const Mat& yf = sector_basis(b, s, from, ident);
  const Mat& yt = sector_basis(b, s, to, ident);
  Mat B = yf.adjoint() *
          (b.frame[static_cast<size_t>(from)].adjoint() *
           b.frame[static_cast<size_t>(to)]) *
          yt;
  cxd det = B.determinant();
  double mod = std::abs(det);
  if (min_mod != nullptr && mod < *min_mod) *min_mod = mod;
  require(mod >= kLinkTol, Err::SingularLink,
          "link overlap determinant below tolerance (mesh too coarse "
          "or splitting not parallel)");
  return det / mod;
}

}  // namespace detail

struct ChernResult {
  int chern = 0;
  double raw = 0.0;                     // plaquette phase sum / 2pi
  double min_link_modulus = 1.0;
  double min_branch_margin = M_PI;      // distance of |phase| from pi
  std::vector<double> plaquette_phase;  // row-major nx x ny grid
};

// abelian lattice Chern number from plaquette phases of sector link
// determinants
inline ChernResult fhs_abelian_chern(const LatticeBundle& b, Sector s) {
  ChernResult out;
  const int rank = detail::sector_rank(b, s);
  out.plaquette_phase.assign(static_cast<size_t>(b.mesh.nodes()), 0.0);
  if (rank == 0) return out;

  Mat ident = Mat::Identity(b.frame_cols, b.frame_cols);
  const int nx = b.mesh.nx, ny = b.mesh.ny;
  std::vector<cxd> ux(static_cast<size_t>(b.mesh.nodes()));
  std::vector<cxd> uy(static_cast<size_t>(b.mesh.nodes()));
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      int n0 = b.mesh.idx(i, j);
      ux[static_cast<size_t>(n0)] = detail::link_phase(
          b, s, n0, b.mesh.idx(i + 1, j), ident, &out.min_link_modulus);
      uy[static_cast<size_t>(n0)] = detail::link_phase(
          b, s, n0, b.mesh.idx(i, j + 1), ident, &out.min_link_modulus);
    }

  double sum = 0.0;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      cxd w = ux[static_cast<size_t>(b.mesh.idx(i, j))] *
              uy[static_cast<size_t>(b.mesh.idx(i + 1, j))] *
              std::conj(ux[static_cast<size_t>(b.mesh.idx(i, j + 1))]) *
              std::conj(uy[static_cast<size_t>(b.mesh.idx(i, j))]);
      double phi = std::arg(w);
      double margin = M_PI - std::abs(phi);
      if (margin < out.min_branch_margin) out.min_branch_margin = margin;
      require(margin > kBranchTol, Err::SingularLink,
              "plaquette phase at the principal branch cut");
      out.plaquette_phase[static_cast<size_t>(b.mesh.idx(i, j))] = phi;
      sum += phi;
    }
  out.raw = sum / (2.0 * M_PI);
  out.chern = static_cast<int>(std::llround(out.raw));
  require(std::abs(out.raw - out.chern) <= kChernIntTol,
          Err::InternalCheckFailed, "plaquette phase sum is not an integer");
  return out;
}

struct NuEntResult {
  int nu = 0;
  int c_plus = 0;
  int c_minus = 0;
  double min_link_modulus = 1.0;
  double dominance = 0.0;  // min in-sector singular value / max cross norm
};

// witness-filtered invariant: difference of the sector Chern numbers.
// Requires the splitting to transport parallel across links (the
// cross-sector overlap blocks must be dominated by the in-sector blocks).
inline NuEntResult nu_ent(const LatticeBundle& b) {
  NuEntResult out;
  double within = std::numeric_limits<double>::infinity();
  double cross = 0.0;
  if (b.r_plus > 0 && b.r_minus > 0) {
    const int nx = b.mesh.nx, ny = b.mesh.ny;
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) {
        int n0 = b.mesh.idx(i, j);
        for (int n1 : {b.mesh.idx(i + 1, j), b.mesh.idx(i, j + 1)}) {
          Mat yf(b.frame_cols, b.r_plus + b.r_minus);
          yf << b.y_plus[static_cast<size_t>(n0)],
              b.y_minus[static_cast<size_t>(n0)];
          Mat yt(b.frame_cols, b.r_plus + b.r_minus);
          yt << b.y_plus[static_cast<size_t>(n1)],
              b.y_minus[static_cast<size_t>(n1)];
          Mat B = yf.adjoint() *
                  (b.frame[static_cast<size_t>(n0)].adjoint() *
                   b.frame[static_cast<size_t>(n1)]) *
                  yt;
          Mat bpp = B.topLeftCorner(b.r_plus, b.r_plus);
          Mat bmm = B.bottomRightCorner(b.r_minus, b.r_minus);
          Mat bpm = B.topRightCorner(b.r_plus, b.r_minus);
          Mat bmp = B.bottomLeftCorner(b.r_minus, b.r_plus);
          Eigen::JacobiSVD<Mat> sp(bpp);
          Eigen::JacobiSVD<Mat> sm(bmm);
          within = std::min({within,
                             sp.singularValues().minCoeff(),
                             sm.singularValues().minCoeff()});
          cross = std::max({cross, bpm.norm(), bmp.norm()});
        }
      }
    require(within >= kDominanceFactor * cross, Err::NonParallelSplitting,
            "sector splitting is not parallel across the mesh");
    out.dominance = cross > 0.0
                        ? within / cross
                        : std::numeric_limits<double>::infinity();
  } else {
    out.dominance = std::numeric_limits<double>::infinity();
  }

  ChernResult cp = fhs_abelian_chern(b, Sector::Plus);
  ChernResult cm = fhs_abelian_chern(b, Sector::Minus);
  out.c_plus = cp.chern;
  out.c_minus = cm.chern;
  out.nu = cp.chern - cm.chern;
  out.min_link_modulus = std::min(cp.min_link_modulus, cm.min_link_modulus);
  return out;
}

struct QeiJump {
  int jump = 0;
  NuEntResult at_a;
  NuEntResult at_b;
};

// integer jump of nu_ent between two parameter values
inline QeiJump qei_jump(const std::function<LatticeBundle(double)>& bundle_at,
                        double a, double b) {
  QeiJump out;
  out.at_a = nu_ent(bundle_at(a));
  out.at_b = nu_ent(bundle_at(b));
  out.jump = out.at_b.nu - out.at_a.nu;
  return out;
}

// holonomy character det(Hol_plus)/det(Hol_minus) along a closed mesh path
inline cxd wilson_loop(const LatticeBundle& b,
                       const std::vector<std::pair<int, int>>& path) {
  require(path.size() >= 2, Err::BadParameter, "path needs at least 2 nodes");
  require(path.front() == path.back(), Err::BadParameter,
          "path must be closed");
  Mat ident = Mat::Identity(b.frame_cols, b.frame_cols);
  cxd wp(1.0, 0.0), wm(1.0, 0.0);
  for (size_t t = 0; t + 1 < path.size(); ++t) {
    auto [i0, j0] = path[t];
    auto [i1, j1] = path[t + 1];
    int di = ((i1 - i0) % b.mesh.nx + b.mesh.nx) % b.mesh.nx;
    int dj = ((j1 - j0) % b.mesh.ny + b.mesh.ny) % b.mesh.ny;
    bool step_x = (di == 1 || di == b.mesh.nx - 1) && dj == 0;
    bool step_y = (dj == 1 || dj == b.mesh.ny - 1) && di == 0;
    require(step_x != step_y, Err::BadParameter,
            "path steps must connect mesh neighbors");
    int n0 = b.mesh.idx(i0, j0);
    int n1 = b.mesh.idx(i1, j1);
    if (b.r_plus > 0) wp *= detail::link_phase(b, Sector::Plus, n0, n1, ident, nullptr);
    if (b.r_minus > 0)
      wm *= detail::link_phase(b, Sector::Minus, n0, n1, ident, nullptr);
  }
  return wp / wm;
}

// right-multiply the sector bases by random unitaries (gauge test helper)
inline LatticeBundle randomize_sector_gauge(LatticeBundle b, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto haar = [&](int n) {
    Mat G(n, n);
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < n; ++j) G(i, j) = cxd(gauss(rng), gauss(rng));
    Eigen::HouseholderQR<Mat> qr(G);
    Mat Q = qr.householderQ() * Mat::Identity(n, n);
    Mat R = Q.adjoint() * G;
    for (long i = 0; i < n; ++i) Q.col(i) *= R(i, i) / std::abs(R(i, i));
    return Q;
  };
  for (auto& y : b.y_plus)
    if (b.r_plus > 0) y = y * haar(b.r_plus);
  for (auto& y : b.y_minus)
    if (b.r_minus > 0) y = y * haar(b.r_minus);
  return b;
}

// ---------------------------------------------------------------------------
// Kubo-Mori curvature of a two-parameter family of faithful states

struct BkmResult {
  double value = 0.0;          // F at the requested step
  double value_swapped = 0.0;  // parameter roles exchanged (antisymmetry pair)
  double refined = 0.0;        // F at half step
  double richardson_err = 0.0;
  double step = 0.0;
};

namespace detail {

inline Mat minus_log_state(const Mat& rho) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (rho + rho.adjoint()));
  require(es.eigenvalues().minCoeff() >= 1e-13, Err::NotFullRank,
          "state is not faithful enough for K = -ln(rho)");
  RVec lw = es.eigenvalues().array().log().matrix();
  return es.eigenvectors() * (-lw).asDiagonal() *
         es.eigenvectors().adjoint();
}

// (i/2) sum_ab L(p_a,p_b) (ln p_a - ln p_b) C_ab D_ba with the symmetric
// logarithmic mean L; the degenerate rule L -> p_a is consistent because the
// log factor vanishes there
inline double bkm_at_step(const std::function<Mat(double, double)>& rho_at,
                          double x, double y, double h) {
  Mat C = (minus_log_state(rho_at(x + h, y)) -
           minus_log_state(rho_at(x - h, y))) /
          (2.0 * h);
  Mat D = (minus_log_state(rho_at(x, y + h)) -
           minus_log_state(rho_at(x, y - h))) /
          (2.0 * h);
  Mat rho = rho_at(x, y);
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (rho + rho.adjoint()));
  require(es.eigenvalues().minCoeff() >= 1e-13, Err::NotFullRank,
          "state is not faithful enough for K = -ln(rho)");
  Mat Ct = es.eigenvectors().adjoint() * C * es.eigenvectors();
  Mat Dt = es.eigenvectors().adjoint() * D * es.eigenvectors();
  const auto& p = es.eigenvalues();
  cxd F(0.0, 0.0);
  for (long a = 0; a < p.size(); ++a)
    for (long b = 0; b < p.size(); ++b) {
      double dln = std::log(p(a)) - std::log(p(b));
      double L = std::abs(dln) < 1e-8 ? p(a) : (p(a) - p(b)) / dln;
      F += L * dln * Ct(a, b) * Dt(b, a);
    }
  return (cxd(0.0, 0.5) * F).real();
}

}  // namespace detail

inline BkmResult bkm_curvature(const std::function<Mat(double, double)>& rho_at,
                               double x, double y, double h) {
  require(h > 0.0, Err::BadParameter, "step must be positive");
  BkmResult out;
  out.step = h;
  out.value = detail::bkm_at_step(rho_at, x, y, h);
  out.refined = detail::bkm_at_step(rho_at, x, y, h / 2.0);
  out.richardson_err = std::abs(out.value - out.refined);
  require(out.richardson_err <=
              1e-4 * std::max(1.0, std::abs(out.refined)),
          Err::StepTooLarge,
          "halving the difference step changes the curvature");
  auto swapped = [&rho_at](double u, double v) { return rho_at(v, u); };
  out.value_swapped = detail::bkm_at_step(swapped, y, x, h);
  return out;
}

}  // namespace entobs
