#pragma once

// Orthonormal Hermitian product basis (normalized identity + generalized
// Gell-Mann matrices per site) and numeric rank via singular values. The
// identity factor sits at per-site index 0, so a product element is traceless
// on exactly the sites where its index digit is nonzero.

#include "entobs/core.hpp"

#include <Eigen/SVD>

namespace entobs {

// orthonormal Hermitian basis of d x d matrices, identity first
inline const std::vector<Mat>& site_herm_basis(int d) {
  static std::map<int, std::vector<Mat>> cache;
  auto it = cache.find(d);
  if (it != cache.end()) return it->second;

  std::vector<Mat> b;
  b.push_back(Mat::Identity(d, d) / std::sqrt(static_cast<double>(d)));
  for (int j = 0; j < d; ++j)
    for (int k = j + 1; k < d; ++k) {
      Mat x = Mat::Zero(d, d);
      x(j, k) = 1.0 / std::sqrt(2.0);
      x(k, j) = 1.0 / std::sqrt(2.0);
      b.push_back(x);
      Mat y = Mat::Zero(d, d);
      y(j, k) = cxd(0.0, -1.0 / std::sqrt(2.0));
      y(k, j) = cxd(0.0, 1.0 / std::sqrt(2.0));
      b.push_back(y);
    }
  for (int l = 1; l < d; ++l) {
    Mat z = Mat::Zero(d, d);
    const double norm = 1.0 / std::sqrt(static_cast<double>(l) * (l + 1));
    for (int j = 0; j < l; ++j) z(j, j) = norm;
    z(l, l) = -static_cast<double>(l) * norm;
    b.push_back(z);
  }
  return cache.emplace(d, std::move(b)).first->second;
}

class ProductBasis {
 public:
  explicit ProductBasis(Subsystem supp) : supp_(std::move(supp)) {
    strides_.resize(static_cast<size_t>(supp_.num_sites()));
    long acc = 1;
    for (int i = supp_.num_sites() - 1; i >= 0; --i) {
      strides_[static_cast<size_t>(i)] = acc;
      const int d = supp_.system().dim(supp_.sites()[static_cast<size_t>(i)]);
      acc *= static_cast<long>(d) * d;
    }
    size_ = acc;
  }

  const Subsystem& support() const { return supp_; }
  long size() const { return size_; }

  // digits of a basis multi-index (one per site)
  std::vector<int> digits(long idx) const {
    std::vector<int> out(static_cast<size_t>(supp_.num_sites()));
    for (int i = 0; i < supp_.num_sites(); ++i) {
      const int d = supp_.system().dim(supp_.sites()[static_cast<size_t>(i)]);
      out[static_cast<size_t>(i)] =
          digit_at(idx, strides_[static_cast<size_t>(i)], d * d);
    }
    return out;
  }

  long index_of(const std::vector<int>& digs) const {
    long idx = 0;
    for (size_t i = 0; i < digs.size(); ++i)
      idx += static_cast<long>(digs[i]) * strides_[i];
    return idx;
  }

  Mat element(long idx) const {
    if (supp_.empty()) return Mat::Ones(1, 1);
    auto digs = digits(idx);
    std::vector<detail::Factor> fs;
    for (int i = 0; i < supp_.num_sites(); ++i) {
      const int s = supp_.sites()[static_cast<size_t>(i)];
      fs.push_back({{s}, &site_herm_basis(supp_.system().dim(s))[static_cast<size_t>(
                             digs[static_cast<size_t>(i)])]});
    }
    return detail::assemble_product(supp_, fs);
  }

  // real coefficient vector of a Hermitian matrix in this basis
  RVec expand(const Mat& X) const {
    RVec c(size_);
    for (long a = 0; a < size_; ++a)
      c(a) = (element(a).adjoint() * X).trace().real();
    return c;
  }

  Mat synth(const RVec& c) const {
    require(c.size() == size_, Err::BadParameter, "coefficient length mismatch");
    Mat X = Mat::Zero(supp_.dim(), supp_.dim());
    for (long a = 0; a < size_; ++a)
      if (c(a) != 0.0) X += c(a) * element(a);
    return X;
  }

 private:
  Subsystem supp_;
  std::vector<long> strides_;
  long size_ = 1;
};

// numeric rank: singular values above kRankCutoff * sigma_max
inline int numeric_rank(const RMat& M) {
  if (M.rows() == 0 || M.cols() == 0) return 0;
  Eigen::BDCSVD<RMat> svd(M);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 0.0) return 0;
  const double cut = kRankCutoff * s(0);
  int r = 0;
  for (long i = 0; i < s.size(); ++i)
    if (s(i) > cut) ++r;
  return r;
}

// orthonormal basis of the kernel, columns of the returned matrix
inline RMat kernel_basis(const RMat& M) {
  if (M.cols() == 0) return RMat(0, 0);
  if (M.rows() == 0) return RMat::Identity(M.cols(), M.cols());
  Eigen::BDCSVD<RMat> svd(M, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cut = (s.size() > 0 && s(0) > 0.0) ? kRankCutoff * s(0) : 0.0;
  int r = 0;
  for (long i = 0; i < s.size(); ++i)
    if (s(i) > cut) ++r;
  return svd.matrixV().rightCols(M.cols() - r);
}

}  // namespace entobs
