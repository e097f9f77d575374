#include "kernels.hpp"

#include <Eigen/Core>

namespace tmm::kernels {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using MutMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc, bool accumulate) {
  const auto em = static_cast<Eigen::Index>(m);
  const auto en = static_cast<Eigen::Index>(n);
  const auto ek = static_cast<Eigen::Index>(k);
  MutMap cm(c, em, en, Eigen::OuterStride<>(static_cast<Eigen::Index>(ldc)));
  if (!accumulate) cm.setZero();
  const Eigen::OuterStride<> sa(static_cast<Eigen::Index>(lda));
  const Eigen::OuterStride<> sb(static_cast<Eigen::Index>(ldb));
  if (!trans_a && !trans_b) {
    cm.noalias() += ConstMap(a, em, ek, sa) * ConstMap(b, ek, en, sb);
  } else if (!trans_a && trans_b) {
    cm.noalias() += ConstMap(a, em, ek, sa) * ConstMap(b, en, ek, sb).transpose();
  } else if (trans_a && !trans_b) {
    cm.noalias() += ConstMap(a, ek, em, sa).transpose() * ConstMap(b, ek, en, sb);
  } else {
    cm.noalias() += ConstMap(a, ek, em, sa).transpose() * ConstMap(b, en, ek, sb).transpose();
  }
}

}  // namespace tmm::kernels
