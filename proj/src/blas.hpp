#pragma once

#include <Eigen/Core>

namespace sauvolanet::detail {

// Row-major C = alpha * op(A) * op(B) + beta * C, lda/ldb/ldc being row strides.
template <typename Real>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, Real alpha, const Real* a, int lda, const Real* b, int ldb,
          Real beta, Real* c, int ldc)
{
	using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
	using Stride = Eigen::OuterStride<>;
	using ConstMap = Eigen::Map<const Mat, 0, Stride>;
	Eigen::Map<Mat, 0, Stride> C(c, m, n, Stride(ldc));
	const ConstMap A(a, trans_a ? k : m, trans_a ? m : k, Stride(lda));
	const ConstMap B(b, trans_b ? n : k, trans_b ? k : n, Stride(ldb));
	if (beta == Real(0)) C.setZero();
	else if (beta != Real(1)) C *= beta;
	if (trans_a && trans_b) C.noalias() += alpha * A.transpose() * B.transpose();
	else if (trans_a) C.noalias() += alpha * A.transpose() * B;
	else if (trans_b) C.noalias() += alpha * A * B.transpose();
	else C.noalias() += alpha * A * B;
}

} // namespace sauvolanet::detail
