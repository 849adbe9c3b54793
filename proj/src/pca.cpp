#include <Eigen/SVD>

#include "isoflow/embed.hpp"

namespace isoflow::embed {

double cumulative_explained_variance(const Vector& singular_values, Index d) {
  require(d >= 0 && d <= singular_values.size(), ErrorCode::invalid_argument,
          "cev: latent dimension out of range");
  const double total = singular_values.sum();
  require(total > 0.0, ErrorCode::singular, "cev: all singular values are zero");
  return singular_values.head(d).sum() / total * 100.0;
}

PcaEmbedding pca_fit(const Matrix& data, const PcaTarget& target) {
  require(data.rows() >= 2, ErrorCode::invalid_argument, "pca_fit: need at least two samples");
  require(data.allFinite(), ErrorCode::non_finite, "pca_fit: data contains non-finite values");
  require(target.latent_dim.has_value() != target.cev_percent.has_value(),
          ErrorCode::invalid_argument, "pca_fit: give exactly one of latent_dim or cev target");
  const Index ambient = data.cols();

  PcaEmbedding e;
  e.mean = data.colwise().mean();
  const Matrix centered = data.rowwise() - e.mean;
  const Matrix cov = centered.transpose() * centered / static_cast<double>(data.rows() - 1);

  Eigen::BDCSVD<Matrix> svd(cov, Eigen::ComputeFullV);
  e.singular_values = svd.singularValues();
  Matrix v = svd.matrixV();
  // Sign convention: the largest-magnitude entry of each direction is positive.
  for (Index k = 0; k < v.cols(); ++k) {
    Index at = 0;
    v.col(k).cwiseAbs().maxCoeff(&at);
    if (v(at, k) < 0.0) v.col(k) = -v.col(k);
  }

  if (target.latent_dim) {
    e.latent_dim = *target.latent_dim;
    require(e.latent_dim >= 1 && e.latent_dim <= ambient, ErrorCode::invalid_argument,
            "pca_fit: latent dimension must lie in [1, D]");
  } else {
    const double goal = *target.cev_percent;
    require(goal > 0.0 && goal <= 100.0, ErrorCode::invalid_argument,
            "pca_fit: cev target must lie in (0, 100]");
    e.latent_dim = ambient;
    for (Index d = 1; d <= ambient; ++d) {
      // Relative slack absorbs round-off when the target is reached exactly.
      if (cumulative_explained_variance(e.singular_values, d) >= goal * (1.0 - 1e-12)) {
        e.latent_dim = d;
        break;
      }
    }
  }
  e.basis = v.leftCols(e.latent_dim);
  return e;
}

Matrix pca_encode(const PcaEmbedding& e, const Matrix& x) {
  require(x.cols() == e.ambient_dim(), ErrorCode::shape_mismatch,
          "pca_encode: input width " + std::to_string(x.cols()) + ", expected " +
              std::to_string(e.ambient_dim()));
  return (x.rowwise() - e.mean) * e.basis;
}

Matrix pca_decode(const PcaEmbedding& e, const Matrix& z) {
  require(z.cols() == e.latent_dim, ErrorCode::shape_mismatch,
          "pca_decode: latent width " + std::to_string(z.cols()) + ", expected " +
              std::to_string(e.latent_dim));
  return (z * e.basis.transpose()).rowwise() + e.mean;
}

}  // namespace isoflow::embed
