#include "ata/preprocess.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <sstream>

#include "ata/error.hpp"
#include "ata/log.hpp"

namespace ata {

namespace {

void check_dim(Eigen::Index got, std::size_t expected, const char* what) {
  if (static_cast<std::size_t>(got) != expected) {
    std::ostringstream msg;
    msg << what << ": dimension mismatch, expected " << expected << ", got " << got;
    throw Error(msg.str());
  }
}

}  // namespace

Eigen::VectorXd Standardizer::transform(const Eigen::VectorXd& x) const {
  check_dim(x.size(), dim(), "standardize");
  return (x - mean).cwiseQuotient(std);
}

Eigen::MatrixXd Standardizer::transform_rows(const Eigen::MatrixXd& x) const {
  check_dim(x.cols(), dim(), "standardize");
  return (x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

Standardizer fit_standardizer(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) throw Error("fit_standardizer needs at least 2 samples");
  if (!x.allFinite()) throw Error("fit_standardizer: non-finite input");
  Standardizer s;
  const double n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
  s.std = (centered.colwise().squaredNorm().transpose() / n).cwiseSqrt();
  for (Eigen::Index j = 0; j < s.std.size(); ++j) {
    // Spread at rounding level of the mean counts as constant.
    const double scale = std::max(1.0, std::abs(s.mean(j)));
    if (s.std(j) <= 1e-12 * scale) {
      s.std(j) = 1.0;
      s.zero_std_dims.push_back(j);
    }
  }
  if (!s.zero_std_dims.empty()) {
    log::info("standardizer: " + std::to_string(s.zero_std_dims.size()) +
              " constant dimension(s) kept with std = 1");
  }
  return s;
}

double PcaModel::explained_ratio() const {
  return total_variance > 0.0 ? explained_variance.sum() / total_variance : 0.0;
}

Eigen::VectorXd PcaModel::project(const Eigen::VectorXd& x) const {
  check_dim(x.size(), input_dim(), "project");
  if (!x.allFinite()) throw Error("project: non-finite input");
  return components * (x - center);
}

Eigen::MatrixXd PcaModel::project_rows(const Eigen::MatrixXd& x) const {
  check_dim(x.cols(), input_dim(), "project");
  return (x.rowwise() - center.transpose()) * components.transpose();
}

PcaModel fit_pca(const Eigen::MatrixXd& x, const PcaOptions& options) {
  if (x.rows() < 2) throw Error("fit_pca needs at least 2 samples");
  if (!(options.var_target > 0.0) || options.var_target > 1.0) {
    throw Error("fit_pca: var_target must be in (0, 1]");
  }
  if (options.max_dims < 1) throw Error("fit_pca: max_dims must be >= 1");
  if (!x.allFinite()) throw Error("fit_pca: non-finite input");

  PcaModel model;
  model.options = options;
  model.center = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - model.center.transpose();
  const double denom = static_cast<double>(x.rows() - 1);

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd& singular = svd.singularValues();
  const Eigen::VectorXd variance = singular.array().square() / denom;
  model.total_variance = centered.squaredNorm() / denom;
  if (!(model.total_variance > 0.0) || singular.size() == 0 || singular(0) == 0.0) {
    throw Error("zero variance");
  }

  const double tol = singular(0) * static_cast<double>(std::max(x.rows(), x.cols())) *
                     std::numeric_limits<double>::epsilon();
  Eigen::Index rank = 0;
  while (rank < singular.size() && singular(rank) > tol) ++rank;

  // Smallest m whose cumulative ratio reaches the target. The relative slack
  // keeps an exactly-reached target (e.g. 1.0 on low-rank data) from being
  // missed by rounding.
  Eigen::Index by_variance = rank;
  bool reached = false;
  double cumulative = 0.0;
  for (Eigen::Index m = 0; m < rank; ++m) {
    cumulative += variance(m);
    if (cumulative / model.total_variance >= options.var_target - 1e-12) {
      by_variance = m + 1;
      reached = true;
      break;
    }
  }

  Eigen::Index dims = by_variance;
  model.limited_by = reached ? "variance" : "rank";
  if (options.max_dims < dims) {
    dims = options.max_dims;
    model.limited_by = "max_dims";
  }
  if (x.rows() - 1 < dims) {
    dims = x.rows() - 1;
    model.limited_by = "samples";
    log::info("fit_pca: N = " + std::to_string(x.rows()) + " caps D' at " +
              std::to_string(dims));
  }

  model.components = svd.matrixV().leftCols(dims).transpose();
  model.explained_variance = variance.head(dims);
  for (Eigen::Index k = 0; k < dims; ++k) {
    Eigen::Index arg = 0;
    model.components.row(k).cwiseAbs().maxCoeff(&arg);
    if (model.components(k, arg) < 0.0) model.components.row(k) *= -1.0;
  }
  return model;
}

Eigen::VectorXd Preprocessor::reduce(const Eigen::VectorXd& x) const {
  return pca.project(standardizer.transform(x));
}

Eigen::MatrixXd Preprocessor::reduce_rows(const Eigen::MatrixXd& x) const {
  return pca.project_rows(standardizer.transform_rows(x));
}

Preprocessor fit_preprocessor(const Eigen::MatrixXd& x, const PcaOptions& options) {
  Preprocessor p;
  p.standardizer = fit_standardizer(x);
  p.pca = fit_pca(p.standardizer.transform_rows(x), options);
  return p;
}

}  // namespace ata
