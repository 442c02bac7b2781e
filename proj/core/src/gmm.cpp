#include "ata/gmm.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "ata/error.hpp"
#include "ata/log.hpp"
#include "ata/rng.hpp"

namespace ata {

namespace {

constexpr double kResponsibilityFloor = 1e-300;
constexpr double kStarvedWeight = 1e-6;
constexpr int kStarvedIterations = 3;

double max_abs(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace

Eigen::MatrixXd shrink_covariance(const Eigen::MatrixXd& cov, double rho) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) {
    throw Error("shrink_covariance: covariance must be square and non-empty");
  }
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error("shrink_covariance: rho must be in [0, 1]");
  if (!cov.allFinite()) throw Error("shrink_covariance: non-finite covariance");
  const double asym = max_abs(cov - cov.transpose());
  if (asym > 1e-6 * std::max(1.0, max_abs(cov))) {
    std::ostringstream msg;
    msg << "shrink_covariance: covariance is not symmetric (max |S - S^T| = " << asym << ")";
    throw Error(msg.str());
  }
  const double target = cov.trace() / static_cast<double>(cov.rows());
  Eigen::MatrixXd out = (1.0 - rho) * cov;
  out.diagonal().array() += rho * target;
  return out;
}

// ----------------------------------------------------------- components

GaussianComponent::GaussianComponent(Eigen::VectorXd mean, Eigen::MatrixXd covariance,
                                     double weight)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), weight_(weight) {
  const auto d = mean_.size();
  if (d == 0 || covariance_.rows() != d || covariance_.cols() != d) {
    throw Error("GaussianComponent: mean/covariance dimension mismatch");
  }
  if (!mean_.allFinite() || !covariance_.allFinite()) {
    throw Error("GaussianComponent: non-finite parameters");
  }
  if (max_abs(covariance_ - covariance_.transpose()) >
      1e-8 * std::max(1.0, max_abs(covariance_))) {
    throw Error("GaussianComponent: covariance is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
  if (llt.info() != Eigen::Success) {
    throw Error("GaussianComponent: covariance is not positive definite");
  }
  factor_ = llt.matrixL();
  if ((factor_.diagonal().array() <= 0.0).any()) {
    throw Error("GaussianComponent: non-positive factor diagonal");
  }
  log_det_ = 2.0 * factor_.diagonal().array().log().sum();
}

GaussianComponent GaussianComponent::from_factor(Eigen::VectorXd mean,
                                                 Eigen::MatrixXd factor, double weight) {
  const auto d = mean.size();
  if (d == 0 || factor.rows() != d || factor.cols() != d) {
    throw Error("GaussianComponent: mean/factor dimension mismatch");
  }
  if (!mean.allFinite() || !factor.allFinite()) {
    throw Error("GaussianComponent: non-finite parameters");
  }
  if ((factor.diagonal().array() <= 0.0).any()) {
    throw Error("GaussianComponent: non-positive factor diagonal");
  }
  GaussianComponent c;
  c.mean_ = std::move(mean);
  c.factor_ = factor.triangularView<Eigen::Lower>();
  c.covariance_ = c.factor_ * c.factor_.transpose();
  c.weight_ = weight;
  c.log_det_ = 2.0 * c.factor_.diagonal().array().log().sum();
  return c;
}

double GaussianComponent::squared_mahalanobis(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != dim()) {
    throw Error("mahalanobis: dimension mismatch");
  }
  if (!x.allFinite()) throw Error("mahalanobis: non-finite input");
  const Eigen::VectorXd y =
      factor_.triangularView<Eigen::Lower>().solve(x - mean_);
  return y.squaredNorm();
}

Eigen::VectorXd GaussianComponent::squared_mahalanobis_rows(
    const Eigen::MatrixXd& rows) const {
  if (static_cast<std::size_t>(rows.cols()) != dim()) {
    throw Error("mahalanobis: dimension mismatch");
  }
  Eigen::MatrixXd centered = (rows.rowwise() - mean_.transpose()).transpose();
  factor_.triangularView<Eigen::Lower>().solveInPlace(centered);
  return centered.colwise().squaredNorm().transpose();
}

double GaussianComponent::log_density(const Eigen::VectorXd& x) const {
  const double d = static_cast<double>(dim());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det_ +
                 squared_mahalanobis(x));
}

double mahalanobis(const Eigen::VectorXd& x, const GaussianComponent& component) {
  return std::sqrt(component.squared_mahalanobis(x));
}

// ---------------------------------------------------------------- model

double GmmModel::score(const Eigen::VectorXd& x) const { return score_gmm(*this, x); }

Eigen::VectorXd GmmModel::score_rows(const Eigen::MatrixXd& rows) const {
  if (components.empty()) throw Error("score_gmm: model has no components");
  Eigen::VectorXd best = components[0].squared_mahalanobis_rows(rows);
  for (std::size_t k = 1; k < components.size(); ++k) {
    best = best.cwiseMin(components[k].squared_mahalanobis_rows(rows));
  }
  return best.cwiseSqrt();
}

double score_gmm(const GmmModel& model, const Eigen::VectorXd& x) {
  if (model.components.empty()) throw Error("score_gmm: model has no components");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : model.components) best = std::min(best, c.squared_mahalanobis(x));
  return std::sqrt(best);
}

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// log(pi_k) + log N(z_i | k) for every row and component.
Eigen::MatrixXd joint_log_density(const Eigen::MatrixXd& z,
                                  const std::vector<GaussianComponent>& comps) {
  const double d = static_cast<double>(z.cols());
  Eigen::MatrixXd out(z.rows(), static_cast<Eigen::Index>(comps.size()));
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const auto& c = comps[k];
    out.col(static_cast<Eigen::Index>(k)) =
        (-0.5 * (c.squared_mahalanobis_rows(z).array() + d * kLog2Pi + c.log_det()) +
         std::log(c.weight()))
            .matrix();
  }
  return out;
}

struct Evaluation {
  double avg_log_likelihood = 0.0;
  Eigen::MatrixXd responsibilities;
  Eigen::VectorXd row_log_likelihood;
};

Evaluation evaluate(const Eigen::MatrixXd& z, const std::vector<GaussianComponent>& comps) {
  Evaluation ev;
  const Eigen::MatrixXd logp = joint_log_density(z, comps);
  ev.row_log_likelihood.resize(z.rows());
  ev.responsibilities.resize(z.rows(), logp.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double top = logp.row(i).maxCoeff();
    const double lse = top + std::log((logp.row(i).array() - top).exp().sum());
    ev.row_log_likelihood(i) = lse;
    Eigen::RowVectorXd r = (logp.row(i).array() - lse).exp().max(kResponsibilityFloor);
    ev.responsibilities.row(i) = r / r.sum();
  }
  ev.avg_log_likelihood = ev.row_log_likelihood.mean();
  return ev;
}

Eigen::MatrixXd weighted_scatter(const Eigen::MatrixXd& z, const Eigen::VectorXd& mean,
                                 const Eigen::VectorXd& weights, double total) {
  const Eigen::MatrixXd centered =
      (z.rowwise() - mean.transpose()).array().colwise() * weights.array().sqrt();
  Eigen::MatrixXd s = centered.transpose() * centered / total;
  return 0.5 * (s + s.transpose());
}

// Shrinks and factorizes; adds diagonal jitter only if shrinkage alone could
// not make the covariance positive definite (e.g. a component collapsed on a
// single point, where the trace is zero).
GaussianComponent make_component(const Eigen::VectorXd& mean, const Eigen::MatrixXd& scatter,
                                 double rho, double weight, double jitter_scale) {
  Eigen::MatrixXd cov = shrink_covariance(scatter, rho);
  double jitter = 1e-10 * jitter_scale;
  for (int attempt = 0;; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success &&
        (Eigen::MatrixXd(llt.matrixL()).diagonal().array() > 0.0).all()) {
      return GaussianComponent(mean, cov, weight);
    }
    if (attempt > 30) throw Error("fit_gmm: covariance could not be factorized");
    cov.diagonal().array() += jitter;
    jitter *= 10.0;
  }
}

struct StartState {
  std::vector<GaussianComponent> components;
  GmmStartTrace trace;
};

std::vector<Eigen::Index> kmeanspp_centers(const Eigen::MatrixXd& z, int k, Rng& rng) {
  const Eigen::Index n = z.rows();
  std::vector<Eigen::Index> centers;
  centers.push_back(static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n))));
  Eigen::VectorXd nearest = (z.rowwise() - z.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < k) {
    const double total = nearest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= nearest(i);
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
    }
    centers.push_back(pick);
    nearest = nearest.cwiseMin((z.rowwise() - z.row(pick)).rowwise().squaredNorm());
  }
  return centers;
}

std::vector<GaussianComponent> m_step(const Eigen::MatrixXd& z, const Eigen::MatrixXd& resp,
                                      double rho, const Eigen::MatrixXd& global_scatter,
                                      const std::vector<GaussianComponent>* previous,
                                      const std::vector<Eigen::Index>* fallback_centers,
                                      double jitter_scale) {
  const Eigen::Index k = resp.cols();
  const double n = static_cast<double>(z.rows());
  const Eigen::VectorXd counts = resp.colwise().sum().transpose();
  std::vector<GaussianComponent> out;
  out.reserve(static_cast<std::size_t>(k));
  for (Eigen::Index c = 0; c < k; ++c) {
    const double weight = counts(c) / n;
    if (counts(c) < 1e-12 * n) {
      // Nothing assigned; keep the previous estimate (or the seeding point).
      if (previous) {
        const auto& p = (*previous)[static_cast<std::size_t>(c)];
        out.push_back(GaussianComponent::from_factor(p.mean(), p.factor(), weight));
      } else {
        const Eigen::VectorXd mean =
            z.row((*fallback_centers)[static_cast<std::size_t>(c)]).transpose();
        out.push_back(make_component(mean, global_scatter, rho, weight, jitter_scale));
      }
      continue;
    }
    const Eigen::VectorXd mean = (resp.col(c).transpose() * z).transpose() / counts(c);
    const Eigen::MatrixXd scatter = weighted_scatter(z, mean, resp.col(c), counts(c));
    out.push_back(make_component(mean, scatter, rho, weight, jitter_scale));
  }
  return out;
}

StartState run_start(const Eigen::MatrixXd& z, const GmmOptions& opt, std::uint64_t seed,
                     const Eigen::MatrixXd& global_scatter, double jitter_scale) {
  StartState state;
  state.trace.seed = seed;
  const Eigen::Index n = z.rows();
  const int k = opt.k;
  Rng rng(seed);

  const auto centers = kmeanspp_centers(z, k, rng);
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d = (z.row(i) - z.row(centers[static_cast<std::size_t>(c)])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    resp(i, best) = 1.0;
  }
  state.components = m_step(z, resp, opt.rho, global_scatter, nullptr, &centers, jitter_scale);
  Evaluation ev = evaluate(z, state.components);
  state.trace.avg_log_likelihood.push_back(ev.avg_log_likelihood);
  if (k == 1) {
    state.trace.iterations = 1;
    state.trace.converged = true;
    return state;
  }

  std::vector<int> starved(static_cast<std::size_t>(k), 0);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    auto next = m_step(z, ev.responsibilities, opt.rho, global_scatter, &state.components,
                       nullptr, jitter_scale);
    bool reseeded = false;
    for (int c = 0; c < k; ++c) {
      auto& counter = starved[static_cast<std::size_t>(c)];
      counter = next[static_cast<std::size_t>(c)].weight() < kStarvedWeight ? counter + 1 : 0;
      if (counter < kStarvedIterations) continue;
      // Re-seed on the worst-explained point with the global covariance.
      Eigen::Index worst = 0;
      ev.row_log_likelihood.minCoeff(&worst);
      next[static_cast<std::size_t>(c)] = make_component(
          z.row(worst).transpose(), global_scatter, opt.rho, 1.0 / k, jitter_scale);
      counter = 0;
      reseeded = true;
    }
    if (reseeded) {
      double total = 0.0;
      for (const auto& comp : next) total += comp.weight();
      std::vector<GaussianComponent> renormalized;
      for (const auto& comp : next) {
        renormalized.push_back(
            GaussianComponent::from_factor(comp.mean(), comp.factor(), comp.weight() / total));
      }
      next = std::move(renormalized);
      state.trace.reseed_iterations.push_back(it);
    }
    const double previous = ev.avg_log_likelihood;
    Evaluation candidate = evaluate(z, next);
    if (!std::isfinite(candidate.avg_log_likelihood)) {
      throw Error("fit_gmm: log-likelihood became non-finite at iteration " +
                  std::to_string(it));
    }
    // A shrunk (or jittered) M-step is not an exact maximizer and can lower
    // the likelihood. Such a step is rejected and the start ends there.
    if (!reseeded &&
        candidate.avg_log_likelihood < previous - 1e-12 * std::max(1.0, std::abs(previous))) {
      state.trace.stopped_on_decrease = true;
      state.trace.converged = true;
      break;
    }
    state.components = std::move(next);
    ev = std::move(candidate);
    state.trace.avg_log_likelihood.push_back(ev.avg_log_likelihood);
    state.trace.iterations = it;
    if (!reseeded && std::abs(ev.avg_log_likelihood - previous) < opt.tolerance) {
      state.trace.converged = true;
      break;
    }
  }
  return state;
}

}  // namespace

double GmmModel::avg_log_likelihood(const Eigen::MatrixXd& rows) const {
  return evaluate(rows, components).avg_log_likelihood;
}

GmmModel fit_gmm(const Eigen::MatrixXd& z, const GmmOptions& options) {
  if (options.k < 1) throw Error("fit_gmm: K must be >= 1");
  if (z.rows() < options.k) {
    throw Error("fit_gmm: N = " + std::to_string(z.rows()) + " is smaller than K = " +
                std::to_string(options.k));
  }
  if (z.cols() < 1) throw Error("fit_gmm: zero-dimensional data");
  if (!(options.rho >= 0.0 && options.rho <= 1.0)) {
    throw Error("fit_gmm: rho must be in [0, 1]");
  }
  if (options.n_starts < 1) throw Error("fit_gmm: n_starts must be >= 1");
  if (!z.allFinite()) throw Error("fit_gmm: non-finite input");
  if (z.rows() < options.k * (z.cols() + 1)) {
    log::info("fit_gmm: N = " + std::to_string(z.rows()) + " < K (D' + 1) = " +
              std::to_string(options.k * (z.cols() + 1)) + "; relying on shrinkage");
  }

  const Eigen::VectorXd global_mean = z.colwise().mean().transpose();
  const Eigen::MatrixXd global_scatter = weighted_scatter(
      z, global_mean, Eigen::VectorXd::Ones(z.rows()), static_cast<double>(z.rows()));
  const double jitter_scale =
      std::max(1.0, global_scatter.trace() / static_cast<double>(z.cols()));

  GmmModel model;
  model.rho = options.rho;
  model.meta.n_starts = options.n_starts;
  model.meta.seed = options.seed;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < options.n_starts; ++s) {
    StartState state = run_start(z, options, derive_seed(options.seed, "gmm-start", s),
                                 global_scatter, jitter_scale);
    const double ll = state.trace.avg_log_likelihood.back();
    model.meta.reseeds += static_cast<int>(state.trace.reseed_iterations.size());
    if (ll > best_ll || model.components.empty()) {
      best_ll = ll;
      model.components = std::move(state.components);
      model.meta.best_start = s;
      model.meta.iterations = state.trace.iterations;
      model.meta.final_avg_log_likelihood = ll;
    }
    model.meta.starts.push_back(std::move(state.trace));
  }
  if (model.meta.reseeds > 0) {
    log::warn("fit_gmm: re-seeded starved components " +
              std::to_string(model.meta.reseeds) + " time(s)");
  }
  return model;
}

}  // namespace ata
