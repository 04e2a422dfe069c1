#include "cdhmm/emission.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cdhmm {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;
constexpr double kLogTwo = 0.6931471805599453094;

void check_nw(const NwPosterior& nw, const char* who) {
  const int d = nw.dim();
  if (d < 1 || nw.scale.rows() != d || nw.scale.cols() != d)
    throw std::invalid_argument(std::string(who) + ": Normal-Wishart shapes disagree");
  if (!(nw.lambda > 0.0) || !(nw.dof > d - 1))
    throw std::invalid_argument(std::string(who) +
                                ": lambda must be positive and dof > D - 1");
  if (!nw.mean.allFinite() || !nw.scale.allFinite() || !std::isfinite(nw.lambda) ||
      !std::isfinite(nw.dof))
    throw std::invalid_argument(std::string(who) + ": non-finite Normal-Wishart parameter");
}

// Sum over d of psi((dof + 1 - d) / 2), the digamma part of E[log |R|].
double digamma_sum(double dof, int dim) {
  double s = 0.0;
  for (int d = 1; d <= dim; ++d) s += boost::math::digamma(0.5 * (dof + 1 - d));
  return s;
}

double log_multivariate_gamma(double a, int dim) {
  double s = 0.25 * dim * (dim - 1) * std::log(M_PI);
  for (int d = 1; d <= dim; ++d) s += std::lgamma(a + 0.5 * (1 - d));
  return s;
}
}  // namespace

GaussEval::GaussEval(const NwPosterior& nw) {
  check_nw(nw, "GaussEval");
  const int d = nw.dim();
  mean_ = nw.mean;
  llt_.compute(nw.scale);
  if (llt_.info() != Eigen::Success) {
    const double jitter = 1e-8 * nw.scale.trace() / d;
    Mat bumped = nw.scale + jitter * Mat::Identity(d, d);
    llt_.compute(bumped);
    if (llt_.info() != Eigen::Success)
      throw std::runtime_error("GaussEval: scale matrix is not positive definite");
  }
  log_det_scale_ = 0.0;
  for (int i = 0; i < d; ++i) log_det_scale_ += 2.0 * std::log(llt_.matrixL()(i, i));
  coef_ = 0.5 * nw.dof;
  const double e_log_det_precision = digamma_sum(nw.dof, d) + d * kLogTwo - log_det_scale_;
  const_term_ = 0.5 * e_log_det_precision - 0.5 * d / nw.lambda - 0.5 * d * kLogTwoPi;
}

double GaussEval::expected_log_density(const Vec& y) const {
  if (y.size() != mean_.size())
    throw std::invalid_argument("GaussEval: frame dimension does not match the component");
  Vec z = llt_.matrixL().solve(y - mean_);
  return const_term_ - coef_ * z.squaredNorm();
}

double expected_log_gauss(const NwPosterior& nw, const Vec& y) {
  return GaussEval(nw).expected_log_density(y);
}

void EmissionModel::validate() const {
  const int n = n_states();
  const int m = n_components();
  if (n < 1 || m < 1)
    throw std::invalid_argument("EmissionModel: at least one state and component required");
  if (static_cast<int>(mix_weights.size()) != n)
    throw std::invalid_argument("EmissionModel: mix_weights must have one row per state");
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(components[i].size()) != m)
      throw std::invalid_argument("EmissionModel: ragged component grid");
    if (mix_weights[i].size() != m)
      throw std::invalid_argument("EmissionModel: mixture weight row has wrong length");
    for (int j = 0; j < m; ++j) check_nw(components[i][j], "EmissionModel");
  }
}

EmissionEval::EmissionEval(const EmissionModel& model) {
  model.validate();
  const int n = model.n_states();
  evals.reserve(n);
  log_c_star.reserve(n);
  mean_weights.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::vector<GaussEval> row;
    row.reserve(model.components[i].size());
    for (const auto& comp : model.components[i]) row.emplace_back(comp);
    evals.push_back(std::move(row));
    log_c_star.push_back(expected_log_probs(model.mix_weights[i]));
    mean_weights.push_back(model.mix_weights[i].mean());
  }
}

double EmissionEval::log_starred(const Frame& frame, int state) const {
  if (state < 0 || state >= static_cast<int>(evals.size()))
    throw std::invalid_argument("log_starred_emission: state index out of range");
  if (!frame) return 0.0;
  const auto& row = evals[state];
  const Vec& lc = log_c_star[state];
  const int m = static_cast<int>(row.size());
  double best = -std::numeric_limits<double>::infinity();
  Vec terms(m);
  for (int j = 0; j < m; ++j) {
    terms(j) = lc(j) + row[j].expected_log_density(*frame);
    if (terms(j) > best) best = terms(j);
  }
  if (!std::isfinite(best)) return -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (int j = 0; j < m; ++j) acc += std::exp(terms(j) - best);
  return best + std::log(acc);
}

Mat EmissionEval::log_emission_table(const std::vector<Frame>& frames) const {
  const int t_len = static_cast<int>(frames.size());
  const int n = static_cast<int>(evals.size());
  Mat table(t_len, n);
  for (int t = 0; t < t_len; ++t)
    for (int i = 0; i < n; ++i) table(t, i) = log_starred(frames[t], i);
  return table;
}

double log_starred_emission(const EmissionModel& model, const Frame& frame, int state) {
  return EmissionEval(model).log_starred(frame, state);
}

double starred_emission(const EmissionModel& model, const Frame& frame, int state) {
  if (!frame) return 1.0;
  return std::exp(log_starred_emission(model, frame, state));
}

ComponentResponsibilities component_responsibilities(const EmissionEval& ev,
                                                     const Frame& frame,
                                                     const Vec& gamma_x) {
  const int n = static_cast<int>(ev.evals.size());
  const int m = n == 0 ? 0 : static_cast<int>(ev.evals[0].size());
  if (gamma_x.size() != n)
    throw std::invalid_argument("component_responsibilities: gamma_x has wrong length");
  if (std::abs(gamma_x.sum() - 1.0) > 1e-8 || (gamma_x.array() < 0.0).any())
    throw std::invalid_argument(
        "component_responsibilities: gamma_x must be a distribution over states");

  ComponentResponsibilities out;
  out.resp.resize(n, m);
  if (!frame) {
    for (int i = 0; i < n; ++i)
      out.resp.row(i) = gamma_x(i) * ev.mean_weights[i].transpose();
    return out;
  }
  for (int i = 0; i < n; ++i) {
    const Vec& lc = ev.log_c_star[i];
    Vec terms(m);
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
      terms(j) = lc(j) + ev.evals[i][j].expected_log_density(*frame);
      if (terms(j) > best) best = terms(j);
    }
    if (!std::isfinite(best)) {
      out.resp.row(i).setConstant(gamma_x(i) / m);
      out.underflow = true;
      continue;
    }
    Vec weights = (terms.array() - best).exp();
    out.resp.row(i) = (gamma_x(i) / weights.sum()) * weights.transpose();
  }
  return out;
}

ComponentResponsibilities component_responsibilities(const EmissionModel& model,
                                                     const Frame& frame,
                                                     const Vec& gamma_x) {
  return component_responsibilities(EmissionEval(model), frame, gamma_x);
}

NwPosterior update_nw(const NwPosterior& prior, const WeightedStats& stats) {
  check_nw(prior, "update_nw");
  if (!(stats.weight >= 0.0) || !std::isfinite(stats.weight))
    throw std::invalid_argument("update_nw: weight must be finite and non-negative");
  if (stats.weight == 0.0) return prior;
  const int d = prior.dim();
  if (stats.mean.size() != d || stats.scatter.rows() != d || stats.scatter.cols() != d)
    throw std::invalid_argument("update_nw: statistics shapes disagree with the prior");

  const double w = stats.weight;
  NwPosterior post;
  post.lambda = prior.lambda + w;
  post.mean = (prior.lambda * prior.mean + w * stats.mean) / post.lambda;
  post.dof = prior.dof + w;
  const Vec diff = stats.mean - prior.mean;
  post.scale = prior.scale + stats.scatter +
               (prior.lambda * w / post.lambda) * (diff * diff.transpose());
  return post;
}

double nw_kl(const NwPosterior& q, const NwPosterior& p) {
  check_nw(q, "nw_kl");
  check_nw(p, "nw_kl");
  const int d = q.dim();
  if (p.dim() != d) throw std::invalid_argument("nw_kl: dimension mismatch");

  Eigen::LLT<Mat> llt_q(q.scale);
  if (llt_q.info() != Eigen::Success)
    throw std::runtime_error("nw_kl: q scale matrix is not positive definite");
  Eigen::LLT<Mat> llt_p(p.scale);
  if (llt_p.info() != Eigen::Success)
    throw std::runtime_error("nw_kl: p scale matrix is not positive definite");

  double log_det_q = 0.0;
  for (int i = 0; i < d; ++i) log_det_q += 2.0 * std::log(llt_q.matrixL()(i, i));
  double log_det_p = 0.0;
  for (int i = 0; i < d; ++i) log_det_p += 2.0 * std::log(llt_p.matrixL()(i, i));

  // Gaussian factor: mean conditional on the precision.
  const Vec dm = q.mean - p.mean;
  const double mahal = q.dof * llt_q.matrixL().solve(dm).squaredNorm();
  const double kl_gauss =
      0.5 * (d * std::log(q.lambda / p.lambda) - d + d * p.lambda / q.lambda +
             p.lambda * mahal);

  // Wishart factor, with both distributions in inverse-scale form.
  const double e_log_det = digamma_sum(q.dof, d) + d * kLogTwo - log_det_q;
  const double trace_term = llt_q.solve(p.scale).trace();
  const double kl_wish =
      0.5 * (q.dof - p.dof) * e_log_det - 0.5 * q.dof * d + 0.5 * q.dof * trace_term +
      0.5 * (p.dof - q.dof) * d * kLogTwo - 0.5 * p.dof * log_det_p +
      0.5 * q.dof * log_det_q + log_multivariate_gamma(0.5 * p.dof, d) -
      log_multivariate_gamma(0.5 * q.dof, d);

  return kl_gauss + kl_wish;
}

}  // namespace cdhmm
