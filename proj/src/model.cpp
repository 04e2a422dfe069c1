#include "cdhmm/model.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

namespace cdhmm {

void ModelHyper::validate() const {
  if (n_states < 1 || n_components < 1 || max_lag < 1 || dim < 1)
    throw std::invalid_argument("ModelHyper: N, M, K, D must all be >= 1");
  auto positive = [](const auto& arr, const char* name) {
    if ((arr.array() <= 0.0).any() || !arr.allFinite())
      throw std::invalid_argument(std::string("ModelHyper: ") + name +
                                  " concentrations must be finite and positive");
  };
  if (alpha0.size() != max_lag || alpha.rows() != max_lag || alpha.cols() != max_lag)
    throw std::invalid_argument("ModelHyper: lag prior shapes do not match max_lag");
  positive(alpha0, "alpha0");
  positive(alpha, "alpha");
  if (eta0.size() != n_states)
    throw std::invalid_argument("ModelHyper: eta0 size does not match n_states");
  positive(eta0, "eta0");
  if (static_cast<int>(eta_dep.size()) != max_lag)
    throw std::invalid_argument("ModelHyper: eta_dep must hold one matrix per lag");
  for (const Mat& m : eta_dep) {
    if (m.rows() != n_states || m.cols() != n_states)
      throw std::invalid_argument("ModelHyper: eta_dep matrices must be N x N");
    positive(m, "eta_dep");
  }
  if (w.rows() != n_states || w.cols() != n_components)
    throw std::invalid_argument("ModelHyper: w must be N x M");
  positive(w, "w");
  if (!(nw_lambda > 0.0) || !(nw_dof > dim - 1))
    throw std::invalid_argument("ModelHyper: nw_lambda must be positive and nw_dof > D - 1");
  if (nw_mean.size() != dim || nw_scale.rows() != dim || nw_scale.cols() != dim)
    throw std::invalid_argument("ModelHyper: Normal-Wishart shapes do not match dim");
}

ModelHyper default_hyper(int n_states, int n_components, int max_lag,
                         const Vec& data_mean, const Mat& data_cov) {
  if (n_states < 1 || n_components < 1 || max_lag < 1)
    throw std::invalid_argument("default_hyper: N, M, K must all be >= 1");
  const int dim = static_cast<int>(data_mean.size());
  if (dim < 1 || data_cov.rows() != dim || data_cov.cols() != dim)
    throw std::invalid_argument("default_hyper: mean/covariance shapes disagree");
  const double scale = data_cov.cwiseAbs().maxCoeff();
  if (!data_cov.allFinite() ||
      (data_cov - data_cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1.0))
    throw std::invalid_argument("default_hyper: data covariance must be symmetric");
  Eigen::LLT<Mat> llt(data_cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("default_hyper: data covariance must be positive definite");

  const double conc = 1e-3;
  ModelHyper h;
  h.n_states = n_states;
  h.n_components = n_components;
  h.max_lag = max_lag;
  h.dim = dim;
  h.alpha0 = Vec::Constant(max_lag, conc);
  h.alpha = Mat::Constant(max_lag, max_lag, conc);
  h.eta0 = Vec::Constant(n_states, conc);
  h.eta_dep.assign(max_lag, Mat::Constant(n_states, n_states, conc));
  h.w = Mat::Constant(n_states, n_components, conc);
  h.nw_lambda = 0.25;
  h.nw_mean = data_mean;
  h.nw_dof = dim + 2;
  h.nw_scale = h.nw_dof * data_cov;
  return h;
}

void LatentPosteriors::validate(const ModelHyper& h) const {
  const int K = h.max_lag, N = h.n_states, M = h.n_components;
  auto check = [](const DirichletPosterior& q, int n, const char* name) {
    if (q.size() != n)
      throw std::invalid_argument(std::string("LatentPosteriors: ") + name +
                                  " has the wrong dimension");
    for (int i = 0; i < n; ++i)
      if (!(q.concentration(i) > 0.0) || !std::isfinite(q.concentration(i)))
        throw std::invalid_argument(std::string("LatentPosteriors: ") + name +
                                    " concentrations must be finite and positive");
  };
  check(q_pi_hat, K, "q_pi_hat");
  if (static_cast<int>(q_A_hat.size()) != K)
    throw std::invalid_argument("LatentPosteriors: q_A_hat must have K rows");
  for (const auto& row : q_A_hat) check(row, K, "q_A_hat row");
  check(q_pi, N, "q_pi");
  if (static_cast<int>(q_A_dep.size()) != K)
    throw std::invalid_argument("LatentPosteriors: q_A_dep must have K matrices");
  for (const auto& m : q_A_dep) {
    if (static_cast<int>(m.size()) != N)
      throw std::invalid_argument("LatentPosteriors: q_A_dep matrices must have N rows");
    for (const auto& row : m) check(row, N, "q_A_dep row");
  }
  if (static_cast<int>(q_c.size()) != N)
    throw std::invalid_argument("LatentPosteriors: q_c must have N rows");
  for (const auto& row : q_c) check(row, M, "q_c row");
}

LatentPosteriors prior_posteriors(const ModelHyper& h) {
  h.validate();
  LatentPosteriors p;
  p.q_pi_hat = {h.alpha0};
  p.q_A_hat.resize(h.max_lag);
  for (int k = 0; k < h.max_lag; ++k) p.q_A_hat[k] = {h.alpha.row(k).transpose()};
  p.q_pi = {h.eta0};
  p.q_A_dep.resize(h.max_lag);
  for (int k = 0; k < h.max_lag; ++k) {
    p.q_A_dep[k].resize(h.n_states);
    for (int i = 0; i < h.n_states; ++i)
      p.q_A_dep[k][i] = {h.eta_dep[k].row(i).transpose()};
  }
  p.q_c.resize(h.n_states);
  for (int i = 0; i < h.n_states; ++i) p.q_c[i] = {h.w.row(i).transpose()};
  return p;
}

StarredParams starred(const LatentPosteriors& post) {
  const int K = static_cast<int>(post.q_A_hat.size());
  const int N = static_cast<int>(post.q_c.size());
  StarredParams s;
  s.pi_hat = starred_probs(post.q_pi_hat);
  s.A_hat.resize(K, K);
  for (int k = 0; k < K; ++k) s.A_hat.row(k) = starred_probs(post.q_A_hat[k]).transpose();
  s.pi = starred_probs(post.q_pi);
  s.A_dep.resize(K);
  for (int k = 0; k < K; ++k) {
    s.A_dep[k].resize(N, N);
    for (int i = 0; i < N; ++i)
      s.A_dep[k].row(i) = starred_probs(post.q_A_dep[k][i]).transpose();
  }
  const int M = post.q_c.empty() ? 0 : post.q_c[0].size();
  s.c.resize(N, M);
  for (int i = 0; i < N; ++i) s.c.row(i) = starred_probs(post.q_c[i]).transpose();
  return s;
}

StarredParams posterior_mean_params(const LatentPosteriors& post) {
  const int K = static_cast<int>(post.q_A_hat.size());
  const int N = static_cast<int>(post.q_c.size());
  StarredParams s;
  s.pi_hat = post.q_pi_hat.mean();
  s.A_hat.resize(K, K);
  for (int k = 0; k < K; ++k) s.A_hat.row(k) = post.q_A_hat[k].mean().transpose();
  s.pi = post.q_pi.mean();
  s.A_dep.resize(K);
  for (int k = 0; k < K; ++k) {
    s.A_dep[k].resize(N, N);
    for (int i = 0; i < N; ++i)
      s.A_dep[k].row(i) = post.q_A_dep[k][i].mean().transpose();
  }
  const int M = post.q_c.empty() ? 0 : post.q_c[0].size();
  s.c.resize(N, M);
  for (int i = 0; i < N; ++i) s.c.row(i) = post.q_c[i].mean().transpose();
  return s;
}

double latent_kl(const LatentPosteriors& post, const ModelHyper& h) {
  double kl = dirichlet_kl(post.q_pi_hat, {h.alpha0});
  for (int k = 0; k < h.max_lag; ++k)
    kl += dirichlet_kl(post.q_A_hat[k], {h.alpha.row(k).transpose()});
  kl += dirichlet_kl(post.q_pi, {h.eta0});
  for (int k = 0; k < h.max_lag; ++k)
    for (int i = 0; i < h.n_states; ++i)
      kl += dirichlet_kl(post.q_A_dep[k][i], {h.eta_dep[k].row(i).transpose()});
  for (int i = 0; i < h.n_states; ++i)
    kl += dirichlet_kl(post.q_c[i], {h.w.row(i).transpose()});
  return kl;
}

}  // namespace cdhmm
