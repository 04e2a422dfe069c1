#pragma once

#include <vector>

#include "cdhmm/dirichlet.hpp"
#include "cdhmm/types.hpp"

namespace cdhmm {

// Fixed hyperparameters for a model with N emitting states, M mixture
// components per state, maximum lag K, and frame dimension D.
struct ModelHyper {
  int n_states = 0;      // N
  int n_components = 0;  // M
  int max_lag = 0;       // K
  int dim = 0;           // D

  Vec alpha0;                   // K, initial-lag Dirichlet prior
  Mat alpha;                    // K x K, one row per source lag
  Vec eta0;                     // N, initial-state Dirichlet prior
  std::vector<Mat> eta_dep;     // K of N x N, row = source state at that lag
  Mat w;                        // N x M, mixture-weight Dirichlet priors

  double nw_lambda = 0.0;       // mean-precision scale
  Vec nw_mean;                  // D
  double nw_dof = 0.0;          // Wishart degrees of freedom
  Mat nw_scale;                 // D x D inverse-scale matrix

  void validate() const;
};

// All concentrations 1e-3; nw_lambda 0.25; nw_dof D + 2; nw_mean the data
// mean; nw_scale = nw_dof * data_cov so the prior expected precision equals
// the empirical precision. Throws if data_cov is not symmetric positive
// definite.
ModelHyper default_hyper(int n_states, int n_components, int max_lag,
                         const Vec& data_mean, const Mat& data_cov);

// Variational Dirichlet posteriors over the chain parameters.
struct LatentPosteriors {
  DirichletPosterior q_pi_hat;                         // initial lag
  std::vector<DirichletPosterior> q_A_hat;             // K rows, lag -> lag
  DirichletPosterior q_pi;                             // initial state
  std::vector<std::vector<DirichletPosterior>> q_A_dep;  // [lag][source state]
  std::vector<DirichletPosterior> q_c;                 // N rows of mixture weights

  void validate(const ModelHyper& h) const;
};

// Posteriors equal to the priors in `h`.
LatentPosteriors prior_posteriors(const ModelHyper& h);

// Geometric-mean parameters exp(E[log theta]) for the whole chain. Rows are
// subnormalized (sum <= 1).
struct StarredParams {
  Vec pi_hat;                // K
  Mat A_hat;                 // K x K
  Vec pi;                    // N
  std::vector<Mat> A_dep;    // K of N x N
  Mat c;                     // N x M
};

StarredParams starred(const LatentPosteriors& post);

// Posterior-mean parameters in the same shape (rows sum to exactly 1);
// used for plug-in predictive scoring.
StarredParams posterior_mean_params(const LatentPosteriors& post);

// Sum of KL(q || prior) over every Dirichlet factor.
double latent_kl(const LatentPosteriors& post, const ModelHyper& h);

}  // namespace cdhmm
