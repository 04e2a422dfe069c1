#pragma once

// Independent reference implementations used to cross-check the library:
// exhaustive enumeration of the lag-augmented joint, a textbook scaled HMM
// forward-backward pass, adaptive Simpson quadrature with density-based
// KL/evidence integrals, and a self-contained standard variational HMM
// trainer. Nothing here calls into the library's numerics beyond plain
// data structures.

#include <functional>
#include <vector>

#include "cdhmm/emission.hpp"
#include "cdhmm/model.hpp"
#include "cdhmm/trainer.hpp"
#include "cdhmm/types.hpp"

namespace oracle {

// Exhaustive sum over every feasible (X, Z) path of
//   pi_hat[z_1] * pi[x_1] * prod_t A_hat[z_{t-1},z_t] * A^{z_t}[x_{t-z_t},x_t]
//   * prod_t emit(t, x_t),
// with z_1 = 1 pinned and z_t <= min(t-1, K) in 1-based time. Marginals are
// the path-posterior analogues of the library's responsibility families.
struct PathMarginals {
  double total = 0.0;
  cdhmm::Mat gamma_z;                           // T x K
  cdhmm::Mat gamma_x;                           // T x N
  std::vector<cdhmm::Mat> gamma_zz;             // T-1 of K x K
  std::vector<std::vector<cdhmm::Mat>> gamma_xx;  // [t][lag] N x N
};
PathMarginals enumerate_paths(const cdhmm::StarredParams& sp, const cdhmm::Mat& log_emit);

// Rabiner-style scaled forward-backward for an ordinary HMM, written from
// the textbook recursions. Emissions come in log space and are shifted by
// their per-frame maximum before exponentiation.
struct HmmSmoothing {
  double loglik = 0.0;
  cdhmm::Mat gamma;                 // T x N
  std::vector<cdhmm::Mat> xi;       // T-1 of N x N, rows = state at t
};
HmmSmoothing hmm_forward_backward(const cdhmm::Vec& pi, const cdhmm::Mat& A,
                                  const cdhmm::Mat& log_emit);

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol);

// KL(Beta(a1,a2) || Beta(b1,b2)) by direct integration of p log(p/q).
double beta_kl_quadrature(double a1, double a2, double b1, double b2, double tol);

// One-dimensional Normal-Gamma integrals, interpreting NwPosterior with
// D=1 as: precision r ~ Gamma(shape dof/2, rate scale/2) and
// mean | r ~ N(mean, 1/(lambda r)).
double nw_kl_quadrature_1d(const cdhmm::NwPosterior& q, const cdhmm::NwPosterior& p,
                           double tol);
double expected_log_gauss_quadrature_1d(const cdhmm::NwPosterior& q, double y,
                                        double tol);
// log of the marginal likelihood of iid scalar observations under the
// Normal-Gamma prior, by double integration.
double ng_log_evidence_quadrature(const cdhmm::NwPosterior& prior,
                                  const std::vector<double>& ys, double tol);

// A standard variational Bayes HMM with Gaussian-mixture emissions,
// implemented from scratch (own digamma-based starred parameters, scaled
// forward-backward, conjugate updates, and KL terms). Mirrors the library's
// schedule: E-step, M-step, then ELBO, one trace entry per iteration.
// Requires fully present frames.
struct VbHmmPriors {
  cdhmm::Vec pi;       // N
  cdhmm::Mat A;        // N x N
  cdhmm::Mat w;        // N x M
  double nw_lambda = 0.0;
  cdhmm::Vec nw_mean;
  double nw_dof = 0.0;
  cdhmm::Mat nw_scale;
};
struct VbHmmState {
  cdhmm::Vec pi_conc;  // N
  cdhmm::Mat A_conc;   // N x N
  cdhmm::Mat w_conc;   // N x M
  std::vector<std::vector<cdhmm::NwPosterior>> nw;  // [state][component]
};
VbHmmPriors vb_hmm_priors_from(const cdhmm::ModelHyper& hyper);
VbHmmState vb_hmm_state_from(const cdhmm::InitState& init);
std::vector<double> vb_hmm_trace(const VbHmmPriors& priors, VbHmmState state,
                                 const cdhmm::Dataset& data, int iters);

}  // namespace oracle
