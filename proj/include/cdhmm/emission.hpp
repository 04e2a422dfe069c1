#pragma once

#include <Eigen/Cholesky>
#include <vector>

#include "cdhmm/dirichlet.hpp"
#include "cdhmm/types.hpp"

namespace cdhmm {

// Normal-Wishart posterior (or prior) over one component's mean and
// precision. `scale` is the inverse scale matrix of the Wishart factor, so
// the expected precision is dof * scale^-1.
struct NwPosterior {
  double lambda = 0.0;
  Vec mean;
  double dof = 0.0;
  Mat scale;

  int dim() const { return static_cast<int>(mean.size()); }
};

// Cached Cholesky of the scale matrix plus the y-independent part of the
// expected log density. Construction fails on a non-positive-definite scale
// after one jittered retry.
class GaussEval {
 public:
  explicit GaussEval(const NwPosterior& nw);

  // E[log N(y | mu, R)] under the Normal-Wishart posterior.
  double expected_log_density(const Vec& y) const;

  double log_det_scale() const { return log_det_scale_; }

 private:
  Eigen::LLT<Mat> llt_;
  Vec mean_;
  double coef_ = 0.0;       // dof / 2
  double const_term_ = 0.0;
  double log_det_scale_ = 0.0;
};

double expected_log_gauss(const NwPosterior& nw, const Vec& y);

// GMM emission layer: N x M Normal-Wishart components plus per-state
// mixture-weight posteriors.
struct EmissionModel {
  std::vector<std::vector<NwPosterior>> components;  // [state][component]
  std::vector<DirichletPosterior> mix_weights;       // N rows of length M

  int n_states() const { return static_cast<int>(components.size()); }
  int n_components() const {
    return components.empty() ? 0 : static_cast<int>(components[0].size());
  }
  void validate() const;
};

// log sum_m c*_im exp(E[log N_im(y)]), the geometric-mean mixture density
// for one state. Missing frames contribute exactly log 1 = 0.
double log_starred_emission(const EmissionModel& model, const Frame& frame, int state);

// exp of the above; exactly 1.0 for a missing frame.
double starred_emission(const EmissionModel& model, const Frame& frame, int state);

// Prebuilt per-state evaluators for repeated scoring of many frames.
struct EmissionEval {
  std::vector<std::vector<GaussEval>> evals;  // [state][component]
  std::vector<Vec> log_c_star;                // per state, length M
  std::vector<Vec> mean_weights;              // per state, posterior-mean weights

  explicit EmissionEval(const EmissionModel& model);
  double log_starred(const Frame& frame, int state) const;

  // T x N table of log starred emissions (zero rows for missing frames).
  Mat log_emission_table(const std::vector<Frame>& frames) const;
};

struct ComponentResponsibilities {
  Mat resp;               // N x M, row i sums to gamma_x(i)
  bool underflow = false; // some present frame saw all components underflow
};

// Splits per-state responsibility gamma_x across mixture components. For a
// present frame the split follows c* exp(E log N); for a missing frame the
// posterior-mean mixture weights (no likelihood information exists).
ComponentResponsibilities component_responsibilities(const EmissionModel& model,
                                                     const Frame& frame,
                                                     const Vec& gamma_x);
ComponentResponsibilities component_responsibilities(const EmissionEval& ev,
                                                     const Frame& frame,
                                                     const Vec& gamma_x);

// Weighted first/second moments of the frames assigned to one component.
// `scatter` is accumulated around `mean` itself.
struct WeightedStats {
  double weight = 0.0;
  Vec mean;
  Mat scatter;
};

// Conjugate Normal-Wishart update. Zero weight returns the prior unchanged.
NwPosterior update_nw(const NwPosterior& prior, const WeightedStats& stats);

// KL(q || p) between Normal-Wishart distributions of the same dimension.
double nw_kl(const NwPosterior& q, const NwPosterior& p);

}  // namespace cdhmm
