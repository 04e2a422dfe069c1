#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "cdhmm/emission.hpp"
#include "cdhmm/messages.hpp"
#include "cdhmm/model.hpp"
#include "cdhmm/rng.hpp"
#include "cdhmm/types.hpp"

namespace cdhmm {

struct TrainConfig {
  int max_iters = 200;
  int min_iters = 3;
  double rel_tol = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainedModel {
  ModelHyper hyper;
  LatentPosteriors posteriors;
  EmissionModel emissions;
  std::vector<double> elbo_trace;
  bool converged = false;
};

struct InitState {
  LatentPosteriors posteriors;
  EmissionModel emissions;
};

// Deterministic k-means initialization: N-cluster assignment over pooled
// present frames, M-cluster refinement within each state, Normal-Wishart
// and transition posteriors seeded from the hard assignments, first-layer
// posteriors set to prior plus an order-one random perturbation.
InitState kmeans_init(const Dataset& data, const ModelHyper& hyper, std::uint64_t seed);

struct EStepResult {
  std::vector<Responsibilities> per_seq;
  double loglik = 0.0;  // sum of forward log normalizers
};

EStepResult e_step(const LatentPosteriors& post, const EmissionModel& emissions,
                   const Dataset& data);

struct MStepResult {
  LatentPosteriors posteriors;
  EmissionModel emissions;
};

// Conjugate updates: prior concentrations plus accumulated responsibility
// mass; Normal-Wishart updates from two-pass weighted statistics. Missing
// frames contribute to chain statistics only.
MStepResult m_step(const std::vector<Responsibilities>& resp, const Dataset& data,
                   const ModelHyper& hyper);

// Evidence lower bound: total forward log normalizer minus the KL of every
// Dirichlet and Normal-Wishart posterior from its prior.
double elbo(const LatentPosteriors& post, const EmissionModel& emissions,
            const ModelHyper& hyper, const Dataset& data);

TrainedModel fit(const Dataset& data, const ModelHyper& hyper, const TrainConfig& config);

// Hard k-means used by the initializer; exposed for tests. Returns cluster
// assignment per point. Deterministic for a fixed generator state.
std::vector<int> kmeans(const std::vector<Vec>& points, int k, Rng& rng,
                        int max_rounds = 100);

}  // namespace cdhmm
