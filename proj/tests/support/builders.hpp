#pragma once

// Shared fixtures for the test binaries: randomized posteriors/emission
// models, quick synthetic generator specs, and scratch directories.

#include <filesystem>
#include <string>
#include <vector>

#include "cdhmm/data_io.hpp"
#include "cdhmm/emission.hpp"
#include "cdhmm/model.hpp"
#include "cdhmm/rng.hpp"
#include "cdhmm/types.hpp"

namespace testkit {

inline cdhmm::DirichletPosterior random_dirichlet(int n, cdhmm::Rng& rng,
                                                  double lo = 0.5, double hi = 5.0) {
  cdhmm::Vec c(n);
  for (int i = 0; i < n; ++i) c(i) = rng.uniform(lo, hi);
  return {c};
}

inline cdhmm::LatentPosteriors random_posteriors(int n_states, int n_components,
                                                 int max_lag, cdhmm::Rng& rng) {
  cdhmm::LatentPosteriors p;
  p.q_pi_hat = random_dirichlet(max_lag, rng);
  p.q_A_hat.resize(max_lag);
  for (int k = 0; k < max_lag; ++k) p.q_A_hat[k] = random_dirichlet(max_lag, rng);
  p.q_pi = random_dirichlet(n_states, rng);
  p.q_A_dep.resize(max_lag);
  for (int k = 0; k < max_lag; ++k) {
    p.q_A_dep[k].resize(n_states);
    for (int i = 0; i < n_states; ++i) p.q_A_dep[k][i] = random_dirichlet(n_states, rng);
  }
  p.q_c.resize(n_states);
  for (int i = 0; i < n_states; ++i) p.q_c[i] = random_dirichlet(n_components, rng);
  return p;
}

inline cdhmm::NwPosterior random_nw(int dim, cdhmm::Rng& rng) {
  cdhmm::NwPosterior nw;
  nw.lambda = rng.uniform(0.3, 4.0);
  nw.mean.resize(dim);
  for (int d = 0; d < dim; ++d) nw.mean(d) = rng.uniform(-2.0, 2.0);
  nw.dof = dim + 1 + rng.uniform(0.5, 6.0);
  cdhmm::Mat a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
  nw.scale = a * a.transpose() + (0.5 + dim) * cdhmm::Mat::Identity(dim, dim);
  return nw;
}

inline cdhmm::EmissionModel random_emissions(int n_states, int n_components, int dim,
                                             cdhmm::Rng& rng) {
  cdhmm::EmissionModel em;
  em.components.resize(n_states);
  em.mix_weights.resize(n_states);
  for (int i = 0; i < n_states; ++i) {
    for (int m = 0; m < n_components; ++m) em.components[i].push_back(random_nw(dim, rng));
    em.mix_weights[i] = random_dirichlet(n_components, rng);
  }
  return em;
}

inline std::vector<cdhmm::Frame> random_frames(int t_len, int dim, cdhmm::Rng& rng) {
  std::vector<cdhmm::Frame> frames;
  frames.reserve(t_len);
  for (int t = 0; t < t_len; ++t) {
    cdhmm::Vec y(dim);
    for (int d = 0; d < dim; ++d) y(d) = rng.uniform(-2.5, 2.5);
    frames.emplace_back(y);
  }
  return frames;
}

// Two well-separated unit-ish blobs on the x-axis; the workhorse dataset
// for trainer tests. K = 1, single component per state.
inline cdhmm::GeneratorSpec two_state_spec(double separation = 3.0, double sd = 0.4) {
  cdhmm::GeneratorSpec spec;
  spec.pi_hat = cdhmm::Vec::Ones(1);
  spec.A_hat = cdhmm::Mat::Ones(1, 1);
  spec.pi = cdhmm::Vec::Constant(2, 0.5);
  cdhmm::Mat a(2, 2);
  a << 0.8, 0.2, 0.3, 0.7;
  spec.A_dep = {a};
  spec.weights = cdhmm::Mat::Ones(2, 1);
  const double half = 0.5 * separation;
  spec.means = {{(cdhmm::Vec(2) << -half, 0.0).finished()},
                {(cdhmm::Vec(2) << half, 0.0).finished()}};
  const cdhmm::Mat cov = sd * sd * cdhmm::Mat::Identity(2, 2);
  spec.covs = {{cov}, {cov}};
  return spec;
}

// Fresh scratch directory under the system temp root, cleared on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cdhmm_tests_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testkit
