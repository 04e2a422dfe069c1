#include "cdhmm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cdhmm {

namespace {
constexpr double kConcentrationFloor = 1e-8;
constexpr double kDeadStateMass = 1e-6;

NwPosterior prior_nw(const ModelHyper& h) {
  return {h.nw_lambda, h.nw_mean, h.nw_dof, h.nw_scale};
}

void check_data(const Dataset& data, int dim, const char* who) {
  if (data.empty())
    throw std::invalid_argument(std::string(who) + ": empty training set");
  for (const auto& s : data) {
    if (s.frames.empty())
      throw std::invalid_argument(std::string(who) + ": sequence '" + s.id + "' is empty");
    for (const auto& f : s.frames)
      if (f && f->size() != dim)
        throw std::invalid_argument(std::string(who) + ": sequence '" + s.id +
                                    "' has frames of the wrong dimension");
  }
}
}  // namespace

void TrainConfig::validate() const {
  if (min_iters < 1 || max_iters < min_iters)
    throw std::invalid_argument("TrainConfig: need max_iters >= min_iters >= 1");
  if (!(rel_tol > 0.0))
    throw std::invalid_argument("TrainConfig: rel_tol must be positive");
}

std::vector<int> kmeans(const std::vector<Vec>& points, int k, Rng& rng, int max_rounds) {
  const int n = static_cast<int>(points.size());
  if (k < 1) throw std::invalid_argument("kmeans: k must be positive");
  if (n == 0) throw std::invalid_argument("kmeans: no points");

  std::vector<Vec> centers;
  centers.reserve(k);
  centers.push_back(points[rng.below(n)]);
  Vec d2(n);
  for (int c = 1; c < k; ++c) {
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec& ctr : centers)
        best = std::min(best, (points[i] - ctr).squaredNorm());
      d2(i) = best;
    }
    const double total = d2.sum();
    centers.push_back(total > 0.0 ? points[rng.categorical(d2)]
                                  : points[rng.below(n)]);
  }

  std::vector<int> assign(n, 0);
  for (int round = 0; round < max_rounds; ++round) {
    bool changed = round == 0;
    for (int i = 0; i < n; ++i) {
      int best_c = 0;
      double best = (points[i] - centers[0]).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (points[i] - centers[c]).squaredNorm();
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      if (assign[i] != best_c) changed = true;
      assign[i] = best_c;
    }
    if (!changed) break;

    const int dim = static_cast<int>(points[0].size());
    std::vector<Vec> sums(k, Vec::Zero(dim));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums[assign[i]] += points[i];
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers[c] = sums[c] / counts[c];
        continue;
      }
      // Re-seed an empty cluster from the point farthest from its center.
      int far_i = 0;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        const double d = (points[i] - centers[assign[i]]).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far_i = i;
        }
      }
      centers[c] = points[far_i];
    }
  }
  return assign;
}

InitState kmeans_init(const Dataset& data, const ModelHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  check_data(data, hyper.dim, "kmeans_init");
  const int N = hyper.n_states, M = hyper.n_components, K = hyper.max_lag;

  std::vector<Vec> pooled;
  std::vector<std::pair<int, int>> origin;  // (sequence, frame)
  for (int s = 0; s < static_cast<int>(data.size()); ++s)
    for (int t = 0; t < data[s].length(); ++t)
      if (data[s].frames[t]) {
        pooled.push_back(*data[s].frames[t]);
        origin.emplace_back(s, t);
      }
  if (static_cast<int>(pooled.size()) < N * M)
    throw std::invalid_argument("kmeans_init: need at least N*M present frames");

  Rng rng(seed);
  const std::vector<int> state_of_point = kmeans(pooled, N, rng);

  // Hard state labels per (sequence, frame); -1 where missing.
  std::vector<std::vector<int>> state_at(data.size());
  for (size_t s = 0; s < data.size(); ++s) state_at[s].assign(data[s].length(), -1);
  for (size_t p = 0; p < pooled.size(); ++p)
    state_at[origin[p].first][origin[p].second] = state_of_point[p];

  // Component refinement inside each state, in state order.
  std::vector<std::vector<int>> members(N);
  for (size_t p = 0; p < pooled.size(); ++p) members[state_of_point[p]].push_back(p);
  std::vector<int> comp_of_point(pooled.size(), 0);
  for (int i = 0; i < N; ++i) {
    if (members[i].empty()) continue;
    std::vector<Vec> sub;
    sub.reserve(members[i].size());
    for (int p : members[i]) sub.push_back(pooled[p]);
    const std::vector<int> comp = kmeans(sub, M, rng);
    for (size_t j = 0; j < members[i].size(); ++j) comp_of_point[members[i][j]] = comp[j];
  }

  InitState init;
  init.emissions.components.assign(N, std::vector<NwPosterior>(M, prior_nw(hyper)));
  init.emissions.mix_weights.resize(N);
  for (int i = 0; i < N; ++i) {
    Vec counts = Vec::Zero(M);
    for (int p : members[i]) counts(comp_of_point[p]) += 1.0;
    init.emissions.mix_weights[i] = {hyper.w.row(i).transpose() + counts};
    for (int m = 0; m < M; ++m) {
      WeightedStats stats;
      stats.weight = counts(m);
      if (stats.weight == 0.0) continue;
      stats.mean = Vec::Zero(hyper.dim);
      for (int p : members[i])
        if (comp_of_point[p] == m) stats.mean += pooled[p];
      stats.mean /= stats.weight;
      stats.scatter = Mat::Zero(hyper.dim, hyper.dim);
      for (int p : members[i])
        if (comp_of_point[p] == m) {
          const Vec d = pooled[p] - stats.mean;
          stats.scatter += d * d.transpose();
        }
      init.emissions.components[i][m] = update_nw(prior_nw(hyper), stats);
    }
  }

  // Initial-state and lagged transition counts from the hard labels.
  Vec pi_counts = Vec::Zero(N);
  std::vector<Mat> lag_counts(K, Mat::Zero(N, N));
  for (size_t s = 0; s < data.size(); ++s) {
    if (state_at[s][0] >= 0) pi_counts(state_at[s][0]) += 1.0;
    for (int k = 1; k <= K; ++k)
      for (int t = k; t < data[s].length(); ++t)
        if (state_at[s][t] >= 0 && state_at[s][t - k] >= 0)
          lag_counts[k - 1](state_at[s][t - k], state_at[s][t]) += 1.0;
  }

  init.posteriors.q_pi = {hyper.eta0 + pi_counts};
  init.posteriors.q_A_dep.resize(K);
  for (int k = 0; k < K; ++k) {
    init.posteriors.q_A_dep[k].resize(N);
    for (int i = 0; i < N; ++i)
      init.posteriors.q_A_dep[k][i] = {hyper.eta_dep[k].row(i).transpose() +
                                       lag_counts[k].row(i).transpose()};
  }

  // First-layer posteriors: prior plus an order-one perturbation, so the
  // lag chain starts spread out instead of pinned at the tiny prior.
  Vec pi_hat_c(K);
  for (int k = 0; k < K; ++k) pi_hat_c(k) = hyper.alpha0(k) + rng.uniform(0.5, 1.5);
  init.posteriors.q_pi_hat = {pi_hat_c};
  init.posteriors.q_A_hat.resize(K);
  for (int k = 0; k < K; ++k) {
    Vec row(K);
    for (int j = 0; j < K; ++j) row(j) = hyper.alpha(k, j) + rng.uniform(0.5, 1.5);
    init.posteriors.q_A_hat[k] = {row};
  }

  init.posteriors.q_c = init.emissions.mix_weights;
  init.posteriors.validate(hyper);
  return init;
}

EStepResult e_step(const LatentPosteriors& post, const EmissionModel& emissions,
                   const Dataset& data) {
  const StarredParams sp = starred(post);
  const EmissionEval ev(emissions);
  EStepResult out;
  out.per_seq.reserve(data.size());
  for (const auto& seq : data) {
    const Mat log_emit = ev.log_emission_table(seq.frames);
    const MessageLattice fwd = forward(sp, log_emit);
    const MessageLattice bwd = backward(sp, log_emit, fwd);
    Responsibilities r = responsibilities(fwd, bwd, sp, log_emit);
    r.gamma_comp.reserve(seq.length());
    for (int t = 0; t < seq.length(); ++t)
      r.gamma_comp.push_back(component_responsibilities(ev, seq.frames[t],
                                                        r.gamma_x.row(t).transpose())
                                 .resp);
    out.loglik += loglik(fwd);
    out.per_seq.push_back(std::move(r));
  }
  return out;
}

MStepResult m_step(const std::vector<Responsibilities>& resp, const Dataset& data,
                   const ModelHyper& hyper) {
  hyper.validate();
  if (resp.size() != data.size())
    throw std::invalid_argument("m_step: one responsibility record per sequence required");
  const int N = hyper.n_states, M = hyper.n_components, K = hyper.max_lag;

  Vec pi_hat_c = hyper.alpha0;
  Mat A_hat_c = hyper.alpha;
  Vec pi_c = hyper.eta0;
  std::vector<Mat> A_dep_c = hyper.eta_dep;
  Mat c_counts = Mat::Zero(N, M);

  for (size_t s = 0; s < data.size(); ++s) {
    const Responsibilities& r = resp[s];
    const int T = data[s].length();
    if (r.gamma_z.rows() != T || r.gamma_x.rows() != T ||
        static_cast<int>(r.gamma_comp.size()) != T)
      throw std::invalid_argument("m_step: responsibilities do not match sequence '" +
                                  data[s].id + "'");
    pi_hat_c += r.gamma_z.row(0).transpose();
    pi_c += r.gamma_x.row(0).transpose();
    for (int t = 0; t + 1 < T; ++t) A_hat_c += r.gamma_zz[t];
    for (int t = 1; t < T; ++t)
      for (int k = 0; k < K; ++k) A_dep_c[k] += r.gamma_xx[t][k];
    for (int t = 0; t < T; ++t)
      if (data[s].frames[t]) c_counts += r.gamma_comp[t];
  }

  MStepResult out;
  auto floored = [](Vec v) {
    return Vec(v.cwiseMax(kConcentrationFloor));
  };
  out.posteriors.q_pi_hat = {floored(pi_hat_c)};
  out.posteriors.q_A_hat.resize(K);
  for (int k = 0; k < K; ++k)
    out.posteriors.q_A_hat[k] = {floored(A_hat_c.row(k).transpose())};
  out.posteriors.q_pi = {floored(pi_c)};
  out.posteriors.q_A_dep.resize(K);
  for (int k = 0; k < K; ++k) {
    out.posteriors.q_A_dep[k].resize(N);
    for (int i = 0; i < N; ++i)
      out.posteriors.q_A_dep[k][i] = {floored(A_dep_c[k].row(i).transpose())};
  }

  // Emission updates from present frames only, two passes for a stable
  // scatter. States with essentially no emission mass keep their priors.
  const NwPosterior prior = prior_nw(hyper);
  out.emissions.components.assign(N, std::vector<NwPosterior>(M, prior));
  out.emissions.mix_weights.resize(N);
  out.posteriors.q_c.resize(N);
  for (int i = 0; i < N; ++i) {
    const double state_mass = c_counts.row(i).sum();
    if (state_mass < kDeadStateMass) {
      out.emissions.mix_weights[i] = {hyper.w.row(i).transpose()};
      out.posteriors.q_c[i] = out.emissions.mix_weights[i];
      continue;
    }
    out.emissions.mix_weights[i] = {floored(hyper.w.row(i).transpose() +
                                            c_counts.row(i).transpose())};
    out.posteriors.q_c[i] = out.emissions.mix_weights[i];
    for (int m = 0; m < M; ++m) {
      const double weight = c_counts(i, m);
      if (weight == 0.0) continue;
      Vec sum_y = Vec::Zero(hyper.dim);
      for (size_t s = 0; s < data.size(); ++s)
        for (int t = 0; t < data[s].length(); ++t)
          if (data[s].frames[t])
            sum_y += resp[s].gamma_comp[t](i, m) * *data[s].frames[t];
      WeightedStats stats;
      stats.weight = weight;
      stats.mean = sum_y / weight;
      stats.scatter = Mat::Zero(hyper.dim, hyper.dim);
      for (size_t s = 0; s < data.size(); ++s)
        for (int t = 0; t < data[s].length(); ++t)
          if (data[s].frames[t]) {
            const Vec d = *data[s].frames[t] - stats.mean;
            stats.scatter += resp[s].gamma_comp[t](i, m) * (d * d.transpose());
          }
      out.emissions.components[i][m] = update_nw(prior, stats);
    }
  }
  return out;
}

double elbo(const LatentPosteriors& post, const EmissionModel& emissions,
            const ModelHyper& hyper, const Dataset& data) {
  double kl = latent_kl(post, hyper);
  const NwPosterior prior = prior_nw(hyper);
  for (const auto& row : emissions.components)
    for (const auto& comp : row) kl += nw_kl(comp, prior);

  double ll = 0.0;
  if (!data.empty()) {
    const StarredParams sp = starred(post);
    const EmissionEval ev(emissions);
    for (const auto& seq : data)
      ll += loglik(forward(sp, ev.log_emission_table(seq.frames)));
  }
  return ll - kl;
}

TrainedModel fit(const Dataset& data, const ModelHyper& hyper, const TrainConfig& config) {
  config.validate();
  hyper.validate();
  check_data(data, hyper.dim, "fit");

  InitState init = kmeans_init(data, hyper, config.seed);
  TrainedModel model;
  model.hyper = hyper;
  model.posteriors = std::move(init.posteriors);
  model.emissions = std::move(init.emissions);

  double prev = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < config.max_iters; ++iter) {
    EStepResult es = e_step(model.posteriors, model.emissions, data);
    MStepResult ms = m_step(es.per_seq, data, hyper);
    model.posteriors = std::move(ms.posteriors);
    model.emissions = std::move(ms.emissions);
    const double e = elbo(model.posteriors, model.emissions, hyper, data);
    model.elbo_trace.push_back(e);
    if (iter + 1 >= config.min_iters &&
        std::abs(e - prev) / std::max(std::abs(e), 1e-12) < config.rel_tol) {
      model.converged = true;
      break;
    }
    prev = e;
  }
  return model;
}

}  // namespace cdhmm
