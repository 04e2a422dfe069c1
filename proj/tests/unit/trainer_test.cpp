#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdhmm/trainer.hpp"
#include "support/builders.hpp"
#include "support/oracles.hpp"

using cdhmm::Dataset;
using cdhmm::Mat;
using cdhmm::SequenceRecord;
using cdhmm::Vec;

namespace {

// Pooled mean / population covariance of the present frames.
std::pair<Vec, Mat> pooled_moments(const Dataset& data, int dim) {
  Vec mean = Vec::Zero(dim);
  int n = 0;
  for (const auto& s : data)
    for (const auto& f : s.frames)
      if (f) {
        mean += *f;
        ++n;
      }
  mean /= n;
  Mat cov = Mat::Zero(dim, dim);
  for (const auto& s : data)
    for (const auto& f : s.frames)
      if (f) {
        const Vec d = *f - mean;
        cov += d * d.transpose();
      }
  cov /= n;
  return {mean, cov};
}

Dataset two_blob_dataset(int n_seq, int T, cdhmm::Rng& rng) {
  Dataset data;
  for (int s = 0; s < n_seq; ++s) {
    SequenceRecord rec;
    rec.id = "seq" + std::to_string(s);
    for (int t = 0; t < T; ++t) {
      const double cx = (rng.uniform() < 0.5) ? -2.0 : 2.0;
      Vec y(2);
      y << cx + 0.3 * rng.gaussian(), 0.3 * rng.gaussian();
      rec.frames.emplace_back(y);
    }
    data.push_back(std::move(rec));
  }
  return data;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("kmeans recovers well-separated blob centers") {
  cdhmm::Rng rng(601);
  std::vector<Vec> pts;
  std::vector<Vec> centers;
  for (double cx : {-3.0, 0.0, 3.0}) {
    Vec c(2);
    c << cx, cx * 0.5;
    centers.push_back(c);
    for (int i = 0; i < 120; ++i) {
      Vec y(2);
      y << cx + 0.15 * rng.gaussian(), cx * 0.5 + 0.15 * rng.gaussian();
      pts.push_back(y);
    }
  }
  cdhmm::Rng krng(77);
  const auto assign = cdhmm::kmeans(pts, 3, krng);
  REQUIRE(assign.size() == pts.size());
  // Recompute the centroids and match each true center to its nearest.
  std::vector<Vec> cents(3, Vec::Zero(2));
  std::vector<int> counts(3, 0);
  for (size_t i = 0; i < pts.size(); ++i) {
    cents[assign[i]] += pts[i];
    ++counts[assign[i]];
  }
  for (int k = 0; k < 3; ++k) {
    REQUIRE(counts[k] > 0);
    cents[k] /= counts[k];
  }
  for (const Vec& truth : centers) {
    double best = 1e30;
    for (const Vec& c : cents) best = std::min(best, (c - truth).norm());
    CHECK(best < 0.1);
  }
}

TEST_CASE("kmeans is deterministic for a fixed generator") {
  cdhmm::Rng rng(602);
  const auto pts_frames = testkit::random_frames(40, 2, rng);
  std::vector<Vec> pts;
  for (const auto& f : pts_frames) pts.push_back(*f);
  cdhmm::Rng r1(5), r2(5);
  CHECK(cdhmm::kmeans(pts, 4, r1) == cdhmm::kmeans(pts, 4, r2));
}

TEST_CASE("kmeans_init with one state matches the pooled moments") {
  cdhmm::Rng rng(603);
  auto data = two_blob_dataset(4, 50, rng);
  const auto [mean, cov] = pooled_moments(data, 2);
  const auto hyper = cdhmm::default_hyper(1, 1, 1, mean, cov);
  const auto init = cdhmm::kmeans_init(data, hyper, 9);
  // All frames land in the single state and component, so the seeded
  // Normal-Wishart mean is the pooled mean.
  CHECK((init.emissions.components[0][0].mean - mean).cwiseAbs().maxCoeff() < 1e-9);
  const double total = 4 * 50;
  CHECK(init.emissions.components[0][0].lambda ==
        doctest::Approx(hyper.nw_lambda + total).epsilon(1e-12));
}

TEST_CASE("kmeans_init is reproducible bit for bit") {
  cdhmm::Rng rng(604);
  auto data = two_blob_dataset(3, 30, rng);
  const auto [mean, cov] = pooled_moments(data, 2);
  const auto hyper = cdhmm::default_hyper(2, 2, 2, mean, cov);
  const auto a = cdhmm::kmeans_init(data, hyper, 123);
  const auto b = cdhmm::kmeans_init(data, hyper, 123);
  CHECK(a.posteriors.q_pi_hat.concentration == b.posteriors.q_pi_hat.concentration);
  CHECK(a.posteriors.q_A_hat[1].concentration == b.posteriors.q_A_hat[1].concentration);
  CHECK(a.posteriors.q_pi.concentration == b.posteriors.q_pi.concentration);
  CHECK(a.emissions.components[1][0].mean == b.emissions.components[1][0].mean);
  CHECK(a.emissions.components[1][1].scale == b.emissions.components[1][1].scale);
  const auto c = cdhmm::kmeans_init(data, hyper, 124);
  CHECK(a.posteriors.q_pi_hat.concentration != c.posteriors.q_pi_hat.concentration);
}

TEST_CASE("e_step loglik decomposes over sequences") {
  cdhmm::Rng rng(605);
  auto data = two_blob_dataset(3, 12, rng);
  const auto [mean, cov] = pooled_moments(data, 2);
  const auto hyper = cdhmm::default_hyper(2, 1, 2, mean, cov);
  const auto init = cdhmm::kmeans_init(data, hyper, 1);
  const auto full = cdhmm::e_step(init.posteriors, init.emissions, data);
  REQUIRE(full.per_seq.size() == 3);

  double sum = 0.0;
  for (int s = 0; s < 3; ++s) {
    Dataset one = {data[s]};
    sum += cdhmm::e_step(init.posteriors, init.emissions, one).loglik;
  }
  CHECK(full.loglik == doctest::Approx(sum).epsilon(1e-12));

  // Reordering the dataset permutes the per-sequence results untouched.
  Dataset swapped = {data[2], data[0], data[1]};
  const auto perm = cdhmm::e_step(init.posteriors, init.emissions, swapped);
  CHECK(perm.loglik == doctest::Approx(full.loglik).epsilon(1e-12));
  CHECK((perm.per_seq[1].gamma_x - full.per_seq[0].gamma_x).cwiseAbs().maxCoeff() <
        1e-12);

  // gamma_comp is filled and each row carries the state mass.
  const auto& r = full.per_seq[0];
  REQUIRE(r.gamma_comp.size() == 12);
  for (int t = 0; t < 12; ++t)
    for (int i = 0; i < 2; ++i)
      CHECK(r.gamma_comp[t].row(i).sum() ==
            doctest::Approx(r.gamma_x(t, i)).epsilon(1e-8));
}

TEST_CASE("m_step adds responsibility mass onto the prior") {
  // Hand-built responsibilities over a two-frame sequence, checked against
  // the accumulation the update promises: prior concentration plus mass.
  const int N = 2, K = 1, D = 1;
  Vec y0 = Vec::Constant(1, -1.0), y1 = Vec::Constant(1, 2.0);
  Dataset data(1);
  data[0].id = "s";
  data[0].frames = {cdhmm::Frame(y0), cdhmm::Frame(y1)};
  const auto hyper = cdhmm::default_hyper(N, 1, K, Vec::Zero(D), Mat::Identity(D, D));

  cdhmm::Responsibilities r;
  r.gamma_z = Mat::Ones(2, 1);
  r.gamma_x = Mat(2, N);
  r.gamma_x << 0.7, 0.3, 0.2, 0.8;
  r.gamma_zz = {Mat::Ones(1, 1)};
  Mat joint(2, 2);
  joint << 0.1, 0.6, 0.1, 0.2;  // rows = state at t-1
  r.gamma_xx.resize(2);
  r.gamma_xx[0] = {Mat::Zero(N, N)};
  r.gamma_xx[1] = {joint};
  r.gamma_comp = {r.gamma_x.row(0).transpose(), r.gamma_x.row(1).transpose()};

  const auto ms = cdhmm::m_step({r}, data, hyper);
  CHECK(ms.posteriors.q_pi_hat.concentration[0] ==
        doctest::Approx(hyper.alpha0[0] + 1.0).epsilon(1e-14));
  CHECK(ms.posteriors.q_A_hat[0].concentration[0] ==
        doctest::Approx(hyper.alpha(0, 0) + 1.0).epsilon(1e-14));
  CHECK(ms.posteriors.q_pi.concentration[0] ==
        doctest::Approx(hyper.eta0[0] + 0.7).epsilon(1e-14));
  CHECK(ms.posteriors.q_pi.concentration[1] ==
        doctest::Approx(hyper.eta0[1] + 0.3).epsilon(1e-14));
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      CHECK(ms.posteriors.q_A_dep[0][i].concentration[j] ==
            doctest::Approx(hyper.eta_dep[0](i, j) + joint(i, j)).epsilon(1e-14));
  // Mixture-weight mass equals the per-state responsibility totals.
  CHECK(ms.posteriors.q_c[0].concentration[0] ==
        doctest::Approx(hyper.w(0, 0) + 0.9).epsilon(1e-12));
  CHECK(ms.posteriors.q_c[1].concentration[0] ==
        doctest::Approx(hyper.w(1, 0) + 1.1).epsilon(1e-12));
  // Emission update matches a direct weighted fit for state 0.
  cdhmm::WeightedStats stats;
  stats.weight = 0.9;
  stats.mean = (0.7 * y0 + 0.2 * y1) / 0.9;
  stats.scatter = 0.7 * (y0 - stats.mean) * (y0 - stats.mean).transpose() +
                  0.2 * (y1 - stats.mean) * (y1 - stats.mean).transpose();
  cdhmm::NwPosterior prior;
  prior.lambda = hyper.nw_lambda;
  prior.mean = hyper.nw_mean;
  prior.dof = hyper.nw_dof;
  prior.scale = hyper.nw_scale;
  const auto direct = cdhmm::update_nw(prior, stats);
  CHECK((ms.emissions.components[0][0].mean - direct.mean).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((ms.emissions.components[0][0].scale - direct.scale).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("m_step conserves responsibility mass") {
  cdhmm::Rng rng(606);
  auto data = two_blob_dataset(3, 15, rng);
  const auto [mean, cov] = pooled_moments(data, 2);
  const auto hyper = cdhmm::default_hyper(3, 2, 2, mean, cov);
  const auto init = cdhmm::kmeans_init(data, hyper, 2);
  const auto es = cdhmm::e_step(init.posteriors, init.emissions, data);
  const auto ms = cdhmm::m_step(es.per_seq, data, hyper);

  // Total added concentration across the state-transition posteriors equals
  // the number of scored transitions (T - 1 per sequence).
  double added = 0.0;
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 3; ++i)
      added += ms.posteriors.q_A_dep[k][i].concentration.sum() -
               hyper.eta_dep[k].row(i).sum();
  CHECK(added == doctest::Approx(3 * 14).epsilon(1e-9));

  // Mixture-weight mass equals the number of present frames.
  double mix_added = 0.0;
  for (int i = 0; i < 3; ++i)
    mix_added += ms.posteriors.q_c[i].concentration.sum() - hyper.w.row(i).sum();
  CHECK(mix_added == doctest::Approx(3 * 15).epsilon(1e-9));
}

TEST_CASE("m_step excludes missing frames from emission statistics") {
  cdhmm::Rng rng(607);
  auto data = two_blob_dataset(2, 20, rng);
  // Blank half of the second sequence.
  for (int t = 0; t < 20; t += 2) data[1].frames[t] = std::nullopt;
  const auto [mean, cov] = pooled_moments(data, 2);
  const auto hyper = cdhmm::default_hyper(2, 1, 1, mean, cov);
  const auto init = cdhmm::kmeans_init(data, hyper, 3);
  const auto es = cdhmm::e_step(init.posteriors, init.emissions, data);
  const auto ms = cdhmm::m_step(es.per_seq, data, hyper);

  // Mixture mass counts only present frames: 20 + 10.
  double mix_added = 0.0;
  for (int i = 0; i < 2; ++i)
    mix_added += ms.posteriors.q_c[i].concentration.sum() - hyper.w.row(i).sum();
  CHECK(mix_added == doctest::Approx(30.0).epsilon(1e-9));
  // Chain mass still counts every step.
  double pi_added = ms.posteriors.q_pi.concentration.sum() - hyper.eta0.sum();
  CHECK(pi_added == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("states with no responsibility keep their prior") {
  const int N = 2, D = 1;
  Dataset data(1);
  data[0].id = "s";
  data[0].frames = {cdhmm::Frame(Vec::Constant(1, 0.5)),
                    cdhmm::Frame(Vec::Constant(1, -0.5))};
  const auto hyper = cdhmm::default_hyper(N, 1, 1, Vec::Zero(D), Mat::Identity(D, D));

  cdhmm::Responsibilities r;
  r.gamma_z = Mat::Ones(2, 1);
  r.gamma_x = Mat(2, N);
  r.gamma_x << 1.0, 0.0, 1.0, 0.0;  // state 1 never used
  r.gamma_zz = {Mat::Ones(1, 1)};
  r.gamma_xx.resize(2);
  r.gamma_xx[0] = {Mat::Zero(N, N)};
  Mat joint = Mat::Zero(N, N);
  joint(0, 0) = 1.0;
  r.gamma_xx[1] = {joint};
  r.gamma_comp = {r.gamma_x.row(0).transpose(), r.gamma_x.row(1).transpose()};

  const auto ms = cdhmm::m_step({r}, data, hyper);
  CHECK(ms.posteriors.q_c[1].concentration == hyper.w.row(1).transpose());
  CHECK(ms.emissions.components[1][0].lambda == hyper.nw_lambda);
  CHECK(ms.emissions.components[1][0].mean == hyper.nw_mean);
  CHECK(ms.emissions.components[1][0].scale == hyper.nw_scale);
  // The used state moved.
  CHECK(ms.emissions.components[0][0].lambda != hyper.nw_lambda);
}

TEST_CASE("elbo at the prior with no informative data is the KL-free loglik") {
  // With posteriors equal to the priors, both KL blocks vanish and the
  // bound equals the forward log normalizer.
  cdhmm::Rng rng(608);
  auto data = two_blob_dataset(1, 5, rng);
  const auto [mean, cov] = pooled_moments(data, 2);
  const auto hyper = cdhmm::default_hyper(2, 1, 1, mean, cov);
  const auto post = cdhmm::prior_posteriors(hyper);
  cdhmm::EmissionModel em;
  em.components.resize(2);
  for (int i = 0; i < 2; ++i) {
    cdhmm::NwPosterior nw;
    nw.lambda = hyper.nw_lambda;
    nw.mean = hyper.nw_mean;
    nw.dof = hyper.nw_dof;
    nw.scale = hyper.nw_scale;
    em.components[i] = {nw};
    cdhmm::DirichletPosterior wpost;
    wpost.concentration = hyper.w.row(i).transpose();
    em.mix_weights.push_back(wpost);
  }
  const double bound = cdhmm::elbo(post, em, hyper, data);
  const double ll = cdhmm::e_step(post, em, data).loglik;
  CHECK(bound == doctest::Approx(ll).epsilon(1e-10));
}

TEST_CASE("one update round never lowers the bound") {
  cdhmm::Rng rng(609);
  auto data = two_blob_dataset(4, 25, rng);
  const auto [mean, cov] = pooled_moments(data, 2);
  const auto hyper = cdhmm::default_hyper(2, 1, 2, mean, cov);
  const auto init = cdhmm::kmeans_init(data, hyper, 11);
  const double before = cdhmm::elbo(init.posteriors, init.emissions, hyper, data);
  const auto es = cdhmm::e_step(init.posteriors, init.emissions, data);
  const auto ms = cdhmm::m_step(es.per_seq, data, hyper);
  const double after = cdhmm::elbo(ms.posteriors, ms.emissions, hyper, data);
  CHECK(after >= before - 1e-6);
}

TEST_CASE("fit produces a monotone trace and sets the convergence flag") {
  cdhmm::Rng rng(610);
  auto data = two_blob_dataset(5, 30, rng);
  const auto [mean, cov] = pooled_moments(data, 2);
  const auto hyper = cdhmm::default_hyper(2, 1, 1, mean, cov);
  cdhmm::TrainConfig cfg;
  cfg.max_iters = 100;
  cfg.rel_tol = 1e-8;
  cfg.seed = 21;
  const auto model = cdhmm::fit(data, hyper, cfg);
  REQUIRE(model.elbo_trace.size() >= 2);
  for (size_t i = 1; i < model.elbo_trace.size(); ++i)
    CHECK(model.elbo_trace[i] >= model.elbo_trace[i - 1] - 1e-6);
  CHECK(model.converged);
  model.posteriors.validate(model.hyper);
  model.emissions.validate();
}

TEST_CASE("fit is deterministic bit for bit") {
  cdhmm::Rng rng(611);
  auto data = two_blob_dataset(3, 20, rng);
  const auto [mean, cov] = pooled_moments(data, 2);
  const auto hyper = cdhmm::default_hyper(2, 2, 2, mean, cov);
  cdhmm::TrainConfig cfg;
  cfg.max_iters = 8;
  cfg.min_iters = 8;
  cfg.seed = 77;
  const auto a = cdhmm::fit(data, hyper, cfg);
  const auto b = cdhmm::fit(data, hyper, cfg);
  REQUIRE(a.elbo_trace.size() == b.elbo_trace.size());
  for (size_t i = 0; i < a.elbo_trace.size(); ++i)
    CHECK(a.elbo_trace[i] == b.elbo_trace[i]);
  CHECK(a.emissions.components[1][1].mean == b.emissions.components[1][1].mean);
  CHECK(a.posteriors.q_A_dep[1][0].concentration ==
        b.posteriors.q_A_dep[1][0].concentration);
}

TEST_CASE("pinned iteration counts produce exactly that many trace entries") {
  cdhmm::Rng rng(612);
  auto data = two_blob_dataset(2, 15, rng);
  const auto [mean, cov] = pooled_moments(data, 2);
  const auto hyper = cdhmm::default_hyper(2, 1, 1, mean, cov);
  cdhmm::TrainConfig cfg;
  cfg.max_iters = 6;
  cfg.min_iters = 6;
  cfg.seed = 5;
  const auto model = cdhmm::fit(data, hyper, cfg);
  CHECK(model.elbo_trace.size() == 6);
}

TEST_CASE("final bound stays below the exact log evidence") {
  // One state, one component, one-dimensional data: the exact marginal
  // likelihood under the Normal-Gamma prior is computable by quadrature,
  // and the variational bound can never exceed it. The chain factors are
  // all single-entry Dirichlets, so they contribute nothing.
  cdhmm::Rng rng(613);
  Dataset data(1);
  data[0].id = "s";
  std::vector<double> ys;
  for (int t = 0; t < 8; ++t) {
    const double y = 0.4 + 0.9 * rng.gaussian();
    ys.push_back(y);
    data[0].frames.emplace_back(Vec::Constant(1, y));
  }
  const auto [mean, cov] = pooled_moments(data, 1);
  const auto hyper = cdhmm::default_hyper(1, 1, 1, mean, cov);
  cdhmm::TrainConfig cfg;
  cfg.max_iters = 200;
  cfg.rel_tol = 1e-10;
  cfg.seed = 3;
  const auto model = cdhmm::fit(data, hyper, cfg);

  cdhmm::NwPosterior prior;
  prior.lambda = hyper.nw_lambda;
  prior.mean = hyper.nw_mean;
  prior.dof = hyper.nw_dof;
  prior.scale = hyper.nw_scale;
  const double evidence = oracle::ng_log_evidence_quadrature(prior, ys, 1e-8);
  const double bound = model.elbo_trace.back();
  CHECK(bound <= evidence + 1e-6);
  // And the bound should be reasonably tight for conjugate models.
  CHECK(bound > evidence - 1.0);
}

TEST_CASE("training trace matches an independent variational HMM at max lag one") {
  // With K = 1 every lag factor is a single-entry Dirichlet whose starred
  // value is exactly one and whose KL is exactly zero, so the model reduces
  // to a standard variational HMM. The oracle trainer shares nothing with
  // the library numerics.
  cdhmm::Rng rng(614);
  auto data = two_blob_dataset(3, 18, rng);
  const auto [mean, cov] = pooled_moments(data, 2);
  const auto hyper = cdhmm::default_hyper(2, 2, 1, mean, cov);
  const int iters = 12;

  cdhmm::TrainConfig cfg;
  cfg.max_iters = iters;
  cfg.min_iters = iters;
  cfg.seed = 31;
  const auto model = cdhmm::fit(data, hyper, cfg);

  const auto init = cdhmm::kmeans_init(data, hyper, cfg.seed);
  const auto priors = oracle::vb_hmm_priors_from(hyper);
  const auto state = oracle::vb_hmm_state_from(init);
  const auto ref_trace = oracle::vb_hmm_trace(priors, state, data, iters);

  REQUIRE(model.elbo_trace.size() == static_cast<size_t>(iters));
  REQUIRE(ref_trace.size() == static_cast<size_t>(iters));
  for (int i = 0; i < iters; ++i)
    CHECK(model.elbo_trace[i] ==
          doctest::Approx(ref_trace[i]).epsilon(1e-6));
}

}  // TEST_SUITE
