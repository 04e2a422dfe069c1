#include "cdhmm/classifier.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "cdhmm/emission.hpp"
#include "cdhmm/messages.hpp"

namespace cdhmm {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;

double logsumexp(const Vec& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// Plug-in GMM log densities under the posterior-mean parameters: Gaussians
// with mean m and precision dof * scale^-1 for every component.
Mat mean_log_emission_table(const TrainedModel& model, const std::vector<Frame>& frames) {
  const int N = model.hyper.n_states, M = model.hyper.n_components;
  const int D = model.hyper.dim;
  std::vector<std::vector<Eigen::LLT<Mat>>> llt(N);
  Mat log_norm(N, M);  // y-independent part per component
  Mat log_w(N, M);
  for (int i = 0; i < N; ++i) {
    const Vec wbar = model.emissions.mix_weights[i].mean();
    for (int m = 0; m < M; ++m) {
      const NwPosterior& c = model.emissions.components[i][m];
      llt[i].emplace_back(c.scale);
      if (llt[i][m].info() != Eigen::Success)
        throw std::runtime_error("score: component scale is not positive definite");
      double log_det_scale = 0.0;
      for (int d = 0; d < D; ++d)
        log_det_scale += 2.0 * std::log(llt[i][m].matrixLLT()(d, d));
      const double log_det_prec = D * std::log(c.dof) - log_det_scale;
      log_norm(i, m) = 0.5 * log_det_prec - 0.5 * D * kLogTwoPi;
      log_w(i, m) = std::log(wbar(m));
    }
  }
  Mat table(static_cast<int>(frames.size()), N);
  for (size_t t = 0; t < frames.size(); ++t) {
    if (!frames[t]) {
      table.row(static_cast<int>(t)).setZero();
      continue;
    }
    const Vec& y = *frames[t];
    if (y.size() != D)
      throw std::invalid_argument("score: frame dimension does not match the model");
    for (int i = 0; i < N; ++i) {
      Vec terms(M);
      for (int m = 0; m < M; ++m) {
        const NwPosterior& c = model.emissions.components[i][m];
        const double quad = c.dof * llt[i][m].matrixL().solve(y - c.mean).squaredNorm();
        terms(m) = log_w(i, m) + log_norm(i, m) - 0.5 * quad;
      }
      table(static_cast<int>(t), i) = logsumexp(terms);
    }
  }
  return table;
}
}  // namespace

PredictiveParams predictive_params_from_string(const std::string& s) {
  if (s == "starred") return PredictiveParams::kStarred;
  if (s == "mean") return PredictiveParams::kMean;
  throw std::invalid_argument("unknown predictive parameter mode '" + s +
                              "' (expected 'starred' or 'mean')");
}

const TrainedModel* ModelBank::find(const std::string& label) const {
  for (const auto& [l, m] : classes)
    if (l == label) return &m;
  return nullptr;
}

void ModelBank::add(const std::string& label, TrainedModel model) {
  if (find(label)) throw std::invalid_argument("bank already holds class '" + label + "'");
  classes.emplace_back(label, std::move(model));
}

double score(const TrainedModel& model, const std::vector<Frame>& frames,
             PredictiveParams mode, bool length_normalize) {
  if (frames.empty()) throw std::invalid_argument("score: empty frame sequence");
  double ll = 0.0;
  if (mode == PredictiveParams::kStarred) {
    const StarredParams sp = starred(model.posteriors);
    const EmissionEval ev(model.emissions);
    ll = loglik(forward(sp, ev.log_emission_table(frames)));
  } else {
    const StarredParams mp = posterior_mean_params(model.posteriors);
    ll = loglik(forward(mp, mean_log_emission_table(model, frames)));
  }
  return length_normalize ? ll / static_cast<double>(frames.size()) : ll;
}

Classification classify(const ModelBank& bank, const SequenceRecord& record,
                        PredictiveParams mode) {
  if (bank.classes.empty()) throw std::invalid_argument("classify: empty model bank");
  const SequenceRecord* input = &record;
  SequenceRecord projected;
  if (bank.preprocessing) {
    projected = pca_apply(*bank.preprocessing, record);
    input = &projected;
  }
  Classification result;
  result.scores.resize(static_cast<int>(bank.classes.size()));
  int best = -1;
  for (size_t c = 0; c < bank.classes.size(); ++c) {
    result.scores(static_cast<int>(c)) = score(bank.classes[c].second, input->frames, mode);
    if (best < 0 || result.scores(static_cast<int>(c)) > result.scores(best) ||
        (result.scores(static_cast<int>(c)) == result.scores(best) &&
         bank.classes[c].first < bank.classes[best].first))
      best = static_cast<int>(c);
  }
  result.label = bank.classes[best].first;
  return result;
}

EvalReport evaluate_bank(const ModelBank& bank, const Dataset& data,
                         PredictiveParams mode) {
  if (data.empty()) throw std::invalid_argument("evaluate_bank: empty dataset");
  std::unordered_map<std::string, int> index;
  EvalReport report;
  for (const auto& [label, model] : bank.classes) {
    index.emplace(label, static_cast<int>(report.labels.size()));
    report.labels.push_back(label);
  }
  const int L = static_cast<int>(report.labels.size());
  report.confusion = Mat::Zero(L, L);
  int correct = 0;
  for (const auto& rec : data) {
    if (!rec.label)
      throw std::invalid_argument("evaluate_bank: sequence '" + rec.id + "' has no label");
    const auto it = index.find(*rec.label);
    if (it == index.end())
      throw std::invalid_argument("evaluate_bank: label '" + *rec.label +
                                  "' of sequence '" + rec.id + "' is not in the bank");
    const Classification c = classify(bank, rec, mode);
    const int pred = index.at(c.label);
    report.confusion(it->second, pred) += 1.0;
    if (pred == it->second) ++correct;
    report.predicted.push_back(c.label);
    report.scores.push_back(c.scores);
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return report;
}

Mat dependence_matrix(const TrainedModel& model) {
  const int K = model.hyper.max_lag;
  Mat dep(K, K);
  for (int k = 0; k < K; ++k)
    dep.row(k) = model.posteriors.q_A_hat[k].mean().transpose();
  return dep;
}

}  // namespace cdhmm
