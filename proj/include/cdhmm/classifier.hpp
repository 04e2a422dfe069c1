#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cdhmm/pca.hpp"
#include "cdhmm/trainer.hpp"
#include "cdhmm/types.hpp"

namespace cdhmm {

// Which parameter summary drives predictive scoring: geometric-mean
// (starred) parameters, or posterior means plugged into exact densities.
enum class PredictiveParams { kStarred, kMean };

PredictiveParams predictive_params_from_string(const std::string& s);

// Ordered label -> model map with an optional shared input transform.
struct ModelBank {
  std::optional<PcaTransform> preprocessing;
  std::vector<std::pair<std::string, TrainedModel>> classes;

  const TrainedModel* find(const std::string& label) const;
  void add(const std::string& label, TrainedModel model);
};

// Predictive log density of a sequence under one model. Preprocessing is
// not applied here; pass frames in the model's input space. With
// `length_normalize` the log density is divided by the frame count, which
// makes scores comparable across sequences of different lengths; it is a
// per-sequence monotone rescaling, so the classifier's argmax is unchanged.
double score(const TrainedModel& model, const std::vector<Frame>& frames,
             PredictiveParams mode = PredictiveParams::kStarred,
             bool length_normalize = false);

struct Classification {
  std::string label;
  Vec scores;  // aligned with bank order
};

// Applies the bank's preprocessing, scores every class, and picks the
// argmax; exact ties go to the lexicographically smallest label.
Classification classify(const ModelBank& bank, const SequenceRecord& record,
                        PredictiveParams mode = PredictiveParams::kStarred);

struct EvalReport {
  std::vector<std::string> labels;      // bank order
  Mat confusion;                        // rows true, columns predicted
  double accuracy = 0.0;
  std::vector<std::string> predicted;   // per input sequence
  std::vector<Vec> scores;              // per input sequence, bank order
};

// Requires a nonempty labeled dataset whose labels all appear in the bank.
EvalReport evaluate_bank(const ModelBank& bank, const Dataset& data,
                         PredictiveParams mode = PredictiveParams::kStarred);

// Posterior-mean lag transition matrix (rows sum to one): how strongly each
// lag hands over to each other lag in the trained model.
Mat dependence_matrix(const TrainedModel& model);

}  // namespace cdhmm
