#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdhmm/classifier.hpp"
#include "cdhmm/pca.hpp"
#include "cdhmm/trainer.hpp"
#include "cdhmm/types.hpp"

namespace cdhmm {

// JSONL datasets: one record per line with keys id, label, frames. A null
// frame marks a missing observation. Parse errors name the line.
Dataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const Dataset& data);

// Single-model JSON files carrying hyperparameters, posteriors, emissions,
// and the training trace. Loading a file with a different schema version
// fails, naming both versions.
void save_model(const std::string& path, const TrainedModel& model);
TrainedModel load_model(const std::string& path);

// Class banks: label -> model in insertion order plus an optional shared
// preprocessing transform.
void save_bank(const std::string& path, const ModelBank& bank);
ModelBank load_bank(const std::string& path);

// Replaces exactly round(fraction * T) frames per sequence with missing
// markers, drawn uniformly without replacement and never touching the first
// frame. Deterministic per (seed, sequence index).
Dataset mask_missing(const Dataset& data, double fraction, std::uint64_t seed);

// Ground-truth sampling parameters. Unlike posteriors these are exact
// probabilities, and covariances (not precisions) for direct sampling.
struct GeneratorSpec {
  Vec pi_hat;                           // K (unused for the pinned first lag)
  Mat A_hat;                            // K x K
  Vec pi;                               // N
  std::vector<Mat> A_dep;               // K of N x N
  Mat weights;                          // N x M
  std::vector<std::vector<Vec>> means;  // [state][component]
  std::vector<std::vector<Mat>> covs;   // [state][component]
  std::optional<std::string> label;     // stamped on every generated record

  int n_states() const { return static_cast<int>(pi.size()); }
  int max_lag() const { return static_cast<int>(pi_hat.size()); }
  int n_components() const { return static_cast<int>(weights.cols()); }
  int dim() const;
  void validate() const;
};

GeneratorSpec generator_spec_from_json_file(const std::string& path);

struct GeneratedData {
  Dataset data;
  std::vector<std::vector<int>> lags;    // 1-based lag per frame
  std::vector<std::vector<int>> states;  // 0-based state per frame
};

// Ancestral sampling: the first lag is pinned to 1 and infeasible lags are
// renormalized away, matching the feasibility rule of the message passing.
GeneratedData generate(const GeneratorSpec& spec, int count, int frames,
                       std::uint64_t seed, const std::string& id_prefix = "s");

}  // namespace cdhmm
