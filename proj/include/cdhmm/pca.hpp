#pragma once

#include "cdhmm/types.hpp"

namespace cdhmm {

// Linear projection fitted on pooled present frames. Rows of `components`
// are principal axes ordered by decreasing eigenvalue, each with a fixed
// sign convention (largest-magnitude coordinate positive).
struct PcaTransform {
  Vec mean;
  Mat components;   // d_out x d_in
  Vec eigenvalues;  // d_out, decreasing

  int in_dim() const { return static_cast<int>(mean.size()); }
  int out_dim() const { return static_cast<int>(components.rows()); }
};

PcaTransform pca_fit(const Dataset& data, int target_dim);

// Smallest dimension whose eigenvalues explain at least `fraction` of the
// total variance.
PcaTransform pca_fit_variance(const Dataset& data, double fraction);

// Projects every present frame; missing frames, ids, and labels pass
// through untouched.
Dataset pca_apply(const PcaTransform& t, const Dataset& data);
SequenceRecord pca_apply(const PcaTransform& t, const SequenceRecord& s);

}  // namespace cdhmm
