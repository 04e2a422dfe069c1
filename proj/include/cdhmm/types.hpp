#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace cdhmm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One observation frame; empty optional marks a missing frame.
using Frame = std::optional<Vec>;

struct SequenceRecord {
  std::string id;
  std::optional<std::string> label;
  std::vector<Frame> frames;

  int length() const { return static_cast<int>(frames.size()); }
  int present_count() const {
    int n = 0;
    for (const auto& f : frames)
      if (f) ++n;
    return n;
  }
};

using Dataset = std::vector<SequenceRecord>;

// Frame dimension shared by all present frames, or -1 when none present.
int frame_dim(const SequenceRecord& s);

// Validates a dataset: consistent dimension across all present frames,
// nonempty sequences. Returns the common dimension. Throws
// std::invalid_argument naming the offending record.
int dataset_dim(const Dataset& data);

}  // namespace cdhmm
