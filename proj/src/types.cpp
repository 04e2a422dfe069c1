#include "cdhmm/types.hpp"

#include <stdexcept>

namespace cdhmm {

int frame_dim(const SequenceRecord& s) {
  for (const auto& f : s.frames)
    if (f) return static_cast<int>(f->size());
  return -1;
}

int dataset_dim(const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("dataset_dim: empty dataset");
  int dim = -1;
  for (const auto& s : data) {
    if (s.frames.empty())
      throw std::invalid_argument("dataset_dim: sequence '" + s.id + "' has no frames");
    for (const auto& f : s.frames) {
      if (!f) continue;
      if (f->size() == 0)
        throw std::invalid_argument("dataset_dim: sequence '" + s.id +
                                    "' contains an empty frame");
      if (dim < 0) dim = static_cast<int>(f->size());
      if (static_cast<int>(f->size()) != dim)
        throw std::invalid_argument("dataset_dim: sequence '" + s.id +
                                    "' has frames of inconsistent dimension");
    }
  }
  if (dim < 0)
    throw std::invalid_argument("dataset_dim: no present frames in the dataset");
  return dim;
}

}  // namespace cdhmm
