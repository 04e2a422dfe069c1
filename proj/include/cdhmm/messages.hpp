#pragma once

#include <cstdint>
#include <vector>

#include "cdhmm/model.hpp"
#include "cdhmm/types.hpp"

namespace cdhmm {

// A window of recent emitting states plus the current lag choice. Windows
// are encoded as mixed-radix integers, oldest state most significant, with
// the lag as the fastest axis of the step tables.
struct WindowIndex {
  std::vector<int> states;  // oldest first, length min(t+1, K)
  int lag = 1;              // 1-based
};

int window_length(int t, int max_lag);        // t is 0-based
int max_feasible_lag(int t, int max_lag);     // 1 at t = 0, else min(t, K)
long long window_count(int n_states, int len);
long long encode_window(const std::vector<int>& states, int n_states);
std::vector<int> decode_window(long long code, int n_states, int len);

// Scaled message tables. steps[t] holds window_count(N, min(t+1,K)) * K
// doubles; infeasible lag entries are exact zeros in the forward lattice.
// log_scale/step_norm/emit_shift are filled by the forward pass only; the
// backward pass reuses the forward constants so that the elementwise product
// of the two lattices is the per-step posterior without further scaling.
struct MessageLattice {
  int T = 0;
  int n_states = 0;
  int max_lag = 0;
  std::vector<std::vector<double>> steps;
  std::vector<double> log_scale;   // log normalizer per step, sums to loglik
  std::vector<double> step_norm;   // raw table sum before normalization
  std::vector<double> emit_shift;  // per-frame max log emission
  std::uint64_t op_count = 0;      // innermost multiply-adds
};

// log_emit is T x N with exact zero rows for missing frames. Throws
// std::runtime_error when a step's total mass underflows to zero.
MessageLattice forward(const StarredParams& sp, const Mat& log_emit);

// Backward messages scaled with the forward normalizers; the final step is
// identically 1 before scaling.
MessageLattice backward(const StarredParams& sp, const Mat& log_emit,
                        const MessageLattice& fwd);

double loglik(const MessageLattice& fwd);

// Per-step posterior marginals of the lag and state chains. gamma_comp is
// left empty here; the trainer fills it from the emission layer.
struct Responsibilities {
  Mat gamma_z;                          // T x K
  Mat gamma_x;                          // T x N
  std::vector<Mat> gamma_zz;            // T-1 entries, row = earlier lag
  std::vector<std::vector<Mat>> gamma_xx;  // [t][lag] N x N, zero at t = 0
  std::vector<Mat> gamma_comp;          // [t] N x M, filled by the trainer
};

Responsibilities responsibilities(const MessageLattice& fwd, const MessageLattice& bwd,
                                  const StarredParams& sp, const Mat& log_emit);

}  // namespace cdhmm
