#include "cdhmm/messages.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cdhmm {

namespace {
constexpr long long kMaxTableEntries = 1LL << 27;

void check_starred(const StarredParams& sp) {
  const int K = static_cast<int>(sp.pi_hat.size());
  const int N = static_cast<int>(sp.pi.size());
  if (K < 1 || N < 1)
    throw std::invalid_argument("forward: starred parameters are empty");
  if (sp.A_hat.rows() != K || sp.A_hat.cols() != K ||
      static_cast<int>(sp.A_dep.size()) != K)
    throw std::invalid_argument("forward: lag parameter shapes disagree");
  for (const Mat& a : sp.A_dep)
    if (a.rows() != N || a.cols() != N)
      throw std::invalid_argument("forward: lagged transition matrices must be N x N");
  auto in_range = [](const auto& arr) {
    return arr.allFinite() && (arr.array() >= 0.0).all() &&
           (arr.array() <= 1.0 + 1e-12).all();
  };
  if (!in_range(sp.pi_hat) || !in_range(sp.A_hat) || !in_range(sp.pi))
    throw std::invalid_argument("forward: starred entries must lie in [0, 1]");
  for (const Mat& a : sp.A_dep)
    if (!in_range(a))
      throw std::invalid_argument("forward: starred entries must lie in [0, 1]");
}

// State at window position p (0 = oldest) of a code over `len` digits.
inline int digit(long long code, int p, int len, int n_states) {
  for (int q = len - 1; q > p; --q) code /= n_states;
  return static_cast<int>(code % n_states);
}
}  // namespace

int window_length(int t, int max_lag) { return std::min(t + 1, max_lag); }

int max_feasible_lag(int t, int max_lag) {
  return t == 0 ? 1 : std::min(t, max_lag);
}

long long window_count(int n_states, int len) {
  long long c = 1;
  for (int i = 0; i < len; ++i) {
    c *= n_states;
    if (c > kMaxTableEntries)
      throw std::invalid_argument("window_count: state window table too large");
  }
  return c;
}

long long encode_window(const std::vector<int>& states, int n_states) {
  long long code = 0;
  for (int s : states) {
    if (s < 0 || s >= n_states)
      throw std::invalid_argument("encode_window: state out of range");
    code = code * n_states + s;
  }
  return code;
}

std::vector<int> decode_window(long long code, int n_states, int len) {
  std::vector<int> states(len);
  for (int p = len - 1; p >= 0; --p) {
    states[p] = static_cast<int>(code % n_states);
    code /= n_states;
  }
  return states;
}

MessageLattice forward(const StarredParams& sp, const Mat& log_emit) {
  check_starred(sp);
  const int T = static_cast<int>(log_emit.rows());
  const int N = static_cast<int>(sp.pi.size());
  const int K = static_cast<int>(sp.pi_hat.size());
  if (T < 1) throw std::invalid_argument("forward: need at least one frame");
  if (log_emit.cols() != N)
    throw std::invalid_argument("forward: emission table width does not match n_states");

  MessageLattice lat;
  lat.T = T;
  lat.n_states = N;
  lat.max_lag = K;
  lat.steps.resize(T);
  lat.log_scale.resize(T);
  lat.step_norm.resize(T);
  lat.emit_shift.resize(T);

  Vec shifted(N);
  auto shift_emissions = [&](int t) {
    const double s = log_emit.row(t).maxCoeff();
    if (!std::isfinite(s))
      throw std::runtime_error("forward: every state emission underflowed at step " +
                               std::to_string(t));
    lat.emit_shift[t] = s;
    for (int i = 0; i < N; ++i) shifted(i) = std::exp(log_emit(t, i) - s);
  };
  auto normalize_step = [&](int t) {
    double total = 0.0;
    for (double v : lat.steps[t]) total += v;
    if (!(total > 0.0) || !std::isfinite(total))
      throw std::runtime_error("forward: zero total mass at step " + std::to_string(t));
    for (double& v : lat.steps[t]) v /= total;
    lat.step_norm[t] = total;
    lat.log_scale[t] = std::log(total) + lat.emit_shift[t];
  };

  shift_emissions(0);
  lat.steps[0].assign(static_cast<size_t>(N) * K, 0.0);
  for (int x = 0; x < N; ++x)
    lat.steps[0][static_cast<size_t>(x) * K] = sp.pi_hat(0) * sp.pi(x) * shifted(x);
  normalize_step(0);

  for (int t = 1; t < T; ++t) {
    const int len_prev = window_length(t - 1, K);
    const int len = window_length(t, K);
    const bool grow = len == len_prev + 1;
    const long long n_codes = window_count(N, len);
    const long long drop_stride = grow ? 0 : window_count(N, K - 1);
    const int zmax_prev = max_feasible_lag(t - 1, K);
    const int zmax = max_feasible_lag(t, K);
    const std::vector<double>& prev = lat.steps[t - 1];
    shift_emissions(t);
    lat.steps[t].assign(static_cast<size_t>(n_codes) * K, 0.0);
    std::vector<double>& cur = lat.steps[t];

    for (long long code = 0; code < n_codes; ++code) {
      const int x_t = static_cast<int>(code % N);
      const long long prefix = code / N;
      const double emit = shifted(x_t);
      for (int z = 1; z <= zmax; ++z) {
        double acc = 0.0;
        if (grow) {
          const long long old_code = prefix;
          const int cond = digit(old_code, len_prev - z, len_prev, N);
          double s = 0.0;
          for (int zp = 1; zp <= zmax_prev; ++zp) {
            s += prev[static_cast<size_t>(old_code) * K + zp - 1] * sp.A_hat(zp - 1, z - 1);
            ++lat.op_count;
          }
          acc = sp.A_dep[z - 1](cond, x_t) * s;
        } else {
          for (int dropped = 0; dropped < N; ++dropped) {
            const long long old_code = dropped * drop_stride + prefix;
            const int cond = digit(old_code, K - z, K, N);
            double s = 0.0;
            for (int zp = 1; zp <= zmax_prev; ++zp) {
              s += prev[static_cast<size_t>(old_code) * K + zp - 1] * sp.A_hat(zp - 1, z - 1);
              ++lat.op_count;
            }
            acc += sp.A_dep[z - 1](cond, x_t) * s;
          }
        }
        cur[static_cast<size_t>(code) * K + z - 1] = emit * acc;
      }
    }
    normalize_step(t);
  }
  return lat;
}

MessageLattice backward(const StarredParams& sp, const Mat& log_emit,
                        const MessageLattice& fwd) {
  check_starred(sp);
  const int T = static_cast<int>(log_emit.rows());
  const int N = static_cast<int>(sp.pi.size());
  const int K = static_cast<int>(sp.pi_hat.size());
  if (fwd.T != T || fwd.n_states != N || fwd.max_lag != K)
    throw std::invalid_argument("backward: forward lattice does not match the inputs");

  MessageLattice lat;
  lat.T = T;
  lat.n_states = N;
  lat.max_lag = K;
  lat.steps.resize(T);
  lat.steps[T - 1].assign(static_cast<size_t>(window_count(N, window_length(T - 1, K))) * K,
                          1.0);

  Vec shifted(N);
  for (int t = T - 2; t >= 0; --t) {
    const int len = window_length(t, K);
    const int len_next = window_length(t + 1, K);
    const bool grow_next = len_next == len + 1;
    const long long n_codes = window_count(N, len);
    const long long keep_stride = grow_next ? 0 : window_count(N, K - 1);
    const int zmax_next = max_feasible_lag(t + 1, K);
    const double inv_norm = 1.0 / fwd.step_norm[t + 1];
    const std::vector<double>& nxt = lat.steps[t + 1];
    for (int i = 0; i < N; ++i)
      shifted(i) = std::exp(log_emit(t + 1, i) - fwd.emit_shift[t + 1]);

    lat.steps[t].assign(static_cast<size_t>(n_codes) * K, 0.0);
    std::vector<double>& cur = lat.steps[t];

    for (long long code = 0; code < n_codes; ++code) {
      const long long kept = grow_next ? code : (code % keep_stride);
      for (int z = 1; z <= K; ++z) {
        double acc = 0.0;
        for (int zn = 1; zn <= zmax_next; ++zn) {
          const int cond = digit(code, len - zn, len, N);
          const double ahat = sp.A_hat(z - 1, zn - 1);
          const Mat& a_dep = sp.A_dep[zn - 1];
          for (int xn = 0; xn < N; ++xn) {
            const long long next_code = kept * N + xn;
            acc += ahat * a_dep(cond, xn) * shifted(xn) *
                   nxt[static_cast<size_t>(next_code) * K + zn - 1];
            ++lat.op_count;
          }
        }
        cur[static_cast<size_t>(code) * K + z - 1] = acc * inv_norm;
      }
    }
  }
  return lat;
}

double loglik(const MessageLattice& fwd) {
  double total = 0.0;
  for (double v : fwd.log_scale) total += v;
  return total;
}

Responsibilities responsibilities(const MessageLattice& fwd, const MessageLattice& bwd,
                                  const StarredParams& sp, const Mat& log_emit) {
  check_starred(sp);
  const int T = fwd.T;
  const int N = fwd.n_states;
  const int K = fwd.max_lag;
  if (bwd.T != T || bwd.n_states != N || bwd.max_lag != K)
    throw std::invalid_argument("responsibilities: mismatched lattices");
  if (static_cast<int>(log_emit.rows()) != T || log_emit.cols() != N)
    throw std::invalid_argument("responsibilities: emission table shape mismatch");

  Responsibilities r;
  r.gamma_z = Mat::Zero(T, K);
  r.gamma_x = Mat::Zero(T, N);
  r.gamma_zz.assign(std::max(0, T - 1), Mat::Zero(K, K));
  r.gamma_xx.assign(T, std::vector<Mat>(K, Mat::Zero(N, N)));

  // Single-slice marginals from the pointwise product of the two lattices.
  for (int t = 0; t < T; ++t) {
    const int len = window_length(t, K);
    const long long n_codes = window_count(N, len);
    const std::vector<double>& a = fwd.steps[t];
    const std::vector<double>& b = bwd.steps[t];
    double total = 0.0;
    for (long long code = 0; code < n_codes; ++code) {
      const int x_t = static_cast<int>(code % N);
      for (int z = 0; z < K; ++z) {
        const double v = a[static_cast<size_t>(code) * K + z] *
                         b[static_cast<size_t>(code) * K + z];
        r.gamma_z(t, z) += v;
        r.gamma_x(t, x_t) += v;
        total += v;
      }
    }
    if (!(total > 0.0) || !std::isfinite(total))
      throw std::runtime_error("responsibilities: zero posterior mass at step " +
                               std::to_string(t));
    r.gamma_z.row(t) /= total;
    r.gamma_x.row(t) /= total;
  }

  // Two-slice sweep for lag pairs and lagged state transitions.
  Vec shifted(N);
  for (int t = 1; t < T; ++t) {
    const int len_prev = window_length(t - 1, K);
    const bool grow = window_length(t, K) == len_prev + 1;
    const long long n_prev = window_count(N, len_prev);
    const long long keep_stride = grow ? 0 : window_count(N, K - 1);
    const int zmax_prev = max_feasible_lag(t - 1, K);
    const int zmax = max_feasible_lag(t, K);
    const std::vector<double>& a = fwd.steps[t - 1];
    const std::vector<double>& b = bwd.steps[t];
    for (int i = 0; i < N; ++i)
      shifted(i) = std::exp(log_emit(t, i) - fwd.emit_shift[t]);

    Mat zz = Mat::Zero(K, K);
    auto& xx = r.gamma_xx[t];
    double total = 0.0;
    for (long long old_code = 0; old_code < n_prev; ++old_code) {
      const long long kept = grow ? old_code : (old_code % keep_stride);
      for (int zp = 1; zp <= zmax_prev; ++zp) {
        const double alpha = a[static_cast<size_t>(old_code) * K + zp - 1];
        if (alpha == 0.0) continue;
        for (int z = 1; z <= zmax; ++z) {
          const int cond = digit(old_code, len_prev - z, len_prev, N);
          const double base = alpha * sp.A_hat(zp - 1, z - 1);
          const Mat& a_dep = sp.A_dep[z - 1];
          for (int x_t = 0; x_t < N; ++x_t) {
            const long long new_code = kept * N + x_t;
            const double v = base * a_dep(cond, x_t) * shifted(x_t) *
                             b[static_cast<size_t>(new_code) * K + z - 1];
            zz(zp - 1, z - 1) += v;
            xx[z - 1](cond, x_t) += v;
            total += v;
          }
        }
      }
    }
    if (!(total > 0.0) || !std::isfinite(total))
      throw std::runtime_error("responsibilities: zero pair mass at step " +
                               std::to_string(t));
    r.gamma_zz[t - 1] = zz / total;
    for (int k = 0; k < K; ++k) xx[k] /= total;
  }
  return r;
}

}  // namespace cdhmm
