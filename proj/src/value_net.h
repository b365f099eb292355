#pragma once

// Value-only forward evaluation for rollouts and scoring. Mirrors the tape
// ops formula for formula (same loop order) so both paths agree; used where
// no gradients are needed and node bookkeeping would dominate the cost.

#include <algorithm>
#include <cmath>
#include <vector>

namespace latentseq::valuemath {

// Same unrolled reduction as the tape matvec so both paths agree bitwise.
inline double dot4(const double* a, const double* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline void matvec_into(const double* A, const double* v, double* dst, int m,
                        int k) {
  for (int i = 0; i < m; ++i) dst[i] = dot4(A + static_cast<size_t>(i) * k, v, k);
}

inline void softmax_inplace(double* x, int n) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - m);
    s += x[i];
  }
  double inv = 1.0 / s;
  for (int i = 0; i < n; ++i) x[i] *= inv;
}

inline double log_softmax_at(const double* x, int n, int idx) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return x[idx] - m - std::log(s);
}

inline int argmax_lowest(const double* x, int n, int skip = -1) {
  int best = -1;
  for (int i = 0; i < n; ++i) {
    if (i == skip) continue;
    if (best < 0 || x[i] > x[best]) best = i;
  }
  return best;
}

// gates: pre-activations [4H]; h/c updated in place
inline void lstm_cell_value(const double* gates, double* h, double* c, int H) {
  for (int j = 0; j < H; ++j) {
    double ig = 1.0 / (1.0 + std::exp(-gates[j]));
    double fg = 1.0 / (1.0 + std::exp(-gates[H + j]));
    double gg = std::tanh(gates[2 * H + j]);
    double og = 1.0 / (1.0 + std::exp(-gates[3 * H + j]));
    c[j] = fg * c[j] + ig * gg;
    h[j] = og * std::tanh(c[j]);
  }
}

// one LSTM step: input [in_dim], weights [4H x (in_dim + H)]
inline void lstm_step_value(const double* w, const double* b,
                            const double* input, int in_dim, double* h,
                            double* c, int H, std::vector<double>& scratch) {
  scratch.resize(static_cast<size_t>(in_dim + H) + static_cast<size_t>(4) * H);
  double* xin = scratch.data();
  double* gates = xin + in_dim + H;
  std::copy(input, input + in_dim, xin);
  std::copy(h, h + H, xin + in_dim);
  matvec_into(w, xin, gates, 4 * H, in_dim + H);
  for (int i = 0; i < 4 * H; ++i) gates[i] += b[i];
  lstm_cell_value(gates, h, c, H);
}

}  // namespace latentseq::valuemath
