#include "ulm/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ulm::kernels {

namespace {
std::atomic<bool> g_parallel{true};
std::atomic<int> g_threads{0};
}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() {
#ifdef _OPENMP
  return g_parallel.load();
#else
  return false;
#endif
}
void set_num_threads(int n) {
  g_threads.store(n);
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}
int num_threads() { return g_threads.load(); }

namespace serial {

void matvec(const double* w, int rows, int cols, const double* x, double* y) {
  for (int i = 0; i < rows; ++i) {
    const double* row = w + static_cast<std::size_t>(i) * cols;
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void matvec_t(const double* w, int rows, int cols, const double* y, double* x) {
  for (int j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (int i = 0; i < rows; ++i) acc += w[static_cast<std::size_t>(i) * cols + j] * y[i];
    x[j] = acc;
  }
}

void outer_acc(double* w, int rows, int cols, const double* y, const double* x, double a) {
  for (int i = 0; i < rows; ++i) {
    double* row = w + static_cast<std::size_t>(i) * cols;
    const double s = a * y[i];
    for (int j = 0; j < cols; ++j) row[j] += s * x[j];
  }
}

void axpy(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void tanh_vec(std::size_t n, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void tanh_backward(std::size_t n, const double* y, const double* dy, double* dx) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
}

}  // namespace serial

namespace omp {

// Each output element is produced by exactly one thread with a serial inner
// loop, so results match the serial path bit for bit at any thread count.

void matvec(const double* w, int rows, int cols, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    const double* row = w + static_cast<std::size_t>(i) * cols;
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void matvec_t(const double* w, int rows, int cols, const double* y, double* x) {
#pragma omp parallel for schedule(static)
  for (int j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (int i = 0; i < rows; ++i) acc += w[static_cast<std::size_t>(i) * cols + j] * y[i];
    x[j] = acc;
  }
}

void outer_acc(double* w, int rows, int cols, const double* y, const double* x, double a) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    double* row = w + static_cast<std::size_t>(i) * cols;
    const double s = a * y[i];
    for (int j = 0; j < cols; ++j) row[j] += s * x[j];
  }
}

void axpy(std::size_t n, double a, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) y[i] += a * x[i];
}

void tanh_vec(std::size_t n, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) y[i] = std::tanh(x[i]);
}

void tanh_backward(std::size_t n, const double* y, const double* dy, double* dx) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    dx[i] = dy[i] * (1.0 - y[i] * y[i]);
}

}  // namespace omp

namespace {

// Fork-join overhead swamps small kernels; below this many touched elements
// (or inside an enclosing parallel region, e.g. the batch loop) the serial
// path wins and keeps the outer-level parallelism effective.
constexpr std::size_t kParallelThreshold = std::size_t{1} << 16;

bool use_omp(std::size_t work) {
#ifdef _OPENMP
  return g_parallel.load() && work >= kParallelThreshold && !omp_in_parallel();
#else
  (void)work;
  return false;
#endif
}

}  // namespace

void matvec(const double* w, int rows, int cols, const double* x, double* y) {
  if (use_omp(static_cast<std::size_t>(rows) * cols)) omp::matvec(w, rows, cols, x, y);
  else serial::matvec(w, rows, cols, x, y);
}
void matvec_t(const double* w, int rows, int cols, const double* y, double* x) {
  if (use_omp(static_cast<std::size_t>(rows) * cols)) omp::matvec_t(w, rows, cols, y, x);
  else serial::matvec_t(w, rows, cols, y, x);
}
void outer_acc(double* w, int rows, int cols, const double* y, const double* x, double a) {
  if (use_omp(static_cast<std::size_t>(rows) * cols)) omp::outer_acc(w, rows, cols, y, x, a);
  else serial::outer_acc(w, rows, cols, y, x, a);
}
void axpy(std::size_t n, double a, const double* x, double* y) {
  if (use_omp(n)) omp::axpy(n, a, x, y);
  else serial::axpy(n, a, x, y);
}
void tanh_vec(std::size_t n, const double* x, double* y) {
  if (use_omp(n)) omp::tanh_vec(n, x, y);
  else serial::tanh_vec(n, x, y);
}
void tanh_backward(std::size_t n, const double* y, const double* dy, double* dx) {
  if (use_omp(n)) omp::tanh_backward(n, y, dy, dx);
  else serial::tanh_backward(n, y, dy, dx);
}

void softmax(std::span<const double> logits, std::span<double> probs) {
  const std::size_t n = logits.size();
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (std::size_t i = 0; i < n; ++i) probs[i] /= sum;
}

void log_softmax(std::span<const double> logits, std::span<double> logp) {
  const std::size_t n = logits.size();
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(logits[i] - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < n; ++i) logp[i] = logits[i] - lse;
}

void softmax_and_logp(std::span<const double> logits, std::span<double> probs,
                      std::span<double> logp) {
  const std::size_t n = logits.size();
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] /= sum;
    logp[i] = logits[i] - lse;
  }
}

namespace {

void pairwise_sum_range(const std::vector<const std::vector<double>*>& vs, std::size_t lo,
                        std::size_t hi, std::vector<double>& out) {
  if (hi - lo == 1) {
    out = *vs[lo];
    return;
  }
  std::size_t mid = lo + (hi - lo) / 2;
  std::vector<double> right;
  pairwise_sum_range(vs, lo, mid, out);
  pairwise_sum_range(vs, mid, hi, right);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += right[i];
}

}  // namespace

std::vector<double> pairwise_mean(const std::vector<const std::vector<double>*>& vs) {
  if (vs.empty()) throw std::invalid_argument("pairwise_mean: no inputs");
  std::vector<double> out;
  pairwise_sum_range(vs, 0, vs.size(), out);
  const double inv = 1.0 / static_cast<double>(vs.size());
  for (double& v : out) v *= inv;
  return out;
}

}  // namespace ulm::kernels
