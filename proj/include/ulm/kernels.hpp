#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ulm::kernels {

// Runtime switch between the OpenMP kernels and the serial reference path.
// Both paths perform the exact same per-element arithmetic in the same order,
// so outputs are bit-identical; tests assert this and the bench target
// measures the difference in throughput.
void set_parallel(bool enabled);
bool parallel_enabled();
void set_num_threads(int n);  // 0 = OpenMP default
int num_threads();

namespace serial {

// y = W x, W row-major rows x cols.
void matvec(const double* w, int rows, int cols, const double* x, double* y);
// x = W^T y.
void matvec_t(const double* w, int rows, int cols, const double* y, double* x);
// W += a * y x^T.
void outer_acc(double* w, int rows, int cols, const double* y, const double* x, double a);
// y += a * x.
void axpy(std::size_t n, double a, const double* x, double* y);
void tanh_vec(std::size_t n, const double* x, double* y);
// dx = dy * (1 - y^2) where y = tanh(x).
void tanh_backward(std::size_t n, const double* y, const double* dy, double* dx);

}  // namespace serial

namespace omp {

void matvec(const double* w, int rows, int cols, const double* x, double* y);
void matvec_t(const double* w, int rows, int cols, const double* y, double* x);
void outer_acc(double* w, int rows, int cols, const double* y, const double* x, double a);
void axpy(std::size_t n, double a, const double* x, double* y);
void tanh_vec(std::size_t n, const double* x, double* y);
void tanh_backward(std::size_t n, const double* y, const double* dy, double* dx);

}  // namespace omp

// Dispatching entry points used by the models.
void matvec(const double* w, int rows, int cols, const double* x, double* y);
void matvec_t(const double* w, int rows, int cols, const double* y, double* x);
void outer_acc(double* w, int rows, int cols, const double* y, const double* x, double a);
void axpy(std::size_t n, double a, const double* x, double* y);
void tanh_vec(std::size_t n, const double* x, double* y);
void tanh_backward(std::size_t n, const double* y, const double* dy, double* dx);

// Numerically stable softmax / log-softmax (max subtraction). Serial: the
// reductions must stay in a fixed order for reproducibility and vocab-sized
// vectors are small.
void softmax(std::span<const double> logits, std::span<double> probs);
void log_softmax(std::span<const double> logits, std::span<double> logp);
// Both outputs from a single exp pass.
void softmax_and_logp(std::span<const double> logits, std::span<double> probs,
                      std::span<double> logp);

// Pairwise (cascade) sum and mean over k vectors of equal length. Fixed
// reduction tree, independent of thread count; exact when k is a power of
// two and all inputs are equal.
std::vector<double> pairwise_mean(const std::vector<const std::vector<double>*>& vs);

}  // namespace ulm::kernels
