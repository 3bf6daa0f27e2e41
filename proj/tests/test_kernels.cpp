#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "ulm/kernels.hpp"
#include "ulm/rng.hpp"

using namespace ulm;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = 2.0 * rng.next_double() - 1.0;
  return v;
}

}  // namespace

TEST_CASE("serial and omp kernels are bit-identical") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const int rows = 17 + trial * 31;
    const int cols = 9 + trial * 13;
    auto w = random_vec(static_cast<std::size_t>(rows) * cols, rng);
    auto x = random_vec(static_cast<std::size_t>(cols), rng);
    auto y = random_vec(static_cast<std::size_t>(rows), rng);

    std::vector<double> a(static_cast<std::size_t>(rows)), b(a);
    kernels::serial::matvec(w.data(), rows, cols, x.data(), a.data());
    kernels::omp::matvec(w.data(), rows, cols, x.data(), b.data());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);

    std::vector<double> at(static_cast<std::size_t>(cols)), bt(at);
    kernels::serial::matvec_t(w.data(), rows, cols, y.data(), at.data());
    kernels::omp::matvec_t(w.data(), rows, cols, y.data(), bt.data());
    CHECK(std::memcmp(at.data(), bt.data(), at.size() * sizeof(double)) == 0);

    auto wa = w, wb = w;
    kernels::serial::outer_acc(wa.data(), rows, cols, y.data(), x.data(), 0.37);
    kernels::omp::outer_acc(wb.data(), rows, cols, y.data(), x.data(), 0.37);
    CHECK(std::memcmp(wa.data(), wb.data(), wa.size() * sizeof(double)) == 0);

    auto ya = y, yb = y;
    kernels::serial::axpy(ya.size(), -0.81, x.size() >= ya.size() ? x.data() : y.data(), ya.data());
    kernels::omp::axpy(yb.size(), -0.81, x.size() >= yb.size() ? x.data() : y.data(), yb.data());
    CHECK(ya == yb);

    std::vector<double> ta(y.size()), tb(y.size());
    kernels::serial::tanh_vec(y.size(), y.data(), ta.data());
    kernels::omp::tanh_vec(y.size(), y.data(), tb.data());
    CHECK(ta == tb);
  }
}

TEST_CASE("softmax is a valid distribution for extreme logits") {
  std::vector<double> logits = {1e6, -1e6, 0.0, 700.0, -745.0};
  std::vector<double> probs(logits.size());
  kernels::softmax(logits, probs);
  double sum = 0.0;
  for (double p : probs) {
    CHECK(p >= 0.0);
    sum += p;
  }
  CHECK(std::abs(sum - 1.0) < 1e-9);

  std::vector<double> logp(logits.size());
  kernels::log_softmax(logits, logp);
  for (double v : logp) CHECK(std::isfinite(v));
}

TEST_CASE("softmax_and_logp matches separate computations") {
  Rng rng(11);
  auto logits = random_vec(64, rng);
  std::vector<double> p1(64), p2(64), l1(64), l2(64);
  kernels::softmax(logits, p1);
  kernels::log_softmax(logits, l1);
  kernels::softmax_and_logp(logits, p2, l2);
  CHECK(p1 == p2);
  CHECK(l1 == l2);
}

TEST_CASE("pairwise mean of equal vectors is exact for power-of-two counts") {
  std::vector<double> v = {0.123456789, 1e-6, 0.5, 3.337777};
  for (int count : {2, 4, 8}) {
    std::vector<const std::vector<double>*> vs(static_cast<std::size_t>(count), &v);
    auto mean = kernels::pairwise_mean(vs);
    CHECK(mean == v);
  }
}

TEST_CASE("pairwise mean averages distinct vectors") {
  std::vector<double> a = {1.0, 0.0};
  std::vector<double> b = {0.0, 1.0};
  std::vector<double> c = {0.5, 0.5};
  auto mean = kernels::pairwise_mean({&a, &b, &c});
  CHECK(mean[0] == doctest::Approx(0.5));
  CHECK(mean[1] == doctest::Approx(0.5));
}

TEST_CASE("rng determinism and ranges") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    double d = r.next_double();
    CHECK(d >= 0.0);
    CHECK(d < 1.0);
    CHECK(r.next_below(7) < 7);
  }

  // Gaussian moments, loose bounds.
  Rng g(17);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = g.next_gaussian();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("derive_seed gives distinct streams") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(1, 0, 1) != derive_seed(1, 1, 0));
}
