// Compares the serial reference kernels against the OpenMP kernels on the
// shapes the trainer actually uses, and on a full training step. Outputs are
// checked for bit equality while timing.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "ulm/kernels.hpp"
#include "ulm/neural_lm.hpp"
#include "ulm/rng.hpp"
#include "ulm/synth.hpp"
#include "ulm/vocab.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using Clock = std::chrono::steady_clock;

double time_of(int reps, const std::function<void()>& fn) {
  fn();  // warm up
  const auto start = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(Clock::now() - start).count() / reps;
}

void fill_random(std::vector<double>& v, ulm::Rng& rng) {
  for (auto& x : v) x = rng.next_double() - 0.5;
}

void report(const char* name, double serial_s, double omp_s, bool equal) {
  std::printf("%-28s serial %10.3f us   omp %10.3f us   speedup %5.2fx   %s\n", name,
              serial_s * 1e6, omp_s * 1e6, serial_s / omp_s, equal ? "bit-equal" : "MISMATCH");
}

void bench_matvec(int rows, int cols, int reps) {
  ulm::Rng rng(42);
  std::vector<double> w(static_cast<std::size_t>(rows) * cols), x(static_cast<std::size_t>(cols));
  std::vector<double> y_serial(static_cast<std::size_t>(rows)), y_omp(y_serial);
  fill_random(w, rng);
  fill_random(x, rng);
  double ts = time_of(reps, [&] { ulm::kernels::serial::matvec(w.data(), rows, cols, x.data(), y_serial.data()); });
  double to = time_of(reps, [&] { ulm::kernels::omp::matvec(w.data(), rows, cols, x.data(), y_omp.data()); });
  char name[64];
  std::snprintf(name, sizeof name, "matvec %dx%d", rows, cols);
  report(name, ts, to, std::memcmp(y_serial.data(), y_omp.data(), y_serial.size() * sizeof(double)) == 0);
}

void bench_outer(int rows, int cols, int reps) {
  ulm::Rng rng(43);
  std::vector<double> w_serial(static_cast<std::size_t>(rows) * cols, 0.0), w_omp(w_serial);
  std::vector<double> y(static_cast<std::size_t>(rows)), x(static_cast<std::size_t>(cols));
  fill_random(y, rng);
  fill_random(x, rng);
  double ts = time_of(reps, [&] { ulm::kernels::serial::outer_acc(w_serial.data(), rows, cols, y.data(), x.data(), 0.5); });
  double to = time_of(reps, [&] { ulm::kernels::omp::outer_acc(w_omp.data(), rows, cols, y.data(), x.data(), 0.5); });
  char name[64];
  std::snprintf(name, sizeof name, "outer_acc %dx%d", rows, cols);
  report(name, ts, to, std::memcmp(w_serial.data(), w_omp.data(), w_serial.size() * sizeof(double)) == 0);
}

// One epoch of baseline training at desk scale, serial vs parallel path.
void bench_train_epoch() {
  ulm::SynthSpec spec;
  spec.num_records = 400;
  auto lines = ulm::generate_corpus_lines(spec, 7);
  ulm::Vocabulary vocab = ulm::build_vocabulary(lines, 200);
  std::vector<ulm::Record> records;
  for (const auto& l : lines) {
    ulm::Record r;
    r.user_id = 0;
    r.tokens = ulm::tokenize(l, vocab);
    records.push_back(std::move(r));
  }
  ulm::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.rng_seed = 99;

  ulm::LmDims dims{vocab.size(), 2, 16, 64};
  ulm::NeuralLM init(dims, 1234);

  ulm::kernels::set_parallel(false);
  ulm::NeuralLM serial_model = init;
  const auto s0 = Clock::now();
  serial_model = ulm::train(std::move(serial_model), records, cfg);
  const double ts = std::chrono::duration<double>(Clock::now() - s0).count();

  ulm::kernels::set_parallel(true);
  ulm::NeuralLM omp_model = init;
  const auto s1 = Clock::now();
  omp_model = ulm::train(std::move(omp_model), records, cfg);
  const double to = std::chrono::duration<double>(Clock::now() - s1).count();

  report("train epoch (400 records)", ts, to, serial_model == omp_model);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads %d\n\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; both paths run serial\n\n");
#endif
  bench_matvec(200, 64, 2000);
  bench_matvec(2000, 256, 200);
  bench_outer(200, 64, 2000);
  bench_outer(2000, 256, 200);
  bench_train_epoch();
  return 0;
}
