// Timing harness for the parallel kernels: each kernel runs once with the
// thread override pinned to 1 (the serial reference) and once at the
// machine's thread count, verifying bitwise-identical results before
// reporting the speedup.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "flowsac/flow.hpp"
#include "flowsac/flow_matching.hpp"
#include "flowsac/lqr.hpp"
#include "flowsac/oracle.hpp"
#include "flowsac/parallel.hpp"
#include "flowsac/rng.hpp"

using namespace flowsac;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct BenchResult {
  double serial_s = 0.0;
  double parallel_s = 0.0;
  bool identical = true;
};

template <typename Fn, typename Digest>
BenchResult run_pair(const Fn& fn, const Digest& digest, int threads) {
  BenchResult r;
  set_thread_override(1);
  double t0 = now_seconds();
  const auto serial_out = fn();
  r.serial_s = now_seconds() - t0;

  set_thread_override(threads);
  t0 = now_seconds();
  const auto parallel_out = fn();
  r.parallel_s = now_seconds() - t0;
  set_thread_override(0);

  r.identical = digest(serial_out) == digest(parallel_out);
  return r;
}

void report(const char* name, const BenchResult& r) {
  std::printf("%-24s serial %8.3f s   parallel %8.3f s   speedup %5.2fx   %s\n",
              name, r.serial_s, r.parallel_s,
              r.parallel_s > 0 ? r.serial_s / r.parallel_s : 0.0,
              r.identical ? "bitwise equal" : "MISMATCH");
  if (!r.identical) std::exit(1);
}

}  // namespace

int main(int argc, char** argv) {
  const int threads = argc > 1 ? std::atoi(argv[1]) : max_threads();
  std::printf("comparing 1 thread vs %d threads\n\n", threads);

  Rng rng(42);
  const FlowPolicy policy = make_flow_policy(2, 2, 32, 2, 32, rng);
  const Vector x{0.3, -0.7};

  report("sample_actions",
         run_pair(
             [&] { return sample_actions(policy, x, 512, Rng(7)); },
             [](const std::vector<FlowSample>& v) {
               double acc = 0.0;
               for (const FlowSample& s : v) acc += s.action[0] + s.log_prob;
               return acc;
             },
             threads));

  report("entropy_estimate",
         run_pair([&] { return entropy_estimate(policy, x, 512, Rng(8)); },
                  [](const MeanStderr& m) { return m.mean + m.std_err; },
                  threads));

  {
    Rng data_rng(9);
    std::vector<Vector> actions;
    std::vector<double> weights(256, 1.0 / 256);
    for (int i = 0; i < 256; ++i)
      actions.push_back(Vector{data_rng.normal(), data_rng.normal()});
    const WeightedBatch batch =
        make_weighted_batch(x, std::move(actions), std::move(weights));
    report("isfm_loss",
           run_pair(
               [&] { return isfm_loss(policy.net, batch, 4, Rng(10)); },
               [](const LossGrad& lg) { return lg.loss + lg.grad.sq_norm(); },
               threads));
  }

  {
    const LqrSystem sys =
        make_lqr_system(Matrix{{0.8}}, Matrix{{1.0}}, Matrix{{1.0}},
                        Matrix{{1.0}}, Matrix{{0.04}}, 0.9, 1.0, Vector{1.0});
    const RiccatiSolution sol = riccati_value_iteration(sys);
    const GaussianPolicy gp = make_gaussian_policy(sol.K, sol.sigma);
    const ActionSampler sampler = [&](const Vector& xs, Rng& r) {
      return sample_gaussian_action(gp, xs, r);
    };
    report("discounted_return",
           run_pair(
               [&] { return discounted_return(sys, sampler, 200, 2000, Rng(11)); },
               [](const MeanStderr& m) { return m.mean + m.std_err; },
               threads));
  }

  return 0;
}
