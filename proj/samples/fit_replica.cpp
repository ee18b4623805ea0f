// Apache License, Version 2.0, refer to LICENSE.txt
//
// Fits the ABP model to the bundled replica with a Scenario 1 network and
// prints pairwise metrics of the Binder point estimate.
//
//   microlink_sample [iterations] [seed]

#include <cstdio>
#include <cstdlib>

#include "microlink/microlink.hpp"

int main(int argc, char** argv) {
  using namespace microlink;
  const long iters = argc > 1 ? std::atol(argv[1]) : 2000;
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;

  Rng rng(seed);
  Dataset ds = rldata_replica(rng);
  ds.net = synth_network(*ds.truth, scenario(1), rng);

  RunConfig cfg;
  cfg.prior.type = "ABP";
  cfg.prior.max_size = 2;
  cfg.prior.pi = 0.5;
  cfg.sampler.burn_in = iters / 2;
  cfg.sampler.samples = iters - iters / 2;
  cfg.sampler.seed = seed;

  const ChainOutput out = run_chain(cfg, ds, seed);
  const EvalRow row = evaluate_samples(out.samples, *ds.truth);
  std::printf("recall %.3f  precision %.3f  F1 %.3f\n", row.metrics.recall, row.metrics.precision, row.metrics.f1);
  std::printf("E[N] %.1f (sd %.1f), truth %zu\n", row.population.mean, row.population.sd, ds.truth->clusters());
  std::printf("%.2f s per 100 iterations\n", out.sec_per_100);
}
