// Apache License, Version 2.0, refer to LICENSE.txt
//
// Running configured chains on a dataset and scoring them against a known
// linkage. Used by the command-line tool and the acceptance suite.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "microlink/analysis.hpp"
#include "microlink/config.hpp"
#include "microlink/sampler.hpp"
#include "microlink/synth.hpp"

namespace microlink {

// Seed of chain `chain` derived from the run seed (splitmix64 finalizer).
inline std::uint64_t chain_seed(std::uint64_t seed, std::size_t chain) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(chain) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// MICROLINK_THREADS when set to a positive integer, else the hardware count.
inline std::size_t worker_limit() {
  if (const char* env = std::getenv("MICROLINK_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// Calls job(k) for k in [0, jobs) on at most `workers` threads. The first
// exception thrown by any job is rethrown after all threads finish.
inline void parallel_for(std::size_t jobs, std::size_t workers, const std::function<void(std::size_t)>& job) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(jobs, 1));
  if (workers == 1) {
    for (std::size_t k = 0; k < jobs; ++k) job(k);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      std::size_t k;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= jobs || error) return;
        k = next++;
      }
      try {
        job(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// One chain from the all-singletons start. The network is used when the
// dataset has one.
inline ChainOutput run_chain(const RunConfig& cfg, const Dataset& ds, std::uint64_t seed,
                             const std::function<void(long, long)>& progress = {}) {
  const std::size_t records = ds.table.records();
  SamplerConfig sc = cfg.sampler;
  sc.seed = seed;
  Sampler sampler(ds.table, ds.net, cfg.model.build(records, ds.table.domain_sizes()), cfg.prior.build(records), sc);
  Rng rng(seed);
  sampler.initialize(rng);
  return sampler.run(rng, progress);
}

// `chains` independent chains with seeds chain_seed(cfg.sampler.seed, k).
inline std::vector<ChainOutput> run_chains(const RunConfig& cfg, const Dataset& ds, std::size_t chains,
                                           std::size_t workers) {
  MICROLINK_REQUIRE(chains >= 1, "need at least one chain");
  std::vector<ChainOutput> out(chains);
  parallel_for(chains, workers, [&](std::size_t k) { out[k] = run_chain(cfg, ds, chain_seed(cfg.sampler.seed, k)); });
  return out;
}

// Concatenates kept draws; a leading "chain" trace column identifies the
// source. Timing and acceptance rates are averaged over chains.
inline ChainOutput merge_chains(const std::vector<ChainOutput>& chains) {
  MICROLINK_REQUIRE(!chains.empty(), "nothing to merge");
  ChainOutput out;
  out.trace_names.push_back("chain");
  out.trace_names.insert(out.trace_names.end(), chains.front().trace_names.begin(), chains.front().trace_names.end());
  for (std::size_t k = 0; k < chains.size(); ++k) {
    const ChainOutput& c = chains[k];
    MICROLINK_REQUIRE(c.trace_names == chains.front().trace_names, "chains disagree on trace columns");
    out.samples.insert(out.samples.end(), c.samples.begin(), c.samples.end());
    for (const auto& row : c.traces) {
      std::vector<double> r{static_cast<double>(k)};
      r.insert(r.end(), row.begin(), row.end());
      out.traces.push_back(std::move(r));
    }
    out.sec_per_100 += c.sec_per_100 / static_cast<double>(chains.size());
    out.iterations += c.iterations;
    for (const auto& [name, rate] : c.acceptance) out.acceptance[name] += rate / static_cast<double>(chains.size());
  }
  return out;
}

struct EvalRow {
  std::string prior;
  std::optional<SweepPoint> sweep;
  PairwiseMetrics metrics;
  MeanSd population;
  double sec_per_100 = 0.0;
};

// Binder point estimate from the draws, scored against `truth`.
inline EvalRow evaluate_samples(const std::vector<std::vector<int>>& samples, const LinkageState& truth) {
  MICROLINK_REQUIRE(samples.size() >= 2, "need at least two posterior draws");
  for (const auto& s : samples)
    if (s.size() != truth.records())
      throw DataError("chain has " + std::to_string(s.size()) + " records, truth has " +
                      std::to_string(truth.records()));
  EvalRow row;
  row.metrics = pairwise_metrics(binder_point_estimate(similarity_matrix(samples)), truth);
  row.population = population_size_summary(samples);
  return row;
}

}  // namespace microlink
