// Apache License, Version 2.0, refer to LICENSE.txt
//
// microlink: generate datasets, fit chains, evaluate linkage and simulate
// partition priors.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "microlink/microlink.hpp"

#ifndef MICROLINK_GIT_DESCRIBE
#define MICROLINK_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using namespace microlink;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kRuntime = 4 };

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Text that is a JSON document, or the path of one.
Json json_argument(const std::string& arg, const std::string& where) {
  const std::string text = fs::exists(arg) ? read_file(arg) : arg;
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(where, std::string("invalid JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string scenario = "1";
  fs::path out;
  std::uint64_t seed = 1;
  std::optional<double> beta, sigma2;
  std::optional<std::size_t> dim;
  std::size_t entities = 450;
  std::size_t duplicated = 50;
};

int cmd_generate(const GenerateArgs& a) {
  ScenarioSpec scen;
  if (a.scenario == "1" || a.scenario == "2") {
    scen = scenario(a.scenario == "1" ? 1 : 2);
  } else if (a.scenario != "custom") {
    throw ConfigError("--scenario", "unknown scenario '" + a.scenario + "' (expected 1, 2 or custom)");
  }
  if (a.scenario != "custom" && (a.beta || a.sigma2 || a.dim))
    throw ConfigError("--scenario", "--beta, --sigma2 and --K are only accepted with --scenario custom");
  if (a.beta) scen.beta = *a.beta;
  if (a.sigma2) scen.sigma2 = *a.sigma2;
  if (a.dim) scen.dim = *a.dim;
  if (!(scen.sigma2 > 0)) throw ConfigError("--sigma2", "must be positive");
  if (scen.dim < 1) throw ConfigError("--K", "must be at least 1");
  Rng rng(a.seed);
  Dataset ds = rldata_replica(rng, a.entities, a.duplicated);
  ds.net = synth_network(*ds.truth, scen, rng);
  save_dataset(a.out, ds);
  Json meta;
  meta["scenario"] = a.scenario;
  meta["beta"] = scen.beta;
  meta["sigma2"] = scen.sigma2;
  meta["K"] = scen.dim;
  meta["seed"] = a.seed;
  meta["records"] = ds.table.records();
  meta["entities"] = ds.truth->clusters();
  meta["edges"] = ds.net->edge_count();
  const NetworkStats st = network_stats(*ds.net);
  meta["density"] = st.density;
  meta["transitivity"] = st.transitivity;
  meta["assortativity"] = std::isnan(st.assortativity) ? Json(nullptr) : Json(st.assortativity);
  write_text(a.out / "generate.json", meta.dump(2) + "\n");
  std::cout << "wrote " << ds.table.records() << " records, " << ds.net->edge_count() << " edges (density "
            << st.density << ") to " << a.out.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  fs::path config;
  fs::path data;
  fs::path out;
  std::size_t chains = 1;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

// Everything that changes the draws: the effective config, the chain count
// and the bytes of the data files the sampler reads.
std::uint64_t run_hash(const RunConfig& cfg, const FitArgs& a) {
  std::string extra = "chains=" + std::to_string(a.chains) + "\n";
  for (const char* name : {"profiles.csv", "network.csv"})
    if (fs::exists(a.data / name)) extra += std::string(name) + "\n" + read_file(a.data / name);
  return config_hash(cfg, extra);
}

Json acceptance_json(const ChainOutput& out) {
  Json j = Json::object();
  for (const auto& [name, rate] : out.acceptance) j[name] = rate;
  return j;
}

int cmd_fit(const FitArgs& a) {
  RunConfig cfg = parse_config(read_file(a.config));
  if (a.seed) cfg.sampler.seed = *a.seed;
  if (a.chains < 1) throw ConfigError("--chains", "must be at least 1");
  const Dataset ds = load_dataset(a.data, cfg.model.fields);
  const std::size_t workers = worker_limit();

  std::vector<std::pair<std::optional<SweepPoint>, fs::path>> runs;
  if (cfg.sweep.empty()) {
    runs.push_back({std::nullopt, fs::path{}});
  } else {
    for (std::size_t k = 0; k < cfg.sweep.size(); ++k) {
      char dir[32];
      std::snprintf(dir, sizeof dir, "sweep_%02zu", k);
      runs.push_back({cfg.sweep[k], fs::path(dir)});
    }
  }

  Json manifest;
  manifest["config_hash"] = hex(run_hash(cfg, a));
  manifest["seed"] = cfg.sampler.seed;
  manifest["git_describe"] = MICROLINK_GIT_DESCRIBE;
  manifest["prior"] = cfg.prior.label();
  manifest["chains"] = a.chains;
  manifest["workers"] = workers;
  manifest["profile_only"] = !ds.net.has_value();
  manifest["records"] = ds.table.records();
  manifest["inputs"] = {{"config", a.config.string()}, {"data", a.data.string()}};
  Json run_list = Json::array();
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& [point, sub] : runs) {
    RunConfig rc = cfg;
    rc.sweep.clear();
    if (point) {
      rc.model.a = point->a;
      rc.model.b = point->b;
    }
    const auto r0 = std::chrono::steady_clock::now();
    const ChainOutput merged = merge_chains(run_chains(rc, ds, a.chains, workers));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - r0).count();
    const fs::path dir = a.out / sub;
    save_linkage_samples(dir / "linkage.csv", merged.samples);
    save_traces(dir / "traces.csv", merged);
    Json r;
    if (point) {
      r["a"] = point->a;
      r["b"] = point->b;
    }
    r["linkage"] = (sub / "linkage.csv").generic_string();
    r["traces"] = (sub / "traces.csv").generic_string();
    r["sec_per_100"] = merged.sec_per_100;
    r["wall_seconds"] = wall;
    r["acceptance"] = acceptance_json(merged);
    run_list.push_back(r);
    if (!a.quiet)
      std::cerr << "[fit] " << cfg.prior.label() << (point ? " a=" + format_double(point->a) + " b=" + format_double(point->b) : "")
                << ": " << merged.samples.size() << " draws, " << merged.sec_per_100 << " s/100 iterations\n";
  }
  manifest["timings"] = {
      {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  manifest["runs"] = run_list;
  write_text(a.out / "config.json", dump(cfg));
  write_text(a.out / "run.json", manifest.dump(2) + "\n");
  return kOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  fs::path chain;
  fs::path truth;
  fs::path out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  if (!fs::exists(a.truth)) throw DataError("truth file " + a.truth.string() + " not found");
  std::string prior = "NA";
  Json runs = Json::array();
  const fs::path manifest_path = a.chain / "run.json";
  if (fs::exists(manifest_path)) {
    Json m;
    try {
      m = Json::parse(read_file(manifest_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(manifest_path.string() + ": invalid JSON: " + e.what());
    }
    if (m.contains("prior") && m["prior"].is_string()) prior = m["prior"].get<std::string>();
    if (m.contains("runs") && m["runs"].is_array()) runs = m["runs"];
  }
  if (runs.empty()) runs.push_back({{"linkage", "linkage.csv"}});
  const bool sweep = runs.front().contains("a");

  std::ostringstream os;
  os << (sweep ? "prior,a,b,recall,precision,f1,n_mean,n_sd,sec_per_100\n"
               : "prior,recall,precision,f1,n_mean,n_sd,sec_per_100\n");
  for (const auto& r : runs) {
    if (!r.contains("linkage") || !r["linkage"].is_string())
      throw DataError(manifest_path.string() + ": run entry without a linkage path");
    const auto samples = load_linkage_samples(a.chain / r["linkage"].get<std::string>());
    if (samples.empty()) throw DataError("chain " + a.chain.string() + " has no draws");
    const LinkageState truth = load_truth(a.truth, samples.front().size());
    const EvalRow row = evaluate_samples(samples, truth);
    const double sec = r.contains("sec_per_100") ? r["sec_per_100"].get<double>() : std::nan("");
    os << csv::quote(prior);
    if (sweep) os << ',' << format_double(r["a"].get<double>()) << ',' << format_double(r["b"].get<double>());
    os << ',' << format_double(row.metrics.recall) << ',' << format_double(row.metrics.precision) << ','
       << format_double(row.metrics.f1) << ',' << format_double(row.population.mean) << ','
       << format_double(row.population.sd) << ',' << format_double(sec) << '\n';
  }
  write_text(a.out, os.str());
  std::cout << os.str();
  return kOk;
}

// ---------------------------------------------------------------------------
// priorsim

struct PriorsimArgs {
  std::string prior;
  std::size_t records = 500;
  std::size_t draws = 10000;
  fs::path out;
  std::uint64_t seed = 1;
  bool fixed = false;
};

int cmd_priorsim(const PriorsimArgs& a) {
  if (a.records < 1) throw ConfigError("--I", "must be at least 1");
  if (a.draws < 1) throw ConfigError("--draws", "must be at least 1");
  const PriorBlock block = parse_prior(json_argument(a.prior, "--prior"), "--prior");
  const PriorSpec spec = block.build(a.records);
  Rng rng(a.seed);
  std::map<int, long> hist;
  for (std::size_t d = 0; d < a.draws; ++d) {
    const PriorDraw draw = prior_sample(spec, a.records, rng, a.fixed ? HyperMode::Fixed : HyperMode::FromHyperprior);
    ++hist[draw.xi.allelic()[1]];
  }
  std::ostringstream os;
  os << "singletons,count,fraction\n";
  for (const auto& [s, c] : hist)
    os << s << ',' << c << ',' << format_double(static_cast<double>(c) / static_cast<double>(a.draws)) << '\n';
  write_text(a.out, os.str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian record linkage with profile and network data"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a replica profile dataset with a latent-distance network");
  g->add_option("--scenario", gen.scenario, "1, 2 or custom")->required();
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--beta", gen.beta, "Network intercept (custom)");
  g->add_option("--sigma2", gen.sigma2, "Latent position variance (custom)");
  g->add_option("--K", gen.dim, "Latent dimension (custom)");
  g->add_option("--entities", gen.entities, "Number of entities");
  g->add_option("--duplicated", gen.duplicated, "Entities recorded twice");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Run the sampler and write draws, traces and a run manifest");
  f->add_option("--config", fit.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  f->add_option("--data", fit.data, "Dataset directory")->required();
  f->add_option("--out", fit.out, "Output directory")->required();
  f->add_option("--chains", fit.chains, "Independent chains to run and merge");
  f->add_option("--seed", fit.seed, "Override sampler.seed");
  f->add_flag("--quiet", fit.quiet, "No progress output");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Point-estimate a chain and score it against the truth");
  e->add_option("--chain", ev.chain, "Output directory of fit")->required();
  e->add_option("--truth", ev.truth, "truth.csv")->required();
  e->add_option("--out", ev.out, "Report CSV")->required();

  PriorsimArgs ps;
  auto* p = app.add_subcommand("priorsim", "Histogram of singleton counts under a partition prior");
  p->add_option("--prior", ps.prior, "Prior block as JSON text or a JSON file")->required();
  p->add_option("--I", ps.records, "Number of records");
  p->add_option("--draws", ps.draws, "Number of prior draws");
  p->add_option("--out", ps.out, "Histogram CSV")->required();
  p->add_option("--seed", ps.seed, "Random seed");
  p->add_flag("--fixed-hypers", ps.fixed, "Hold prior parameters at their configured values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kConfig;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*f) return cmd_fit(fit);
    if (*e) return cmd_evaluate(ev);
    if (*p) return cmd_priorsim(ps);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfig;
  } catch (const ElicitationError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfig;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}
