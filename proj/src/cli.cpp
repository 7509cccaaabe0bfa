#include "eviplan/cli.hpp"

#include <atomic>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "eviplan/config.hpp"
#include "eviplan/evidential.hpp"
#include "eviplan/rng.hpp"
#include "eviplan/sim.hpp"

namespace eviplan::cli {

namespace fs = std::filesystem;

namespace {

struct BatchOptions {
  std::string config_path;
  std::string output_dir = ".";
  std::optional<uint64_t> seed;
  std::optional<int> repeats;
  int jobs = 1;
  bool to_stdout = false;
};

void add_batch_options(CLI::App* cmd, BatchOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "Scenario config file")->required();
  cmd->add_option("-o,--out", o.output_dir, "Output directory")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Base seed (overrides EVIPLAN_SEED and the config)");
  cmd->add_option("--repeats", o.repeats, "Seeds per variant (overrides the config)");
  cmd->add_option("-j,--jobs", o.jobs, "Worker threads for independent runs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("--stdout", o.to_stdout, "Also print the summary CSV to standard output");
}

uint64_t resolve_seed(const std::optional<uint64_t>& flag, uint64_t config_seed) {
  if (flag) return *flag;
  if (const char* env = std::getenv("EVIPLAN_SEED")) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*env == '\0' || *end != '\0' || errno == ERANGE)
      throw config::ConfigError(std::string("EVIPLAN_SEED is not an unsigned integer: '") + env +
                                "'");
    return static_cast<uint64_t>(v);
  }
  return config_seed;
}

std::string sanitize(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '_' || c == '-';
    if (!ok) c = '_';
  }
  return out;
}

struct Variant {
  std::string label;
  sim::Scenario scenario;
};

/// Runs every (variant, seed) pair, parallel up to `jobs` threads. Results
/// come back in a fixed task order so downstream output is identical no
/// matter how the workers interleave.
std::vector<sim::RunMetrics> run_batch(const std::vector<Variant>& variants, uint64_t base_seed,
                                       int repeats, int jobs) {
  struct Task {
    int variant;
    uint64_t seed;
  };
  std::vector<Task> tasks;
  for (int v = 0; v < static_cast<int>(variants.size()); ++v)
    for (int r = 0; r < repeats; ++r) tasks.push_back({v, base_seed + static_cast<uint64_t>(r)});

  std::vector<sim::RunMetrics> results(tasks.size());
  std::atomic<size_t> next{0};
  std::atomic<size_t> done{0};
  std::mutex log_mutex;
  std::exception_ptr first_error;

  auto worker = [&] {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      const Variant& var = variants[static_cast<size_t>(task.variant)];
      try {
        results[i] = sim::run_scenario(var.scenario, task.seed);
        results[i].policy = var.label;
        const size_t finished = done.fetch_add(1) + 1;
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cerr << "[" << finished << "/" << tasks.size() << "] " << var.label
                  << " seed=" << task.seed << (results[i].failed ? "  (diverged)" : "") << "\n";
      } catch (...) {
        std::lock_guard<std::mutex> lock(log_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(tasks.size());  // stop handing out work
        return;
      }
    }
  };

  const int n_threads = std::min<int>(jobs, static_cast<int>(tasks.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& emit) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  emit(out);
  out.flush();
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

int run_variants(const BatchOptions& opts, const config::ScenarioSpec& spec,
                 const std::vector<Variant>& variants,
                 const std::vector<std::string>& extra_comments) {
  const uint64_t base_seed = resolve_seed(opts.seed, spec.seed);
  const int repeats = opts.repeats.value_or(spec.repeats);
  if (repeats < 1) throw config::ConfigError("config: invalid value for 'repeats': must be at least 1");

  // Hash the effective document (after seed/repeats overrides) so the
  // metadata line identifies what actually ran.
  config::ScenarioSpec effective = spec;
  effective.seed = base_seed;
  effective.repeats = repeats;
  const sim::CsvMeta meta{base_seed, config::config_hash(effective), sim::kArtifactVersion};

  const auto results = run_batch(variants, base_seed, repeats, opts.jobs);

  const fs::path out_dir(opts.output_dir);
  fs::create_directories(out_dir);
  for (const auto& run : results) {
    const fs::path path = out_dir / (sanitize(run.scenario) + "_" + sanitize(run.policy) +
                                     "_seed" + std::to_string(run.seed) + ".csv");
    write_file(path, [&](std::ostream& os) { sim::write_run_csv(os, run, meta); });
  }

  const auto summary = sim::aggregate(results);
  const fs::path summary_path = out_dir / (sanitize(spec.name) + "_summary.csv");
  write_file(summary_path,
             [&](std::ostream& os) { sim::write_summary_csv(os, summary, meta, extra_comments); });
  if (opts.to_stdout) sim::write_summary_csv(std::cout, summary, meta, extra_comments);

  int diverged = 0;
  for (const auto& run : results) diverged += run.failed ? 1 : 0;
  std::cerr << results.size() << " runs, " << diverged << " diverged; summary written to "
            << summary_path.string() << "\n";
  return 0;
}

int cmd_run(const BatchOptions& opts) {
  const auto spec = config::parse_file(opts.config_path);
  const sim::Scenario sc = spec.to_scenario();
  return run_variants(opts, spec, {{sim::policy_name(sc.yaw_policy), sc}}, {});
}

int cmd_compare(const BatchOptions& opts) {
  const auto spec = config::parse_file(opts.config_path);
  std::vector<Variant> variants;
  for (auto policy : {planner::YawPolicy::kConstant, planner::YawPolicy::kForward,
                      planner::YawPolicy::kPerceptionAware}) {
    config::ScenarioSpec variant_spec = spec;
    variant_spec.yaw_policy = policy;
    variants.push_back({sim::policy_name(policy), variant_spec.to_scenario()});
  }
  return run_variants(opts, spec, variants, {});
}

int cmd_ablate(const BatchOptions& opts) {
  const auto spec = config::parse_file(opts.config_path);
  struct Row {
    const char* label;
    bool weighting, rejection, filter;
  };
  const Row rows[] = {
      {"vanilla", false, false, false},
      {"weighting", true, false, false},
      {"weighting_rejection", true, true, false},
      {"weighting_rejection_filter", true, true, true},
  };
  std::vector<Variant> variants;
  std::vector<std::string> comments;
  for (const Row& row : rows) {
    config::ScenarioSpec variant_spec = spec;
    variant_spec.yaw_policy = planner::YawPolicy::kPerceptionAware;
    auto& flags = variant_spec.planner.ablation;
    flags.entropy_weighting = row.weighting;
    flags.entropy_rejection = row.rejection;
    flags.correspondence_filter = row.filter;
    variants.push_back({row.label, variant_spec.to_scenario()});
    std::ostringstream c;
    c << "variant=" << row.label << " entropy_weighting=" << (row.weighting ? "true" : "false")
      << " entropy_rejection=" << (row.rejection ? "true" : "false")
      << " correspondence_filter=" << (row.filter ? "true" : "false");
    comments.push_back(c.str());
  }
  return run_variants(opts, spec, variants, comments);
}

struct UncertaintyOptions {
  BatchOptions batch;
  int n_images = 60;
  int pixels = 200;
};

int cmd_uncertainty(const UncertaintyOptions& opts) {
  const auto spec = config::parse_file(opts.batch.config_path);
  const sim::Scenario sc = spec.to_scenario();
  const uint64_t seed = resolve_seed(opts.batch.seed, spec.seed);

  config::ScenarioSpec effective = spec;
  effective.seed = seed;
  const sim::CsvMeta meta{seed, config::config_hash(effective), sim::kArtifactVersion};

  Rng rng(seed);
  const auto study = sim::uncertainty_study(sc.cam, sc.field, opts.n_images, opts.pixels, rng);

  const fs::path out_dir(opts.batch.output_dir);
  fs::create_directories(out_dir);
  const fs::path path = out_dir / (sanitize(spec.name) + "_uncertainty.csv");
  write_file(path, [&](std::ostream& os) { sim::write_uncertainty_csv(os, study, meta); });
  if (opts.batch.to_stdout) sim::write_uncertainty_csv(std::cout, study, meta);
  std::cerr << study.total_samples << " samples binned; table written to " << path.string()
            << "\n";
  return 0;
}

struct FitDemoOptions {
  std::string output_dir = ".";
  std::optional<uint64_t> seed;
  int samples = 2000;
  int bins = 8;
  int iters = 2500;
  double rho = 0.01;
  bool to_stdout = false;
};

/// Small end-to-end check of the evidential head: fit per-bin NIG parameters
/// to y = x^3 + N(0, 3) and dump the recovered moments, mirroring the classic
/// 1-D regression demo.
int cmd_fit_demo(const FitDemoOptions& opts) {
  const uint64_t seed = resolve_seed(opts.seed, 1);
  Rng rng(seed);
  std::vector<double> xs(static_cast<size_t>(opts.samples));
  std::vector<double> vs(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    xs[i] = rng.uniform(-4.0, 4.0);
    vs[i] = xs[i] * xs[i] * xs[i] + 3.0 * rng.normal();
  }

  evidential::EvidentialLossConfig loss_cfg;
  loss_cfg.rho = opts.rho;
  evidential::ToyFitOptions fit_opts;
  fit_opts.iters = opts.iters;
  fit_opts.n_bins = opts.bins;
  fit_opts.seed = seed;
  const auto fits = evidential::fit_toy_dataset(xs, vs, loss_cfg, fit_opts);

  std::ostringstream doc;
  doc << "fit-demo samples=" << opts.samples << " bins=" << opts.bins << " iters=" << opts.iters
      << " rho=" << opts.rho;
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config::fnv1a(doc.str())));
  const sim::CsvMeta meta{seed, hash, sim::kArtifactVersion};

  auto emit = [&](std::ostream& os) {
    os << "# seed=" << meta.seed << " config=" << meta.config_hash << " version=" << meta.version
       << "\n";
    os << "bin_lo,bin_hi,count,gamma,lambda,alpha,beta,prediction,aleatoric,epistemic,entropy\n";
    char buf[512];
    for (const auto& fit : fits) {
      const auto& p = fit.params;
      std::snprintf(buf, sizeof buf,
                    "%.10g,%.10g,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", fit.bin_lo,
                    fit.bin_hi, fit.count, p.gamma, p.lambda, p.alpha, p.beta, p.prediction(),
                    p.aleatoric(), p.epistemic(), fit.entropy);
      os << buf;
    }
  };

  const fs::path out_dir(opts.output_dir);
  fs::create_directories(out_dir);
  const fs::path path = out_dir / "fit_demo.csv";
  write_file(path, emit);
  if (opts.to_stdout) emit(std::cout);
  std::cerr << fits.size() << " bins fitted; table written to " << path.string() << "\n";
  return 0;
}

int cmd_validate(const std::string& config_path, bool to_stdout) {
  const auto spec = config::parse_file(config_path);
  spec.to_scenario();  // full build catches anything the parser alone cannot
  if (to_stdout) std::cout << config::serialize(spec);
  std::cerr << "config valid: name=" << spec.name << " hash=" << config::config_hash(spec)
            << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Perception-aware trajectory planning simulator"};
  app.require_subcommand(1);

  BatchOptions run_opts, compare_opts, ablate_opts;
  add_batch_options(app.add_subcommand("run", "Run one scenario with its configured yaw policy"),
                    run_opts);
  add_batch_options(
      app.add_subcommand("compare", "Run constant, forward, and perception_aware on paired seeds"),
      compare_opts);
  add_batch_options(
      app.add_subcommand("ablate", "Sweep the planner ablation grid on paired seeds"),
      ablate_opts);

  UncertaintyOptions unc_opts;
  auto* unc = app.add_subcommand("uncertainty",
                                 "Bin simulated regression error against reported uncertainty");
  add_batch_options(unc, unc_opts.batch);
  unc->add_option("--images", unc_opts.n_images, "Number of camera poses on the survey circle")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  unc->add_option("--pixels", unc_opts.pixels, "Pixels sampled per image")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  FitDemoOptions fit_opts;
  auto* fit = app.add_subcommand("fit-demo", "Fit NIG heads to a cubic toy dataset");
  fit->add_option("-o,--out", fit_opts.output_dir, "Output directory")->capture_default_str();
  fit->add_option("--seed", fit_opts.seed, "Seed (overrides EVIPLAN_SEED)");
  fit->add_option("--samples", fit_opts.samples, "Dataset size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit->add_option("--bins", fit_opts.bins, "Independent NIG heads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit->add_option("--iters", fit_opts.iters, "Gradient steps per head")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit->add_option("--rho", fit_opts.rho, "Evidence regularizer weight")->capture_default_str();
  fit->add_flag("--stdout", fit_opts.to_stdout, "Also print the table to standard output");

  std::string validate_path;
  bool validate_stdout = false;
  auto* validate = app.add_subcommand("validate-config", "Parse and check a config file");
  validate->add_option("-c,--config", validate_path, "Scenario config file")->required();
  validate->add_flag("--stdout", validate_stdout,
                     "Print the canonical serialization to standard output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand("run")) return cmd_run(run_opts);
    if (app.got_subcommand("compare")) return cmd_compare(compare_opts);
    if (app.got_subcommand("ablate")) return cmd_ablate(ablate_opts);
    if (app.got_subcommand("uncertainty")) return cmd_uncertainty(unc_opts);
    if (app.got_subcommand("fit-demo")) return cmd_fit_demo(fit_opts);
    if (app.got_subcommand("validate-config")) return cmd_validate(validate_path, validate_stdout);
  } catch (const config::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace eviplan::cli
