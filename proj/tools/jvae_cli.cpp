// jvae: synthetic data, ingestion, training, sweeps, latent export, reports.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical abort,
// 4 ingestion error.

#include "jvae/harness.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace jvae;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> jobs;
  bool paper_scale = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_jobs) {
  cmd->add_option("--config", f.config, "JSON experiment config (missing keys keep desk defaults)");
  cmd->add_option("--seed", f.seed, "Run a single seed instead of the configured list");
  cmd->add_option("--out", f.out, "Output directory");
  if (with_jobs) cmd->add_option("--jobs", f.jobs, "Parallel runs")->check(CLI::PositiveNumber);
  cmd->add_flag("--paper-scale", f.paper_scale, "2500 epochs, batch 512, 5000 anneal iterations, full network");
}

ExperimentConfig resolve(const CommonFlags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig::desk() : load_experiment_config(f.config);
  if (f.paper_scale) apply_paper_scale(cfg);
  if (f.seed) cfg.seeds = {*f.seed};
  if (!f.out.empty()) cfg.out = f.out;
  if (f.jobs) cfg.jobs = *f.jobs;
  return cfg;
}

void print_dataset(const ConnectomeDataset& ds, const fs::path& path) {
  std::cout << "wrote " << path.string() << ": " << ds.size() << " subjects, " << ds.dim() << " features, "
            << ds.n_sites << " sites (site variance ratio " << site_variance_ratio(ds) << ")\n";
}

void print_rows(const SweepOutput& out, const fs::path& dir) {
  for (const auto& r : out.rows) std::cout << format_row(r) << '\n';
  std::cout << out.rows.size() << " rows (" << out.resumed << " resumed) in " << (dir / "results.csv").string()
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint continuous/discrete VAE experiments"};
  app.require_subcommand(1);

  CommonFlags gen_f;
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset cache");
  add_common(gen, gen_f, false);

  std::string ingest_input, ingest_pattern = "*.csv", ingest_out = "out";
  bool ingest_diag = false;
  auto* ing = app.add_subcommand("ingest", "Read a directory of connectome CSVs into a dataset cache");
  ing->add_option("--input", ingest_input, "Directory with metadata.csv and one matrix CSV per subject")->required();
  ing->add_option("--pattern", ingest_pattern, "Glob for matrix files");
  ing->add_flag("--include-diagonal", ingest_diag, "Keep the matrix diagonal");
  ing->add_option("--out", ingest_out, "Output directory");

  CommonFlags train_f;
  std::string train_method;
  auto* trn = app.add_subcommand("train", "Train one model per seed");
  add_common(trn, train_f, true);
  trn->add_option("--method", train_method, "jointvae_arch, jointvae_loss, jointvae_hinge, vae_kmeans, pca_kmeans");

  CommonFlags cap_f, cls_f, ann_f;
  auto* cap = app.add_subcommand("sweep-capacity", "Hinge objective over the C_c grid");
  add_common(cap, cap_f, true);
  auto* cls = app.add_subcommand("sweep-classes", "All methods over the class-count grid, with t-tests");
  add_common(cls, cls_f, true);
  auto* ann = app.add_subcommand("sweep-anneal", "Architectural annealing over anneal-length fractions");
  add_common(ann, ann_f, true);

  CommonFlags exp_f;
  std::string exp_checkpoint, exp_data;
  auto* exp = app.add_subcommand("export-latents", "Write latents.csv and latents_2d.csv for a checkpoint");
  add_common(exp, exp_f, false);
  exp->add_option("--checkpoint", exp_checkpoint, "Model checkpoint (.lfck)")->required();
  exp->add_option("--data", exp_data, "Dataset cache or matrix directory (default: the config's data source)");

  std::string report_out = "out";
  auto* rep = app.add_subcommand("report", "Summarize results.csv and ttests.json");
  rep->add_option("--out", report_out, "Directory holding results.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = resolve(gen_f);
      SyntheticConfig sc = cfg.data.synthetic;
      if (gen_f.seed) sc.seed = *gen_f.seed;
      const ConnectomeDataset ds = generate(sc);
      fs::create_directories(cfg.out);
      const fs::path path = cfg.out / "dataset.lfds";
      save_dataset(ds, path);
      print_dataset(ds, path);
    } else if (ing->parsed()) {
      const ConnectomeDataset ds = load_matrix_dir(ingest_input, ingest_pattern, ingest_diag);
      fs::create_directories(ingest_out);
      const fs::path path = fs::path(ingest_out) / "dataset.lfds";
      save_dataset(ds, path);
      print_dataset(ds, path);
    } else if (trn->parsed()) {
      ExperimentConfig cfg = resolve(train_f);
      cfg.experiment = Experiment::single_run;
      if (!train_method.empty()) cfg.method = method_from_string(train_method);
      if (!train_f.seed && train_f.config.empty()) cfg.seeds = {1};
      print_rows(run_experiment(cfg), cfg.out);
    } else if (cap->parsed()) {
      ExperimentConfig cfg = resolve(cap_f);
      print_rows(run_capacity_sweep(cfg), cfg.out);
    } else if (cls->parsed()) {
      ExperimentConfig cfg = resolve(cls_f);
      const SweepOutput out = run_class_sweep(cfg);
      print_rows(out, cfg.out);
      std::cout << out.ttests.size() << " t-tests in " << (cfg.out / "ttests.json").string() << '\n';
    } else if (ann->parsed()) {
      ExperimentConfig cfg = resolve(ann_f);
      print_rows(run_anneal_sweep(cfg), cfg.out);
    } else if (exp->parsed()) {
      ExperimentConfig cfg = resolve(exp_f);
      if (!exp_data.empty()) cfg.data.path = exp_data;
      const ConnectomeDataset ds = load_data(cfg.data, cfg.seeds.front());
      export_latents(exp_checkpoint, ds, cfg.out);
      std::cout << "wrote " << (cfg.out / "latents.csv").string() << " and " << (cfg.out / "latents_2d.csv").string()
                << " (" << ds.size() << " rows)\n";
    } else if (rep->parsed()) {
      std::cout << report(report_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
