#pragma once

// Experiment sweeps: capacity, class-count and anneal-length grids over
// several seeds, with resumable CSV results and bootstrap t-tests.

#include "jvae/config.hpp"
#include "jvae/data.hpp"
#include "jvae/metrics.hpp"
#include "jvae/model.hpp"
#include "jvae/objectives.hpp"
#include "jvae/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace jvae {

enum class Experiment { capacity_sweep, class_sweep, anneal_sweep, single_run };
enum class Method { jointvae_arch, jointvae_loss, jointvae_hinge, vae_kmeans, pca_kmeans };

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);
std::string to_string(Method m);
Method method_from_string(const std::string& s);

/// Synthetic data unless `path` is set; `path` is either a dataset cache file
/// or a directory of matrix CSVs plus metadata.csv.
struct DataSource {
  SyntheticConfig synthetic;
  std::filesystem::path path;
  std::string pattern = "*.csv";
  bool include_diagonal = false;
  /// Synthetic data for run seed s uses synthetic.seed + s, so every seed
  /// sees a fresh draw of the generator.
  bool reseed_per_run = true;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::single_run;
  DataSource data;
  ModelConfig model;
  TrainConfig train;
  ObjectiveSpec objective;
  /// When set, train.anneal_iters = max(1, round(fraction * total iterations)).
  std::optional<double> anneal_fraction;

  std::vector<std::uint64_t> seeds;
  Method method = Method::jointvae_arch;  ///< single_run only
  std::vector<Method> methods;            ///< class_sweep

  std::vector<double> capacities;  ///< C_c grid
  double capacity_beta = 100.0;
  Index capacity_classes = 25;     ///< K for the capacity sweep; C_d = log K
  std::vector<Index> class_grid;
  std::vector<double> anneal_fractions;

  Index pca_dim = 0;  ///< 0 ties the PCA dimension to model.z_c_dim
  int bootstrap_resamples = 1000;
  int jobs = 1;
  std::filesystem::path out = "out";
  bool save_checkpoints = true;
  bool verbose = true;

  /// Desk-scale defaults (D = 300 synthetic data, small networks).
  static ExperimentConfig desk();
  void validate() const;
};

/// 2500 epochs, batch 512, 5000 anneal iterations and the full-size network.
void apply_paper_scale(ExperimentConfig& cfg);

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Starts from `desk()` and overrides whatever keys are present.
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ResultRow {
  std::string experiment;
  Method method = Method::jointvae_arch;
  Index k_classes = 0;
  std::optional<double> capacity_c;
  std::int64_t anneal_iters = 0;
  std::uint64_t seed = 0;
  double ari = 0.0;
  double homogeneity = 0.0;
  double boot_mean = 0.0;
  double boot_sd = 0.0;
  double boot_lo = 0.0;
  double boot_hi = 0.0;
  std::optional<double> kl_d_final;  ///< last training-log kl_d; absent for baselines
  int effective_classes = 0;

  /// Identity of the run: one row per (experiment, method, grid point, seed).
  std::string key() const;
  /// Directory name for per-run artifacts.
  std::string slug() const;
};

inline constexpr const char* kResultsSchema = "# jvae-results schema=1";

std::string results_header();
std::string format_row(const ResultRow& r);
ResultRow parse_row(const std::string& line);
/// Empty when the file does not exist. Throws ConfigError on a schema mismatch.
std::vector<ResultRow> read_results(const std::filesystem::path& path);
void write_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path);

struct TTestRow {
  Index k = 0;
  Method method_a = Method::jointvae_arch;
  Method method_b = Method::jointvae_arch;
  std::optional<std::uint64_t> seed;  ///< empty for the test pooled over seeds
  double mean_a = 0.0;
  double mean_b = 0.0;
  TTestResult test;
};

struct SweepOutput {
  std::vector<ResultRow> rows;  ///< in grid order
  std::vector<TTestRow> ttests;
  int resumed = 0;              ///< rows taken from an existing results.csv
};

/// Loads the dataset for one run seed.
ConnectomeDataset load_data(const DataSource& src, std::uint64_t seed);

/// Runs cfg.experiment. Writes results.csv, ttests.json (class sweep) and
/// per-run artifacts under cfg.out/runs/.
SweepOutput run_experiment(const ExperimentConfig& cfg);

SweepOutput run_capacity_sweep(ExperimentConfig cfg);
SweepOutput run_class_sweep(ExperimentConfig cfg);
SweepOutput run_anneal_sweep(ExperimentConfig cfg);

/// Welch tests of the arch-anneal bootstrap ARI against every other method at
/// each k where both exist: one per seed and one pooled over seeds.
std::vector<TTestRow> bootstrap_ttests(const std::vector<ResultRow>& rows, const std::filesystem::path& out);
void write_ttests(const std::vector<TTestRow>& tests, const std::filesystem::path& path);

/// latents.csv (subject_id, z_c..., assignment, true_site) and latents_2d.csv
/// (PCA of z_c onto two axes).
void export_latents(const std::filesystem::path& checkpoint, const ConnectomeDataset& ds,
                    const std::filesystem::path& out_dir);

/// Median summary per (experiment, method, grid point). Written to
/// summary.csv and returned as text.
std::string report(const std::filesystem::path& out_dir);

}  // namespace jvae
