#include "jvae/harness.hpp"

#include "jvae/baselines.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace jvae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::pair<Experiment, const char*>> kExperimentNames = {
    {Experiment::capacity_sweep, "capacity_sweep"},
    {Experiment::class_sweep, "class_sweep"},
    {Experiment::anneal_sweep, "anneal_sweep"},
    {Experiment::single_run, "single_run"}};

const std::vector<std::pair<Method, const char*>> kMethodNames = {
    {Method::jointvae_arch, "jointvae_arch"},
    {Method::jointvae_loss, "jointvae_loss"},
    {Method::jointvae_hinge, "jointvae_hinge"},
    {Method::vae_kmeans, "vae_kmeans"},
    {Method::pca_kmeans, "pca_kmeans"}};

template <typename E>
std::string name_of(const std::vector<std::pair<E, const char*>>& table, E e) {
  for (const auto& [v, n] : table) {
    if (v == e) return n;
  }
  throw ContractError("unnamed enum value");
}

template <typename E>
E parse_name(const std::vector<std::pair<E, const char*>>& table, const std::string& s, const char* what) {
  for (const auto& [v, n] : table) {
    if (s == n) return v;
  }
  std::string known;
  for (const auto& [v, n] : table) known += std::string(known.empty() ? "" : ", ") + n;
  throw ConfigError(std::string("unknown ") + what + " '" + s + "' (expected one of: " + known + ")");
}

bool is_jointvae(Method m) {
  return m == Method::jointvae_arch || m == Method::jointvae_loss || m == Method::jointvae_hinge;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string to_string(Experiment e) { return name_of(kExperimentNames, e); }
Experiment experiment_from_string(const std::string& s) { return parse_name(kExperimentNames, s, "experiment"); }
std::string to_string(Method m) { return name_of(kMethodNames, m); }
Method method_from_string(const std::string& s) { return parse_name(kMethodNames, s, "method"); }

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig c;
  c.data.synthetic.n_subjects = 800;
  c.data.synthetic.n_edges = 300;
  c.data.synthetic.n_sites = 8;
  c.data.synthetic.bio_rank = 4;
  c.data.synthetic.site_strength = 1.4;
  c.data.synthetic.noise_sd = 0.1;

  c.model.input_dim = 300;
  c.model.hidden_dims = {128, 64};
  c.model.z_c_dim = 4;
  c.model.k_classes = 8;

  c.train.epochs = 200;
  c.train.batch_size = 64;
  c.train.learning_rate = 1e-3;
  c.anneal_fraction = 1.0 / 7.0;

  c.objective.mode = ObjectiveMode::arch_anneal;
  c.objective.beta = 0.01;

  for (std::uint64_t s = 1; s <= 10; ++s) c.seeds.push_back(s);
  c.methods = {Method::jointvae_arch, Method::jointvae_loss, Method::vae_kmeans, Method::pca_kmeans};
  c.capacities = {50.0, 500.0, 2000.0};
  c.class_grid = {5, 10, 15, 20, 25};
  for (int i = 1; i <= 7; ++i) c.anneal_fractions.push_back(i / 7.0);
  return c;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment: seeds must not be empty");
  if (jobs < 1) throw ConfigError("experiment: jobs must be >= 1");
  if (bootstrap_resamples < 1) throw ConfigError("experiment: bootstrap_resamples must be >= 1");
  if (out.empty()) throw ConfigError("experiment: output directory must be set");
  if (anneal_fraction && !(*anneal_fraction > 0.0 && *anneal_fraction <= 1.0)) {
    throw ConfigError("experiment: anneal_fraction must be in (0, 1]");
  }
  if (pca_dim < 0) throw ConfigError("experiment: pca_dim must be >= 0");
  model.validate();
  if (data.path.empty()) data.synthetic.validate();
  switch (experiment) {
    case Experiment::capacity_sweep:
      if (capacities.empty()) throw ConfigError("capacity sweep: capacities must not be empty");
      if (capacity_classes < 2) throw ConfigError("capacity sweep: capacity_classes must be >= 2");
      for (double c : capacities) {
        if (c < 0.0) throw ConfigError("capacity sweep: capacities must be >= 0");
      }
      break;
    case Experiment::class_sweep:
      if (class_grid.empty()) throw ConfigError("class sweep: class_grid must not be empty");
      if (methods.empty()) throw ConfigError("class sweep: methods must not be empty");
      for (Index k : class_grid) {
        if (k < 1) throw ConfigError("class sweep: class counts must be >= 1");
      }
      break;
    case Experiment::anneal_sweep:
      if (anneal_fractions.empty()) throw ConfigError("anneal sweep: anneal_fractions must not be empty");
      for (double f : anneal_fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("anneal sweep: fractions must be in (0, 1]");
      }
      break;
    case Experiment::single_run:
      break;
  }
}

void apply_paper_scale(ExperimentConfig& cfg) {
  cfg.train.epochs = 2500;
  cfg.train.batch_size = 512;
  cfg.train.anneal_iters = 5000;
  cfg.train.learning_rate = 1e-4;
  cfg.anneal_fraction.reset();
  cfg.model.hidden_dims = {1024, 512, 256, 128};
  cfg.model.z_c_dim = 32;
  cfg.model.k_classes = 25;
}

void to_json(json& j, const ExperimentConfig& c) {
  json data = {{"synthetic", c.data.synthetic},
               {"path", c.data.path.string()},
               {"pattern", c.data.pattern},
               {"include_diagonal", c.data.include_diagonal},
               {"reseed_per_run", c.data.reseed_per_run}};
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(to_string(m));
  j = json{{"experiment", to_string(c.experiment)},
           {"data", data},
           {"model", c.model},
           {"train", c.train},
           {"objective", c.objective},
           {"anneal_fraction", c.anneal_fraction ? json(*c.anneal_fraction) : json(nullptr)},
           {"seeds", c.seeds},
           {"method", to_string(c.method)},
           {"methods", methods},
           {"capacities", c.capacities},
           {"capacity_beta", c.capacity_beta},
           {"capacity_classes", c.capacity_classes},
           {"class_grid", c.class_grid},
           {"anneal_fractions", c.anneal_fractions},
           {"pca_dim", c.pca_dim},
           {"bootstrap_resamples", c.bootstrap_resamples},
           {"jobs", c.jobs},
           {"out", c.out.string()},
           {"save_checkpoints", c.save_checkpoints},
           {"verbose", c.verbose}};
}

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

void from_json(const json& j, ExperimentConfig& c) {
  reject_unknown_keys(j,
                      {"experiment", "data", "model", "train", "objective", "anneal_fraction", "seeds", "method",
                       "methods", "capacities", "capacity_beta", "capacity_classes", "class_grid",
                       "anneal_fractions", "pca_dim", "bootstrap_resamples", "jobs", "out", "save_checkpoints",
                       "verbose"},
                      "experiment config");
  if (j.contains("experiment")) c.experiment = experiment_from_string(j.at("experiment").get<std::string>());
  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown_keys(d, {"synthetic", "path", "pattern", "include_diagonal", "reseed_per_run"}, "data");
    read_key(d, "synthetic", c.data.synthetic);
    if (d.contains("path")) c.data.path = d.at("path").get<std::string>();
    read_key(d, "pattern", c.data.pattern);
    read_key(d, "include_diagonal", c.data.include_diagonal);
    read_key(d, "reseed_per_run", c.data.reseed_per_run);
  }
  read_key(j, "model", c.model);
  read_key(j, "train", c.train);
  read_key(j, "objective", c.objective);
  if (j.contains("anneal_fraction")) {
    if (j.at("anneal_fraction").is_null()) {
      c.anneal_fraction.reset();
    } else {
      double f = 0.0;
      read_key(j, "anneal_fraction", f);
      c.anneal_fraction = f;
    }
  }
  read_key(j, "seeds", c.seeds);
  if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
  }
  read_key(j, "capacities", c.capacities);
  read_key(j, "capacity_beta", c.capacity_beta);
  read_key(j, "capacity_classes", c.capacity_classes);
  read_key(j, "class_grid", c.class_grid);
  read_key(j, "anneal_fractions", c.anneal_fractions);
  read_key(j, "pca_dim", c.pca_dim);
  read_key(j, "bootstrap_resamples", c.bootstrap_resamples);
  read_key(j, "jobs", c.jobs);
  if (j.contains("out")) c.out = j.at("out").get<std::string>();
  read_key(j, "save_checkpoints", c.save_checkpoints);
  read_key(j, "verbose", c.verbose);
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig c = ExperimentConfig::desk();
  from_json(j, c);
  return c;
}

// ---------------------------------------------------------------------------
// Result rows

std::string ResultRow::key() const {
  return experiment + '|' + to_string(method) + '|' + std::to_string(k_classes) + '|' +
         (capacity_c ? fmt(*capacity_c) : std::string("-")) + '|' + std::to_string(anneal_iters) + '|' +
         std::to_string(seed);
}

std::string ResultRow::slug() const {
  std::string s = to_string(method) + "_k" + std::to_string(k_classes);
  if (capacity_c) s += "_cc" + fmt(*capacity_c);
  if (anneal_iters > 0) s += "_T" + std::to_string(anneal_iters);
  s += "_s" + std::to_string(seed);
  return experiment + "/" + s;
}

std::string results_header() {
  return "experiment,method,k_classes,capacity_c,anneal_iters,seed,ari,homogeneity,boot_mean,boot_sd,boot_lo,"
         "boot_hi,kl_d_final,effective_classes";
}

std::string format_row(const ResultRow& r) {
  std::ostringstream os;
  os << r.experiment << ',' << to_string(r.method) << ',' << r.k_classes << ','
     << (r.capacity_c ? fmt(*r.capacity_c) : "") << ',' << r.anneal_iters << ',' << r.seed << ',' << fmt(r.ari)
     << ',' << fmt(r.homogeneity) << ',' << fmt(r.boot_mean) << ',' << fmt(r.boot_sd) << ',' << fmt(r.boot_lo)
     << ',' << fmt(r.boot_hi) << ',' << (r.kl_d_final ? fmt(*r.kl_d_final) : "") << ','
     << r.effective_classes;
  return os.str();
}

ResultRow parse_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  if (f.size() != 14) {
    throw ConfigError("results row has " + std::to_string(f.size()) + " fields, expected 14: " + line);
  }
  try {
    ResultRow r;
    r.experiment = f[0];
    r.method = method_from_string(f[1]);
    r.k_classes = std::stoll(f[2]);
    if (!f[3].empty()) r.capacity_c = std::stod(f[3]);
    r.anneal_iters = std::stoll(f[4]);
    r.seed = std::stoull(f[5]);
    r.ari = std::stod(f[6]);
    r.homogeneity = std::stod(f[7]);
    r.boot_mean = std::stod(f[8]);
    r.boot_sd = std::stod(f[9]);
    r.boot_lo = std::stod(f[10]);
    r.boot_hi = std::stod(f[11]);
    if (!f[12].empty()) r.kl_d_final = std::stod(f[12]);
    r.effective_classes = std::stoi(f[13]);
    return r;
  } catch (const std::logic_error& e) {
    throw ConfigError("malformed results row '" + line + "': " + e.what());
  }
}

std::vector<ResultRow> read_results(const fs::path& path) {
  std::vector<ResultRow> rows;
  std::ifstream is(path);
  if (!is) return rows;
  std::string line;
  if (!std::getline(is, line)) return rows;
  if (line != kResultsSchema) {
    throw ConfigError(path.string() + ": unexpected schema line '" + line + "' (expected '" + kResultsSchema + "')");
  }
  if (!std::getline(is, line) || line != results_header()) {
    throw ConfigError(path.string() + ": unexpected column header");
  }
  while (std::getline(is, line)) {
    if (!line.empty()) rows.push_back(parse_row(line));
  }
  return rows;
}

void write_results(const std::vector<ResultRow>& rows, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw ConfigError("cannot write " + tmp.string());
    os << kResultsSchema << '\n' << results_header() << '\n';
    for (const auto& r : rows) os << format_row(r) << '\n';
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Data

ConnectomeDataset load_data(const DataSource& src, std::uint64_t seed) {
  if (src.path.empty()) {
    SyntheticConfig sc = src.synthetic;
    if (src.reseed_per_run) sc.seed += seed;
    return generate(sc);
  }
  if (!fs::exists(src.path)) throw IngestionError("data path " + src.path.string() + " does not exist");
  if (fs::is_directory(src.path)) return load_matrix_dir(src.path, src.pattern, src.include_diagonal);
  return load_dataset(src.path);
}

// ---------------------------------------------------------------------------
// Jobs

namespace {

struct Job {
  ResultRow row;  ///< identity fields only
  ModelConfig model;
  TrainConfig train;
  ObjectiveSpec objective;
  Index pca_dim = 0;
};

void write_lines(const fs::path& path, const std::vector<double>& values) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << std::setprecision(17);
  for (double v : values) os << v << '\n';
}

std::vector<double> read_lines(const fs::path& path) {
  std::vector<double> values;
  std::ifstream is(path);
  double v = 0.0;
  while (is >> v) values.push_back(v);
  return values;
}

void write_assignments(const fs::path& path, const ConnectomeDataset& ds, const std::vector<int>& assignment) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "subject_id,true_site,assignment\n";
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    os << (ds.subject_id.empty() ? std::to_string(i) : ds.subject_id[i]) << ',' << ds.site[i] << ','
       << assignment[i] << '\n';
  }
}

ResultRow run_job(const Job& job, const ExperimentConfig& cfg) {
  ResultRow row = job.row;
  const ConnectomeDataset ds = load_data(cfg.data, row.seed);
  const fs::path dir = cfg.out / "runs" / row.slug();
  fs::create_directories(dir);

  ModelConfig mc = job.model;
  mc.input_dim = ds.dim();
  TrainConfig tc = job.train;
  tc.seed = row.seed;

  std::vector<int> assignment;
  const Index k = row.k_classes;
  if (is_jointvae(row.method)) {
    mc.k_classes = k;
    JointVae model(mc, row.seed);
    const TrainResult res = train(model, ds, job.objective, tc);
    write_training_log(res.log, dir / "training_log.csv");
    if (cfg.save_checkpoints) {
      save_checkpoint(model, {static_cast<std::uint64_t>(res.iterations), {}}, dir / "model.lfck");
    }
    if (!res.log.empty()) row.kl_d_final = res.log.back().loss.kl_d;
    assignment = extract_latents(model, ds).assignment;
  } else if (row.method == Method::vae_kmeans) {
    VaeKmeansFit fit = fit_vae_kmeans(ds, mc, tc, k, row.seed, job.objective.beta);
    write_training_log(fit.training.log, dir / "training_log.csv");
    if (cfg.save_checkpoints) {
      save_checkpoint(fit.vae, {static_cast<std::uint64_t>(fit.training.iterations), {}}, dir / "model.lfck");
    }
    assignment = std::move(fit.assignment);
  } else {
    assignment = pca_kmeans_pipeline(ds, job.pca_dim, k, row.seed);
  }

  row.ari = ari(ds.site, assignment);
  row.homogeneity = homogeneity(ds.site, assignment);
  const BootstrapReport boot = bootstrap_metric(ds.site, assignment, ari, cfg.bootstrap_resamples, row.seed);
  row.boot_mean = boot.mean;
  row.boot_sd = boot.sd;
  row.boot_lo = boot.lo;
  row.boot_hi = boot.hi;
  row.effective_classes = effective_classes(assignment, k);
  write_lines(dir / "bootstrap.csv", boot.values);
  write_assignments(dir / "assignments.csv", ds, assignment);
  return row;
}

Index dataset_size(const DataSource& src) {
  if (src.path.empty()) return src.synthetic.n_subjects;
  return load_data(src, 0).size();
}

std::int64_t anneal_iters_for(double fraction, const TrainConfig& tc, Index n) {
  const std::int64_t total = tc.total_iters(n);
  return std::max<std::int64_t>(1, std::llround(fraction * static_cast<double>(total)));
}

/// Model, objective and row identity for a Joint-VAE or baseline job.
Job make_job(const ExperimentConfig& cfg, Method method, Index k, std::uint64_t seed, Index n) {
  Job job;
  job.row.experiment = to_string(cfg.experiment);
  job.row.method = method;
  job.row.k_classes = k;
  job.row.seed = seed;
  job.model = cfg.model;
  job.train = cfg.train;
  if (cfg.anneal_fraction) job.train.anneal_iters = anneal_iters_for(*cfg.anneal_fraction, cfg.train, n);
  job.objective = cfg.objective;
  job.pca_dim = cfg.pca_dim > 0 ? cfg.pca_dim : cfg.model.z_c_dim;
  switch (method) {
    case Method::jointvae_arch:
      job.model.anneal_mode = AnnealMode::arch_anneal;
      job.objective.mode = ObjectiveMode::arch_anneal;
      job.row.anneal_iters = job.train.anneal_iters;
      break;
    case Method::jointvae_loss:
      job.model.anneal_mode = AnnealMode::loss_anneal;
      job.objective.mode = ObjectiveMode::loss_anneal;
      job.row.anneal_iters = job.train.anneal_iters;
      break;
    case Method::jointvae_hinge:
      job.model.anneal_mode = AnnealMode::hinge;
      job.objective.mode = ObjectiveMode::hinge;
      job.row.capacity_c = job.objective.capacity_c;
      break;
    case Method::vae_kmeans:
    case Method::pca_kmeans:
      break;
  }
  return job;
}

/// Runs `jobs` on up to cfg.jobs threads, skipping keys already in
/// results.csv and appending finished rows as they complete. The first error
/// (in job order) is rethrown after all started jobs finish.
SweepOutput execute(const ExperimentConfig& cfg, const std::vector<Job>& jobs) {
  cfg.validate();
  try {
    fs::create_directories(cfg.out);
  } catch (const fs::filesystem_error& e) {
    throw ConfigError("cannot create output directory " + cfg.out.string() + ": " + e.what());
  }
  const fs::path results_path = cfg.out / "results.csv";
  std::vector<ResultRow> existing = read_results(results_path);
  std::map<std::string, ResultRow> done;
  for (const auto& r : existing) done[r.key()] = r;

  SweepOutput out;
  std::vector<std::optional<ResultRow>> slots(jobs.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto it = done.find(jobs[i].row.key());
    if (it != done.end()) {
      slots[i] = it->second;
      ++out.resumed;
    } else {
      todo.push_back(i);
    }
  }
  if (cfg.verbose && out.resumed > 0) {
    std::cerr << "resuming: " << out.resumed << " of " << jobs.size() << " runs already in " << results_path << '\n';
  }

  {
    std::ofstream os(results_path, std::ios::app);
    if (!os) throw ConfigError("cannot write " + results_path.string());
    if (existing.empty() && fs::file_size(results_path) == 0) {
      os << kResultsSchema << '\n' << results_header() << '\n';
    }
  }

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::vector<std::exception_ptr> errors(jobs.size());
  std::size_t finished = 0;
  auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= todo.size() || stop.load()) return;
      const std::size_t i = todo[t];
      const auto start = std::chrono::steady_clock::now();
      try {
        ResultRow row = run_job(jobs[i], cfg);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::lock_guard<std::mutex> lock(mu);
        std::ofstream os(results_path, std::ios::app);
        os << format_row(row) << '\n';
        ++finished;
        if (cfg.verbose) {
          std::cerr << '[' << finished << '/' << todo.size() << "] " << row.key() << " ari=" << std::setprecision(4)
                    << row.ari << " eff=" << row.effective_classes << " (" << std::setprecision(3) << secs << "s)\n";
        }
        slots[i] = std::move(row);
      } catch (...) {
        errors[i] = std::current_exception();
        stop.store(true);
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(todo.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::set<std::string> in_grid;
  for (auto& s : slots) {
    in_grid.insert(s->key());
    out.rows.push_back(*s);
  }
  std::vector<ResultRow> merged = out.rows;
  for (const auto& r : existing) {
    if (!in_grid.count(r.key())) merged.push_back(r);
  }
  write_results(merged, results_path);
  return out;
}

}  // namespace

SweepOutput run_capacity_sweep(ExperimentConfig cfg) {
  cfg.experiment = Experiment::capacity_sweep;
  cfg.validate();
  const Index n = dataset_size(cfg.data);
  std::vector<Job> jobs;
  for (double cc : cfg.capacities) {
    for (std::uint64_t seed : cfg.seeds) {
      ExperimentConfig c = cfg;
      c.objective.beta = cfg.capacity_beta;
      c.objective.capacity_c = cc;
      c.objective.capacity_d = std::log(static_cast<double>(cfg.capacity_classes));
      jobs.push_back(make_job(c, Method::jointvae_hinge, cfg.capacity_classes, seed, n));
    }
  }
  return execute(cfg, jobs);
}

SweepOutput run_class_sweep(ExperimentConfig cfg) {
  cfg.experiment = Experiment::class_sweep;
  cfg.validate();
  const Index n = dataset_size(cfg.data);
  std::vector<Job> jobs;
  for (Index k : cfg.class_grid) {
    for (Method m : cfg.methods) {
      for (std::uint64_t seed : cfg.seeds) jobs.push_back(make_job(cfg, m, k, seed, n));
    }
  }
  SweepOutput out = execute(cfg, jobs);
  out.ttests = bootstrap_ttests(out.rows, cfg.out);
  write_ttests(out.ttests, cfg.out / "ttests.json");
  return out;
}

SweepOutput run_anneal_sweep(ExperimentConfig cfg) {
  cfg.experiment = Experiment::anneal_sweep;
  cfg.validate();
  const Index n = dataset_size(cfg.data);
  std::vector<Job> jobs;
  for (double f : cfg.anneal_fractions) {
    for (std::uint64_t seed : cfg.seeds) {
      ExperimentConfig c = cfg;
      c.anneal_fraction = f;
      jobs.push_back(make_job(c, Method::jointvae_arch, cfg.model.k_classes, seed, n));
    }
  }
  return execute(cfg, jobs);
}

SweepOutput run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::capacity_sweep: return run_capacity_sweep(cfg);
    case Experiment::class_sweep: return run_class_sweep(cfg);
    case Experiment::anneal_sweep: return run_anneal_sweep(cfg);
    case Experiment::single_run: break;
  }
  cfg.validate();
  const Index n = dataset_size(cfg.data);
  std::vector<Job> jobs;
  for (std::uint64_t seed : cfg.seeds) jobs.push_back(make_job(cfg, cfg.method, cfg.model.k_classes, seed, n));
  return execute(cfg, jobs);
}

// ---------------------------------------------------------------------------
// t-tests

std::vector<TTestRow> bootstrap_ttests(const std::vector<ResultRow>& rows, const fs::path& out) {
  // (k, method) -> seed -> bootstrap values
  std::map<std::pair<Index, Method>, std::map<std::uint64_t, std::vector<double>>> boots;
  for (const auto& r : rows) {
    std::vector<double> v = read_lines(out / "runs" / r.slug() / "bootstrap.csv");
    if (v.size() >= 2) boots[{r.k_classes, r.method}][r.seed] = std::move(v);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };

  std::vector<TTestRow> tests;
  for (const auto& [key, arch] : boots) {
    const auto [k, method] = key;
    if (method != Method::jointvae_arch) continue;
    for (const auto& [other_key, other] : boots) {
      if (other_key.first != k || other_key.second == Method::jointvae_arch) continue;
      std::vector<double> pooled_a, pooled_b;
      for (const auto& [seed, a] : arch) {
        auto it = other.find(seed);
        if (it == other.end()) continue;
        const auto& b = it->second;
        TTestRow row{k, Method::jointvae_arch, other_key.second, seed, mean(a), mean(b), welch_ttest(a, b)};
        tests.push_back(row);
        pooled_a.insert(pooled_a.end(), a.begin(), a.end());
        pooled_b.insert(pooled_b.end(), b.begin(), b.end());
      }
      if (!pooled_a.empty()) {
        tests.push_back({k, Method::jointvae_arch, other_key.second, std::nullopt, mean(pooled_a), mean(pooled_b),
                         welch_ttest(pooled_a, pooled_b)});
      }
    }
  }
  return tests;
}

void write_ttests(const std::vector<TTestRow>& tests, const fs::path& path) {
  json arr = json::array();
  for (const auto& t : tests) {
    json j = {{"k", t.k},
              {"method_a", to_string(t.method_a)},
              {"method_b", to_string(t.method_b)},
              {"scope", t.seed ? "seed" : "pooled"},
              {"mean_a", t.mean_a},
              {"mean_b", t.mean_b},
              {"t", std::isfinite(t.test.t) ? json(t.test.t) : json(t.test.t > 0 ? "inf" : "-inf")},
              {"df", t.test.df},
              {"p", t.test.p},
              {"degenerate", t.test.degenerate}};
    j["seed"] = t.seed ? json(*t.seed) : json(nullptr);
    arr.push_back(j);
  }
  json doc = {{"schema", 1},
              {"test", "welch"},
              {"alternative", "two_sided"},
              {"note", "bootstrap replicates are not independent samples; p-values follow the bootstrap-then-t-test "
                       "procedure and are not calibrated"},
              {"tests", arr}};
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Latent export and report

void export_latents(const fs::path& checkpoint, const ConnectomeDataset& ds, const fs::path& out_dir) {
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint " + checkpoint.string() + " does not exist");
  const JointVae model = load_checkpoint(checkpoint);
  if (model.config().input_dim != ds.dim()) {
    throw ConfigError("checkpoint expects input_dim " + std::to_string(model.config().input_dim) +
                      " but the dataset has " + std::to_string(ds.dim()) + " features");
  }
  fs::create_directories(out_dir);
  const Latents lat = extract_latents(model, ds);
  const Index n = ds.size();
  auto subject = [&](Index i) {
    return ds.subject_id.empty() ? std::to_string(i) : ds.subject_id[static_cast<std::size_t>(i)];
  };
  auto assignment = [&](Index i) {
    return lat.assignment.empty() ? std::string() : std::to_string(lat.assignment[static_cast<std::size_t>(i)]);
  };

  std::ofstream os(out_dir / "latents.csv");
  if (!os) throw ConfigError("cannot write " + (out_dir / "latents.csv").string());
  os << "subject_id";
  for (Index j = 0; j < lat.mu.cols(); ++j) os << ",z" << j;
  os << ",assignment,true_site\n" << std::setprecision(17);
  for (Index i = 0; i < n; ++i) {
    os << subject(i);
    for (Index j = 0; j < lat.mu.cols(); ++j) os << ',' << lat.mu(i, j);
    os << ',' << assignment(i) << ',' << ds.site[static_cast<std::size_t>(i)] << '\n';
  }

  const Index p = std::min<Index>(2, std::min(lat.mu.cols(), n));
  const auto pca = pca_fit(lat.mu, p);
  const Matrix proj = pca.transform(lat.mu);
  std::ofstream os2(out_dir / "latents_2d.csv");
  if (!os2) throw ConfigError("cannot write " + (out_dir / "latents_2d.csv").string());
  os2 << "subject_id,pc1,pc2,assignment,true_site\n" << std::setprecision(17);
  for (Index i = 0; i < n; ++i) {
    const double a = proj.cols() > 0 ? proj(i, 0) : 0.0;
    const double b = proj.cols() > 1 ? proj(i, 1) : 0.0;
    os2 << subject(i) << ',' << a << ',' << b << ',' << assignment(i) << ',' << ds.site[static_cast<std::size_t>(i)]
        << '\n';
  }
}

std::string report(const fs::path& out_dir) {
  const fs::path path = out_dir / "results.csv";
  if (!fs::exists(path)) throw ConfigError("no results.csv in " + out_dir.string());
  const std::vector<ResultRow> rows = read_results(path);

  struct Group {
    std::vector<double> ari, homogeneity, effective, kl_d;
  };
  std::vector<std::string> order;
  std::map<std::string, Group> groups;
  for (const auto& r : rows) {
    std::ostringstream g;
    g << r.experiment << ',' << to_string(r.method) << ',' << r.k_classes << ','
      << (r.capacity_c ? fmt(*r.capacity_c) : "") << ',' << r.anneal_iters;
    const std::string key = g.str();
    if (!groups.count(key)) order.push_back(key);
    Group& grp = groups[key];
    grp.ari.push_back(r.ari);
    grp.homogeneity.push_back(r.homogeneity);
    grp.effective.push_back(r.effective_classes);
    if (r.kl_d_final) grp.kl_d.push_back(*r.kl_d_final);
  }

  std::ofstream csv(out_dir / "summary.csv");
  if (!csv) throw ConfigError("cannot write " + (out_dir / "summary.csv").string());
  csv << "experiment,method,k_classes,capacity_c,anneal_iters,n_seeds,median_ari,median_homogeneity,"
         "median_effective_classes,median_kl_d_final\n"
      << std::setprecision(17);
  std::ostringstream text;
  text << std::left << std::setw(15) << "experiment" << std::setw(16) << "method" << std::setw(5) << "k"
       << std::setw(8) << "C_c" << std::setw(8) << "T0" << std::setw(7) << "seeds" << std::setw(9) << "ARI"
       << std::setw(9) << "homog" << "eff\n";
  for (const auto& key : order) {
    const Group& g = groups[key];
    const double kl = g.kl_d.empty() ? std::nan("") : median(g.kl_d);
    csv << key << ',' << g.ari.size() << ',' << median(g.ari) << ',' << median(g.homogeneity) << ','
        << median(g.effective) << ',' << (g.kl_d.empty() ? "" : fmt(kl)) << '\n';
    std::vector<std::string> f;
    std::stringstream ss(key);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    f.resize(5);
    text << std::setw(15) << f[0] << std::setw(16) << f[1] << std::setw(5) << f[2] << std::setw(8)
         << (f[3].empty() ? "-" : f[3]) << std::setw(8) << f[4] << std::setw(7) << g.ari.size() << std::fixed
         << std::setprecision(4) << std::setw(9) << median(g.ari) << std::setw(9) << median(g.homogeneity)
         << std::setprecision(1) << median(g.effective) << '\n'
         << std::defaultfloat;
  }

  const fs::path tt = out_dir / "ttests.json";
  if (fs::exists(tt)) {
    std::ifstream is(tt);
    const json doc = json::parse(is);
    text << "\nWelch tests (pooled bootstrap ARI, two-sided):\n";
    for (const auto& t : doc.at("tests")) {
      if (t.at("scope") != "pooled") continue;
      text << "  k=" << t.at("k").get<Index>() << ' ' << t.at("method_a").get<std::string>() << " vs "
           << t.at("method_b").get<std::string>() << ": mean " << std::fixed << std::setprecision(4)
           << t.at("mean_a").get<double>() << " vs " << t.at("mean_b").get<double>() << ", p = " << std::scientific
           << std::setprecision(3) << t.at("p").get<double>() << std::defaultfloat << '\n';
    }
  }
  return text.str();
}

}  // namespace jvae
