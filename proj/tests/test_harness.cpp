#include "fixtures.hpp"
#include "support.hpp"

#include "jvae/config.hpp"
#include "jvae/harness.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace jvae;
using jvae::testing::TempDir;
using jvae::testing::tiny_experiment;

namespace {

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::vector<std::string> out;
  std::istringstream is(jvae::testing::read_file(p));
  std::string line;
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

bool same_rows(const std::vector<ResultRow>& a, const std::vector<ResultRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (format_row(a[i]) != format_row(b[i])) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("experiment config round-trips through JSON") {
    ExperimentConfig c = ExperimentConfig::desk();
    c.objective.capacity_c = 5.0;
    c.anneal_fraction.reset();
    nlohmann::json j = c;
    ExperimentConfig back = ExperimentConfig::desk();
    from_json(j, back);
    CHECK(nlohmann::json(back) == j);
    CHECK_FALSE(back.anneal_fraction.has_value());

    nlohmann::json bad = j;
    bad["epochs"] = 3;
    CHECK_THROWS_AS(from_json(bad, back), ConfigError);
    nlohmann::json bad_type = {{"seeds", "one"}};
    CHECK_THROWS_AS(from_json(bad_type, back), ConfigError);
    CHECK_THROWS_AS(from_json(nlohmann::json{{"method", "kmeans"}}, back), ConfigError);
  }

  TEST_CASE("config files override only the keys they name") {
    TempDir dir("cfg");
    std::ofstream(dir / "c.json") << R"({"train": {"epochs": 7}, "seeds": [3], "experiment": "class_sweep"})";
    const ExperimentConfig c = load_experiment_config(dir / "c.json");
    const ExperimentConfig desk = ExperimentConfig::desk();
    CHECK(c.train.epochs == 7);
    CHECK(c.train.batch_size == desk.train.batch_size);
    CHECK(c.seeds == std::vector<std::uint64_t>{3});
    CHECK(c.experiment == Experiment::class_sweep);
    CHECK(c.model.hidden_dims == desk.model.hidden_dims);
    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK_THROWS_AS(load_experiment_config(dir / "broken.json"), ConfigError);
    CHECK_THROWS_AS(load_experiment_config(dir / "missing.json"), ConfigError);
  }

  TEST_CASE("paper scale and validation") {
    ExperimentConfig c = ExperimentConfig::desk();
    apply_paper_scale(c);
    CHECK(c.train.epochs == 2500);
    CHECK(c.train.batch_size == 512);
    CHECK(c.train.anneal_iters == 5000);
    CHECK_FALSE(c.anneal_fraction.has_value());
    CHECK(c.model.k_classes == 25);
    CHECK_NOTHROW(c.validate());
    c.seeds.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    ExperimentConfig d = ExperimentConfig::desk();
    d.experiment = Experiment::anneal_sweep;
    d.anneal_fractions = {0.0};
    CHECK_THROWS_AS(d.validate(), ConfigError);
    d.experiment = Experiment::class_sweep;
    d.class_grid.clear();
    CHECK_THROWS_AS(d.validate(), ConfigError);
  }

  TEST_CASE("result rows round-trip through CSV") {
    ResultRow r;
    r.experiment = "capacity_sweep";
    r.method = Method::jointvae_hinge;
    r.k_classes = 25;
    r.capacity_c = 50.0;
    r.seed = 4;
    r.ari = 0.123456789012345;
    r.homogeneity = 0.5;
    r.boot_mean = 0.12;
    r.boot_sd = 0.01;
    r.boot_lo = 0.1;
    r.boot_hi = 0.14;
    r.kl_d_final = 3.2;
    r.effective_classes = 5;
    const ResultRow back = parse_row(format_row(r));
    CHECK(format_row(back) == format_row(r));
    CHECK(back.ari == r.ari);
    CHECK(back.key() == r.key());

    ResultRow baseline;
    baseline.experiment = "class_sweep";
    baseline.method = Method::pca_kmeans;
    baseline.k_classes = 8;
    const ResultRow b2 = parse_row(format_row(baseline));
    CHECK_FALSE(b2.capacity_c.has_value());
    CHECK_FALSE(b2.kl_d_final.has_value());
    CHECK(b2.key() != back.key());
    CHECK_THROWS_AS(parse_row("a,b,c"), ConfigError);
  }

  TEST_CASE("results file schema is checked") {
    TempDir dir("schema");
    CHECK(read_results(dir / "none.csv").empty());
    ResultRow r;
    r.experiment = "single_run";
    write_results({r, r}, dir / "results.csv");
    const auto lines = lines_of(dir / "results.csv");
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == kResultsSchema);
    CHECK(lines[1] == results_header());
    CHECK(read_results(dir / "results.csv").size() == 2);
    std::ofstream(dir / "old.csv") << "# jvae-results schema=0\n" << results_header() << '\n';
    CHECK_THROWS_AS(read_results(dir / "old.csv"), ConfigError);
    std::ofstream(dir / "cols.csv") << kResultsSchema << "\nexperiment,method\n";
    CHECK_THROWS_AS(read_results(dir / "cols.csv"), ConfigError);
  }

  TEST_CASE("class sweep writes rows, artifacts and t-tests, and resumes") {
    TempDir dir("sweep");
    ExperimentConfig cfg = tiny_experiment(dir.path());
    const SweepOutput first = run_class_sweep(cfg);
    REQUIRE(first.rows.size() == 4);
    CHECK(first.resumed == 0);
    for (const auto& r : first.rows) {
      const auto run = dir.path() / "runs" / r.slug();
      CHECK(std::filesystem::exists(run / "assignments.csv"));
      CHECK(lines_of(run / "bootstrap.csv").size() == 50);
      CHECK(r.boot_lo <= r.boot_hi);
      CHECK(r.effective_classes >= 1);
      if (r.method == Method::jointvae_arch) {
        CHECK(std::filesystem::exists(run / "model.lfck"));
        CHECK(lines_of(run / "training_log.csv").size() == 1 + 3 * 4);
        CHECK(r.kl_d_final.has_value());
      } else {
        CHECK_FALSE(r.kl_d_final.has_value());
      }
    }
    // Two seeds at one k: one test per seed plus one pooled.
    CHECK(first.ttests.size() == 3);
    const auto tj = nlohmann::json::parse(jvae::testing::read_file(dir / "ttests.json"));
    CHECK(tj.at("schema") == 1);
    CHECK(tj.at("tests").size() == 3);
    CHECK(tj.at("tests").back().at("scope") == "pooled");

    const SweepOutput again = run_class_sweep(cfg);
    CHECK(again.resumed == 4);
    CHECK(same_rows(first.rows, again.rows));

    // Drop one row: only that run is redone, and it reproduces exactly.
    auto rows = read_results(dir / "results.csv");
    rows.erase(rows.begin() + 1);
    write_results(rows, dir / "results.csv");
    const SweepOutput partial = run_class_sweep(cfg);
    CHECK(partial.resumed == 3);
    CHECK(same_rows(first.rows, partial.rows));
    CHECK(same_rows(read_results(dir / "results.csv"), first.rows));
  }

  TEST_CASE("parallel jobs give the same rows as serial") {
    TempDir a("serial"), b("parallel");
    ExperimentConfig ca = tiny_experiment(a.path());
    ExperimentConfig cb = tiny_experiment(b.path());
    cb.jobs = 3;
    CHECK(same_rows(run_class_sweep(ca).rows, run_class_sweep(cb).rows));
  }

  TEST_CASE("capacity and anneal sweeps fill their grid columns") {
    TempDir dir("grids");
    ExperimentConfig cfg = tiny_experiment(dir / "cap");
    const SweepOutput cap = run_capacity_sweep(cfg);
    REQUIRE(cap.rows.size() == 4);
    for (const auto& r : cap.rows) {
      CHECK(r.method == Method::jointvae_hinge);
      CHECK(r.k_classes == 3);
      CHECK(r.capacity_c.has_value());
    }
    CHECK(*cap.rows.front().capacity_c == 1.0);
    CHECK(*cap.rows.back().capacity_c == 20.0);

    cfg.out = dir / "anneal";
    const SweepOutput ann = run_anneal_sweep(cfg);
    REQUIRE(ann.rows.size() == 4);
    // 3 epochs of 4 iterations: fractions 0.5 and 1.0 give 6 and 12.
    CHECK(ann.rows.front().anneal_iters == 6);
    CHECK(ann.rows.back().anneal_iters == 12);
  }

  TEST_CASE("degenerate grids") {
    TempDir dir("degenerate");
    ExperimentConfig cfg = tiny_experiment(dir.path());
    cfg.class_grid = {1};
    cfg.methods = {Method::pca_kmeans};
    const SweepOutput out = run_class_sweep(cfg);
    REQUIRE(out.rows.size() == 2);
    CHECK(out.rows[0].ari == 0.0);
    CHECK(out.rows[0].effective_classes == 1);
    CHECK(out.ttests.empty());  // no arch-anneal rows to compare against

    cfg.class_grid = {1000};
    cfg.out = dir / "too_many";
    CHECK_THROWS_AS(run_class_sweep(cfg), ConfigError);
  }

  TEST_CASE("t-tests only where both methods have bootstrap samples") {
    TempDir dir("ttests");
    auto make = [&](Method m, Index k, std::uint64_t seed, double centre) {
      ResultRow r;
      r.experiment = "class_sweep";
      r.method = m;
      r.k_classes = k;
      r.seed = seed;
      const auto run = dir.path() / "runs" / r.slug();
      std::filesystem::create_directories(run);
      std::ofstream os(run / "bootstrap.csv");
      for (int i = 0; i < 20; ++i) os << centre + 0.01 * (i % 5) << '\n';
      return r;
    };
    const std::vector<ResultRow> rows{
        make(Method::jointvae_arch, 4, 1, 0.8), make(Method::jointvae_arch, 4, 2, 0.7),
        make(Method::pca_kmeans, 4, 1, 0.3),    make(Method::jointvae_loss, 6, 1, 0.2),
        make(Method::jointvae_arch, 6, 2, 0.9)};
    const auto tests = bootstrap_ttests(rows, dir.path());
    // k=4: arch vs PCA for seed 1 and pooled. k=6: arch only has seed 2 and
    // loss only seed 1, so nothing is comparable.
    REQUIRE(tests.size() == 2);
    CHECK(tests[0].seed == std::optional<std::uint64_t>{1});
    CHECK_FALSE(tests[1].seed.has_value());
    CHECK(tests[0].method_b == Method::pca_kmeans);
    CHECK(tests[0].mean_a == doctest::Approx(0.82));
    CHECK(tests[0].test.t > 0.0);
    CHECK(tests[0].test.p < 1e-6);
    write_ttests(tests, dir / "t.json");
    const auto j = nlohmann::json::parse(jvae::testing::read_file(dir / "t.json"));
    CHECK(j.at("tests")[0].at("scope") == "seed");
  }

  TEST_CASE("latent export") {
    TempDir dir("export");
    ExperimentConfig cfg = tiny_experiment(dir.path());
    cfg.seeds = {1};
    cfg.method = Method::jointvae_arch;
    const SweepOutput out = run_experiment(cfg);
    const auto ckpt = dir.path() / "runs" / out.rows[0].slug() / "model.lfck";
    const ConnectomeDataset ds = load_data(cfg.data, 1);
    export_latents(ckpt, ds, dir / "lat");

    const auto lat = lines_of(dir / "lat" / "latents.csv");
    const auto lat2 = lines_of(dir / "lat" / "latents_2d.csv");
    REQUIRE(lat.size() == 65);
    REQUIRE(lat2.size() == 65);
    CHECK(lat[0] == "subject_id,z0,z1,assignment,true_site");
    CHECK(lat2[0] == "subject_id,pc1,pc2,assignment,true_site");

    const Latents truth = extract_latents(load_checkpoint(ckpt), ds);
    std::vector<double> pc1, pc2;
    for (Index i = 0; i < 64; ++i) {
      std::vector<std::string> f, g;
      std::stringstream s1(lat[std::size_t(i + 1)]), s2(lat2[std::size_t(i + 1)]);
      for (std::string c; std::getline(s1, c, ',');) f.push_back(c);
      for (std::string c; std::getline(s2, c, ',');) g.push_back(c);
      CHECK(std::stoi(f[3]) == truth.assignment[std::size_t(i)]);
      CHECK(f[3] == g[3]);
      CHECK(std::stoi(f[4]) == ds.site[std::size_t(i)]);
      CHECK(std::stod(f[1]) == truth.mu(i, 0));
      pc1.push_back(std::stod(g[1]));
      pc2.push_back(std::stod(g[2]));
    }
    auto var = [](const std::vector<double>& v) {
      double m = 0, s = 0;
      for (double x : v) m += x / double(v.size());
      for (double x : v) s += (x - m) * (x - m);
      return s;
    };
    CHECK(var(pc1) >= var(pc2));
    CHECK_THROWS_AS(export_latents(dir / "nope.lfck", ds, dir / "lat"), ConfigError);
  }

  TEST_CASE("report summarises results") {
    TempDir dir("report");
    ExperimentConfig cfg = tiny_experiment(dir.path());
    run_class_sweep(cfg);
    const std::string text = report(dir.path());
    CHECK(text.find("jointvae_arch") != std::string::npos);
    CHECK(text.find("pca_kmeans") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "summary.csv"));
    CHECK_THROWS_AS(report(dir / "empty"), ConfigError);
  }

  TEST_CASE("numerical failure in a run surfaces as a numerical error") {
    TempDir dir("abort");
    ExperimentConfig cfg = tiny_experiment(dir.path());
    cfg.model.gumbel_temperature = 1e-310;
    cfg.seeds = {1};
    CHECK_THROWS_AS(run_experiment(cfg), NumericalError);
  }
}
