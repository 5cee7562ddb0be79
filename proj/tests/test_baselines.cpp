#include "jvae/baselines.hpp"
#include "jvae/data.hpp"
#include "jvae/metrics.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

using namespace jvae;

namespace {

Matrix random_symmetric(Index n, std::uint64_t seed) {
  RngStream rng(seed, "sym");
  const Matrix a = rng.normal_matrix(n, n);
  return a + a.transpose();
}

/// Three tight blobs far apart in 4-D.
Matrix blobs(std::vector<int>* labels, std::uint64_t seed) {
  RngStream rng(seed, "blobs");
  Matrix centers(3, 4);
  centers << 10, 0, 0, 0, 0, 10, 0, 0, 0, 0, 10, 0;
  Matrix x(90, 4);
  labels->clear();
  for (Index i = 0; i < 90; ++i) {
    const int c = int(i % 3);
    labels->push_back(c);
    x.row(i) = centers.row(c) + 0.5 * rng.normal_matrix(1, 4);
  }
  return x;
}

}  // namespace

TEST_SUITE("baselines") {
  TEST_CASE("Jacobi eigensolver agrees with Eigen's self-adjoint solver") {
    for (Index n : {2, 8, 30}) {
      const Matrix a = random_symmetric(n, std::uint64_t(n));
      const auto jac = jacobi_eigen(a);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(a);
      const Eigen::VectorXd ref_desc = ref.eigenvalues().reverse();
      CHECK((jac.values - ref_desc).cwiseAbs().maxCoeff() < 1e-10 * a.norm());
      for (Index i = 1; i < n; ++i) CHECK(jac.values(i) <= jac.values(i - 1));
      const Eigen::MatrixXd v = jac.vectors;
      CHECK((v.transpose() * v - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((Eigen::MatrixXd(a) * v - v * jac.values.asDiagonal()).cwiseAbs().maxCoeff() < 1e-10 * a.norm());
      CHECK(jac.off_norm <= 1e-12 * a.norm());
    }
  }

  TEST_CASE("Jacobi works in single precision and on diagonal input") {
    const Eigen::MatrixXf a = random_symmetric(6, 3).cast<float>();
    const auto jac = jacobi_eigen(a, 1e-6f);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXf> ref(a);
    CHECK((jac.values - ref.eigenvalues().reverse()).cwiseAbs().maxCoeff() < 1e-4f * a.norm());
    Matrix d = Matrix::Zero(3, 3);
    d.diagonal() << 1.0, 3.0, 2.0;
    const auto dj = jacobi_eigen(d);
    CHECK(dj.sweeps == 0);
    CHECK(dj.values(0) == 3.0);
    CHECK(dj.values(2) == 1.0);
    CHECK_THROWS_AS(jacobi_eigen(Matrix::Zero(2, 3)), DimensionError);
  }

  TEST_CASE("PCA covariance and Gram paths both match the covariance spectrum") {
    RngStream rng(5, "pca");
    for (Index n : {60, 12}) {  // n >= d uses the covariance, n < d the Gram matrix
      const Matrix x = rng.normal_matrix(n, 20) * rng.normal_matrix(20, 20);
      const auto model = pca_fit(x, 5);
      CHECK(model.used_gram == (n < 20));
      const Matrix xc = x.rowwise() - x.colwise().mean();
      const Eigen::MatrixXd cov = xc.transpose() * xc / double(n - 1);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(cov);
      for (Index i = 0; i < 5; ++i) {
        const double lam = ref.eigenvalues()(19 - i);
        CHECK(model.explained_variance(i) == doctest::Approx(lam).epsilon(1e-9));
        const Eigen::VectorXd u = ref.eigenvectors().col(19 - i);
        CHECK(std::abs(u.dot(Eigen::VectorXd(model.components.col(i)))) == doctest::Approx(1.0).epsilon(1e-8));
      }
      const Matrix c = model.components;
      CHECK((c.transpose() * c - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
      // Projected variance equals the explained variance.
      const Matrix z = model.transform(x);
      const Matrix zc = z.rowwise() - z.colwise().mean();
      CHECK((zc.transpose() * zc / double(n - 1)).diagonal().isApprox(Vector(model.explained_variance), 1e-9));
    }
  }

  TEST_CASE("PCA flags rank deficiency and round-trips at full rank") {
    RngStream rng(6, "rank");
    const Matrix x = rng.normal_matrix(40, 2) * rng.normal_matrix(2, 6);
    const auto model = pca_fit(x, 4);
    CHECK(model.rank_deficient);
    CHECK(model.components.cols() == 2);
    CHECK(model.inverse_transform(model.transform(x)).isApprox(x, 1e-9));
    CHECK_THROWS_AS(pca_fit(x, 0), ConfigError);
    CHECK_THROWS_AS(pca_fit(x, 7), ConfigError);
    CHECK_THROWS_AS(pca_fit(Matrix(x.topRows(1)), 1), ConfigError);
  }

  TEST_CASE("k-means recovers separated blobs") {
    std::vector<int> labels;
    const Matrix x = blobs(&labels, 1);
    const auto km = kmeans(x, 3, 7);
    CHECK(ari(labels, km.assignment) == 1.0);
    CHECK(km.restarts_used == 10);
    double inertia = 0.0;
    for (Index i = 0; i < x.rows(); ++i) inertia += (x.row(i) - km.centroids.row(km.assignment[std::size_t(i)])).squaredNorm();
    CHECK(km.inertia == doctest::Approx(inertia).epsilon(1e-12));
  }

  TEST_CASE("k-means inertia never increases within a run") {
    RngStream rng(2, "km");
    const Matrix x = rng.normal_matrix(200, 3);
    KMeansOptions opts;
    opts.record_history = true;
    opts.tol = 0.0;
    const auto km = kmeans(x, 6, 3, opts);
    REQUIRE(km.history.size() == 10);
    for (const auto& h : km.history) {
      for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] <= h[i - 1] * (1 + 1e-12));
    }
  }

  TEST_CASE("k-means edge cases") {
    RngStream rng(3, "edge");
    const Matrix x = rng.normal_matrix(20, 2);
    const auto one = kmeans(x, 1, 1);
    CHECK(one.centroids.row(0).isApprox(x.colwise().mean(), 1e-12));
    const auto all = kmeans(x, 20, 1);
    CHECK(all.inertia == doctest::Approx(0.0));
    // Fewer distinct points than clusters: empty clusters must not crash.
    Matrix dup(10, 2);
    dup.topRows(5).setZero();
    dup.bottomRows(5).setOnes();
    const auto d = kmeans(dup, 4, 1);
    CHECK(d.inertia == doctest::Approx(0.0));
    CHECK_THROWS_AS(kmeans(x, 0, 1), ConfigError);
    CHECK_THROWS_AS(kmeans(x, 21, 1), ConfigError);
  }

  TEST_CASE("k-means partitions are invariant to rotation and translation") {
    std::vector<int> labels;
    const Matrix x = blobs(&labels, 4);
    RngStream rng(5, "rot");
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(rng.normal_matrix(4, 4));
    const Matrix q = qr.householderQ();
    Matrix moved = x * q;
    moved.rowwise() += RowVector::Constant(4, 50.0);
    const auto a = kmeans(x, 3, 9);
    const auto b = kmeans(moved, 3, 9);
    CHECK(a.assignment == b.assignment);
    CHECK(a.inertia == doctest::Approx(b.inertia).epsilon(1e-9));
  }

  TEST_CASE("PCA + k-means pipeline on strong site structure") {
    SyntheticConfig c;
    c.n_subjects = 300;
    c.n_edges = 60;
    c.n_sites = 3;
    c.site_strength = 10.0;
    const auto ds = generate(c);
    const auto assign = pca_kmeans_pipeline(ds, 4, 3, 1);
    CHECK(assign.size() == 300);
    CHECK(ari(ds.site, assign) > 0.95);
    CHECK(assign == pca_kmeans_pipeline(ds, 4, 3, 1));
  }

  TEST_CASE("VAE + k-means trains a continuous-only model") {
    SyntheticConfig c;
    c.n_subjects = 64;
    c.n_edges = 15;
    c.n_sites = 2;
    c.site_strength = 5.0;
    const auto ds = generate(c);
    ModelConfig mc;
    mc.input_dim = 15;
    mc.hidden_dims = {8};
    mc.z_c_dim = 2;
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 16;
    tc.learning_rate = 1e-3;
    const auto fit = fit_vae_kmeans(ds, mc, tc, 2, 1, 0.1);
    CHECK(fit.vae.config().k_classes == 0);
    CHECK(fit.assignment.size() == 64);
    CHECK(fit.training.iterations == 12);
    CHECK(vae_kmeans_pipeline(ds, mc, tc, 2, 1, 0.1) == fit.assignment);
  }
}
