#include "jvae/data.hpp"

#include "jvae/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace jvae {

namespace fs = std::filesystem;
using nlohmann::json;

ConnectomeDataset ConnectomeDataset::subset(const std::vector<Index>& idx) const {
  ConnectomeDataset out;
  out.x.resize(static_cast<Index>(idx.size()), x.cols());
  out.n_sites = n_sites;
  out.norm = norm;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Index i = idx[r];
    out.x.row(static_cast<Index>(r)) = x.row(i);
    out.site.push_back(site[static_cast<std::size_t>(i)]);
    if (!subject_id.empty()) out.subject_id.push_back(subject_id[static_cast<std::size_t>(i)]);
    if (!meta.empty()) out.meta.push_back(meta[static_cast<std::size_t>(i)]);
  }
  return out;
}

void ConnectomeDataset::validate() const {
  if (static_cast<Index>(site.size()) != x.rows()) {
    throw ConfigError("dataset has " + std::to_string(x.rows()) + " rows but " +
                      std::to_string(site.size()) + " site labels");
  }
  if (x.size() > 0 && (x.minCoeff() < 0.0 || x.maxCoeff() > 1.0)) {
    throw ConfigError("dataset values outside [0,1]");
  }
  std::vector<int> count(static_cast<std::size_t>(std::max(n_sites, 0)), 0);
  for (int s : site) {
    if (s < 0 || s >= n_sites) throw ConfigError("site label " + std::to_string(s) + " out of range");
    ++count[static_cast<std::size_t>(s)];
  }
  for (int s = 0; s < n_sites; ++s) {
    if (count[static_cast<std::size_t>(s)] == 0) {
      throw ConfigError("site " + std::to_string(s) + " has no rows; labels must be contiguous");
    }
  }
}

void SyntheticConfig::validate() const {
  if (n_subjects < 1 || n_edges < 1 || n_sites < 1 || bio_rank < 1) {
    throw ConfigError("synthetic config: all counts must be >= 1");
  }
  if (site_strength < 0.0 || noise_sd < 0.0 || site_imbalance < 0.0) {
    throw ConfigError("synthetic config: site_strength, noise_sd and site_imbalance must be >= 0");
  }
  if (n_sites > n_edges) throw ConfigError("synthetic config: n_sites must not exceed n_edges");
  if (n_sites > n_subjects) throw ConfigError("synthetic config: n_sites must not exceed n_subjects");
}

namespace {

std::vector<int> assign_sites(const SyntheticConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.n_subjects);
  const auto s = static_cast<std::size_t>(cfg.n_sites);
  std::vector<int> site(n);
  if (cfg.site_imbalance <= 0.0) {
    for (std::size_t i = 0; i < n; ++i) site[i] = static_cast<int>(i % s);
    return site;
  }
  RngStream rng(cfg.seed, "sites");
  std::gamma_distribution<double> gamma(cfg.site_imbalance, 1.0);
  std::vector<double> w(s);
  for (auto& v : w) v = gamma(rng.engine()) + 1e-12;
  std::discrete_distribution<int> pick(w.begin(), w.end());
  // The first S subjects cover every site once so labels stay contiguous.
  for (std::size_t i = 0; i < n; ++i) site[i] = i < s ? static_cast<int>(i) : pick(rng.engine());
  return site;
}

}  // namespace

ConnectomeDataset generate(const SyntheticConfig& cfg, SyntheticTruth* truth) {
  cfg.validate();
  const Index n = cfg.n_subjects;
  const Index d = cfg.n_edges;
  const Index r = cfg.bio_rank;
  const int s = cfg.n_sites;

  RngStream template_rng(cfg.seed, "template");
  Vector base(d);
  for (Index j = 0; j < d; ++j) base(j) = 1.0 + 5.0 * template_rng.uniform();

  RngStream load_rng(cfg.seed, "loadings");
  const Matrix loadings = load_rng.normal_matrix(d, r) / std::sqrt(static_cast<double>(r));

  RngStream site_rng(cfg.seed, "site_means");
  const Matrix raw = site_rng.normal_matrix(d, s);
  Eigen::HouseholderQR<Matrix> qr(raw);
  const Matrix q = qr.householderQ() * Matrix::Identity(d, s);
  // Orthogonal rows with unit per-entry RMS (norm sqrt(D)), so rho is in the
  // same per-edge units as the biological term.
  const Matrix site_means = std::sqrt(static_cast<double>(d)) * q.transpose();

  RngStream factor_rng(cfg.seed, "factors");
  const Matrix factors = factor_rng.normal_matrix(n, r);

  RngStream noise_rng(cfg.seed, "noise");
  const Matrix noise = cfg.noise_sd * noise_rng.normal_matrix(n, d);

  const std::vector<int> site = assign_sites(cfg);

  Matrix y = factors * loadings.transpose() + noise;
  y.rowwise() += base.transpose();
  for (Index i = 0; i < n; ++i) {
    y.row(i) += cfg.site_strength * site_means.row(site[static_cast<std::size_t>(i)]);
  }
  Matrix counts = y.unaryExpr([](double v) { return std::max(std::round(std::exp(v) - 1.0), 0.0); });

  Normalized nz = normalize(counts);
  ConnectomeDataset ds;
  ds.x = std::move(nz.x);
  ds.norm = nz.manifest;
  ds.site = site;
  ds.n_sites = s;
  ds.subject_id.reserve(static_cast<std::size_t>(n));
  ds.meta.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sub-%05ld", static_cast<long>(i));
    ds.subject_id.emplace_back(buf);
    const double age = std::clamp(50.0 + 15.0 * factors(i, 0), 2.0, 102.0);
    std::ostringstream os;
    os.precision(4);
    os << std::fixed << age;
    ds.meta.push_back({{"age", os.str()}});
  }

  if (truth != nullptr) {
    truth->template_log = base;
    truth->loadings = loadings;
    truth->site_means = site_means;
    truth->factors = factors;
    truth->log_signal = y;
  }
  return ds;
}

Index vector_dim(Index regions, bool include_diagonal) {
  return include_diagonal ? regions * (regions + 1) / 2 : regions * (regions - 1) / 2;
}

Index region_count(Index d, bool include_diagonal) {
  // Solve R(R-1)/2 = d (or R(R+1)/2 = d).
  const double disc = std::sqrt(1.0 + 8.0 * static_cast<double>(d));
  const auto r = static_cast<Index>(std::llround(include_diagonal ? (disc - 1.0) / 2.0 : (disc + 1.0) / 2.0));
  if (vector_dim(r, include_diagonal) != d) {
    throw FormatError(std::to_string(d) + " is not a triangular vector length");
  }
  return r;
}

RowVector vectorize(const Matrix& a, bool include_diagonal) {
  if (a.rows() != a.cols()) throw FormatError("vectorize: matrix is " + shape_str(a) + ", not square");
  const Index r = a.rows();
  RowVector v(vector_dim(r, include_diagonal));
  Index k = 0;
  for (Index i = 0; i < r; ++i) {
    for (Index j = include_diagonal ? i : i + 1; j < r; ++j) v(k++) = a(i, j);
  }
  return v;
}

Matrix devectorize(const RowVector& v, Index regions, bool include_diagonal) {
  if (v.size() != vector_dim(regions, include_diagonal)) {
    throw DimensionError("devectorize: length " + std::to_string(v.size()) + " does not match " +
                         std::to_string(regions) + " regions");
  }
  Matrix a = Matrix::Zero(regions, regions);
  Index k = 0;
  for (Index i = 0; i < regions; ++i) {
    for (Index j = include_diagonal ? i : i + 1; j < regions; ++j) {
      a(i, j) = v(k);
      a(j, i) = v(k);
      ++k;
    }
  }
  return a;
}

Normalized normalize(const Matrix& counts) {
  if (counts.size() == 0) throw ConfigError("normalize: empty dataset");
  if (counts.minCoeff() < 0.0) throw ConfigError("normalize: negative counts");
  Matrix logc = counts.array().log1p().matrix();
  const double g = logc.maxCoeff();
  if (!(g > 0.0)) throw ConfigError("normalize: all-zero dataset");
  Normalized out;
  out.x = logc / g;
  out.manifest.global_max = g;
  return out;
}

Matrix denormalize(const Matrix& x, const NormManifest& manifest) {
  if (manifest.transform != "log1p_max") {
    throw ConfigError("unknown normalization transform '" + manifest.transform + "'");
  }
  return (x.array() * manifest.global_max).expm1().matrix();
}

bool glob_match(std::string_view pattern, std::string_view name) {
  std::size_t p = 0, n = 0, star = std::string_view::npos, mark = 0;
  while (n < name.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
      ++p;
      ++n;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = n;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Matrix read_numeric_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    for (const auto& cell : split_csv_line(line)) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw FormatError(path.filename().string() + ": non-numeric cell '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  const auto r = static_cast<Index>(rows.size());
  Matrix m(r, r);
  for (Index i = 0; i < r; ++i) {
    if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != r) {
      throw FormatError(path.filename().string() + ": matrix is not square (" + std::to_string(r) +
                        " rows, row " + std::to_string(i) + " has " +
                        std::to_string(rows[static_cast<std::size_t>(i)].size()) + " columns)");
    }
    for (Index j = 0; j < r; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  if (r == 0) throw FormatError(path.filename().string() + ": empty matrix");
  return m;
}

}  // namespace

ConnectomeDataset load_matrix_dir(const fs::path& dir, const std::string& pattern,
                                  bool include_diagonal) {
  if (!fs::is_directory(dir)) throw IngestionError(dir.string() + " is not a directory");
  const fs::path meta_path = dir / "metadata.csv";

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name == "metadata.csv") continue;
    if (glob_match(pattern, name)) files.push_back(entry.path());
  }
  if (files.empty()) throw IngestionError("no matrices matching '" + pattern + "' in " + dir.string());
  std::sort(files.begin(), files.end());

  if (!fs::exists(meta_path)) throw IngestionError("missing " + meta_path.string());
  std::ifstream meta_in(meta_path);
  std::string line;
  if (!std::getline(meta_in, line)) throw IngestionError("metadata.csv is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "subject_id" || header[1] != "site") {
    throw FormatError("metadata.csv header must start with subject_id,site");
  }
  std::map<std::string, std::vector<std::string>> meta_rows;
  while (std::getline(meta_in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("metadata.csv: row for '" + (cells.empty() ? std::string() : cells[0]) +
                        "' has " + std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    }
    meta_rows[cells[0]] = std::move(cells);
  }

  std::vector<RowVector> vecs;
  std::vector<std::string> ids;
  std::vector<std::string> site_names;
  Index d = -1;
  for (const auto& f : files) {
    const std::string id = f.stem().string();
    auto it = meta_rows.find(id);
    if (it == meta_rows.end()) throw IngestionError("no metadata row for subject '" + id + "'");
    Matrix a = read_numeric_csv(f);
    if (!a.isApprox(a.transpose(), 0.0)) {
      std::cerr << "warning: " << f.filename().string() << " is not symmetric; using (A+A^T)/2\n";
      a = (0.5 * (a + a.transpose())).eval();
    }
    RowVector v = vectorize(a, include_diagonal);
    if (d >= 0 && v.size() != d) {
      throw FormatError(f.filename().string() + ": region count differs from earlier matrices");
    }
    d = v.size();
    vecs.push_back(std::move(v));
    ids.push_back(id);
    site_names.push_back(it->second[1]);
  }

  Matrix counts(static_cast<Index>(vecs.size()), d);
  for (std::size_t i = 0; i < vecs.size(); ++i) counts.row(static_cast<Index>(i)) = vecs[i];
  Normalized nz = normalize(counts);

  std::set<std::string> uniq(site_names.begin(), site_names.end());
  std::map<std::string, int> site_index;
  for (const auto& name : uniq) site_index.emplace(name, static_cast<int>(site_index.size()));

  ConnectomeDataset ds;
  ds.x = std::move(nz.x);
  ds.norm = nz.manifest;
  ds.norm.include_diagonal = include_diagonal;
  ds.n_sites = static_cast<int>(site_index.size());
  ds.subject_id = ids;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ds.site.push_back(site_index.at(site_names[i]));
    std::map<std::string, std::string> cov;
    const auto& cells = meta_rows.at(ids[i]);
    cov["site_name"] = site_names[i];
    for (std::size_t c = 2; c < header.size(); ++c) cov[header[c]] = cells[c];
    ds.meta.push_back(std::move(cov));
  }
  return ds;
}

std::pair<std::vector<Index>, std::vector<Index>> stratified_split(const ConnectomeDataset& ds,
                                                                   double val_fraction,
                                                                   std::uint64_t seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("val_fraction must be in [0,1)");
  std::vector<std::vector<Index>> by_site(static_cast<std::size_t>(ds.n_sites));
  for (Index i = 0; i < ds.size(); ++i) by_site[static_cast<std::size_t>(ds.site[static_cast<std::size_t>(i)])].push_back(i);
  RngStream rng(seed, "split");
  std::vector<Index> train, val;
  for (auto& rows : by_site) {
    std::shuffle(rows.begin(), rows.end(), rng.engine());
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(rows.size())));
    val.insert(val.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_val), rows.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

double site_variance_ratio(const ConnectomeDataset& ds) {
  const RowVector grand = ds.x.colwise().mean();
  Matrix means = Matrix::Zero(ds.n_sites, ds.dim());
  std::vector<double> count(static_cast<std::size_t>(ds.n_sites), 0.0);
  for (Index i = 0; i < ds.size(); ++i) {
    const int s = ds.site[static_cast<std::size_t>(i)];
    means.row(s) += ds.x.row(i);
    count[static_cast<std::size_t>(s)] += 1.0;
  }
  double between = 0.0;
  for (int s = 0; s < ds.n_sites; ++s) {
    means.row(s) /= count[static_cast<std::size_t>(s)];
    between += count[static_cast<std::size_t>(s)] * (means.row(s) - grand).squaredNorm();
  }
  double within = 0.0;
  for (Index i = 0; i < ds.size(); ++i) {
    within += (ds.x.row(i) - means.row(ds.site[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return within > 0.0 ? between / within : std::numeric_limits<double>::infinity();
}

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw FormatError("truncated binary file");
  return v;
}

constexpr char kDatasetMagic[5] = {'L', 'F', 'D', 'S', '1'};

}  // namespace

void save_dataset(const ConnectomeDataset& ds, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os.write(kDatasetMagic, sizeof kDatasetMagic);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(ds.size()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(ds.dim()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(ds.n_sites));
  os.write(reinterpret_cast<const char*>(ds.x.data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(ds.x.size())));
  for (int s : ds.site) put<std::uint32_t>(os, static_cast<std::uint32_t>(s));
  json manifest = {{"transform", ds.norm.transform},
                   {"global_max", ds.norm.global_max},
                   {"include_diagonal", ds.norm.include_diagonal},
                   {"subject_id", ds.subject_id},
                   {"meta", ds.meta}};
  os << manifest.dump();
}

ConnectomeDataset load_dataset(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot open " + path.string());
  char magic[5];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kDatasetMagic, sizeof magic) != 0) {
    throw FormatError(path.string() + ": not a dataset cache (bad magic)");
  }
  const auto n = get<std::uint64_t>(is);
  const auto d = get<std::uint64_t>(is);
  const auto s = get<std::uint64_t>(is);
  ConnectomeDataset ds;
  ds.x.resize(static_cast<Index>(n), static_cast<Index>(d));
  is.read(reinterpret_cast<char*>(ds.x.data()), static_cast<std::streamsize>(sizeof(double) * n * d));
  if (!is) throw FormatError("truncated dataset cache");
  ds.site.resize(n);
  for (auto& v : ds.site) v = static_cast<int>(get<std::uint32_t>(is));
  ds.n_sites = static_cast<int>(s);
  std::string rest((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    const json manifest = json::parse(rest);
    ds.norm.transform = manifest.at("transform").get<std::string>();
    ds.norm.global_max = manifest.at("global_max").get<double>();
    ds.norm.include_diagonal = manifest.value("include_diagonal", false);
    ds.subject_id = manifest.value("subject_id", std::vector<std::string>{});
    ds.meta = manifest.value("meta", std::vector<std::map<std::string, std::string>>{});
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  return ds;
}

}  // namespace jvae
