#include "fedspca/datagen.hpp"

#include "fedspca/csv.hpp"
#include "fedspca/rng.hpp"
#include "fedspca/stiefel.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace fedspca {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr Index kPlantedSupport = 10;
constexpr Index kAddedFeatures = 800;
constexpr Index kWdbcFeatures = 30;

/// Splits n rows into K contiguous blocks whose sizes differ by at most one.
std::vector<Index> split_counts(Index n, int K) {
  std::vector<Index> counts(static_cast<std::size_t>(K));
  const Index base = n / K;
  const Index extra = n % K;
  for (int i = 0; i < K; ++i) {
    counts[static_cast<std::size_t>(i)] = base + (i < extra ? 1 : 0);
  }
  return counts;
}

Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.gaussian();
  }
  return m;
}

/// Rows sampled from N(0, L L^T) as G L^T with standard-normal G.
Matrix sample_rows(Index n, const Matrix& loading_factor, Rng& rng) {
  const Matrix g = gaussian_matrix(n, loading_factor.cols(), rng);
  return g * loading_factor.transpose();
}

std::vector<DataShard> shard_rows(const Matrix& data, int K) {
  const auto counts = split_counts(data.rows(), K);
  std::vector<DataShard> shards;
  shards.reserve(static_cast<std::size_t>(K));
  Index offset = 0;
  for (int i = 0; i < K; ++i) {
    DataShard s;
    s.worker_id = i;
    s.values = data.middleRows(offset, counts[static_cast<std::size_t>(i)]);
    offset += counts[static_cast<std::size_t>(i)];
    shards.push_back(std::move(s));
  }
  return shards;
}

Vector eigenvalue_diagonal(const SyntheticSpec& spec) {
  Vector eigs = Vector::Constant(spec.d, spec.eig_rest);
  eigs(0) = spec.eig1;
  eigs(1) = spec.eig2;
  return eigs;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (d < 2 * kPlantedSupport) {
    throw std::invalid_argument("SyntheticSpec: d must be >= 20 to host the planted supports");
  }
  if (n < 1) throw std::invalid_argument("SyntheticSpec: n must be >= 1");
  if (K < 1) throw std::invalid_argument("SyntheticSpec: K must be >= 1");
  if (n < K) throw std::invalid_argument("SyntheticSpec: need at least one row per worker");
  if (!(eig1 > 0.0 && eig2 > 0.0 && eig_rest > 0.0)) {
    throw std::invalid_argument("SyntheticSpec: eigenvalues must be positive");
  }
}

Matrix SyntheticSpec::v_sol() const {
  Matrix v = Matrix::Zero(d, 2);
  const double value = 1.0 / std::sqrt(static_cast<double>(kPlantedSupport));
  for (Index i = 0; i < kPlantedSupport; ++i) {
    v(i, 0) = value;
    v(kPlantedSupport + i, 1) = value;
  }
  return v;
}

std::vector<DataShard> gen_synthetic_iid(const SyntheticSpec& spec) {
  spec.validate();
  Rng basis_rng(Rng::mix(spec.seed, 0x1d));
  Rng sample_rng(Rng::mix(spec.seed, 0x2d));

  const Matrix planted = spec.v_sol();

  // Raw uniform tail columns, projected off the planted pair and
  // orthonormalized so the planted columns are exactly the top eigenvectors.
  Matrix tail(spec.d, spec.d - 2);
  for (Index i = 0; i < spec.d; ++i) {
    for (Index j = 0; j < spec.d - 2; ++j) tail(i, j) = basis_rng.uniform();
  }
  tail -= planted * (planted.transpose() * tail);
  const Matrix tail_basis = qf(tail);

  Matrix eigvecs(spec.d, spec.d);
  eigvecs << planted, tail_basis;

  const Vector eigs = eigenvalue_diagonal(spec);
  const Matrix loading_factor = eigvecs * eigs.cwiseSqrt().asDiagonal();

  const Matrix rows = sample_rows(spec.n, loading_factor, sample_rng);
  return shard_rows(rows, spec.K);
}

std::vector<DataShard> gen_synthetic_noniid(const SyntheticSpec& spec) {
  spec.validate();
  if (spec.K < 2) throw std::invalid_argument("gen_synthetic_noniid: needs K >= 2");

  const Matrix planted = spec.v_sol();
  const Vector eigs = eigenvalue_diagonal(spec);
  const auto counts = split_counts(spec.n, spec.K);

  Rng sigma_rng(Rng::mix(spec.seed, 0x51));
  std::vector<DataShard> shards;
  shards.reserve(static_cast<std::size_t>(spec.K));
  // Tail entries are scaled by 1/sqrt(d) so a tail column has norm ~sigma_k:
  // eigenvector-sized directions whose magnitude varies per worker. At raw
  // N(0, sigma_k) scale the tail would contribute directions with weight
  // ~4 d sigma_k^2 (up to ~2000 at d = 500), drowning the planted
  // eigenvalues and making recovery impossible for any solver.
  const double tail_scale = 1.0 / std::sqrt(static_cast<double>(spec.d));
  for (int k = 0; k < spec.K; ++k) {
    const double sigma = sigma_rng.uniform();
    Rng worker_rng(Rng::mix(spec.seed, 0x60 + static_cast<std::uint64_t>(k)));

    // Worker-specific eigenvector tail: per-worker random directions, not
    // orthogonalized, so each worker owns a distinct covariance.
    Matrix eigvecs(spec.d, spec.d);
    eigvecs.leftCols(2) = planted;
    for (Index i = 0; i < spec.d; ++i) {
      for (Index j = 2; j < spec.d; ++j) {
        eigvecs(i, j) = sigma * tail_scale * worker_rng.gaussian();
      }
    }
    const Matrix loading_factor = eigvecs * eigs.cwiseSqrt().asDiagonal();

    DataShard s;
    s.worker_id = k;
    s.values = sample_rows(counts[static_cast<std::size_t>(k)], loading_factor, worker_rng);
    shards.push_back(std::move(s));
  }
  return shards;
}

std::vector<DataShard> augment_wdbc(const Matrix& base, AugmentMode mode, int K,
                                    std::uint64_t seed) {
  if (base.cols() != kWdbcFeatures) {
    throw std::invalid_argument("augment_wdbc: base must have exactly 30 feature columns");
  }
  if (K < 1) throw std::invalid_argument("augment_wdbc: K must be >= 1");
  if (base.rows() < K) throw std::invalid_argument("augment_wdbc: fewer rows than workers");

  if (mode == AugmentMode::iid) {
    Rng rng(Rng::mix(seed, 0xa1));
    Matrix full(base.rows(), kWdbcFeatures + kAddedFeatures);
    full.leftCols(kWdbcFeatures) = base;
    for (Index i = 0; i < base.rows(); ++i) {
      for (Index j = 0; j < kAddedFeatures; ++j) {
        full(i, kWdbcFeatures + j) = rng.uniform();
      }
    }
    return shard_rows(full, K);
  }

  // Non-IID: the added block is partitioned across workers. A worker's own
  // slice is N(0, sigma_k); slices allocated to other workers are 80% exact
  // zeros and 20% uniform [0,1).
  const auto row_counts = split_counts(base.rows(), K);
  const auto col_counts = split_counts(kAddedFeatures, K);
  std::vector<Index> col_offsets(static_cast<std::size_t>(K), 0);
  for (int k = 1; k < K; ++k) {
    col_offsets[static_cast<std::size_t>(k)] =
        col_offsets[static_cast<std::size_t>(k - 1)] + col_counts[static_cast<std::size_t>(k - 1)];
  }

  Rng sigma_rng(Rng::mix(seed, 0xa2));
  std::vector<double> sigmas(static_cast<std::size_t>(K));
  for (auto& s : sigmas) s = sigma_rng.uniform();

  std::vector<DataShard> shards;
  shards.reserve(static_cast<std::size_t>(K));
  Index row_offset = 0;
  for (int k = 0; k < K; ++k) {
    const Index rows = row_counts[static_cast<std::size_t>(k)];
    Rng rng(Rng::mix(seed, 0xb0 + static_cast<std::uint64_t>(k)));
    Matrix values(rows, kWdbcFeatures + kAddedFeatures);
    values.leftCols(kWdbcFeatures) = base.middleRows(row_offset, rows);
    row_offset += rows;

    for (int b = 0; b < K; ++b) {
      const Index c0 = kWdbcFeatures + col_offsets[static_cast<std::size_t>(b)];
      const Index width = col_counts[static_cast<std::size_t>(b)];
      for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < width; ++j) {
          if (b == k) {
            values(i, c0 + j) = sigmas[static_cast<std::size_t>(k)] * rng.gaussian();
          } else {
            const bool zero = rng.uniform() < 0.8;
            values(i, c0 + j) = zero ? 0.0 : rng.uniform();
          }
        }
      }
    }

    DataShard s;
    s.worker_id = k;
    s.values = std::move(values);
    shards.push_back(std::move(s));
  }
  return shards;
}

namespace {

json spec_to_json(const SyntheticSpec& s) {
  return json{{"d", s.d},       {"n", s.n},           {"k", s.K},
              {"iid", s.iid},   {"seed", s.seed},     {"eig1", s.eig1},
              {"eig2", s.eig2}, {"eig_rest", s.eig_rest}};
}

SyntheticSpec spec_from_json(const json& j) {
  SyntheticSpec s;
  s.d = j.value("d", s.d);
  s.n = j.value("n", s.n);
  s.K = j.value("k", s.K);
  s.iid = j.value("iid", s.iid);
  s.seed = j.value("seed", s.seed);
  s.eig1 = j.value("eig1", s.eig1);
  s.eig2 = j.value("eig2", s.eig2);
  s.eig_rest = j.value("eig_rest", s.eig_rest);
  return s;
}

}  // namespace

std::string write_dataset(const std::string& dir, const std::vector<DataShard>& shards,
                          Manifest manifest, const Matrix* v_sol) {
  if (shards.empty()) throw std::invalid_argument("write_dataset: no shards");
  fs::create_directories(dir);

  manifest.K = static_cast<int>(shards.size());
  manifest.d = shards.front().cols();
  manifest.n = 0;
  manifest.shard_paths.clear();
  for (const auto& s : shards) {
    const std::string name = "shard_" + std::to_string(s.worker_id) + ".csv";
    write_matrix_csv((fs::path(dir) / name).string(), s.values);
    manifest.shard_paths.push_back(name);
    manifest.n += s.rows();
  }
  if (v_sol) {
    manifest.v_sol_path = "v_sol.csv";
    write_matrix_csv((fs::path(dir) / manifest.v_sol_path).string(), *v_sol);
  }

  json j{{"kind", "fedspca-manifest"},
         {"mode", manifest.mode},
         {"d", manifest.d},
         {"k", manifest.K},
         {"n", manifest.n},
         {"seed", manifest.seed},
         {"original_features", manifest.original_features},
         {"shards", manifest.shard_paths},
         {"v_sol", manifest.v_sol_path},
         {"spec", spec_to_json(manifest.spec)}};

  const std::string path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  out << j.dump(2) << '\n';
  return path;
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": bad manifest: " + e.what());
  }
  if (j.value("kind", "") != "fedspca-manifest") {
    throw std::invalid_argument(path + ": not a fedspca manifest");
  }
  Manifest m;
  m.mode = j.value("mode", "");
  m.d = j.value("d", Index{0});
  m.K = j.value("k", 0);
  m.n = j.value("n", Index{0});
  m.seed = j.value("seed", std::uint64_t{0});
  m.original_features = j.value("original_features", Index{0});
  m.shard_paths = j.value("shards", std::vector<std::string>{});
  m.v_sol_path = j.value("v_sol", "");
  if (j.contains("spec")) m.spec = spec_from_json(j.at("spec"));
  return m;
}

std::vector<DataShard> load_shards(const Manifest& manifest, const std::string& manifest_path) {
  const fs::path dir = fs::path(manifest_path).parent_path();
  std::vector<DataShard> shards;
  shards.reserve(manifest.shard_paths.size());
  int id = 0;
  for (const auto& rel : manifest.shard_paths) {
    DataShard s;
    s.worker_id = id++;
    s.values = read_matrix_csv((dir / rel).string());
    shards.push_back(std::move(s));
  }
  validate_shards(shards);
  return shards;
}

Matrix load_v_sol(const Manifest& manifest, const std::string& manifest_path) {
  if (manifest.v_sol_path.empty()) return {};
  const fs::path dir = fs::path(manifest_path).parent_path();
  return read_matrix_csv((dir / manifest.v_sol_path).string());
}

}  // namespace fedspca
