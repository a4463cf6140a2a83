#pragma once

#include "fedspca/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fedspca {

/// Spiked-covariance synthetic model: two planted sparse eigenvectors with
/// eigenvalues (400, 300), unit tail.
struct SyntheticSpec {
  Index d = 500;
  Index n = 1000;  // total instances across workers
  int K = 1;
  bool iid = true;
  std::uint64_t seed = 0;
  double eig1 = 400.0;
  double eig2 = 300.0;
  double eig_rest = 1.0;

  void validate() const;

  /// Ground-truth loadings: entries 1/sqrt(10) in rows 0..9 (column 0) and
  /// rows 10..19 (column 1), zero elsewhere.
  Matrix v_sol() const;
};

/// IID generator: one covariance V D V^T shared by all workers, rows split
/// evenly (counts differ by at most one). The planted columns are the exact
/// top-2 eigenvectors: the remaining eigenvector basis is drawn uniform on
/// [0,1) and orthonormalized against them.
std::vector<DataShard> gen_synthetic_iid(const SyntheticSpec& spec);

/// Non-IID generator: planted columns and eigenvalues shared, but each
/// worker's remaining eigenvector entries are drawn N(0, sigma_i) with a
/// worker-specific sigma_i ~ U[0,1), left unorthogonalized, so every worker
/// samples from its own covariance.
std::vector<DataShard> gen_synthetic_noniid(const SyntheticSpec& spec);

enum class AugmentMode { iid, noniid };

/// Appends 800 random feature columns to a 30-feature base matrix and shards
/// by rows. iid: all entries uniform [0,1). noniid: the added block is
/// partitioned across workers; a worker's own slice is N(0, sigma_i) with
/// sigma_i ~ U[0,1), foreign slices are 80% exact zeros / 20% uniform [0,1).
std::vector<DataShard> augment_wdbc(const Matrix& base, AugmentMode mode, int K,
                                    std::uint64_t seed);

/// Shard files plus everything needed to reload and evaluate a run.
struct Manifest {
  std::string mode;  // synth-iid | synth-noniid | wdbc-iid | wdbc-noniid
  Index d = 0;
  int K = 0;
  Index n = 0;
  std::uint64_t seed = 0;
  Index original_features = 0;            // wdbc modes
  std::vector<std::string> shard_paths;   // relative to the manifest
  std::string v_sol_path;                 // synth modes
  SyntheticSpec spec;                     // synth modes echo
};

/// Writes shard_<k>.csv files, v_sol.csv when available, and manifest.json
/// under `dir`. Returns the manifest path.
std::string write_dataset(const std::string& dir, const std::vector<DataShard>& shards,
                          Manifest manifest, const Matrix* v_sol = nullptr);

Manifest read_manifest(const std::string& path);

/// Loads the shards referenced by a manifest (paths resolved relative to it).
std::vector<DataShard> load_shards(const Manifest& manifest, const std::string& manifest_path);

/// Loads v_sol for a manifest; empty matrix when the manifest has none.
Matrix load_v_sol(const Manifest& manifest, const std::string& manifest_path);

}  // namespace fedspca
