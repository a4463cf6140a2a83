#include "fedspca/csv.hpp"
#include "fedspca/datagen.hpp"
#include "fedspca/faspca.hpp"
#include "fedspca/federation.hpp"
#include "fedspca/fsspca.hpp"
#include "fedspca/metrics.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fedspca;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitTransport = 4;

struct GenOptions {
  std::string kind;  // synth | wdbc
  bool iid = true;
  bool noniid = false;
  Index d = 500;
  Index n = 1000;
  int k = 1;
  std::uint64_t seed = 0;
  double eig1 = 400.0;
  double eig2 = 300.0;
  std::string out_dir = "./out";
  // wdbc
  std::string input;
  std::string mode = "iid";
  bool header = false;
  std::vector<int> drop_cols;
};

struct RunOptions {
  std::string algorithm;
  std::string manifest;
  HyperParams params;
  int deflate = 0;
  std::string transport = "in_process";
  std::string bind = "127.0.0.1:7447";
  int threads = 0;
  std::uint64_t seed = 0;
  std::string out_dir = "./out";
  std::string sweep;
  std::string port_file;
  int k = 0;  // master mode only
};

struct MetricsOptions {
  std::string loadings;
  std::string v_sol;
  std::string manifest;
  double tol = 1e-6;
  Index original_count = -1;
  std::string out;
};

struct WorkerOptions {
  std::string connect = "127.0.0.1:7447";
  std::string shard;
  int worker_id = 0;
  bool header = false;
  std::vector<int> drop_cols;
  std::string out;
};

json params_json(const HyperParams& p) {
  return json{{"lambda", p.lambda},
              {"lambda1", p.lambda1},
              {"lambda2", p.lambda2},
              {"rho", p.rho},
              {"mu", p.mu},
              {"r", p.r},
              {"c1", p.c1},
              {"c2", p.c2},
              {"max_rounds", p.max_rounds},
              {"max_linesearch_steps", p.max_linesearch_steps},
              {"max_inner_iters", p.max_inner_iters},
              {"tol_primal", p.tol_primal},
              {"tol_dual", p.tol_dual},
              {"tol_inner", p.tol_inner},
              {"seed", p.seed}};
}

json report_json(const std::string& algorithm, const SessionConfig& cfg, const RunReport& report,
                 const std::string& manifest_path, const Matrix& v_sol,
                 const std::vector<DataShard>* centered_shards) {
  json metrics = json::object();
  const LoadingMatrix& z = report.result.loadings;
  metrics["l0_count_tol1e6"] = l0_count(z.values, 1e-6);
  metrics["l0_count_tol0"] = l0_count(z.values, 0.0);
  if (!report.result.trace.empty()) {
    metrics["final_mean_abs_cosine"] = report.result.trace.back().mean_abs_cosine;
    metrics["final_primal_residual"] = report.result.trace.back().primal_residual;
    metrics["final_dual_residual"] = report.result.trace.back().dual_residual;
    metrics["final_objective"] = report.result.trace.back().objective;
  }
  if (v_sol.size() > 0 && v_sol.rows() == z.dim()) {
    LoadingMatrix truth;
    truth.values = v_sol.leftCols(std::min(v_sol.cols(), z.rank()));
    truth.orthonormal = true;
    LoadingMatrix head;
    head.values = z.values.leftCols(truth.values.cols());
    head.orthonormal = z.orthonormal;
    metrics["recovery_error"] = recovery_error(head, truth);
  }
  if (centered_shards) {
    metrics["reconstruction_error"] = reconstruction_error(*centered_shards, z);
  }

  json schedule = json::array();
  for (const auto& step : cfg.schedule) {
    schedule.push_back(json{{"r", step.r}, {"params", params_json(step.params)}});
  }

  return json{{"kind", "fedspca-report"},
              {"algorithm", algorithm},
              {"manifest", manifest_path},
              {"workers", report.workers},
              {"params", params_json(cfg.params)},
              {"schedule", schedule},
              {"seed", cfg.seed},
              {"transport", cfg.transport == TransportKind::tcp ? "tcp" : "in_process"},
              {"threads", cfg.threads},
              {"converged", report.result.converged},
              {"rounds", report.result.rounds},
              {"phase_rounds", report.result.phase_rounds},
              {"messages_sent", report.result.messages_sent},
              {"bytes_sent", report.result.bytes_sent},
              {"metrics", metrics}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  out << text;
}

int run_gen(const GenOptions& opt) {
  std::vector<DataShard> shards;
  Manifest manifest;
  std::optional<Matrix> v_sol;

  if (opt.kind == "synth") {
    SyntheticSpec spec;
    spec.d = opt.d;
    spec.n = opt.n;
    spec.K = opt.k;
    spec.seed = opt.seed;
    spec.iid = !opt.noniid;
    spec.eig1 = opt.eig1;
    spec.eig2 = opt.eig2;
    shards = spec.iid ? gen_synthetic_iid(spec) : gen_synthetic_noniid(spec);
    v_sol = spec.v_sol();
    manifest.mode = spec.iid ? "synth-iid" : "synth-noniid";
    manifest.spec = spec;
    manifest.seed = opt.seed;
  } else {
    const Matrix base = read_matrix_csv(opt.input, opt.header, opt.drop_cols);
    const AugmentMode mode = opt.mode == "noniid" ? AugmentMode::noniid : AugmentMode::iid;
    shards = augment_wdbc(base, mode, opt.k, opt.seed);
    manifest.mode = mode == AugmentMode::iid ? "wdbc-iid" : "wdbc-noniid";
    manifest.original_features = base.cols();
    manifest.seed = opt.seed;
  }

  const std::string path =
      write_dataset(opt.out_dir, shards, manifest, v_sol ? &*v_sol : nullptr);
  std::cout << path << "\n";
  return kExitOk;
}

std::vector<DeflationStep> make_schedule(const RunOptions& opt) {
  std::vector<DeflationStep> schedule;
  if (opt.deflate > 0) {
    DeflationStep step;
    step.r = 1;
    step.params = opt.params;
    step.params.r = 1;
    schedule.assign(static_cast<std::size_t>(opt.deflate), step);
  }
  return schedule;
}

struct SweepSpec {
  std::string name;
  std::vector<double> values;
};

SweepSpec parse_sweep(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("--sweep expects name=start:stop:step");
  }
  SweepSpec spec;
  spec.name = text.substr(0, eq);
  if (spec.name != "lambda" && spec.name != "lambda1" && spec.name != "lambda2") {
    throw std::invalid_argument("--sweep supports lambda, lambda1 or lambda2");
  }
  const std::string range = text.substr(eq + 1);
  const auto c1 = range.find(':');
  const auto c2 = range.find(':', c1 == std::string::npos ? 0 : c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos) {
    throw std::invalid_argument("--sweep expects name=start:stop:step");
  }
  const double start = std::stod(range.substr(0, c1));
  const double stop = std::stod(range.substr(c1 + 1, c2 - c1 - 1));
  const double step = std::stod(range.substr(c2 + 1));
  if (!(step > 0.0) || stop < start) throw std::invalid_argument("--sweep has an empty range");
  for (double v = start; v <= stop + 1e-12; v += step) spec.values.push_back(v);
  return spec;
}

void apply_sweep_value(SessionConfig& cfg, const std::string& name, double value) {
  if (name == "lambda") cfg.params.lambda = value;
  if (name == "lambda1") cfg.params.lambda1 = value;
  if (name == "lambda2") cfg.params.lambda2 = value;
  for (auto& step : cfg.schedule) {
    if (name == "lambda") step.params.lambda = value;
    if (name == "lambda1") step.params.lambda1 = value;
    if (name == "lambda2") step.params.lambda2 = value;
  }
}

int run_run(RunOptions& opt, bool master_mode) {
  SessionConfig cfg;
  cfg.algorithm = algorithm_from_string(opt.algorithm);
  cfg.params = opt.params;
  cfg.params.seed = opt.seed;
  if (cfg.algorithm == Algorithm::faspca && opt.deflate == 0) cfg.params.r = 1;
  cfg.schedule = make_schedule(opt);
  cfg.transport = opt.transport == "tcp" ? TransportKind::tcp : TransportKind::in_process;
  cfg.bind_address = opt.bind;
  cfg.threads = opt.threads;
  cfg.seed = opt.seed;

  fs::create_directories(opt.out_dir);
  cfg.trace_path = (fs::path(opt.out_dir) / "trace.csv").string();

  std::vector<DataShard> shards;
  Matrix v_sol;
  std::string manifest_path = opt.manifest;
  if (!opt.manifest.empty()) {
    const Manifest manifest = read_manifest(opt.manifest);
    v_sol = load_v_sol(manifest, opt.manifest);
    if (cfg.transport == TransportKind::in_process) {
      shards = load_shards(manifest, opt.manifest);
      cfg.workers = static_cast<int>(shards.size());
    } else {
      cfg.workers = manifest.K;
    }
  } else if (master_mode || cfg.transport == TransportKind::tcp) {
    cfg.workers = opt.k;
  } else {
    throw std::invalid_argument("run: --manifest is required for in-process sessions");
  }

  // Metrics are computed against the data exactly as the solver saw it.
  std::optional<std::vector<DataShard>> centered;
  if (!shards.empty()) centered = center_federated(shards).first;

  RunReport report;
  if (cfg.transport == TransportKind::tcp) {
    TcpMaster master(cfg.bind_address);
    std::cout << "listening on port " << master.port() << "\n";
    if (!opt.port_file.empty()) write_text(opt.port_file, std::to_string(master.port()) + "\n");
    report = master.run(cfg);
  } else if (!opt.sweep.empty()) {
    const SweepSpec sweep = parse_sweep(opt.sweep);
    std::ofstream sweep_out((fs::path(opt.out_dir) / "sweep.csv").string());
    sweep_out << sweep.name << ",recovery_error,reconstruction_error,rounds,converged\n";
    double best_score = std::numeric_limits<double>::infinity();
    for (double value : sweep.values) {
      SessionConfig point = cfg;
      apply_sweep_value(point, sweep.name, value);
      const RunReport candidate = run_session(point, shards);
      double recovery = std::numeric_limits<double>::quiet_NaN();
      if (v_sol.size() > 0) {
        LoadingMatrix truth;
        truth.values = v_sol.leftCols(std::min(v_sol.cols(), candidate.result.loadings.rank()));
        truth.orthonormal = true;
        LoadingMatrix head;
        head.values = candidate.result.loadings.values.leftCols(truth.values.cols());
        recovery = recovery_error(head, truth);
      }
      const double recon = reconstruction_error(*centered, candidate.result.loadings);
      sweep_out << value << ',' << recovery << ',' << recon << ',' << candidate.result.rounds
                << ',' << (candidate.result.converged ? 1 : 0) << '\n';
      const double score = v_sol.size() > 0 ? recovery : recon;
      if (score < best_score) {
        best_score = score;
        report = candidate;
        cfg = point;
      }
    }
  } else {
    report = run_session(cfg, shards);
  }

  write_matrix_csv((fs::path(opt.out_dir) / "loadings.csv").string(),
                   report.result.loadings.values);
  const json rep = report_json(opt.algorithm, cfg, report, manifest_path, v_sol,
                               centered ? &*centered : nullptr);
  write_text((fs::path(opt.out_dir) / "report.json").string(), rep.dump(2) + "\n");
  std::cout << rep.dump(2) << "\n";
  if (!report.result.converged) std::cerr << "warning: stopped at max_rounds\n";
  return kExitOk;
}

int run_metrics(const MetricsOptions& opt) {
  const Matrix z = read_matrix_csv(opt.loadings);
  json out = json::object();
  out["l0_count"] = l0_count(z, opt.tol);
  out["l0_tol"] = opt.tol;

  if (!opt.v_sol.empty()) {
    const Matrix v = read_matrix_csv(opt.v_sol);
    LoadingMatrix lz;
    lz.values = z;
    LoadingMatrix lv;
    lv.values = v;
    lv.orthonormal = true;
    out["recovery_error"] = recovery_error(lz, lv);
  }
  if (!opt.manifest.empty()) {
    const Manifest manifest = read_manifest(opt.manifest);
    auto shards = load_shards(manifest, opt.manifest);
    auto centered = center_federated(shards).first;
    LoadingMatrix lz;
    lz.values = z;
    out["reconstruction_error"] = reconstruction_error(centered, lz);
    if (opt.original_count < 0 && manifest.original_features > 0) {
      const SmallValueProfile profile = small_value_profile(z, manifest.original_features);
      out["small_value_profile"] = {{"original", profile.original}, {"added", profile.added}};
    }
  }
  if (opt.original_count >= 0) {
    const SmallValueProfile profile = small_value_profile(z, opt.original_count);
    out["small_value_profile"] = {{"original", profile.original}, {"added", profile.added}};
  }

  const std::string text = out.dump(2) + "\n";
  std::cout << text;
  if (!opt.out.empty()) write_text(opt.out, text);
  return kExitOk;
}

int run_worker_cmd(const WorkerOptions& opt) {
  const auto colon = opt.connect.rfind(':');
  if (colon == std::string::npos) {
    throw std::invalid_argument("--connect expects host:port");
  }
  const std::string host = opt.connect.substr(0, colon);
  const int port = std::stoi(opt.connect.substr(colon + 1));

  DataShard shard;
  shard.worker_id = opt.worker_id;
  shard.values = read_matrix_csv(opt.shard, opt.header, opt.drop_cols);
  const LoadingMatrix final_loadings = run_worker(host, port, shard);
  if (!opt.out.empty() && final_loadings.values.size() > 0) {
    write_matrix_csv(opt.out, final_loadings.values);
  }
  std::cout << "session complete, " << final_loadings.values.rows() << "x"
            << final_loadings.values.cols() << " loadings received\n";
  return kExitOk;
}

void add_hyper_options(CLI::App* cmd, RunOptions& opt) {
  cmd->add_option("--lambda", opt.params.lambda, "Consensus l1 weight (approximation solver)");
  cmd->add_option("--lambda1", opt.params.lambda1, "Smoothing weight (smoothing solver)");
  cmd->add_option("--lambda2", opt.params.lambda2, "Consensus l1 weight (smoothing solver)");
  cmd->add_option("--rho", opt.params.rho, "ADMM penalty parameter");
  cmd->add_option("--mu", opt.params.mu, "Smoothing similarity parameter");
  cmd->add_option("--r", opt.params.r, "Number of loadings");
  cmd->add_option("--c1", opt.params.c1, "Sufficient-decrease constant");
  cmd->add_option("--c2", opt.params.c2, "Curvature constant");
  cmd->add_option("--max-rounds", opt.params.max_rounds, "Round cap per solve");
  cmd->add_option("--max-linesearch-steps", opt.params.max_linesearch_steps,
                  "Line-search step cap");
  cmd->add_option("--max-inner-iters", opt.params.max_inner_iters, "Worker descent cap per round");
  cmd->add_option("--tol-primal", opt.params.tol_primal, "Primal tolerance (<= 0: auto)");
  cmd->add_option("--tol-dual", opt.params.tol_dual, "Dual tolerance (<= 0: auto)");
  cmd->add_option("--tol-inner", opt.params.tol_inner, "Worker gradient tolerance");
  cmd->add_option("--deflate", opt.deflate, "Extract this many loadings one at a time");
  cmd->add_option("--threads", opt.threads, "Worker executor bound (0: one per shard)");
  cmd->add_option("--seed", opt.seed, "Session seed");
  cmd->add_option("--out-dir", opt.out_dir, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated sparse principal component analysis toolkit"};
  app.set_config("--config", "fedspca.conf", "Read defaults from a key = value file");
  app.require_subcommand(1);

  GenOptions gen;
  RunOptions run;
  MetricsOptions met;
  RunOptions master;
  WorkerOptions worker;

  // gen
  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate federated datasets");
  gen_cmd->require_subcommand(1);
  CLI::App* gen_synth = gen_cmd->add_subcommand("synth", "Spiked-covariance synthetic data");
  gen_synth->add_flag("--iid", gen.iid, "Shared covariance across workers (default)");
  gen_synth->add_flag("--noniid", gen.noniid, "Worker-specific covariance tails");
  gen_synth->add_option("--d", gen.d, "Feature dimension");
  gen_synth->add_option("--n", gen.n, "Total instance count");
  gen_synth->add_option("--k", gen.k, "Worker count")->required();
  gen_synth->add_option("--seed", gen.seed, "Generator seed");
  gen_synth->add_option("--eig1", gen.eig1, "Leading eigenvalue");
  gen_synth->add_option("--eig2", gen.eig2, "Second eigenvalue");
  gen_synth->add_option("--out-dir", gen.out_dir, "Output directory");
  CLI::App* gen_wdbc = gen_cmd->add_subcommand("wdbc", "Augment a 30-feature table with 800 random features");
  gen_wdbc->add_option("--input", gen.input, "Source CSV")->required();
  gen_wdbc->add_option("--mode", gen.mode, "iid | noniid")
      ->check(CLI::IsMember({"iid", "noniid"}));
  gen_wdbc->add_option("--k", gen.k, "Worker count")->required();
  gen_wdbc->add_option("--seed", gen.seed, "Generator seed");
  gen_wdbc->add_flag("--header", gen.header, "Skip the first line of the input");
  gen_wdbc->add_option("--drop-cols", gen.drop_cols, "Zero-based columns to drop (e.g. id, label)");
  gen_wdbc->add_option("--out-dir", gen.out_dir, "Output directory");

  // run
  CLI::App* run_cmd = app.add_subcommand("run", "Run a federated solve over a manifest");
  run_cmd->add_option("algorithm", run.algorithm, "fsspca | faspca")
      ->required()
      ->check(CLI::IsMember({"fsspca", "faspca"}));
  run_cmd->add_option("--manifest", run.manifest, "Dataset manifest path");
  run_cmd->add_option("--transport", run.transport, "in_process | tcp")
      ->check(CLI::IsMember({"in_process", "tcp"}));
  run_cmd->add_option("--bind", run.bind, "Listen address for tcp transport");
  run_cmd->add_option("--port-file", run.port_file, "Write the bound tcp port to this file");
  run_cmd->add_option("--sweep", run.sweep, "Sweep one weight: lambda=start:stop:step");
  add_hyper_options(run_cmd, run);

  // metrics
  CLI::App* met_cmd = app.add_subcommand("metrics", "Evaluate stored loadings");
  met_cmd->add_option("--loadings", met.loadings, "Loadings CSV")->required();
  met_cmd->add_option("--v-sol", met.v_sol, "Ground-truth loadings CSV");
  met_cmd->add_option("--manifest", met.manifest, "Manifest for reconstruction error");
  met_cmd->add_option("--tol", met.tol, "Threshold for the l0 count");
  met_cmd->add_option("--original-count", met.original_count,
                      "Original-feature rows for the small-value profile");
  met_cmd->add_option("--out", met.out, "Also write the report here");

  // master
  CLI::App* master_cmd = app.add_subcommand("master", "Host a tcp session and wait for workers");
  master_cmd->add_option("algorithm", master.algorithm, "fsspca | faspca")
      ->required()
      ->check(CLI::IsMember({"fsspca", "faspca"}));
  master_cmd->add_option("--k", master.k, "Number of workers to accept")->required();
  master_cmd->add_option("--manifest", master.manifest, "Optional manifest (metrics only)");
  master_cmd->add_option("--bind", master.bind, "Listen address");
  master_cmd->add_option("--port-file", master.port_file, "Write the bound port to this file");
  add_hyper_options(master_cmd, master);

  // worker
  CLI::App* worker_cmd = app.add_subcommand("worker", "Join a tcp session with a local shard");
  worker_cmd->add_option("--connect", worker.connect, "Master address host:port")->required();
  worker_cmd->add_option("--shard", worker.shard, "Local shard CSV")->required();
  worker_cmd->add_option("--worker-id", worker.worker_id, "Worker id")->required();
  worker_cmd->add_flag("--header", worker.header, "Skip the first line of the shard file");
  worker_cmd->add_option("--drop-cols", worker.drop_cols, "Zero-based columns to drop");
  worker_cmd->add_option("--out", worker.out, "Save the final loadings here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen_synth->parsed()) {
      gen.kind = "synth";
      return run_gen(gen);
    }
    if (gen_wdbc->parsed()) {
      gen.kind = "wdbc";
      return run_gen(gen);
    }
    if (run_cmd->parsed()) {
      run.transport = run.transport.empty() ? "in_process" : run.transport;
      return run_run(run, false);
    }
    if (met_cmd->parsed()) return run_metrics(met);
    if (master_cmd->parsed()) {
      master.transport = "tcp";
      return run_run(master, true);
    }
    if (worker_cmd->parsed()) return run_worker_cmd(worker);
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return kExitTransport;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
