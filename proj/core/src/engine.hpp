#pragma once

#include "fedspca/federation.hpp"
#include "fedspca/report.hpp"
#include "fedspca/types.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace fedspca::detail {

struct HelloInfo {
  int worker_id = 0;
  Index n = 0;
  Index d = 0;
};

struct LocalUpdateData {
  Matrix w;
  double f_data = 0.0;  // reconstruction (+ smoothing) term at the sent loading
};

/// Typed view of one worker as seen by the master. The in-process transport
/// calls straight into worker state; the TCP transport speaks frames. Both
/// meter the messages the exchange would put on the wire so reports agree
/// across transports.
class WorkerEndpoint {
 public:
  virtual ~WorkerEndpoint() = default;

  virtual HelloInfo hello() = 0;
  virtual Vector center_stats() = 0;
  virtual void configure(const Vector* mean, const SessionSetup& setup) = 0;
  virtual LocalUpdateData round(int phase, int round_idx, const Matrix& z) = 0;
  virtual void phase_done(int phase, const Matrix& z_accepted) = 0;
  virtual void finish(const Matrix& loadings) = 0;

  std::uint64_t messages() const { return messages_; }
  std::uint64_t bytes() const { return bytes_; }

 protected:
  void meter(const RoundMessage& m, std::uint64_t copies = 1);

  std::uint64_t messages_ = 0;
  std::uint64_t bytes_ = 0;
};

/// Worker-side algorithm state machine, shared by the in-process endpoint
/// and the remote worker loop.
class LocalWorker {
 public:
  explicit LocalWorker(DataShard shard);

  HelloInfo hello() const;
  Vector center_stats() const;  // d column sums followed by the row count
  void configure(const Vector* mean, const SessionSetup& setup);
  LocalUpdateData round(int phase, int round_idx, const Matrix& z);
  void phase_done(int phase, const Matrix& z_accepted);

 private:
  void begin_phase(int phase);
  const DeflationStep& phase_step(int phase) const;

  DataShard shard_;
  SessionSetup setup_;
  std::vector<DeflationStep> phases_;
  bool configured_ = false;
  int phase_ = -1;

  Matrix gram_;  // (A^i)^T A^i for the current (possibly deflated) shard
  bool use_gram_ = true;
  double data_sq_norm_ = 0.0;
  Matrix w_;
  Matrix u_;
  std::shared_ptr<Matrix> metric_;  // complement projector; null in phase 0
};

/// Runs the synchronous round protocol over a set of endpoints. Gathers in
/// worker-id order so reductions are deterministic. Trace rows accumulate in
/// `trace` as they happen, so a partial trace survives a mid-session abort.
SolveResult drive_rounds(const SessionSetup& setup,
                         std::span<std::unique_ptr<WorkerEndpoint>> workers, int threads,
                         std::vector<TraceRow>& trace);

/// Convenience: in-process endpoints over the given shards, no centering.
SolveResult solve_in_process(const SessionSetup& setup, std::span<const DataShard> shards,
                             int threads);

std::unique_ptr<WorkerEndpoint> make_in_process_endpoint(DataShard shard, Algorithm algo);

/// Applies fn(i) for i in [0, n) on up to `threads` executors (0 = one per task).
void parallel_for_workers(int n, int threads, const std::function<void(int)>& fn);

}  // namespace fedspca::detail
