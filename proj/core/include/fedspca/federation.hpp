#pragma once

#include "fedspca/fsspca.hpp"
#include "fedspca/report.hpp"
#include "fedspca/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fedspca {

enum class Algorithm { fsspca, faspca };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

/// Resolved session parameters, shipped to workers in the CenterMean message.
struct SessionSetup {
  Algorithm algorithm = Algorithm::fsspca;
  HyperParams params;
  std::vector<DeflationStep> schedule;  // empty: single solve with `params`
  std::uint64_t seed = 0;
  Index d = 0;

  /// Normalized view of the schedule: a single implicit step when empty.
  std::vector<DeflationStep> phases() const;

  bool operator==(const SessionSetup& other) const;
};

enum class MsgKind { hello, center_stats, center_mean, broadcast, local_update, stop, result };

std::string to_string(MsgKind k);

/// Master/worker wire message. Payloads are model-sized (d x r matrix) or
/// statistics-sized (<= d+1 vector); shard rows never cross the wire.
struct RoundMessage {
  MsgKind kind = MsgKind::hello;
  int round = -1;
  int sender = -1;  // worker_id, -1 for the master
  Algorithm algo = Algorithm::fsspca;
  int phase = 0;    // deflation step index, 0 = first/main
  Matrix mat;       // 0x0 when absent
  Vector vec;       // length 0 when absent
  double scalar = 0.0;
  std::optional<SessionSetup> setup;  // center_mean only

  bool operator==(const RoundMessage& other) const;
};

/// Length-prefixed frame: 4-byte big-endian payload length followed by one
/// JSON object. Doubles survive the round trip exactly. Throws
/// NumericalError on non-finite payloads.
std::string serialize_message(const RoundMessage& m);

/// Inverse of serialize_message. Throws TransportError on truncated frames,
/// zero-length frames, unknown kinds, or payload/shape mismatches.
RoundMessage deserialize_message(const std::string& frame);

enum class TransportKind { in_process, tcp };

struct SessionConfig {
  Algorithm algorithm = Algorithm::fsspca;
  int workers = 1;  // K
  HyperParams params;
  std::vector<DeflationStep> schedule;
  TransportKind transport = TransportKind::in_process;
  std::string bind_address = "127.0.0.1:0";  // FEDSPCA_BIND overrides
  std::string trace_path;                    // empty: no trace file
  int threads = 0;  // in-process executor bound; 0 = one per shard
  bool center = true;
  std::uint64_t seed = 0;
};

struct RunReport {
  SolveResult result;
  Vector global_mean;
  int workers = 0;
};

/// Runs a full session over in-process workers: centering pre-pass, ADMM
/// rounds, result collection. Shard order defines worker ids.
RunReport run_session(const SessionConfig& cfg, std::vector<DataShard> shards);

/// TCP session host. Binds immediately (so the ephemeral port is known
/// before workers are launched), then `run` accepts cfg.workers peers and
/// drives the same round protocol as the in-process transport.
class TcpMaster {
 public:
  explicit TcpMaster(const std::string& bind_address);
  ~TcpMaster();
  TcpMaster(const TcpMaster&) = delete;
  TcpMaster& operator=(const TcpMaster&) = delete;

  int port() const { return port_; }
  RunReport run(const SessionConfig& cfg);

 private:
  int listen_fd_ = -1;
  int port_ = 0;
};

/// Worker-side loop: connects, sends Hello and centering statistics, then
/// serves rounds until Stop. Returns the final loadings announced by the
/// master. `worker_id` must match the shard's id.
LoadingMatrix run_worker(const std::string& host, int port, DataShard shard);

/// Resolves "host:port" with the FEDSPCA_BIND environment override.
std::pair<std::string, int> resolve_bind_address(const std::string& configured);

}  // namespace fedspca
