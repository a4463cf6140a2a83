#include "fedspca/federation.hpp"

#include "engine.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <utility>

namespace fedspca {

namespace {

constexpr std::uint32_t kMaxFrameBytes = 1u << 28;

void close_quiet(int fd) {
  if (fd >= 0) ::close(fd);
}

void write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("send failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string read_exact(int fd, std::size_t n) {
  std::string buf(n, '\0');
  std::size_t off = 0;
  while (off < n) {
    const ssize_t got = ::recv(fd, buf.data() + off, n - off, 0);
    if (got < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("recv failed: ") + std::strerror(errno));
    }
    if (got == 0) throw TransportError("peer closed the connection");
    off += static_cast<std::size_t>(got);
  }
  return buf;
}

std::string read_frame(int fd) {
  std::string header = read_exact(fd, 4);
  const std::uint32_t len =
      (static_cast<std::uint32_t>(static_cast<unsigned char>(header[0])) << 24) |
      (static_cast<std::uint32_t>(static_cast<unsigned char>(header[1])) << 16) |
      (static_cast<std::uint32_t>(static_cast<unsigned char>(header[2])) << 8) |
      static_cast<std::uint32_t>(static_cast<unsigned char>(header[3]));
  if (len == 0) throw TransportError("zero-length frame");
  if (len > kMaxFrameBytes) throw TransportError("oversized frame");
  return header + read_exact(fd, len);
}

struct AddressParts {
  std::string host;
  int port = 0;
};

AddressParts parse_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon + 1 >= address.size()) {
    throw std::invalid_argument("bad address (expected host:port): " + address);
  }
  AddressParts parts;
  parts.host = address.substr(0, colon);
  try {
    parts.port = std::stoi(address.substr(colon + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("bad port in address: " + address);
  }
  if (parts.port < 0 || parts.port > 65535) {
    throw std::invalid_argument("port out of range: " + address);
  }
  return parts;
}

int connect_to(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || !res) {
    throw TransportError("cannot resolve " + host);
  }
  int fd = -1;
  for (addrinfo* it = res; it; it = it->ai_next) {
    fd = ::socket(it->ai_family, it->ai_socktype, it->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, it->ai_addr, it->ai_addrlen) == 0) break;
    close_quiet(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw TransportError("cannot connect to " + host + ":" + service);
  int flag = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &flag, sizeof(flag));
  return fd;
}

/// Master-side endpoint speaking length-prefixed JSON frames to one worker.
class TcpWorkerProxy final : public detail::WorkerEndpoint {
 public:
  explicit TcpWorkerProxy(int fd, Algorithm algo) : fd_(fd), algo_(algo) {}
  ~TcpWorkerProxy() override { close_quiet(fd_); }

  detail::HelloInfo hello() override {
    if (!have_hello_) {
      RoundMessage m = receive();
      if (m.kind != MsgKind::hello || m.vec.size() != 2) {
        throw TransportError("expected hello");
      }
      hello_ = {m.sender, static_cast<Index>(m.vec(0)), static_cast<Index>(m.vec(1))};
      have_hello_ = true;
    }
    return hello_;
  }

  Vector center_stats() override {
    RoundMessage m = receive();
    if (m.kind != MsgKind::center_stats || m.sender != hello_.worker_id) {
      throw TransportError("expected centering statistics");
    }
    return m.vec;
  }

  void configure(const Vector* mean, const SessionSetup& setup) override {
    RoundMessage m;
    m.kind = MsgKind::center_mean;
    m.algo = setup.algorithm;
    m.vec = mean ? *mean : Vector::Zero(setup.d);
    m.setup = setup;
    send(m);
  }

  detail::LocalUpdateData round(int phase, int round_idx, const Matrix& z) override {
    RoundMessage out;
    out.kind = MsgKind::broadcast;
    out.round = round_idx;
    out.algo = algo_;
    out.phase = phase;
    out.mat = z;
    send(out);

    RoundMessage in = receive();
    if (in.kind != MsgKind::local_update || in.round != round_idx || in.phase != phase ||
        in.sender != hello_.worker_id) {
      throw TransportError("unexpected reply to broadcast");
    }
    return {std::move(in.mat), in.scalar};
  }

  void phase_done(int phase, const Matrix& z_accepted) override {
    RoundMessage m;
    m.kind = MsgKind::result;
    m.algo = algo_;
    m.phase = phase;
    m.mat = z_accepted;
    send(m);
  }

  void finish(const Matrix& loadings) override {
    RoundMessage m;
    m.kind = MsgKind::result;
    m.algo = algo_;
    m.phase = -1;
    m.mat = loadings;
    send(m);
    RoundMessage stop;
    stop.kind = MsgKind::stop;
    stop.algo = algo_;
    send(stop);
  }

 private:
  void send(const RoundMessage& m) {
    const std::string frame = serialize_message(m);
    write_all(fd_, frame);
    ++messages_;
    bytes_ += frame.size();
  }

  RoundMessage receive() {
    const std::string frame = read_frame(fd_);
    ++messages_;
    bytes_ += frame.size();
    return deserialize_message(frame);
  }

  int fd_;
  Algorithm algo_;
  detail::HelloInfo hello_{};
  bool have_hello_ = false;
};

void validate_session_config(const SessionConfig& cfg) {
  cfg.params.validate();
  for (const auto& step : cfg.schedule) {
    step.params.validate();
    if (step.r < 1) throw std::invalid_argument("run_session: step rank must be >= 1");
    if (cfg.algorithm == Algorithm::faspca && step.r != 1) {
      throw std::invalid_argument("run_session: faspca extracts one loading per step");
    }
  }
  if (cfg.algorithm == Algorithm::faspca && cfg.schedule.empty() && cfg.params.r != 1) {
    throw std::invalid_argument("run_session: faspca needs r = 1 (use a schedule for more)");
  }
  if (cfg.workers < 1) throw std::invalid_argument("run_session: need at least one worker");
}

RunReport run_with_endpoints(const SessionConfig& cfg,
                             std::vector<std::unique_ptr<detail::WorkerEndpoint>>& endpoints) {
  const int K = static_cast<int>(endpoints.size());

  std::vector<detail::HelloInfo> hellos;
  hellos.reserve(endpoints.size());
  for (auto& ep : endpoints) hellos.push_back(ep->hello());

  // Deterministic gather order: sort endpoints by worker id.
  std::vector<std::size_t> order(endpoints.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return hellos[a].worker_id < hellos[b].worker_id;
  });
  std::vector<std::unique_ptr<detail::WorkerEndpoint>> sorted;
  sorted.reserve(endpoints.size());
  for (std::size_t idx : order) sorted.push_back(std::move(endpoints[idx]));
  endpoints = std::move(sorted);

  const Index d = hellos.front().d;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (hellos[order[i]].d != d) throw TransportError("workers disagree on the feature dimension");
    if (i > 0 && hellos[order[i]].worker_id == hellos[order[i - 1]].worker_id) {
      throw TransportError("duplicate worker id " + std::to_string(hellos[order[i]].worker_id));
    }
  }

  SessionSetup setup;
  setup.algorithm = cfg.algorithm;
  setup.params = cfg.params;
  setup.schedule = cfg.schedule;
  setup.seed = cfg.seed;
  setup.d = d;

  // Centering pre-pass: only column sums and counts leave the workers.
  Vector colsum = Vector::Zero(d);
  double count = 0.0;
  for (auto& ep : endpoints) {
    Vector stats = ep->center_stats();
    if (stats.size() != d + 1) throw TransportError("bad centering statistics payload");
    colsum += stats.head(d);
    count += stats(d);
  }
  if (count <= 0.0) throw TransportError("session has no data rows");
  Vector mean = Vector::Zero(d);
  if (cfg.center) mean = colsum / count;

  for (auto& ep : endpoints) ep->configure(cfg.center ? &mean : nullptr, setup);

  std::vector<TraceRow> trace;
  RunReport report;
  try {
    report.result = detail::drive_rounds(setup, endpoints, cfg.threads, trace);
  } catch (...) {
    // Keep whatever trace the aborted session produced.
    if (!cfg.trace_path.empty()) write_trace_csv(cfg.trace_path, trace);
    throw;
  }
  if (!cfg.trace_path.empty()) write_trace_csv(cfg.trace_path, report.result.trace);
  report.global_mean = std::move(mean);
  report.workers = K;
  return report;
}

}  // namespace

std::pair<std::string, int> resolve_bind_address(const std::string& configured) {
  std::string addr = configured;
  if (const char* env = std::getenv("FEDSPCA_BIND"); env && *env) addr = env;
  const AddressParts parts = parse_address(addr);
  return {parts.host, parts.port};
}

RunReport run_session(const SessionConfig& cfg, std::vector<DataShard> shards) {
  validate_session_config(cfg);
  if (cfg.transport == TransportKind::tcp) {
    if (!shards.empty()) {
      throw std::invalid_argument(
          "run_session: tcp sessions host remote shards; start workers separately");
    }
    TcpMaster master(cfg.bind_address);
    return master.run(cfg);
  }

  validate_shards(shards);
  if (cfg.workers != static_cast<int>(shards.size())) {
    throw std::invalid_argument("run_session: cfg.workers must match the shard count");
  }
  std::vector<std::unique_ptr<detail::WorkerEndpoint>> endpoints;
  endpoints.reserve(shards.size());
  for (auto& shard : shards) {
    endpoints.push_back(detail::make_in_process_endpoint(std::move(shard), cfg.algorithm));
  }
  return run_with_endpoints(cfg, endpoints);
}

TcpMaster::TcpMaster(const std::string& bind_address) {
  const auto [host, port] = resolve_bind_address(bind_address);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError("cannot create listening socket");
  int flag = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &flag, sizeof(flag));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (host.empty() || host == "0.0.0.0") {
    addr.sin_addr.s_addr = INADDR_ANY;
  } else if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    close_quiet(listen_fd_);
    listen_fd_ = -1;
    throw TransportError("cannot parse bind host: " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string err = std::strerror(errno);
    close_quiet(listen_fd_);
    listen_fd_ = -1;
    throw TransportError("bind failed: " + err);
  }
  if (::listen(listen_fd_, 64) != 0) {
    const std::string err = std::strerror(errno);
    close_quiet(listen_fd_);
    listen_fd_ = -1;
    throw TransportError("listen failed: " + err);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpMaster::~TcpMaster() { close_quiet(listen_fd_); }

RunReport TcpMaster::run(const SessionConfig& cfg) {
  validate_session_config(cfg);
  std::vector<std::unique_ptr<detail::WorkerEndpoint>> endpoints;
  endpoints.reserve(static_cast<std::size_t>(cfg.workers));
  for (int i = 0; i < cfg.workers; ++i) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) throw TransportError(std::string("accept failed: ") + std::strerror(errno));
    endpoints.push_back(std::make_unique<TcpWorkerProxy>(fd, cfg.algorithm));
  }
  return run_with_endpoints(cfg, endpoints);
}

LoadingMatrix run_worker(const std::string& host, int port, DataShard shard) {
  if (!shard.values.allFinite()) {
    throw std::invalid_argument("run_worker: shard contains non-finite values");
  }
  const int fd = connect_to(host, port);
  detail::LocalWorker worker(shard);

  auto send = [fd](const RoundMessage& m) { write_all(fd, serialize_message(m)); };

  try {
    RoundMessage hello;
    hello.kind = MsgKind::hello;
    hello.sender = shard.worker_id;
    hello.vec = Vector(2);
    hello.vec << static_cast<double>(shard.rows()), static_cast<double>(shard.cols());
    send(hello);

    RoundMessage stats;
    stats.kind = MsgKind::center_stats;
    stats.sender = shard.worker_id;
    stats.vec = worker.center_stats();
    send(stats);

    LoadingMatrix final_loadings;
    for (;;) {
      RoundMessage m = deserialize_message(read_frame(fd));
      switch (m.kind) {
        case MsgKind::center_mean: {
          if (!m.setup) throw TransportError("center_mean without session setup");
          worker.configure(m.vec.size() > 0 ? &m.vec : nullptr, *m.setup);
          break;
        }
        case MsgKind::broadcast: {
          detail::LocalUpdateData upd = worker.round(m.phase, m.round, m.mat);
          RoundMessage reply;
          reply.kind = MsgKind::local_update;
          reply.round = m.round;
          reply.sender = shard.worker_id;
          reply.algo = m.algo;
          reply.phase = m.phase;
          reply.mat = std::move(upd.w);
          reply.scalar = upd.f_data;
          send(reply);
          break;
        }
        case MsgKind::result: {
          if (m.phase >= 0) {
            worker.phase_done(m.phase, m.mat);
          } else {
            final_loadings.values = m.mat;
            final_loadings.orthonormal = true;
          }
          break;
        }
        case MsgKind::stop: {
          close_quiet(fd);
          return final_loadings;
        }
        default:
          throw TransportError("worker received unexpected message kind " + to_string(m.kind));
      }
    }
  } catch (...) {
    close_quiet(fd);
    throw;
  }
}

}  // namespace fedspca
