#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedspca/datagen.hpp"
#include "fedspca/federation.hpp"
#include "fedspca/rng.hpp"

#include "support.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <thread>

using namespace fedspca;

namespace {

Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
  return m;
}

RoundMessage sample_broadcast() {
  RoundMessage m;
  m.kind = MsgKind::broadcast;
  m.round = 12;
  m.sender = -1;
  m.algo = Algorithm::fsspca;
  m.phase = 1;
  m.mat = gaussian(5, 2, 1);
  return m;
}

SessionSetup sample_setup() {
  SessionSetup s;
  s.algorithm = Algorithm::faspca;
  s.params.lambda = 60.0;
  s.params.rho = 700.0;
  s.params.r = 1;
  s.seed = 99;
  s.d = 12;
  DeflationStep step;
  step.r = 1;
  step.params = s.params;
  s.schedule = {step, step};
  return s;
}

/// Frame with an arbitrary JSON body (for malformed-input tests).
std::string frame_of(const std::string& body) {
  std::string frame(4, '\0');
  const auto len = static_cast<std::uint32_t>(body.size());
  frame[0] = static_cast<char>((len >> 24) & 0xff);
  frame[1] = static_cast<char>((len >> 16) & 0xff);
  frame[2] = static_cast<char>((len >> 8) & 0xff);
  frame[3] = static_cast<char>(len & 0xff);
  return frame + body;
}

std::vector<DataShard> split_rows(const Matrix& data, int K) {
  std::vector<DataShard> shards(static_cast<std::size_t>(K));
  const Index per = data.rows() / K;
  for (int k = 0; k < K; ++k) {
    shards[static_cast<std::size_t>(k)].worker_id = k;
    const Index begin = per * k;
    const Index count = (k == K - 1) ? data.rows() - begin : per;
    shards[static_cast<std::size_t>(k)].values = data.middleRows(begin, count);
  }
  return shards;
}

}  // namespace

TEST_CASE("every message kind survives a round trip") {
  RoundMessage hello;
  hello.kind = MsgKind::hello;
  hello.sender = 3;
  hello.vec = Vector(2);
  hello.vec << 57.0, 830.0;
  CHECK(deserialize_message(serialize_message(hello)) == hello);

  RoundMessage stats;
  stats.kind = MsgKind::center_stats;
  stats.sender = 0;
  stats.vec = Vector::LinSpaced(13, -3.0, 3.0);
  CHECK(deserialize_message(serialize_message(stats)) == stats);

  RoundMessage mean;
  mean.kind = MsgKind::center_mean;
  mean.vec = Vector::LinSpaced(12, 0.0, 1.0);
  mean.setup = sample_setup();
  CHECK(deserialize_message(serialize_message(mean)) == mean);

  CHECK(deserialize_message(serialize_message(sample_broadcast())) == sample_broadcast());

  RoundMessage update;
  update.kind = MsgKind::local_update;
  update.round = 4;
  update.sender = 2;
  update.mat = gaussian(6, 1, 2);
  update.scalar = 123.456;
  CHECK(deserialize_message(serialize_message(update)) == update);

  RoundMessage stop;
  stop.kind = MsgKind::stop;
  CHECK(deserialize_message(serialize_message(stop)) == stop);

  RoundMessage result;
  result.kind = MsgKind::result;
  result.phase = -1;
  result.mat = gaussian(6, 2, 3);
  CHECK(deserialize_message(serialize_message(result)) == result);
}

TEST_CASE("fuzzed messages round-trip exactly") {
  Rng rng(4);
  const MsgKind kinds[] = {MsgKind::hello,        MsgKind::center_stats, MsgKind::center_mean,
                           MsgKind::broadcast,    MsgKind::local_update, MsgKind::stop,
                           MsgKind::result};
  const double specials[] = {0.0, 1e300, -1e300, 1e-300, -1e-300, 1.0 / 3.0, -2.0 / 7.0};

  for (int trial = 0; trial < 1000; ++trial) {
    RoundMessage m;
    m.kind = kinds[static_cast<std::size_t>(rng.next_u64() % 7)];
    m.round = static_cast<int>(rng.next_u64() % 1000);
    m.sender = static_cast<int>(rng.next_u64() % 16) - 1;
    m.algo = (rng.next_u64() & 1) ? Algorithm::fsspca : Algorithm::faspca;
    m.phase = static_cast<int>(rng.next_u64() % 4) - 1;
    m.scalar = 100.0 * rng.gaussian();

    if (rng.next_u64() & 1) {
      const Index rows = 1 + static_cast<Index>(rng.next_u64() % 5);
      const Index cols = 1 + static_cast<Index>(rng.next_u64() % 3);
      m.mat = Matrix(rows, cols);
      for (Index i = 0; i < m.mat.size(); ++i) {
        m.mat.data()[i] = (rng.next_u64() % 8 == 0)
                              ? specials[rng.next_u64() % 7]
                              : rng.gaussian();
      }
    }
    if (rng.next_u64() & 1) {
      m.vec = Vector(1 + static_cast<Index>(rng.next_u64() % 7));
      for (Index i = 0; i < m.vec.size(); ++i) m.vec(i) = 1e6 * rng.gaussian();
    }
    if (m.kind == MsgKind::center_mean && (rng.next_u64() & 1)) m.setup = sample_setup();

    const RoundMessage back = deserialize_message(serialize_message(m));
    CHECK(back == m);
  }
}

TEST_CASE("malformed frames are rejected") {
  CHECK_THROWS_AS(deserialize_message(frame_of("")), TransportError);       // zero length
  CHECK_THROWS_AS(deserialize_message(std::string("\0\0", 2)), TransportError);  // truncated header

  const std::string good = serialize_message(sample_broadcast());
  CHECK_THROWS_AS(deserialize_message(good.substr(0, good.size() - 3)), TransportError);

  CHECK_THROWS_AS(deserialize_message(frame_of("{not json")), TransportError);
  CHECK_THROWS_AS(
      deserialize_message(frame_of(
          R"({"kind":"gossip","round":0,"sender":0,"algo":"fsspca","phase":0,"scalar":0.0})")),
      TransportError);
  // Payload length disagreeing with its header dims.
  CHECK_THROWS_AS(
      deserialize_message(frame_of(
          R"({"kind":"broadcast","round":0,"sender":-1,"algo":"fsspca","phase":0,"scalar":0.0,)"
          R"("mat":{"rows":2,"cols":2,"data":[1.0,2.0,3.0]}})")),
      TransportError);
}

TEST_CASE("non-finite payloads cannot be serialized") {
  RoundMessage m = sample_broadcast();
  m.mat(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(serialize_message(m), NumericalError);
}

TEST_CASE("in-process session produces a coherent report") {
  SyntheticSpec spec;
  spec.d = 25;
  spec.n = 240;
  spec.K = 4;
  spec.seed = 5;

  SessionConfig cfg;
  cfg.algorithm = Algorithm::fsspca;
  cfg.workers = 4;
  cfg.params.lambda1 = 4.0;
  cfg.params.lambda2 = 15.0;
  cfg.params.r = 2;
  cfg.params.max_rounds = 400;
  cfg.seed = 6;

  const RunReport report = run_session(cfg, gen_synthetic_iid(spec));
  CHECK(report.workers == 4);
  CHECK(report.result.rounds == static_cast<int>(report.result.trace.size()));
  CHECK(report.result.messages_sent > 0);
  CHECK(report.result.bytes_sent > 0);
  CHECK(report.global_mean.size() == 25);
  // The final tally also counts the result/stop messages sent after the
  // last traced round.
  CHECK(report.result.trace.back().bytes_sent <= report.result.bytes_sent);
  CHECK(report.result.trace.back().bytes_sent > 0);
}

TEST_CASE("payload traffic is model-sized, independent of the shard row count") {
  // Same d, K and a fixed number of rounds with very different row counts:
  // byte totals must match up to centering-statistics formatting noise.
  auto run_with_rows = [](Index rows) {
    SessionConfig cfg;
    cfg.algorithm = Algorithm::faspca;
    cfg.workers = 2;
    cfg.params.lambda = 1.0;
    cfg.params.r = 1;
    cfg.params.max_rounds = 3;
    cfg.params.tol_primal = 1e-14;  // never satisfied: exactly 3 rounds
    cfg.params.tol_dual = 1e-14;
    cfg.seed = 7;
    const Matrix data = gaussian(rows, 10, 8);
    return run_session(cfg, split_rows(data, 2));
  };

  const RunReport small = run_with_rows(20);
  const RunReport large = run_with_rows(400);
  CHECK(small.result.rounds == 3);
  CHECK(large.result.rounds == 3);
  const double ratio = static_cast<double>(large.result.bytes_sent) /
                       static_cast<double>(small.result.bytes_sent);
  CHECK(ratio < 1.05);  // 20x more rows, same traffic
}

TEST_CASE("tcp transport matches the in-process transport") {
  const Matrix data = gaussian(24, 8, 9);
  auto shards = split_rows(data, 3);

  SessionConfig cfg;
  cfg.algorithm = Algorithm::fsspca;
  cfg.workers = 3;
  cfg.params.lambda1 = 2.0;
  cfg.params.lambda2 = 8.0;
  cfg.params.r = 2;
  cfg.params.max_rounds = 120;
  cfg.seed = 11;

  const RunReport in_proc = run_session(cfg, shards);

  TcpMaster master("127.0.0.1:0");
  const int port = master.port();
  RunReport tcp_report;
  std::thread master_thread([&]() { tcp_report = master.run(cfg); });
  std::vector<std::thread> workers;
  std::vector<LoadingMatrix> finals(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    workers.emplace_back([&, i]() { finals[i] = run_worker("127.0.0.1", port, shards[i]); });
  }
  master_thread.join();
  for (auto& w : workers) w.join();

  CHECK((tcp_report.result.loadings.values - in_proc.result.loadings.values).cwiseAbs().maxCoeff() <=
        1e-10);
  CHECK(tcp_report.result.rounds == in_proc.result.rounds);
  CHECK(tcp_report.result.bytes_sent == in_proc.result.bytes_sent);
  // Workers received the same final model.
  for (const auto& f : finals) {
    CHECK((f.values - tcp_report.result.loadings.values).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("single-worker tcp session agrees with in-process (faspca with deflation)") {
  const Matrix data = gaussian(30, 7, 12);
  std::vector<DataShard> shards = split_rows(data, 1);

  SessionConfig cfg;
  cfg.algorithm = Algorithm::faspca;
  cfg.workers = 1;
  cfg.params.lambda = 3.0;
  cfg.params.r = 1;
  cfg.params.max_rounds = 150;
  cfg.seed = 13;
  DeflationStep step;
  step.r = 1;
  step.params = cfg.params;
  cfg.schedule = {step, step};

  const RunReport in_proc = run_session(cfg, shards);

  TcpMaster master("127.0.0.1:0");
  RunReport tcp_report;
  std::thread master_thread([&]() { tcp_report = master.run(cfg); });
  std::thread worker([&]() { run_worker("127.0.0.1", master.port(), shards[0]); });
  master_thread.join();
  worker.join();

  REQUIRE(tcp_report.result.loadings.rank() == 2);
  CHECK((tcp_report.result.loadings.values - in_proc.result.loadings.values).cwiseAbs().maxCoeff() <=
        1e-10);
}

TEST_CASE("a worker that vanishes mid-handshake aborts the session") {
  SessionConfig cfg;
  cfg.algorithm = Algorithm::fsspca;
  cfg.workers = 2;
  cfg.params.r = 1;
  cfg.seed = 16;

  TcpMaster master("127.0.0.1:0");
  const int port = master.port();

  bool master_threw = false;
  std::thread master_thread([&]() {
    try {
      master.run(cfg);
    } catch (const TransportError&) {
      master_threw = true;
    }
  });

  // First peer is honest; it sees the abort as a hangup.
  DataShard shard;
  shard.worker_id = 0;
  shard.values = gaussian(6, 3, 17);
  std::thread honest([&]() {
    try {
      run_worker("127.0.0.1", port, shard);
    } catch (const TransportError&) {
    }
  });

  // Second peer sends only a hello frame and closes: its centering
  // statistics never arrive, so the master reads EOF.
  std::thread rude([&]() {
    RoundMessage hello;
    hello.kind = MsgKind::hello;
    hello.sender = 1;
    hello.vec = Vector(2);
    hello.vec << 6.0, 3.0;
    const std::string frame = serialize_message(hello);

    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
    (void)::send(fd, frame.data(), frame.size(), 0);
    ::close(fd);
  });

  master_thread.join();
  honest.join();
  rude.join();
  CHECK(master_threw);
}

TEST_CASE("bind address resolution honors the environment override") {
  ::setenv("FEDSPCA_BIND", "127.0.0.1:45991", 1);
  const auto [host, port] = resolve_bind_address("0.0.0.0:7000");
  CHECK(host == "127.0.0.1");
  CHECK(port == 45991);
  ::unsetenv("FEDSPCA_BIND");

  const auto [host2, port2] = resolve_bind_address("10.0.0.1:7000");
  CHECK(host2 == "10.0.0.1");
  CHECK(port2 == 7000);

  CHECK_THROWS_AS(resolve_bind_address("no-port"), std::invalid_argument);
}

TEST_CASE("session validation rejects inconsistent configurations") {
  SessionConfig cfg;
  cfg.workers = 2;
  cfg.algorithm = Algorithm::faspca;
  cfg.params.r = 2;  // faspca needs r = 1
  std::vector<DataShard> shards = split_rows(gaussian(8, 4, 19), 2);
  CHECK_THROWS_AS(run_session(cfg, shards), std::invalid_argument);

  cfg.params.r = 1;
  cfg.workers = 3;  // does not match shard count
  CHECK_THROWS_AS(run_session(cfg, shards), std::invalid_argument);
}
