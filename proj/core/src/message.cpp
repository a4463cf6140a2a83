#include "fedspca/federation.hpp"

#include <json.hpp>

#include <cstring>

namespace fedspca {

using nlohmann::json;

std::string to_string(Algorithm a) {
  return a == Algorithm::fsspca ? "fsspca" : "faspca";
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "fsspca") return Algorithm::fsspca;
  if (s == "faspca") return Algorithm::faspca;
  throw std::invalid_argument("unknown algorithm: " + s);
}

std::string to_string(MsgKind k) {
  switch (k) {
    case MsgKind::hello: return "hello";
    case MsgKind::center_stats: return "center_stats";
    case MsgKind::center_mean: return "center_mean";
    case MsgKind::broadcast: return "broadcast";
    case MsgKind::local_update: return "local_update";
    case MsgKind::stop: return "stop";
    case MsgKind::result: return "result";
  }
  throw std::invalid_argument("unknown message kind");
}

namespace {

MsgKind kind_from_string(const std::string& s) {
  if (s == "hello") return MsgKind::hello;
  if (s == "center_stats") return MsgKind::center_stats;
  if (s == "center_mean") return MsgKind::center_mean;
  if (s == "broadcast") return MsgKind::broadcast;
  if (s == "local_update") return MsgKind::local_update;
  if (s == "stop") return MsgKind::stop;
  if (s == "result") return MsgKind::result;
  throw TransportError("unknown message kind: " + s);
}

json params_to_json(const HyperParams& p) {
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

HyperParams params_from_json(const json& j) {
  HyperParams p;
  p.lambda = j.at("lambda").get<double>();
  p.lambda1 = j.at("lambda1").get<double>();
  p.lambda2 = j.at("lambda2").get<double>();
  p.rho = j.at("rho").get<double>();
  p.mu = j.at("mu").get<double>();
  p.r = j.at("r").get<int>();
  p.c1 = j.at("c1").get<double>();
  p.c2 = j.at("c2").get<double>();
  p.max_rounds = j.at("max_rounds").get<int>();
  p.max_linesearch_steps = j.at("max_linesearch_steps").get<int>();
  p.max_inner_iters = j.at("max_inner_iters").get<int>();
  p.tol_primal = j.at("tol_primal").get<double>();
  p.tol_dual = j.at("tol_dual").get<double>();
  p.tol_inner = j.at("tol_inner").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

json setup_to_json(const SessionSetup& s) {
  json steps = json::array();
  for (const auto& step : s.schedule) {
    steps.push_back(json{{"r", step.r}, {"params", params_to_json(step.params)}});
  }
  return json{{"algorithm", to_string(s.algorithm)},
              {"params", params_to_json(s.params)},
              {"schedule", steps},
              {"seed", s.seed},
              {"d", s.d}};
}

SessionSetup setup_from_json(const json& j) {
  SessionSetup s;
  s.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
  s.params = params_from_json(j.at("params"));
  for (const auto& step : j.at("schedule")) {
    DeflationStep d;
    d.r = step.at("r").get<int>();
    d.params = params_from_json(step.at("params"));
    s.schedule.push_back(std::move(d));
  }
  s.seed = j.at("seed").get<std::uint64_t>();
  s.d = j.at("d").get<Index>();
  return s;
}

void require_finite_payload(const double* data, Index n, const char* what) {
  for (Index i = 0; i < n; ++i) {
    if (!std::isfinite(data[i])) {
      throw NumericalError(std::string("serialize_message: non-finite ") + what);
    }
  }
}

}  // namespace

std::vector<DeflationStep> SessionSetup::phases() const {
  if (!schedule.empty()) return schedule;
  DeflationStep single;
  single.r = params.r;
  single.params = params;
  return {single};
}

bool SessionSetup::operator==(const SessionSetup& other) const {
  return algorithm == other.algorithm && params == other.params &&
         schedule == other.schedule && seed == other.seed && d == other.d;
}

bool RoundMessage::operator==(const RoundMessage& other) const {
  auto same_mat = [](const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return kind == other.kind && round == other.round && sender == other.sender &&
         algo == other.algo && phase == other.phase && same_mat(mat, other.mat) &&
         vec.size() == other.vec.size() && vec == other.vec && scalar == other.scalar &&
         setup == other.setup;
}

std::string serialize_message(const RoundMessage& m) {
  json j;
  j["kind"] = to_string(m.kind);
  j["round"] = m.round;
  j["sender"] = m.sender;
  j["algo"] = to_string(m.algo);
  j["phase"] = m.phase;
  if (!std::isfinite(m.scalar)) throw NumericalError("serialize_message: non-finite scalar");
  j["scalar"] = m.scalar;
  if (m.mat.size() > 0) {
    require_finite_payload(m.mat.data(), m.mat.size(), "matrix payload");
    // Row-major entry order matches the in-memory layout.
    j["mat"] = json{{"rows", m.mat.rows()},
                    {"cols", m.mat.cols()},
                    {"data", std::vector<double>(m.mat.data(), m.mat.data() + m.mat.size())}};
  }
  if (m.vec.size() > 0) {
    require_finite_payload(m.vec.data(), m.vec.size(), "vector payload");
    j["vec"] = std::vector<double>(m.vec.data(), m.vec.data() + m.vec.size());
  }
  if (m.setup) j["setup"] = setup_to_json(*m.setup);

  const std::string body = j.dump();
  std::string frame(4 + body.size(), '\0');
  const auto len = static_cast<std::uint32_t>(body.size());
  frame[0] = static_cast<char>((len >> 24) & 0xff);
  frame[1] = static_cast<char>((len >> 16) & 0xff);
  frame[2] = static_cast<char>((len >> 8) & 0xff);
  frame[3] = static_cast<char>(len & 0xff);
  std::memcpy(frame.data() + 4, body.data(), body.size());
  return frame;
}

RoundMessage deserialize_message(const std::string& frame) {
  if (frame.size() < 4) throw TransportError("deserialize_message: truncated frame header");
  const std::uint32_t len = (static_cast<std::uint32_t>(static_cast<unsigned char>(frame[0])) << 24) |
                            (static_cast<std::uint32_t>(static_cast<unsigned char>(frame[1])) << 16) |
                            (static_cast<std::uint32_t>(static_cast<unsigned char>(frame[2])) << 8) |
                            static_cast<std::uint32_t>(static_cast<unsigned char>(frame[3]));
  if (len == 0) throw TransportError("deserialize_message: zero-length frame");
  if (frame.size() - 4 != len) throw TransportError("deserialize_message: frame length mismatch");

  json j;
  try {
    j = json::parse(frame.begin() + 4, frame.end());
  } catch (const json::exception& e) {
    throw TransportError(std::string("deserialize_message: bad JSON: ") + e.what());
  }

  try {
    RoundMessage m;
    m.kind = kind_from_string(j.at("kind").get<std::string>());
    m.round = j.at("round").get<int>();
    m.sender = j.at("sender").get<int>();
    m.algo = algorithm_from_string(j.at("algo").get<std::string>());
    m.phase = j.at("phase").get<int>();
    m.scalar = j.at("scalar").get<double>();
    if (j.contains("mat")) {
      const auto& jm = j.at("mat");
      const Index rows = jm.at("rows").get<Index>();
      const Index cols = jm.at("cols").get<Index>();
      const auto data = jm.at("data").get<std::vector<double>>();
      if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
        throw TransportError("deserialize_message: matrix payload shape mismatch");
      }
      m.mat = Eigen::Map<const Matrix>(data.data(), rows, cols);
    }
    if (j.contains("vec")) {
      const auto data = j.at("vec").get<std::vector<double>>();
      m.vec = Eigen::Map<const Vector>(data.data(), static_cast<Index>(data.size()));
    }
    if (j.contains("setup")) m.setup = setup_from_json(j.at("setup"));
    return m;
  } catch (const TransportError&) {
    throw;
  } catch (const json::exception& e) {
    throw TransportError(std::string("deserialize_message: malformed message: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw TransportError(std::string("deserialize_message: malformed message: ") + e.what());
  }
}

}  // namespace fedspca
