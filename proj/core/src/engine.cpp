#include "engine.hpp"

#include "fedspca/faspca.hpp"
#include "fedspca/fsspca.hpp"
#include "fedspca/metrics.hpp"
#include "fedspca/operators.hpp"
#include "fedspca/rng.hpp"
#include "fedspca/stiefel.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace fedspca::detail {

void WorkerEndpoint::meter(const RoundMessage& m, std::uint64_t copies) {
  messages_ += copies;
  bytes_ += copies * serialize_message(m).size();
}

// ---------------------------------------------------------------------------
// LocalWorker

LocalWorker::LocalWorker(DataShard shard) : shard_(std::move(shard)) {}

HelloInfo LocalWorker::hello() const {
  return {shard_.worker_id, shard_.rows(), shard_.cols()};
}

Vector LocalWorker::center_stats() const {
  Vector stats(shard_.cols() + 1);
  stats.head(shard_.cols()) = shard_.values.colwise().sum().transpose();
  stats(shard_.cols()) = static_cast<double>(shard_.rows());
  return stats;
}

void LocalWorker::configure(const Vector* mean, const SessionSetup& setup) {
  if (mean) {
    if (mean->size() != shard_.cols()) {
      throw std::invalid_argument("LocalWorker: mean dimension mismatch");
    }
    shard_.values.rowwise() -= mean->transpose();
  }
  setup_ = setup;
  phases_ = setup.phases();
  configured_ = true;
  phase_ = -1;
}

const DeflationStep& LocalWorker::phase_step(int phase) const {
  if (phase < 0 || phase >= static_cast<int>(phases_.size())) {
    throw TransportError("LocalWorker: phase index out of range");
  }
  return phases_[static_cast<std::size_t>(phase)];
}

void LocalWorker::begin_phase(int phase) {
  const DeflationStep& step = phase_step(phase);
  const Index d = shard_.cols();
  const Index r = step.r;

  if (setup_.algorithm == Algorithm::fsspca) {
    // All workers start a phase from the same seeded orthonormal point. The
    // manifold subproblem is sign-symmetric with descent barriers between
    // sign basins, so workers initialized independently can settle into
    // incompatible basins and the consensus average cancels; a shared start
    // keeps them aligned.
    const std::uint64_t seed = Rng::mix(setup_.seed, 0x5a, static_cast<std::uint64_t>(phase));
    // Gram caching pays off only for tall shards; with few rows the
    // data-side product A^T (A w) is cheaper than (A^T A) w.
    use_gram_ = d <= 2 * shard_.rows();
    if (use_gram_) {
      gram_ = shard_.values.transpose() * shard_.values;
    } else {
      gram_.resize(0, 0);
    }
    data_sq_norm_ = shard_.values.squaredNorm();
    if (phase == 0) {
      w_ = random_orthonormal(d, r, seed).values;
    } else {
      w_ = random_g_orthonormal(d, r, metric_, seed).w.values;
    }
  } else {
    // The closed-form update behaves like a consensus-pulled power step, and
    // its fixed points are sign-symmetric: workers seeded independently can
    // split between +v and -v and the averaged consensus cancels. A shared
    // start avoids the split here too.
    const std::uint64_t seed = Rng::mix(setup_.seed, 0x5a, static_cast<std::uint64_t>(phase));
    Rng rng(seed);
    Vector g(d);
    for (Index i = 0; i < d; ++i) g(i) = rng.gaussian();
    const double norm = (phase == 0) ? g.norm() : ((*metric_) * g).norm();
    if (!(norm > 0.0)) throw NumericalError("LocalWorker: degenerate initialization");
    w_ = g / norm;
  }
  u_ = Matrix::Zero(d, r);
  phase_ = phase;
}

LocalUpdateData LocalWorker::round(int phase, int round_idx, const Matrix& z) {
  if (!configured_) throw TransportError("LocalWorker: round before configuration");
  if (phase != phase_) begin_phase(phase);
  const DeflationStep& step = phase_step(phase);
  const HyperParams& hp = step.params;

  if (z.rows() != shard_.cols() || z.cols() != step.r) {
    throw TransportError("LocalWorker: consensus payload shape mismatch");
  }
  if (round_idx > 0) u_ = u_ + hp.rho * (w_ - z);  // dual step for the previous round

  LocalUpdateData out;
  if (setup_.algorithm == Algorithm::fsspca) {
    FsspcaLocalProblem problem(shard_, u_, z, hp, use_gram_ ? &gram_ : nullptr);
    ManifoldPoint start = (phase == 0)
                              ? ManifoldPoint::standard(LoadingMatrix{w_, true})
                              : ManifoldPoint::generalized(LoadingMatrix{w_, false}, metric_);
    w_ = worker_update(problem, start).values;

    const Matrix cw = use_gram_ ? Matrix(gram_ * w_)
                                : Matrix(shard_.values.transpose() * (shard_.values * w_));
    const Matrix wtcw = w_.transpose() * cw;
    const Matrix wtw = w_.transpose() * w_;
    out.f_data = data_sq_norm_ - 2.0 * wtcw.trace() + (wtcw * wtw).trace();
    if (hp.lambda1 > 0.0) out.f_data += hp.lambda1 * smooth_l1(w_, SmoothingParam(hp.mu));
  } else {
    const Vector w_prev = w_.col(0);
    const Vector u_col = u_.col(0);
    const Vector z_col = z.col(0);
    FaspcaWorkerInput inp{shard_.values, w_prev,          u_col,
                          z_col,         hp.rho,          phase == 0 ? nullptr : metric_.get()};
    Vector w_new = faspca_worker_update(inp);
    w_ = w_new;
    const Vector y = shard_.values * w_new;
    out.f_data = (shard_.values - y * w_new.transpose()).squaredNorm();
  }
  out.w = w_;
  return out;
}

void LocalWorker::phase_done(int phase, const Matrix& z_accepted) {
  if (phase != phase_) throw TransportError("LocalWorker: phase_done out of order");
  const Index d = shard_.cols();
  const Matrix reducer = Matrix::Identity(d, d) - z_accepted * z_accepted.transpose();
  shard_.values = shard_.values * reducer;
  if (!metric_) {
    metric_ = std::make_shared<Matrix>(reducer);
  } else {
    *metric_ = (*metric_) * reducer;
  }
}

// ---------------------------------------------------------------------------
// Round protocol

void parallel_for_workers(int n, int threads, const std::function<void(int)>& fn) {
  const int pool = threads <= 0 ? n : std::min(threads, n);
  if (pool <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> executors;
  executors.reserve(static_cast<std::size_t>(pool));
  for (int t = 0; t < pool; ++t) {
    executors.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& e : executors) e.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

double consensus_weight(const SessionSetup& setup, const HyperParams& hp) {
  return setup.algorithm == Algorithm::fsspca ? hp.lambda2 : hp.lambda;
}

std::uint64_t total_bytes(std::span<std::unique_ptr<WorkerEndpoint>> workers) {
  std::uint64_t b = 0;
  for (const auto& w : workers) b += w->bytes();
  return b;
}

}  // namespace

SolveResult drive_rounds(const SessionSetup& setup,
                         std::span<std::unique_ptr<WorkerEndpoint>> workers, int threads,
                         std::vector<TraceRow>& trace) {
  const int K = static_cast<int>(workers.size());
  if (K < 1) throw std::invalid_argument("drive_rounds: no workers");
  const Index d = setup.d;
  const auto phases = setup.phases();

  SolveResult result;
  result.converged = true;
  DeflationContext ctx = DeflationContext::identity(d);
  Matrix stacked;  // accepted loadings across phases

  for (int phase = 0; phase < static_cast<int>(phases.size()); ++phase) {
    const DeflationStep& step = phases[static_cast<std::size_t>(phase)];
    const HyperParams& hp = step.params;
    const Index r = step.r;
    const double tol_primal = hp.resolved_tol_primal(d, r);
    const double tol_dual = hp.resolved_tol_dual(d, r);
    const double threshold = consensus_weight(setup, hp) / (static_cast<double>(K) * hp.rho);

    Matrix z = Matrix::Zero(d, r);
    Matrix ubar = Matrix::Zero(d, r);  // running mean of worker duals
    bool phase_converged = false;
    int phase_rounds = 0;

    std::vector<LocalUpdateData> updates(static_cast<std::size_t>(K));
    for (int round_idx = 0; round_idx < hp.max_rounds; ++round_idx) {
      parallel_for_workers(K, threads, [&](int i) {
        updates[static_cast<std::size_t>(i)] =
            workers[static_cast<std::size_t>(i)]->round(phase, round_idx, z);
      });

      Matrix wbar = Matrix::Zero(d, r);
      double objective = 0.0;
      for (const auto& upd : updates) {
        if (upd.w.rows() != d || upd.w.cols() != r) {
          throw TransportError("drive_rounds: worker update shape mismatch");
        }
        wbar += upd.w;
        objective += upd.f_data;
      }
      wbar /= static_cast<double>(K);

      const Matrix z_new = soft_threshold(wbar + ubar / hp.rho, threshold);
      ubar += hp.rho * (wbar - z_new);

      double primal = 0.0;
      for (const auto& upd : updates) primal = std::max(primal, (upd.w - z_new).norm());
      const double dual = hp.rho * (z_new - z).norm();
      objective += consensus_weight(setup, hp) * z_new.cwiseAbs().sum();

      double cosine = 1.0;
      if (K >= 2) {
        std::vector<Matrix> ws;
        ws.reserve(updates.size());
        for (const auto& upd : updates) ws.push_back(upd.w);
        cosine = mean_abs_cosine(ws);
      }

      z = z_new;
      ++phase_rounds;
      trace.push_back(TraceRow{static_cast<int>(trace.size()), objective, primal, dual, cosine,
                               total_bytes(workers)});
      if (primal <= tol_primal && dual <= tol_dual) {
        phase_converged = true;
        break;
      }
    }

    result.rounds += phase_rounds;
    result.phase_rounds.push_back(phase_rounds);
    result.converged = result.converged && phase_converged;

    // Orthonormalize the consensus, then (for deflation) map it into the
    // complement of everything accepted so far and re-orthonormalize before
    // using it to build projectors; this keeps the accepted columns mutually
    // orthonormal to machine precision.
    Matrix accepted;
    if (setup.algorithm == Algorithm::fsspca) {
      accepted = qf(z);
      if (phases.size() > 1) accepted = qf(ctx.G * accepted);
    } else {
      const double norm = z.norm();
      if (!(norm > 0.0)) throw NumericalError("drive_rounds: consensus collapsed to zero");
      accepted = z / norm;
      if (phases.size() > 1) {
        accepted = ctx.G * accepted;
        const double gn = accepted.norm();
        if (!(gn > 0.0)) throw NumericalError("drive_rounds: deflated consensus vanished");
        accepted /= gn;
      }
    }

    if (stacked.size() == 0) {
      stacked = accepted;
    } else {
      Matrix grown(d, stacked.cols() + accepted.cols());
      grown << stacked, accepted;
      stacked = std::move(grown);
    }

    if (phase + 1 < static_cast<int>(phases.size())) {
      ctx.absorb(accepted);
      parallel_for_workers(K, threads, [&](int i) {
        workers[static_cast<std::size_t>(i)]->phase_done(phase, accepted);
      });
    }
  }

  for (auto& w : workers) w->finish(stacked);

  result.loadings.values = std::move(stacked);
  result.loadings.orthonormal = true;
  result.trace = trace;
  result.messages_sent = 0;
  for (const auto& w : workers) result.messages_sent += w->messages();
  result.bytes_sent = total_bytes(workers);
  return result;
}

namespace {

/// Endpoint that owns its worker outright; messages are metered but never
/// put on a wire.
class InProcessEndpoint final : public WorkerEndpoint {
 public:
  InProcessEndpoint(DataShard shard, Algorithm algo)
      : worker_(std::move(shard)), algo_(algo) {}

  HelloInfo hello() override {
    HelloInfo info = worker_.hello();
    RoundMessage m;
    m.kind = MsgKind::hello;
    m.sender = info.worker_id;
    m.algo = algo_;
    m.vec = Vector(2);
    m.vec << static_cast<double>(info.n), static_cast<double>(info.d);
    meter(m);
    return info;
  }

  Vector center_stats() override {
    Vector stats = worker_.center_stats();
    RoundMessage m;
    m.kind = MsgKind::center_stats;
    m.sender = worker_.hello().worker_id;
    m.algo = algo_;
    m.vec = stats;
    meter(m);
    return stats;
  }

  void configure(const Vector* mean, const SessionSetup& setup) override {
    RoundMessage m;
    m.kind = MsgKind::center_mean;
    m.algo = setup.algorithm;
    m.vec = mean ? *mean : Vector::Zero(setup.d);
    m.setup = setup;
    meter(m);
    worker_.configure(mean, setup);
  }

  LocalUpdateData round(int phase, int round_idx, const Matrix& z) override {
    RoundMessage out;
    out.kind = MsgKind::broadcast;
    out.round = round_idx;
    out.algo = algo_;
    out.phase = phase;
    out.mat = z;
    meter(out);

    LocalUpdateData upd = worker_.round(phase, round_idx, z);

    RoundMessage in;
    in.kind = MsgKind::local_update;
    in.round = round_idx;
    in.sender = worker_.hello().worker_id;
    in.algo = algo_;
    in.phase = phase;
    in.mat = upd.w;
    in.scalar = upd.f_data;
    meter(in);
    return upd;
  }

  void phase_done(int phase, const Matrix& z_accepted) override {
    RoundMessage m;
    m.kind = MsgKind::result;
    m.algo = algo_;
    m.phase = phase;
    m.mat = z_accepted;
    meter(m);
    worker_.phase_done(phase, z_accepted);
  }

  void finish(const Matrix& loadings) override {
    RoundMessage m;
    m.kind = MsgKind::result;
    m.algo = algo_;
    m.phase = -1;
    m.mat = loadings;
    meter(m);
    RoundMessage stop;
    stop.kind = MsgKind::stop;
    stop.algo = algo_;
    meter(stop);
  }

 private:
  LocalWorker worker_;
  Algorithm algo_;
};

}  // namespace

std::unique_ptr<WorkerEndpoint> make_in_process_endpoint(DataShard shard, Algorithm algo) {
  return std::make_unique<InProcessEndpoint>(std::move(shard), algo);
}

SolveResult solve_in_process(const SessionSetup& setup, std::span<const DataShard> shards,
                             int threads) {
  std::vector<std::unique_ptr<WorkerEndpoint>> endpoints;
  endpoints.reserve(shards.size());
  for (const auto& shard : shards) {
    endpoints.emplace_back(make_in_process_endpoint(shard, setup.algorithm));
  }
  for (auto& ep : endpoints) {
    ep->hello();
    ep->configure(nullptr, setup);
  }
  std::vector<TraceRow> trace;
  return drive_rounds(setup, endpoints, threads, trace);
}

}  // namespace fedspca::detail
