#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "flowcouple/lap.hpp"
#include "flowcouple/types.hpp"

namespace flowcouple {

// entry (i,j) = |X0_i - X1_j|^2
CostMatrix pairwise_sq_dist(const PointBatch& X0, const PointBatch& X1);

// entry (i,j) = 0 if c_i == c_j else kInfCost; forbids transport across classes
CostMatrix cond_cost_discrete(const ConditionBatch& C);

// entry (i,j) = w * (1 - cos(c_i, c_j)) over row vectors; symmetric, zero
// diagonal, range [0, 2w]
CostMatrix cond_cost_cosine(const Eigen::MatrixXd& cond_vectors, double w);
CostMatrix cond_cost_cosine(const ConditionBatch& C, double w);  // lifts scalars to (c, 1)

using PriorSampler = std::function<PointBatch(Eigen::Index n, uint64_t seed)>;
using TargetSampler = std::function<std::pair<PointBatch, ConditionBatch>(Eigen::Index n, uint64_t seed)>;

// positional pairing against a fresh prior draw
CoupledBatch couple_independent(const PointBatch& X1, const ConditionBatch& C,
                                const PriorSampler& prior, uint64_t seed);

// pairing minimizing total squared distance; conditions move with X1
CoupledBatch couple_ot(const PointBatch& X0, const PointBatch& X1, const ConditionBatch& C);

// independent OT within each class; the output condition array equals the input
CoupledBatch couple_c2ot_discrete(const PointBatch& X0, const PointBatch& X1, const ConditionBatch& C);

// pairing minimizing squared distance + w * cosine condition cost
CoupledBatch couple_c2ot_continuous(const PointBatch& X0, const PointBatch& X1,
                                    const ConditionBatch& C, double w);

// Precomputed per-batch matrices for evaluating the transport-candidate ratio
//   r(w) = (1/B^2) sum_ij 1(|X0_i - X1_j|^2 + w cdist(c_i, c_j) <= |X0_i - X1_i|^2)
// at many w cheaply. Also serves couple_c2ot_continuous with the same matrices.
class RatioEvaluator {
public:
    RatioEvaluator(const PointBatch& X0, const PointBatch& X1, const ConditionBatch& C);

    double ratio(double w);
    int evals() const { return evals_; }
    Eigen::Index batch_size() const { return sq_dist_.rows(); }
    const CostMatrix& sq_dist() const { return sq_dist_; }
    const CostMatrix& cond_dist() const { return cond_dist_; }  // unweighted cosine distances

private:
    CostMatrix sq_dist_;
    CostMatrix cond_dist_;
    Vector diag_;
    int evals_ = 0;
};

double compute_ratio(const PointBatch& X0, const PointBatch& X1, const ConditionBatch& C, double w);

// Search state for tuning w so that r(w) hits the target ratio.
struct WeightSearchResult {
    double w = 0.0;          // found weight
    double ratio = 0.0;      // r(w) actually achieved
    double target = 0.0;
    double w_lo = 0.0;       // bracket with r(w_lo) >= target >= r(w_hi)
    double w_hi = 0.0;
    bool bracketed = false;
    bool converged = false;  // |ratio - target| <= tol
    int ratio_evals = 0;
};

// Exponential bracketing (factor 2, at most 40 steps) followed by log-space
// bisection (at most 10 steps, tolerance target/4 unless given). Infeasible
// targets clamp: target <= 1/B returns the upper bracket cap, target >= r(0)
// returns w = 0.
WeightSearchResult find_weight(RatioEvaluator& eval, double target_ratio, double w_init,
                               double tol = -1.0);
WeightSearchResult find_weight(const PointBatch& X0, const PointBatch& X1, const ConditionBatch& C,
                               double target_ratio, double w_init, double tol = -1.0);

struct CouplerConfig {
    CouplingMethod method = CouplingMethod::Independent;
    ConditionMode condition = ConditionMode::None;
    double target_ratio = 0.01;  // c2ot with continuous conditions
    double w_init = 1.0;         // warm start for the first batch's weight search
};

// Per-OT-batch coupling diagnostics exposed for logging.
struct CouplingStats {
    uint64_t batch_index = 0;
    double solve_seconds = 0.0;
    double weight = 0.0;          // c2ot continuous only
    double achieved_ratio = 0.0;  // c2ot continuous only
    int ratio_evals = 0;
    int lap_solves = 0;
};

struct PipelineStats {
    uint64_t polls = 0;  // consumer dequeue attempts after warm-up
    uint64_t hits = 0;   // polls served without blocking
};

// Draws OT batches of size B, couples them with the configured strategy, and
// emits B/B_net contiguous minibatch chunks. Batch k is a pure function of
// (seed, k) plus, for the continuous-condition weight search, the previous
// batch's found w; the pipelined mode (workers > 0) therefore produces a
// stream bit-identical to the synchronous mode.
class Oversampler {
public:
    Oversampler(TargetSampler target, PriorSampler prior, CouplerConfig coupler,
                Eigen::Index ot_batch, Eigen::Index net_batch, uint64_t seed, int workers = 0);
    ~Oversampler();

    Oversampler(const Oversampler&) = delete;
    Oversampler& operator=(const Oversampler&) = delete;

    CoupledBatch next();

    Eigen::Index ot_batch() const { return ot_batch_; }
    Eigen::Index net_batch() const { return net_batch_; }
    uint64_t coupling_solves() const;  // OT batches coupled so far
    CouplingStats last_stats() const;
    PipelineStats pipeline_stats() const;

private:
    // Pure given (seed_, k, w_prev). For the continuous-condition weight chain,
    // on_weight fires with the found w as soon as the search finishes so the
    // next batch's search can start while this batch's LAP is still running.
    CoupledBatch produce(uint64_t k, double w_prev, CouplingStats& stats,
                         const std::function<void(double)>& on_weight = nullptr) const;
    bool chained() const {
        return coupler_.method == CouplingMethod::C2OT &&
               coupler_.condition == ConditionMode::Continuous;
    }
    void worker_loop();
    void refill_sync();
    void refill_pipelined();

    TargetSampler target_;
    PriorSampler prior_;
    CouplerConfig coupler_;
    Eigen::Index ot_batch_;
    Eigen::Index net_batch_;
    uint64_t seed_;
    int workers_;

    std::deque<CoupledBatch> chunks_;
    uint64_t next_batch_ = 0;  // next OT batch index to emit
    double w_prev_;
    CouplingStats last_stats_;
    uint64_t solves_ = 0;
    PipelineStats pipe_stats_;

    // pipelined mode
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::map<uint64_t, std::pair<CoupledBatch, CouplingStats>> ready_;
    std::map<uint64_t, double> w_done_;
    uint64_t next_claim_ = 0;
    uint64_t window_ = 0;  // max batch index allowed in flight = next_batch_ + window_
    bool stop_ = false;
    std::exception_ptr error_;
    std::vector<std::thread> threads_;
};

// FLOWCOUPLE_THREADS caps worker threads; returns requested clamped to it.
int thread_cap(int requested);

}  // namespace flowcouple
