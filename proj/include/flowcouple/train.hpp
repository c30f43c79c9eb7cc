#pragma once

#include <functional>
#include <string>

#include "flowcouple/coupling.hpp"
#include "flowcouple/mlp.hpp"
#include "flowcouple/ode.hpp"
#include "flowcouple/types.hpp"

namespace flowcouple {

enum class Dataset { EightGaussiansToMoons, Bimodal1d };
const char* to_string(Dataset d);
Dataset dataset_from_string(const std::string& s);
int dataset_dim(Dataset d);

struct SolverSpec {
    enum class Kind { Euler, Adaptive } kind = Kind::Adaptive;
    int euler_steps = 1;
    double rtol = 1e-5;
    double atol = 1e-5;

    static SolverSpec euler(int steps) { return {Kind::Euler, steps, 0.0, 0.0}; }
    static SolverSpec adaptive(double rtol = 1e-5, double atol = 1e-5) {
        return {Kind::Adaptive, 0, rtol, atol};
    }
    std::string name() const;
};
SolverSpec solver_spec_from_string(const std::string& s);  // "euler:k" or "adaptive"

// Defaults follow the 2-d experimental protocol: 20k iterations, net batch 256,
// OT batch 1024, target ratio 0.01, Adam lr 3e-4, hidden width 128.
struct TrainConfig {
    Dataset dataset = Dataset::EightGaussiansToMoons;
    CouplingMethod method = CouplingMethod::Independent;
    ConditionMode condition = ConditionMode::None;
    long iterations = 20000;
    Eigen::Index net_batch = 256;
    Eigen::Index ot_batch = 1024;
    double target_ratio = 0.01;
    double w_init = 1.0;
    double lr = 3e-4;
    int hidden = 128;
    uint64_t seed = 0;
    long eval_every = 0;          // 0 disables periodic evaluation
    Eigen::Index eval_n = 2000;   // periodic + final evaluation size
    SolverSpec eval_solver = SolverSpec::euler(1);
    int coupling_workers = 0;     // 0 = synchronous coupling
    // test instrumentation; called with every consumed minibatch
    std::function<void(const CoupledBatch&)> minibatch_hook;

    void validate() const;
};

struct EvalRecord {
    long iteration = 0;
    double loss = 0.0;
    double w2_sq = 0.0;
    long nfe = 0;
    double ratio = 0.0;   // last achieved candidate ratio (c2ot continuous)
    double weight = 0.0;  // last found condition weight
    double wall_seconds = 0.0;
};

struct RunLog {
    std::vector<double> loss;  // one entry per iteration
    std::vector<EvalRecord> evals;
    double train_seconds = 0.0;
    PipelineStats pipeline;
    uint64_t coupling_solves = 0;
};

struct TrainResult {
    VelocityNetParams params;
    RunLog log;
};

// Runs the loop: coupled minibatch -> per-sample t -> loss/grad -> Adam.
// Synchronous mode is a pure function of the config; pipelined coupling
// produces the identical stream. Throws on non-finite loss or gradients with
// the offending iteration in the message.
TrainResult train(const TrainConfig& config);

struct EvalResult {
    double w2_sq = 0.0;
    long nfe = 0;
};

// Samples n_eval priors and conditions (binary: half each class; continuous:
// x-coordinates of an independent fresh target draw), integrates the learned
// field, and scores squared 2-Wasserstein against a fresh target sample.
EvalResult evaluate(const VelocityNetParams& params, Dataset dataset, ConditionMode condition,
                    const SolverSpec& solver, Eigen::Index n_eval, uint64_t seed);

// Velocity field closure over fixed per-sample conditions (empty = none).
VelocityField make_field(const VelocityNetParams& params, Vector conditions);

// Shared samplers for the two datasets, wired for the Oversampler.
PriorSampler make_prior_sampler(Dataset d);
TargetSampler make_target_sampler(Dataset d, ConditionMode mode);

}  // namespace flowcouple
