#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flowcouple/train.hpp"

namespace flowcouple {

// One multi-seed, multi-method experiment over a dataset/condition pairing.
struct ExperimentSpec {
    Dataset dataset = Dataset::EightGaussiansToMoons;
    ConditionMode condition = ConditionMode::None;
    std::vector<CouplingMethod> methods;
    std::vector<uint64_t> seeds;
    std::vector<SolverSpec> solvers;
    TrainConfig base;  // per-run template; method/condition/seed filled per cell
    Eigen::Index eval_n = 2000;
    std::string out_dir = "results";
    int jobs = 1;
    bool save_checkpoints = false;

    void validate() const;
    std::string to_json() const;
    static ExperimentSpec from_json(const std::string& text);
};

std::vector<uint64_t> derive_cell_seeds(uint64_t base, int count);

struct CellResult {
    CouplingMethod method = CouplingMethod::Independent;
    ConditionMode condition = ConditionMode::None;
    std::string solver;
    uint64_t seed = 0;
    double w2_sq = 0.0;
    double nfe = 0.0;
    double wall_seconds = 0.0;
};

struct CellFailure {
    CouplingMethod method = CouplingMethod::Independent;
    uint64_t seed = 0;
    std::string error;
};

struct ExperimentResults {
    std::vector<CellResult> rows;
    std::vector<CellFailure> failures;
};

struct AggregateRow {
    std::string method;
    std::string condition;
    std::string solver;
    int n = 0;
    double w2_mean = 0.0, w2_std = 0.0;
    double nfe_mean = 0.0, nfe_std = 0.0;
    double wall_mean = 0.0;
};

// Trains every (method, seed) cell, evaluates every solver, and writes
// raw.csv / aggregate.csv (plus failures.csv when cells fail) under out_dir.
// Cell failures do not stop the remaining cells.
ExperimentResults run_experiment(const ExperimentSpec& spec);

enum class AblationAxis { OtBatchSize, TargetRatio };
const char* to_string(AblationAxis a);

// One run_experiment per axis value, written under out_dir/<axis>_<value>/.
// Returns results in axis-value order; per-cell validation failures (e.g. an
// OT batch not divisible by the net batch) are recorded, not fatal.
std::vector<ExperimentResults> run_ablation(AblationAxis axis, const std::vector<double>& values,
                                            const ExperimentSpec& base);

// mean/std (sample std) per (method, condition, solver) cell, in first-seen order
std::vector<AggregateRow> aggregate_results(const std::vector<CellResult>& rows);

std::string results_csv(const std::vector<CellResult>& rows);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

// Integrates n_paths prior samples through a stored velocity net, recording
// trajectories; writes a self-contained SVG (paths colored by condition) and a
// CSV of (sample_id, t, x, y) rows.
void plot_flows(const std::string& checkpoint_path, Dataset dataset, ConditionMode condition,
                int n_paths, const SolverSpec& solver, uint64_t seed, const std::string& out_svg,
                const std::string& out_csv);

// (x, y, label) CSV for external plotting; label is the moon / mixture
// component / bimodal side, or -1 where no label applies.
void dump_dataset(const std::string& name, Eigen::Index n, uint64_t seed, const std::string& path);

// RunLog CSV: per-iteration losses plus periodic eval records.
std::string runlog_csv(const RunLog& log);

}  // namespace flowcouple
