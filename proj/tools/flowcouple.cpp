// Experiment runner for prior-data coupling strategies in 2-d flow matching:
// trains velocity nets under independent / OT / condition-aware OT couplings,
// evaluates 2-Wasserstein quality and solver NFE, and reproduces the
// 8gaussians->moons result tables and ablations.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "flowcouple/data.hpp"
#include "flowcouple/experiment.hpp"
#include "flowcouple/io.hpp"
#include "flowcouple/metrics.hpp"
#include "flowcouple/rng.hpp"

using namespace flowcouple;

namespace {

struct CommonOpts {
    std::string config_path;
    uint64_t seed = 0;
    int n_seeds = 5;
    std::vector<std::string> methods;
    std::string condition;
    std::vector<std::string> solvers;
    long iterations = -1;
    Eigen::Index ot_batch = -1;
    Eigen::Index net_batch = -1;
    double target_ratio = -1.0;
    Eigen::Index eval_n = -1;
    std::string out_dir;
    std::string dataset;
    bool sync = false;
    bool paper_scale = false;
    int jobs = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "ExperimentSpec JSON file");
    cmd->add_option("--seed", o.seed, "base seed");
    cmd->add_option("--seeds", o.n_seeds, "number of derived cell seeds");
    cmd->add_option("--method", o.methods, "coupling methods (fm, ot, c2ot)")->delimiter(',');
    cmd->add_option("--condition", o.condition, "condition mode: none|binary|continuous");
    cmd->add_option("--solver", o.solvers, "solvers (euler:k, adaptive)")->delimiter(',');
    cmd->add_option("--iterations", o.iterations, "training iterations");
    cmd->add_option("--ot-batch", o.ot_batch, "OT batch size B");
    cmd->add_option("--net-batch", o.net_batch, "network batch size B_net");
    cmd->add_option("--target-ratio", o.target_ratio, "target candidate ratio");
    cmd->add_option("--eval-n", o.eval_n, "evaluation sample count");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--dataset", o.dataset, "dataset: 8g_moons|bimodal1d");
    cmd->add_option("--jobs", o.jobs, "parallel training cells");
    cmd->add_flag("--sync", o.sync, "force synchronous coupling");
    cmd->add_flag("--paper-scale", o.paper_scale, "eval n=10000 over 10 seeds");
}

ExperimentSpec build_spec(const CommonOpts& o) {
    ExperimentSpec spec;
    if (!o.config_path.empty()) {
        std::ifstream is(o.config_path);
        if (!is) throw std::runtime_error("cannot open config: " + o.config_path);
        std::stringstream ss;
        ss << is.rdbuf();
        spec = ExperimentSpec::from_json(ss.str());
    } else {
        spec.methods = {CouplingMethod::Independent, CouplingMethod::OT};
        spec.solvers = {SolverSpec::euler(1), SolverSpec::adaptive()};
        spec.condition = ConditionMode::None;
    }

    if (!o.dataset.empty()) spec.dataset = dataset_from_string(o.dataset);
    if (!o.condition.empty()) spec.condition = condition_mode_from_string(o.condition);
    if (!o.methods.empty()) {
        spec.methods.clear();
        for (const auto& m : o.methods) spec.methods.push_back(coupling_method_from_string(m));
    }
    if (!o.solvers.empty()) {
        spec.solvers.clear();
        for (const auto& s : o.solvers) spec.solvers.push_back(solver_spec_from_string(s));
    }
    if (spec.seeds.empty()) spec.seeds = derive_cell_seeds(o.seed, o.paper_scale ? 10 : o.n_seeds);
    if (o.iterations >= 0) spec.base.iterations = o.iterations;
    if (o.ot_batch > 0) spec.base.ot_batch = o.ot_batch;
    if (o.net_batch > 0) spec.base.net_batch = o.net_batch;
    if (o.target_ratio > 0) spec.base.target_ratio = o.target_ratio;
    if (o.eval_n > 0) spec.eval_n = o.eval_n;
    if (o.paper_scale) spec.eval_n = 10000;
    if (!o.out_dir.empty()) spec.out_dir = o.out_dir;
    if (o.jobs > 0) spec.jobs = o.jobs;
    spec.base.coupling_workers = o.sync ? 0 : spec.base.coupling_workers;
    return spec;
}

int cmd_train(const CommonOpts& o) {
    ExperimentSpec spec = build_spec(o);
    TrainConfig cfg = spec.base;
    cfg.dataset = spec.dataset;
    cfg.condition = spec.condition;
    cfg.method = spec.methods.front();
    cfg.seed = spec.seeds.front();
    cfg.validate();

    std::printf("training %s / %s / seed %llu (%ld iterations)\n", to_string(cfg.method),
                to_string(cfg.condition), static_cast<unsigned long long>(cfg.seed),
                cfg.iterations);
    const TrainResult res = train(cfg);
    std::printf("done in %.1fs, final loss %.6f\n", res.log.train_seconds,
                res.log.loss.empty() ? 0.0 : res.log.loss.back());

    const std::string out = spec.out_dir;
    const std::string ckpt = out + "/" + std::string(to_string(cfg.method)) + "_" +
                             std::string(to_string(cfg.condition)) + "_" +
                             std::to_string(cfg.seed) + ".ckpt";
    std::filesystem::create_directories(out);
    save_checkpoint(ckpt, res.params);
    write_file_atomic(out + "/runlog.csv", runlog_csv(res.log));
    std::printf("checkpoint: %s\n", ckpt.c_str());

    for (const auto& solver : spec.solvers) {
        const EvalResult ev = evaluate(res.params, cfg.dataset, cfg.condition, solver, spec.eval_n,
                                       derive_seed(cfg.seed, "eval"));
        std::printf("  %-10s W2sq=%.5f  NFE=%ld\n", solver.name().c_str(), ev.w2_sq, ev.nfe);
    }
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& checkpoint) {
    ExperimentSpec spec = build_spec(o);
    const VelocityNetParams params = load_checkpoint(checkpoint);
    for (const auto& solver : spec.solvers) {
        const EvalResult ev = evaluate(params, spec.dataset, spec.condition, solver, spec.eval_n,
                                       derive_seed(o.seed, "eval"));
        std::printf("%-10s W2sq=%.5f  NFE=%ld\n", solver.name().c_str(), ev.w2_sq, ev.nfe);
    }
    return 0;
}

int cmd_sweep(const CommonOpts& o) {
    const ExperimentSpec spec = build_spec(o);
    const ExperimentResults res = run_experiment(spec);
    std::printf("%s\n", aggregate_csv(aggregate_results(res.rows)).c_str());
    for (const auto& f : res.failures)
        std::fprintf(stderr, "cell failed: %s seed %llu: %s\n", to_string(f.method),
                     static_cast<unsigned long long>(f.seed), f.error.c_str());
    std::printf("results under %s\n", spec.out_dir.c_str());
    return res.failures.empty() ? 0 : 1;
}

int cmd_ablate(const CommonOpts& o, const std::string& axis_name, std::vector<double>& values) {
    const ExperimentSpec spec = build_spec(o);
    AblationAxis axis;
    if (axis_name == "ot_batch_size")
        axis = AblationAxis::OtBatchSize;
    else if (axis_name == "target_ratio")
        axis = AblationAxis::TargetRatio;
    else
        throw std::invalid_argument("--axis must be ot_batch_size or target_ratio");
    const auto all = run_ablation(axis, values, spec);
    bool failed = false;
    for (size_t i = 0; i < all.size(); ++i) {
        std::printf("---- %s = %g ----\n", axis_name.c_str(), values[i]);
        std::printf("%s\n", aggregate_csv(aggregate_results(all[i].rows)).c_str());
        for (const auto& f : all[i].failures) {
            failed = true;
            std::fprintf(stderr, "cell failed: %s seed %llu: %s\n", to_string(f.method),
                         static_cast<unsigned long long>(f.seed), f.error.c_str());
        }
    }
    return failed ? 1 : 0;
}

// Brute-force-oracle property suites, runnable from a shipped binary.
int cmd_selftest() {
    int failures = 0;
    auto report = [&](const char* name, bool ok) {
        std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", name);
        if (!ok) ++failures;
    };

    // exact LAP vs exhaustive search, including masked class blocks
    {
        bool ok = true;
        for (int n = 2; n <= 7 && ok; ++n) {
            for (int trial = 0; trial < 200 && ok; ++trial) {
                Rng rng(derive_seed(41, "selftest_lap", static_cast<uint64_t>(n * 1000 + trial)));
                CostMatrix cost(n, n);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j) cost(i, j) = rng.uniform(0.0, 10.0);
                if (trial % 3 == 0) {
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < n; ++j)
                            if ((i < n / 2) != (j < n / 2)) cost(i, j) = kInfCost;
                }
                ok = solve_lap(cost).total_cost == brute_force_lap(cost).total_cost;
            }
        }
        report("solve_lap matches brute force (n=2..7, with masked blocks)", ok);
    }

    // coupler marginals: multisets of rows preserved
    {
        bool ok = true;
        for (int trial = 0; trial < 20 && ok; ++trial) {
            const uint64_t s = derive_seed(42, "selftest_coupler", static_cast<uint64_t>(trial));
            const MoonsSample moons = sample_moons(16, derive_seed(s, "m"));
            const PointBatch prior = sample_eight_gaussians(16, derive_seed(s, "p"));
            const auto cond = make_conditions(ConditionMode::Binary, moons.points, &moons.labels);
            const CoupledBatch c = couple_c2ot_discrete(prior, moons.points, cond);
            ok = c.cond == cond;  // PC = C
            double in_sum = moons.points.sum(), out_sum = c.x1.sum();
            ok = ok && std::abs(in_sum - out_sum) < 1e-9;
        }
        report("c2ot-discrete keeps conditions and target marginals", ok);
    }

    // ratio properties: monotone in w, floor 1/B, scale invariance
    {
        const uint64_t s = derive_seed(43, "selftest_ratio");
        const MoonsSample moons = sample_moons(64, derive_seed(s, "m"));
        const PointBatch prior = sample_eight_gaussians(64, derive_seed(s, "p"));
        const auto cond = make_conditions(ConditionMode::Continuous, moons.points, nullptr);
        bool ok = true;
        double prev = 2.0;
        for (double w : {0.0, 0.5, 2.0, 8.0, 64.0, 1e6}) {
            const double r = compute_ratio(prior, moons.points, cond, w);
            ok = ok && r <= prev + 1e-15 && r >= 1.0 / 64;
            prev = r;
        }
        const double r1 = compute_ratio(prior, moons.points, cond, 3.0);
        const double r4 = compute_ratio(2.0 * prior, 2.0 * moons.points, cond, 4.0 * 3.0);
        ok = ok && r1 == r4;
        report("candidate ratio is monotone, floored at 1/B, scale-invariant", ok);
    }

    // analytic gradient vs central differences on a tiny net
    {
        const uint64_t s = derive_seed(44, "selftest_grad");
        VelocityNetParams p = init_params(s, 2, 8, true);
        const MoonsSample moons = sample_moons(4, derive_seed(s, "m"));
        CoupledBatch batch;
        batch.x0 = sample_eight_gaussians(4, derive_seed(s, "p"));
        batch.x1 = moons.points;
        batch.cond = make_conditions(ConditionMode::Binary, moons.points, &moons.labels);
        Rng trng(derive_seed(s, "t"));
        const Vector t = uniform_vector(trng, 4);

        VelocityNetParams grad = zeros_like(p);
        mlp_loss_and_grad(p, batch, t, grad);
        const auto pv = tensor_views(p);
        const auto gv = tensor_views(grad);
        double max_rel = 0.0;
        Rng pick(derive_seed(s, "pick"));
        for (int probe = 0; probe < 48; ++probe) {
            const size_t k = static_cast<size_t>(pick.uniform_int(static_cast<int>(pv.size())));
            const Eigen::Index i = pick.uniform_int(static_cast<int>(pv[k].size));
            const double h = 1e-4;
            VelocityNetParams scratch = zeros_like(p);
            const double save = pv[k].data[i];
            pv[k].data[i] = save + h;
            const double lp = mlp_loss_and_grad(p, batch, t, scratch);
            pv[k].data[i] = save - h;
            const double lm = mlp_loss_and_grad(p, batch, t, scratch);
            pv[k].data[i] = save;
            const double fd = (lp - lm) / (2 * h);
            const double denom = std::max({std::abs(fd), std::abs(gv[k].data[i]), 1e-8});
            max_rel = std::max(max_rel, std::abs(fd - gv[k].data[i]) / denom);
        }
        report("analytic gradients match finite differences (rel < 1e-4)", max_rel < 1e-4);
    }

    std::printf("%s\n", failures == 0 ? "selftest OK" : "selftest FAILED");
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coupled flow matching on 2-d synthetic data"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string checkpoint, axis, plot_svg = "flows.svg", plot_csv = "flows.csv";
    std::string dump_name = "moons", dump_out = "dataset.csv";
    std::vector<double> axis_values;
    Eigen::Index dump_n = 10000;
    int n_paths = 128;

    auto* c_train = app.add_subcommand("train", "train one velocity net and report metrics");
    add_common(c_train, opts);

    auto* c_eval = app.add_subcommand("eval", "evaluate a stored checkpoint");
    add_common(c_eval, opts);
    c_eval->add_option("--checkpoint", checkpoint, "checkpoint path")->required();

    auto* c_sweep = app.add_subcommand("sweep", "train all (method, seed) cells and aggregate");
    add_common(c_sweep, opts);

    auto* c_ablate = app.add_subcommand("ablate", "sweep one axis of the training configuration");
    add_common(c_ablate, opts);
    c_ablate->add_option("--axis", axis, "ot_batch_size | target_ratio")->required();
    c_ablate->add_option("--values", axis_values, "axis values")->required()->delimiter(',');

    auto* c_plot = app.add_subcommand("plot", "render flow trajectories from a checkpoint");
    add_common(c_plot, opts);
    c_plot->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
    c_plot->add_option("--n-paths", n_paths, "trajectories to draw");
    c_plot->add_option("--svg", plot_svg, "output SVG path");
    c_plot->add_option("--csv", plot_csv, "output trajectory CSV path");

    auto* c_dump = app.add_subcommand("dump-dataset", "write dataset samples as CSV");
    c_dump->add_option("--dataset", dump_name, "8gaussians|moons|bimodal-prior|bimodal-target");
    c_dump->add_option("--n", dump_n, "sample count");
    c_dump->add_option("--seed", opts.seed, "seed");
    c_dump->add_option("--out", dump_out, "output CSV path");

    app.add_subcommand("selftest", "run the brute-force-oracle property suites");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_train->parsed()) return cmd_train(opts);
        if (c_eval->parsed()) return cmd_eval(opts, checkpoint);
        if (c_sweep->parsed()) return cmd_sweep(opts);
        if (c_ablate->parsed()) return cmd_ablate(opts, axis, axis_values);
        if (c_plot->parsed()) {
            const ExperimentSpec spec = build_spec(opts);
            plot_flows(checkpoint, spec.dataset, spec.condition, n_paths, spec.solvers.front(),
                       derive_seed(opts.seed, "plot"), plot_svg, plot_csv);
            std::printf("wrote %s and %s\n", plot_svg.c_str(), plot_csv.c_str());
            return 0;
        }
        if (c_dump->parsed()) {
            dump_dataset(dump_name, dump_n, opts.seed, dump_out);
            std::printf("wrote %s\n", dump_out.c_str());
            return 0;
        }
        return cmd_selftest();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
