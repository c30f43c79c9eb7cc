#include "flowcouple/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "flowcouple/data.hpp"
#include "flowcouple/io.hpp"
#include "flowcouple/rng.hpp"

namespace flowcouple {

using nlohmann::json;

void ExperimentSpec::validate() const {
    if (methods.empty()) throw std::invalid_argument("ExperimentSpec: methods must be nonempty");
    if (seeds.empty()) throw std::invalid_argument("ExperimentSpec: seeds must be nonempty");
    if (solvers.empty()) throw std::invalid_argument("ExperimentSpec: solvers must be nonempty");
    for (const CouplingMethod m : methods) {
        if (m == CouplingMethod::C2OT && condition == ConditionMode::None)
            throw std::invalid_argument(
                "ExperimentSpec: c2ot does not apply in the unconditional setting");
    }
    if (eval_n < 2 || eval_n % 2 != 0)
        throw std::invalid_argument("ExperimentSpec: eval_n must be even and >= 2");
}

std::string ExperimentSpec::to_json() const {
    json j;
    j["dataset"] = to_string(dataset);
    j["condition"] = to_string(condition);
    json ms = json::array();
    for (const auto m : methods) ms.push_back(to_string(m));
    j["methods"] = ms;
    j["seeds"] = seeds;
    json ss = json::array();
    for (const auto& s : solvers) ss.push_back(s.name());
    j["solvers"] = ss;
    j["eval_n"] = eval_n;
    j["out"] = out_dir;
    j["jobs"] = jobs;
    j["save_checkpoints"] = save_checkpoints;
    json t;
    t["iterations"] = base.iterations;
    t["net_batch"] = base.net_batch;
    t["ot_batch"] = base.ot_batch;
    t["target_ratio"] = base.target_ratio;
    t["w_init"] = base.w_init;
    t["lr"] = base.lr;
    t["hidden"] = base.hidden;
    t["coupling_workers"] = base.coupling_workers;
    t["eval_every"] = base.eval_every;
    j["train"] = t;
    return j.dump(2) + "\n";
}

ExperimentSpec ExperimentSpec::from_json(const std::string& text) {
    const json j = json::parse(text);
    ExperimentSpec spec;
    if (j.contains("dataset")) spec.dataset = dataset_from_string(j["dataset"].get<std::string>());
    if (j.contains("condition"))
        spec.condition = condition_mode_from_string(j["condition"].get<std::string>());
    if (j.contains("methods"))
        for (const auto& m : j["methods"])
            spec.methods.push_back(coupling_method_from_string(m.get<std::string>()));
    if (j.contains("seeds")) spec.seeds = j["seeds"].get<std::vector<uint64_t>>();
    if (j.contains("solvers"))
        for (const auto& s : j["solvers"])
            spec.solvers.push_back(solver_spec_from_string(s.get<std::string>()));
    if (j.contains("eval_n")) spec.eval_n = j["eval_n"].get<Eigen::Index>();
    if (j.contains("out")) spec.out_dir = j["out"].get<std::string>();
    if (j.contains("jobs")) spec.jobs = j["jobs"].get<int>();
    if (j.contains("save_checkpoints")) spec.save_checkpoints = j["save_checkpoints"].get<bool>();
    if (j.contains("train")) {
        const json& t = j["train"];
        if (t.contains("iterations")) spec.base.iterations = t["iterations"].get<long>();
        if (t.contains("net_batch")) spec.base.net_batch = t["net_batch"].get<Eigen::Index>();
        if (t.contains("ot_batch")) spec.base.ot_batch = t["ot_batch"].get<Eigen::Index>();
        if (t.contains("target_ratio")) spec.base.target_ratio = t["target_ratio"].get<double>();
        if (t.contains("w_init")) spec.base.w_init = t["w_init"].get<double>();
        if (t.contains("lr")) spec.base.lr = t["lr"].get<double>();
        if (t.contains("hidden")) spec.base.hidden = t["hidden"].get<int>();
        if (t.contains("coupling_workers"))
            spec.base.coupling_workers = t["coupling_workers"].get<int>();
        if (t.contains("eval_every")) spec.base.eval_every = t["eval_every"].get<long>();
    }
    return spec;
}

std::vector<uint64_t> derive_cell_seeds(uint64_t base, int count) {
    std::vector<uint64_t> out;
    out.reserve(static_cast<size_t>(count));
    for (int k = 0; k < count; ++k) out.push_back(derive_seed(base, "cell_seed", static_cast<uint64_t>(k)));
    return out;
}

const char* to_string(AblationAxis a) {
    return a == AblationAxis::OtBatchSize ? "ot_batch_size" : "target_ratio";
}

std::string results_csv(const std::vector<CellResult>& rows) {
    std::ostringstream os;
    os << "method,condition_mode,solver,seed,W2sq,NFE,wall_clock\n";
    for (const auto& r : rows) {
        os << to_string(r.method) << ',' << to_string(r.condition) << ',' << r.solver << ','
           << r.seed << ',' << format_double(r.w2_sq) << ',' << format_double(r.nfe) << ','
           << format_double(r.wall_seconds) << '\n';
    }
    return os.str();
}

namespace {

struct Welford {
    int n = 0;
    double mean = 0.0, m2 = 0.0;
    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    double std() const { return n > 1 ? std::sqrt(m2 / (n - 1)) : 0.0; }
};

}  // namespace

std::vector<AggregateRow> aggregate_results(const std::vector<CellResult>& rows) {
    std::vector<AggregateRow> out;
    std::vector<Welford> w2s, nfes, walls;
    auto find_cell = [&](const CellResult& r) -> size_t {
        const std::string method = to_string(r.method);
        const std::string condition = to_string(r.condition);
        for (size_t i = 0; i < out.size(); ++i)
            if (out[i].method == method && out[i].condition == condition && out[i].solver == r.solver)
                return i;
        out.push_back({method, condition, r.solver, 0, 0, 0, 0, 0, 0});
        w2s.emplace_back();
        nfes.emplace_back();
        walls.emplace_back();
        return out.size() - 1;
    };
    for (const auto& r : rows) {
        const size_t i = find_cell(r);
        w2s[i].add(r.w2_sq);
        nfes[i].add(r.nfe);
        walls[i].add(r.wall_seconds);
    }
    for (size_t i = 0; i < out.size(); ++i) {
        out[i].n = w2s[i].n;
        out[i].w2_mean = w2s[i].mean;
        out[i].w2_std = w2s[i].std();
        out[i].nfe_mean = nfes[i].mean;
        out[i].nfe_std = nfes[i].std();
        out[i].wall_mean = walls[i].mean;
    }
    return out;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
    std::ostringstream os;
    os << "method,condition_mode,solver,n,W2sq_mean,W2sq_std,NFE_mean,NFE_std,wall_clock_mean\n";
    for (const auto& r : rows) {
        os << r.method << ',' << r.condition << ',' << r.solver << ',' << r.n << ','
           << format_double(r.w2_mean) << ',' << format_double(r.w2_std) << ','
           << format_double(r.nfe_mean) << ',' << format_double(r.nfe_std) << ','
           << format_double(r.wall_mean) << '\n';
    }
    return os.str();
}

ExperimentResults run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    struct Cell {
        CouplingMethod method;
        uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const auto m : spec.methods)
        for (const auto s : spec.seeds) cells.push_back({m, s});

    std::vector<std::vector<CellResult>> cell_rows(cells.size());
    std::vector<std::optional<CellFailure>> cell_failures(cells.size());

    const int jobs = std::max(1, thread_cap(std::max(1, spec.jobs)));
    std::atomic<size_t> next{0};
    auto run_cell = [&](size_t idx) {
        const Cell& cell = cells[idx];
        try {
            TrainConfig cfg = spec.base;
            cfg.dataset = spec.dataset;
            cfg.method = cell.method;
            cfg.condition = spec.condition;
            cfg.seed = cell.seed;
            const TrainResult tr = train(cfg);
            if (spec.save_checkpoints) {
                const std::string path = spec.out_dir + "/checkpoints/" +
                                         std::string(to_string(cell.method)) + "_" +
                                         std::string(to_string(spec.condition)) + "_" +
                                         std::to_string(cell.seed) + ".ckpt";
                std::filesystem::create_directories(spec.out_dir + "/checkpoints");
                save_checkpoint(path, tr.params);
            }
            for (const auto& solver : spec.solvers) {
                const auto t0 = std::chrono::steady_clock::now();
                const EvalResult ev = evaluate(tr.params, spec.dataset, spec.condition, solver,
                                               spec.eval_n, derive_seed(cell.seed, "eval"));
                const double eval_secs =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                CellResult row;
                row.method = cell.method;
                row.condition = spec.condition;
                row.solver = solver.name();
                row.seed = cell.seed;
                row.w2_sq = ev.w2_sq;
                row.nfe = static_cast<double>(ev.nfe);
                row.wall_seconds = tr.log.train_seconds + eval_secs;
                cell_rows[idx].push_back(row);
            }
        } catch (const std::exception& e) {
            cell_failures[idx] = CellFailure{cell.method, cell.seed, e.what()};
        }
    };

    if (jobs == 1) {
        for (size_t i = 0; i < cells.size(); ++i) run_cell(i);
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j)
            pool.emplace_back([&] {
                while (true) {
                    const size_t i = next.fetch_add(1);
                    if (i >= cells.size()) return;
                    run_cell(i);
                }
            });
        for (auto& t : pool) t.join();
    }

    ExperimentResults results;
    for (size_t i = 0; i < cells.size(); ++i) {
        for (const auto& r : cell_rows[i]) results.rows.push_back(r);
        if (cell_failures[i]) results.failures.push_back(*cell_failures[i]);
    }

    write_file_atomic(spec.out_dir + "/raw.csv", results_csv(results.rows));
    write_file_atomic(spec.out_dir + "/aggregate.csv",
                      aggregate_csv(aggregate_results(results.rows)));
    write_file_atomic(spec.out_dir + "/spec.json", spec.to_json());
    if (!results.failures.empty()) {
        std::ostringstream os;
        os << "method,seed,error\n";
        for (const auto& f : results.failures)
            os << to_string(f.method) << ',' << f.seed << ",\"" << f.error << "\"\n";
        write_file_atomic(spec.out_dir + "/failures.csv", os.str());
    }
    return results;
}

std::vector<ExperimentResults> run_ablation(AblationAxis axis, const std::vector<double>& values,
                                            const ExperimentSpec& base) {
    if (values.empty()) throw std::invalid_argument("run_ablation: values must be nonempty");
    std::vector<ExperimentResults> out;
    for (const double v : values) {
        ExperimentSpec spec = base;
        std::ostringstream tag;
        if (axis == AblationAxis::OtBatchSize) {
            spec.base.ot_batch = static_cast<Eigen::Index>(v);
            tag << "ot_batch_size_" << static_cast<long>(v);
        } else {
            spec.base.target_ratio = v;
            tag << "target_ratio_" << v;
        }
        spec.out_dir = base.out_dir + "/" + tag.str();
        try {
            out.push_back(run_experiment(spec));
        } catch (const std::exception& e) {
            // e.g. an OT batch that does not divide into net batches: record
            // the whole value as failed and keep sweeping
            ExperimentResults res;
            for (const auto m : spec.methods)
                for (const auto s : spec.seeds) res.failures.push_back({m, s, e.what()});
            out.push_back(std::move(res));
        }
    }
    return out;
}

void plot_flows(const std::string& checkpoint_path, Dataset dataset, ConditionMode condition,
                int n_paths, const SolverSpec& solver, uint64_t seed, const std::string& out_svg,
                const std::string& out_csv) {
    if (n_paths < 0) throw std::invalid_argument("plot_flows: n_paths must be >= 0");
    const VelocityNetParams params = load_checkpoint(checkpoint_path);
    if (params.dim != dataset_dim(dataset))
        throw std::invalid_argument("plot_flows: checkpoint dimension does not match dataset");

    std::ostringstream csv;
    csv << "sample_id,t,x,y\n";

    // bounds cover the prior and target supports of both datasets
    SvgWriter svg(640, 640, -7.5, -7.5, 7.5, 7.5);

    if (n_paths > 0) {
        const Eigen::Index n = n_paths;
        const PointBatch x0 = make_prior_sampler(dataset)(n, derive_seed(seed, "plot_prior"));
        Vector cond;
        IntVector labels;
        switch (condition) {
            case ConditionMode::None:
                break;
            case ConditionMode::Binary: {
                labels.resize(n);
                for (Eigen::Index i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
                cond = ConditionBatch::discrete(labels, 2).encoded();
                break;
            }
            case ConditionMode::Continuous: {
                const auto fresh = make_target_sampler(dataset, ConditionMode::Continuous)(
                    n + (n % 2), derive_seed(seed, "plot_cond"));
                cond = fresh.second.scalars().head(n);
                break;
            }
        }

        const VelocityField field = make_field(params, cond);
        SolveResult sol;
        if (solver.kind == SolverSpec::Kind::Euler) {
            sol = euler_integrate(field, x0, solver.euler_steps, /*record=*/true);
        } else {
            Dopri5Options opt;
            opt.rtol = solver.rtol;
            opt.atol = solver.atol;
            opt.record = true;
            sol = dopri5_integrate(field, x0, opt);
        }

        for (Eigen::Index i = 0; i < n; ++i) {
            std::vector<std::pair<double, double>> path;
            path.reserve(sol.trajectory.size());
            for (const auto& [t, x] : sol.trajectory) {
                const double px = x(i, 0);
                const double py = params.dim > 1 ? x(i, 1) : 0.0;
                csv << i << ',' << format_double(t) << ',' << format_double(px) << ','
                    << format_double(py) << '\n';
                path.emplace_back(px, py);
            }
            std::string color = "#4878cf";
            if (condition == ConditionMode::Binary) color = labels[i] == 0 ? "#1f77b4" : "#d62728";
            if (condition == ConditionMode::Continuous) {
                const double u = std::clamp((cond[i] + 5.0) / 10.0, 0.0, 1.0);
                const int red = static_cast<int>(31 + u * (214 - 31));
                const int green = static_cast<int>(119 - u * (119 - 39));
                const int blue = static_cast<int>(180 - u * (180 - 40));
                char buf[8];
                std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", red, green, blue);
                color = buf;
            }
            svg.polyline(path, color, 1.0, 0.55);
            if (!path.empty()) svg.circle(path.back().first, path.back().second, 2.0, color, 0.9);
        }
    }

    write_file_atomic(out_svg, svg.finish());
    write_file_atomic(out_csv, csv.str());
}

void dump_dataset(const std::string& name, Eigen::Index n, uint64_t seed, const std::string& path) {
    std::ostringstream os;
    os << "x,y,label\n";
    if (name == "8gaussians") {
        const PointBatch p = sample_eight_gaussians(n, seed);
        for (Eigen::Index i = 0; i < n; ++i) {
            // nearest mixture center
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int k = 0; k < 8; ++k) {
                const double ang = k * (M_PI / 4.0);
                const double dx = p(i, 0) - dataset::kEightGaussRadius * std::cos(ang);
                const double dy = p(i, 1) - dataset::kEightGaussRadius * std::sin(ang);
                if (dx * dx + dy * dy < best_d) {
                    best_d = dx * dx + dy * dy;
                    best = k;
                }
            }
            os << format_double(p(i, 0)) << ',' << format_double(p(i, 1)) << ',' << best << '\n';
        }
    } else if (name == "moons") {
        const MoonsSample s = sample_moons(n, seed);
        for (Eigen::Index i = 0; i < n; ++i)
            os << format_double(s.points(i, 0)) << ',' << format_double(s.points(i, 1)) << ','
               << s.labels[i] << '\n';
    } else if (name == "bimodal-prior") {
        const Bimodal1dSample s = sample_bimodal_1d(n, seed, BimodalSide::Prior);
        for (Eigen::Index i = 0; i < n; ++i)
            os << format_double(s.points(i, 0)) << ",0,-1\n";
    } else if (name == "bimodal-target") {
        const Bimodal1dSample s = sample_bimodal_1d(n, seed, BimodalSide::Target);
        for (Eigen::Index i = 0; i < n; ++i)
            os << format_double(s.points(i, 0)) << ",0," << s.labels[i] << '\n';
    } else {
        throw std::invalid_argument(
            "dump_dataset: unknown dataset (want 8gaussians, moons, bimodal-prior or bimodal-target)");
    }
    write_file_atomic(path, os.str());
}

std::string runlog_csv(const RunLog& log) {
    std::ostringstream os;
    os << "iteration,loss,W2sq,NFE,ratio,weight,wall_clock\n";
    size_t e = 0;
    for (size_t i = 0; i < log.loss.size(); ++i) {
        os << (i + 1) << ',' << format_double(log.loss[i]);
        if (e < log.evals.size() && log.evals[e].iteration == static_cast<long>(i + 1)) {
            const auto& r = log.evals[e++];
            os << ',' << format_double(r.w2_sq) << ',' << r.nfe << ',' << format_double(r.ratio)
               << ',' << format_double(r.weight) << ',' << format_double(r.wall_seconds);
        } else {
            os << ",,,,,";
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace flowcouple
