#include "flowcouple/train.hpp"

#include <chrono>

#include "flowcouple/data.hpp"
#include "flowcouple/metrics.hpp"
#include "flowcouple/rng.hpp"

namespace flowcouple {

const char* to_string(Dataset d) {
    switch (d) {
        case Dataset::EightGaussiansToMoons: return "8g_moons";
        case Dataset::Bimodal1d: return "bimodal1d";
    }
    return "?";
}

Dataset dataset_from_string(const std::string& s) {
    if (s == "8g_moons" || s == "8gaussians-moons") return Dataset::EightGaussiansToMoons;
    if (s == "bimodal1d" || s == "bimodal-1d") return Dataset::Bimodal1d;
    throw std::invalid_argument("unknown dataset: " + s);
}

int dataset_dim(Dataset d) { return d == Dataset::EightGaussiansToMoons ? 2 : 1; }

std::string SolverSpec::name() const {
    if (kind == Kind::Euler) return "euler:" + std::to_string(euler_steps);
    return "adaptive";
}

SolverSpec solver_spec_from_string(const std::string& s) {
    if (s == "adaptive") return SolverSpec::adaptive();
    if (s.rfind("euler:", 0) == 0) {
        const int k = std::stoi(s.substr(6));
        if (k < 1) throw std::invalid_argument("euler steps must be >= 1");
        return SolverSpec::euler(k);
    }
    if (s == "euler") return SolverSpec::euler(1);
    throw std::invalid_argument("unknown solver spec: " + s + " (want euler:k or adaptive)");
}

void TrainConfig::validate() const {
    if (iterations < 0) throw std::invalid_argument("TrainConfig: iterations must be >= 0");
    if (net_batch < 1 || ot_batch < 1 || ot_batch % net_batch != 0)
        throw std::invalid_argument("TrainConfig: OT batch must be a positive multiple of net batch");
    if (method == CouplingMethod::C2OT && condition == ConditionMode::None)
        throw std::invalid_argument("TrainConfig: c2ot does not apply in the unconditional setting");
    if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (hidden < 1) throw std::invalid_argument("TrainConfig: hidden must be >= 1");
    if (target_ratio <= 0.0 || target_ratio >= 1.0)
        throw std::invalid_argument("TrainConfig: target ratio must be in (0, 1)");
}

PriorSampler make_prior_sampler(Dataset d) {
    if (d == Dataset::EightGaussiansToMoons)
        return [](Eigen::Index n, uint64_t seed) { return sample_eight_gaussians(n, seed); };
    return [](Eigen::Index n, uint64_t seed) {
        return sample_bimodal_1d(n, seed, BimodalSide::Prior).points;
    };
}

TargetSampler make_target_sampler(Dataset d, ConditionMode mode) {
    if (d == Dataset::EightGaussiansToMoons) {
        return [mode](Eigen::Index n, uint64_t seed) {
            MoonsSample s = sample_moons(n, seed);
            return std::make_pair(std::move(s.points), make_conditions(mode, s.points, &s.labels));
        };
    }
    return [mode](Eigen::Index n, uint64_t seed) {
        Bimodal1dSample s = sample_bimodal_1d(n, seed, BimodalSide::Target);
        return std::make_pair(std::move(s.points), make_conditions(mode, s.points, &s.labels));
    };
}

VelocityField make_field(const VelocityNetParams& params, Vector conditions) {
    if (params.conditional != (conditions.size() > 0))
        throw std::invalid_argument("make_field: condition presence must match the net");
    return [params, conditions = std::move(conditions)](double t, const PointBatch& x) {
        const Vector tv = Vector::Constant(x.rows(), t);
        return mlp_forward(params, x, tv, params.conditional ? &conditions : nullptr);
    };
}

TrainResult train(const TrainConfig& config) {
    config.validate();
    const int dim = dataset_dim(config.dataset);
    const bool conditional = config.condition != ConditionMode::None;

    TrainResult result;
    result.params = init_params(derive_seed(config.seed, "init"), dim, config.hidden, conditional);
    result.log.loss.reserve(static_cast<size_t>(config.iterations));
    if (config.iterations == 0) return result;

    AdamState adam = AdamState::init(result.params);
    VelocityNetParams grads = zeros_like(result.params);

    CouplerConfig coupler;
    coupler.method = config.method;
    coupler.condition = config.condition;
    coupler.target_ratio = config.target_ratio;
    coupler.w_init = config.w_init;
    Oversampler sampler(make_target_sampler(config.dataset, config.condition),
                        make_prior_sampler(config.dataset), coupler, config.ot_batch,
                        config.net_batch, derive_seed(config.seed, "coupling"),
                        config.coupling_workers);

    const auto t0 = std::chrono::steady_clock::now();
    for (long it = 0; it < config.iterations; ++it) {
        const CoupledBatch batch = sampler.next();
        if (config.minibatch_hook) config.minibatch_hook(batch);

        Rng trng(derive_seed(config.seed, "t", static_cast<uint64_t>(it)));
        const Vector t = uniform_vector(trng, batch.size());

        const double loss = mlp_loss_and_grad(result.params, batch, t, grads);
        if (!std::isfinite(loss))
            throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(it));
        if (!adam_step(adam, result.params, grads, config.lr))
            throw std::runtime_error("train: non-finite gradient at iteration " + std::to_string(it));
        result.log.loss.push_back(loss);

        if (config.eval_every > 0 && (it + 1) % config.eval_every == 0) {
            const EvalResult ev =
                evaluate(result.params, config.dataset, config.condition, config.eval_solver,
                         config.eval_n, derive_seed(config.seed, "periodic_eval", static_cast<uint64_t>(it)));
            const CouplingStats cs = sampler.last_stats();
            EvalRecord rec;
            rec.iteration = it + 1;
            rec.loss = loss;
            rec.w2_sq = ev.w2_sq;
            rec.nfe = ev.nfe;
            rec.ratio = cs.achieved_ratio;
            rec.weight = cs.weight;
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            result.log.evals.push_back(rec);
        }
    }
    result.log.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.pipeline = sampler.pipeline_stats();
    result.log.coupling_solves = sampler.coupling_solves();
    return result;
}

EvalResult evaluate(const VelocityNetParams& params, Dataset dataset, ConditionMode condition,
                    const SolverSpec& solver, Eigen::Index n_eval, uint64_t seed) {
    if (n_eval < 2 || n_eval % 2 != 0)
        throw std::invalid_argument("evaluate: n_eval must be even and >= 2");
    if (params.conditional != (condition != ConditionMode::None))
        throw std::invalid_argument("evaluate: condition mode must match the net");

    const PointBatch x0 = make_prior_sampler(dataset)(n_eval, derive_seed(seed, "eval_prior"));

    Vector cond;  // empty = unconditional
    switch (condition) {
        case ConditionMode::None:
            break;
        case ConditionMode::Binary: {
            // same 50/50 label frequency as the dataset
            IntVector labels(n_eval);
            labels.head(n_eval / 2).setZero();
            labels.tail(n_eval / 2).setOnes();
            cond = ConditionBatch::discrete(labels, 2).encoded();
            break;
        }
        case ConditionMode::Continuous: {
            // x-coordinates of an independent fresh target draw
            const auto fresh =
                make_target_sampler(dataset, ConditionMode::Continuous)(n_eval, derive_seed(seed, "eval_cond"));
            cond = fresh.second.scalars();
            break;
        }
    }

    const VelocityField field = make_field(params, cond);
    SolveResult sol;
    if (solver.kind == SolverSpec::Kind::Euler) {
        sol = euler_integrate(field, x0, solver.euler_steps);
    } else {
        Dopri5Options opt;
        opt.rtol = solver.rtol;
        opt.atol = solver.atol;
        sol = dopri5_integrate(field, x0, opt);
    }

    const auto target =
        make_target_sampler(dataset, ConditionMode::None)(n_eval, derive_seed(seed, "eval_target"));
    EvalResult out;
    out.w2_sq = w2_squared(sol.terminal, target.first).w2_sq;
    out.nfe = sol.nfe;
    return out;
}

}  // namespace flowcouple
