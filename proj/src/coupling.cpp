#include "flowcouple/coupling.hpp"

#include <chrono>
#include <cstdlib>
#include <numeric>

#include "flowcouple/rng.hpp"

namespace flowcouple {

namespace {

double elapsed_seconds(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<int> identity_perm(Eigen::Index n) {
    std::vector<int> p(static_cast<size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    return p;
}

CoupledBatch apply_assignment(const PointBatch& X0, const PointBatch& X1, const ConditionBatch& C,
                              const std::vector<int>& j, CouplingMethod method) {
    CoupledBatch out;
    out.x0 = X0;
    out.x1.resize(X1.rows(), X1.cols());
    for (Eigen::Index i = 0; i < X1.rows(); ++i) out.x1.row(i) = X1.row(j[static_cast<size_t>(i)]);
    out.cond = C.select(j);
    out.method = method;
    return out;
}

// on-the-fly |X0_i - X1_j|^2; the point columns stream contiguously
struct SqDistCost {
    const PointBatch& a;
    const PointBatch& b;
    double operator()(int i, int j) const {
        double s = 0.0;
        for (Eigen::Index k = 0; k < a.cols(); ++k) {
            const double diff = a(i, k) - b(j, k);
            s += diff * diff;
        }
        return s;
    }
};

// cosine condition distances from row vectors with precomputed norms
struct CosineDist {
    Eigen::MatrixXd c;
    Vector norms;
    explicit CosineDist(const Eigen::MatrixXd& vectors) : c(vectors), norms(vectors.rows()) {
        for (Eigen::Index i = 0; i < c.rows(); ++i) {
            norms[i] = c.row(i).norm();
            if (norms[i] == 0.0)
                throw std::invalid_argument("cond_cost_cosine: zero-norm condition vector");
        }
    }
    double operator()(int i, int j) const {
        if (i == j) return 0.0;
        const double cos_ij =
            std::clamp(c.row(i).dot(c.row(j)) / (norms[i] * norms[j]), -1.0, 1.0);
        return 1.0 - cos_ij;
    }
};

}  // namespace

CostMatrix pairwise_sq_dist(const PointBatch& X0, const PointBatch& X1) {
    if (X0.cols() != X1.cols()) throw std::invalid_argument("pairwise_sq_dist: dimension mismatch");
    if (X0.rows() != X1.rows()) throw std::invalid_argument("pairwise_sq_dist: batch size mismatch");
    const Eigen::Index n = X0.rows(), d = X0.cols();
    CostMatrix cost(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) {
            double s = 0.0;
            for (Eigen::Index k = 0; k < d; ++k) {
                const double diff = X0(i, k) - X1(j, k);
                s += diff * diff;
            }
            cost(i, j) = s;
        }
    return cost;
}

CostMatrix cond_cost_discrete(const ConditionBatch& C) {
    const IntVector& labels = C.labels();
    const Eigen::Index n = labels.size();
    CostMatrix cost(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) cost(i, j) = labels[i] == labels[j] ? 0.0 : kInfCost;
    return cost;
}

CostMatrix cond_cost_cosine(const Eigen::MatrixXd& cond_vectors, double w) {
    if (w <= 0.0) throw std::invalid_argument("cond_cost_cosine: w must be > 0");
    const Eigen::Index n = cond_vectors.rows();
    const CosineDist dist(cond_vectors);
    CostMatrix cost(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        cost(i, i) = 0.0;  // f(c, c) = 0 holds exactly
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double val = w * dist(static_cast<int>(i), static_cast<int>(j));
            cost(i, j) = val;
            cost(j, i) = val;
        }
    }
    return cost;
}

CostMatrix cond_cost_cosine(const ConditionBatch& C, double w) {
    return cond_cost_cosine(C.lifted(), w);
}

CoupledBatch couple_independent(const PointBatch& X1, const ConditionBatch& C,
                                const PriorSampler& prior, uint64_t seed) {
    if (C.size() != X1.rows()) throw std::invalid_argument("couple_independent: condition size mismatch");
    CoupledBatch out;
    out.x0 = prior(X1.rows(), seed);
    if (out.x0.rows() != X1.rows() || out.x0.cols() != X1.cols())
        throw std::invalid_argument("couple_independent: prior sampler shape mismatch");
    out.x1 = X1;
    out.cond = C;
    out.method = CouplingMethod::Independent;
    return out;
}

CoupledBatch couple_ot(const PointBatch& X0, const PointBatch& X1, const ConditionBatch& C) {
    if (X0.rows() != X1.rows()) throw std::invalid_argument("couple_ot: batch size mismatch");
    if (X0.cols() != X1.cols()) throw std::invalid_argument("couple_ot: dimension mismatch");
    const Assignment a = solve_lap(static_cast<int>(X0.rows()), SqDistCost{X0, X1});
    return apply_assignment(X0, X1, C, a.col_of_row, CouplingMethod::OT);
}

CoupledBatch couple_c2ot_discrete(const PointBatch& X0, const PointBatch& X1, const ConditionBatch& C) {
    if (X0.rows() != X1.rows()) throw std::invalid_argument("couple_c2ot_discrete: batch size mismatch");
    const IntVector& labels = C.labels();
    const Eigen::Index n = X0.rows();

    // OT independently within each class; equivalent to a global LAP with the
    // kInfCost cross-class mask but ~k^2 times cheaper.
    std::vector<int> j(static_cast<size_t>(n));
    for (int cls = 0; cls < C.num_classes(); ++cls) {
        std::vector<int> idx;
        for (Eigen::Index i = 0; i < n; ++i)
            if (labels[i] == cls) idx.push_back(static_cast<int>(i));
        if (idx.empty()) continue;
        const int m = static_cast<int>(idx.size());
        PointBatch sub0(m, X0.cols()), sub1(m, X1.cols());
        for (int a = 0; a < m; ++a) {
            sub0.row(a) = X0.row(idx[static_cast<size_t>(a)]);
            sub1.row(a) = X1.row(idx[static_cast<size_t>(a)]);
        }
        const Assignment a = solve_lap(m, SqDistCost{sub0, sub1});
        for (int k = 0; k < m; ++k)
            j[static_cast<size_t>(idx[static_cast<size_t>(k)])] = idx[static_cast<size_t>(a.col_of_row[static_cast<size_t>(k)])];
    }
    return apply_assignment(X0, X1, C, j, CouplingMethod::C2OT);
}

CoupledBatch couple_c2ot_continuous(const PointBatch& X0, const PointBatch& X1,
                                    const ConditionBatch& C, double w) {
    if (X0.rows() != X1.rows()) throw std::invalid_argument("couple_c2ot_continuous: batch size mismatch");
    if (X0.cols() != X1.cols()) throw std::invalid_argument("couple_c2ot_continuous: dimension mismatch");
    if (w < 0.0) throw std::invalid_argument("couple_c2ot_continuous: w must be >= 0");
    const SqDistCost sq{X0, X1};
    const CosineDist cd(C.lifted());
    const Assignment a = solve_lap(static_cast<int>(X0.rows()), [&](int i, int j) {
        return saturating_add(sq(i, j), w * cd(i, j));
    });
    return apply_assignment(X0, X1, C, a.col_of_row, CouplingMethod::C2OT);
}

// ---------------------------------------------------------------- ratio / w

RatioEvaluator::RatioEvaluator(const PointBatch& X0, const PointBatch& X1, const ConditionBatch& C)
    : sq_dist_(pairwise_sq_dist(X0, X1)),
      cond_dist_(cond_cost_cosine(C, 1.0)),
      diag_(sq_dist_.diagonal()) {}

double RatioEvaluator::ratio(double w) {
    ++evals_;
    const Eigen::Index n = sq_dist_.rows();
    long count = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double* sq = sq_dist_.col(j).data();
        const double* cd = cond_dist_.col(j).data();
        const double* dg = diag_.data();
        for (Eigen::Index i = 0; i < n; ++i)
            count += (sq[i] + w * cd[i] <= dg[i]) ? 1 : 0;
    }
    return static_cast<double>(count) / (static_cast<double>(n) * static_cast<double>(n));
}

double compute_ratio(const PointBatch& X0, const PointBatch& X1, const ConditionBatch& C, double w) {
    if (w < 0.0) throw std::invalid_argument("compute_ratio: w must be >= 0");
    RatioEvaluator eval(X0, X1, C);
    return eval.ratio(w);
}

WeightSearchResult find_weight(RatioEvaluator& eval, double target_ratio, double w_init, double tol) {
    if (w_init <= 0.0) throw std::invalid_argument("find_weight: w_init must be > 0");
    if (tol < 0.0) tol = target_ratio / 4.0;
    constexpr int kMaxDoublings = 40;
    constexpr int kMaxBisections = 10;

    WeightSearchResult res;
    res.target = target_ratio;
    const int evals_before = eval.evals();
    const double inv_b = 1.0 / static_cast<double>(eval.batch_size());
    auto finish = [&](double w, double r) {
        res.w = w;
        res.ratio = r;
        res.converged = std::abs(r - target_ratio) <= tol;
        res.ratio_evals = eval.evals() - evals_before;
        return res;
    };

    // r(w) >= 1/B always; targets at or below that clamp to the upper cap
    if (target_ratio <= inv_b) {
        const double cap = std::ldexp(w_init, kMaxDoublings);
        return finish(cap, eval.ratio(cap));
    }

    const double r_init = eval.ratio(w_init);
    if (std::abs(r_init - target_ratio) <= tol) return finish(w_init, r_init);

    double w_lo = 0.0, w_hi = 0.0, r_hi = 0.0;
    if (r_init > target_ratio) {
        // too many candidates: grow w until the target is bracketed
        w_lo = w_init;
        double w = w_init;
        bool bracketed = false;
        for (int k = 0; k < kMaxDoublings; ++k) {
            w *= 2.0;
            const double r = eval.ratio(w);
            if (std::abs(r - target_ratio) <= tol) return finish(w, r);
            if (r <= target_ratio) {
                w_hi = w;
                r_hi = r;
                bracketed = true;
                break;
            }
            w_lo = w;
        }
        if (!bracketed) return finish(w, eval.ratio(w));
    } else {
        // too few candidates: clamp at w = 0 if even that cannot reach the target
        const double r0 = eval.ratio(0.0);
        if (r0 <= target_ratio) return finish(0.0, r0);
        w_hi = w_init;
        r_hi = r_init;
        double w = w_init;
        bool bracketed = false;
        for (int k = 0; k < kMaxDoublings; ++k) {
            w *= 0.5;
            const double r = eval.ratio(w);
            if (std::abs(r - target_ratio) <= tol) return finish(w, r);
            if (r >= target_ratio) {
                w_lo = w;
                bracketed = true;
                break;
            }
            w_hi = w;
            r_hi = r;
        }
        if (!bracketed) return finish(w, eval.ratio(w));
    }

    res.bracketed = true;
    // bisect in log space
    for (int k = 0; k < kMaxBisections; ++k) {
        const double w_mid = std::sqrt(w_lo * w_hi);
        const double r_mid = eval.ratio(w_mid);
        if (std::abs(r_mid - target_ratio) <= tol) {
            res.w_lo = w_lo;
            res.w_hi = w_hi;
            return finish(w_mid, r_mid);
        }
        if (r_mid > target_ratio)
            w_lo = w_mid;
        else {
            w_hi = w_mid;
            r_hi = r_mid;
        }
    }
    res.w_lo = w_lo;
    res.w_hi = w_hi;
    const double w_mid = std::sqrt(w_lo * w_hi);
    return finish(w_mid, eval.ratio(w_mid));
}

WeightSearchResult find_weight(const PointBatch& X0, const PointBatch& X1, const ConditionBatch& C,
                               double target_ratio, double w_init, double tol) {
    RatioEvaluator eval(X0, X1, C);
    return find_weight(eval, target_ratio, w_init, tol);
}

// ---------------------------------------------------------------- oversampler

int thread_cap(int requested) {
    const char* env = std::getenv("FLOWCOUPLE_THREADS");
    if (env == nullptr) return requested;
    const int cap = std::atoi(env);
    if (cap < 0) return requested;
    return std::min(requested, cap);
}

Oversampler::Oversampler(TargetSampler target, PriorSampler prior, CouplerConfig coupler,
                         Eigen::Index ot_batch, Eigen::Index net_batch, uint64_t seed, int workers)
    : target_(std::move(target)),
      prior_(std::move(prior)),
      coupler_(coupler),
      ot_batch_(ot_batch),
      net_batch_(net_batch),
      seed_(seed),
      workers_(thread_cap(workers)),
      w_prev_(coupler.w_init) {
    if (net_batch_ < 1 || ot_batch_ < 1 || ot_batch_ % net_batch_ != 0)
        throw std::invalid_argument("Oversampler: OT batch must be a positive multiple of net batch");
    if (workers_ > 0) {
        window_ = static_cast<uint64_t>(workers_) * 2 + 2;
        threads_.reserve(static_cast<size_t>(workers_));
        for (int i = 0; i < workers_; ++i) threads_.emplace_back([this] { worker_loop(); });
    }
}

Oversampler::~Oversampler() {
    {
        std::lock_guard<std::mutex> lk(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
}

CoupledBatch Oversampler::produce(uint64_t k, double w_prev, CouplingStats& stats,
                                  const std::function<void(double)>& on_weight) const {
    const uint64_t s = derive_seed(seed_, "ot_batch", k);
    auto [x1, cond] = target_(ot_batch_, derive_seed(s, "target"));
    const auto t0 = std::chrono::steady_clock::now();
    CoupledBatch out;
    stats = CouplingStats{};
    stats.batch_index = k;
    switch (coupler_.method) {
        case CouplingMethod::Independent:
            out = couple_independent(x1, cond, prior_, derive_seed(s, "prior"));
            break;
        case CouplingMethod::OT: {
            const PointBatch x0 = prior_(ot_batch_, derive_seed(s, "prior"));
            out = couple_ot(x0, x1, cond);
            stats.lap_solves = 1;
            break;
        }
        case CouplingMethod::C2OT: {
            const PointBatch x0 = prior_(ot_batch_, derive_seed(s, "prior"));
            if (cond.mode() == ConditionMode::Binary) {
                out = couple_c2ot_discrete(x0, x1, cond);
                stats.lap_solves = cond.num_classes();
            } else if (cond.mode() == ConditionMode::Continuous) {
                RatioEvaluator eval(x0, x1, cond);
                const WeightSearchResult ws = find_weight(eval, coupler_.target_ratio, w_prev);
                stats.weight = ws.w;
                stats.achieved_ratio = ws.ratio;
                stats.ratio_evals = ws.ratio_evals;
                if (on_weight) on_weight(ws.w);
                out = couple_c2ot_continuous(x0, x1, cond, ws.w);
                stats.lap_solves = 1;
            } else {
                throw std::invalid_argument("Oversampler: c2ot requires conditions");
            }
            break;
        }
    }
    stats.solve_seconds = elapsed_seconds(t0);
    return out;
}

void Oversampler::refill_sync() {
    CouplingStats st;
    CoupledBatch batch = produce(next_batch_, w_prev_, st);
    if (chained()) w_prev_ = st.weight;
    last_stats_ = st;
    ++solves_;
    const Eigen::Index chunks = ot_batch_ / net_batch_;
    for (Eigen::Index c = 0; c < chunks; ++c) chunks_.push_back(batch.segment(c * net_batch_, net_batch_));
    ++next_batch_;
}

void Oversampler::worker_loop() {
    while (true) {
        uint64_t k = 0;
        double wp = coupler_.w_init;
        {
            std::unique_lock<std::mutex> lk(mu_);
            cv_.wait(lk, [&] { return stop_ || next_claim_ < next_batch_ + window_; });
            if (stop_) return;
            k = next_claim_++;
            if (chained() && k > 0) {
                cv_.wait(lk, [&] { return stop_ || w_done_.count(k - 1) > 0; });
                if (stop_) return;
                wp = w_done_[k - 1];
            }
        }
        CouplingStats st;
        CoupledBatch batch;
        try {
            auto publish_w = [this, k](double w) {
                {
                    std::lock_guard<std::mutex> lk(mu_);
                    w_done_[k] = w;
                }
                cv_.notify_all();
            };
            batch = produce(k, wp, st, chained() ? std::function<void(double)>(publish_w) : nullptr);
        } catch (...) {
            std::lock_guard<std::mutex> lk(mu_);
            if (!error_) error_ = std::current_exception();
            stop_ = true;
            cv_.notify_all();
            return;
        }
        {
            std::lock_guard<std::mutex> lk(mu_);
            ready_.emplace(k, std::make_pair(std::move(batch), st));
            ++solves_;
        }
        cv_.notify_all();
    }
}

void Oversampler::refill_pipelined() {
    std::unique_lock<std::mutex> lk(mu_);
    const bool warm = next_batch_ > 0;
    if (warm) {
        ++pipe_stats_.polls;
        if (ready_.count(next_batch_) > 0) ++pipe_stats_.hits;
    }
    cv_.wait(lk, [&] { return error_ || ready_.count(next_batch_) > 0; });
    if (error_ && ready_.count(next_batch_) == 0) std::rethrow_exception(error_);
    auto node = ready_.extract(next_batch_);
    CoupledBatch batch = std::move(node.mapped().first);
    last_stats_ = node.mapped().second;
    if (next_batch_ > 0) w_done_.erase(next_batch_ - 1);
    ++next_batch_;
    lk.unlock();
    cv_.notify_all();  // window advanced
    const Eigen::Index chunks = ot_batch_ / net_batch_;
    for (Eigen::Index c = 0; c < chunks; ++c) chunks_.push_back(batch.segment(c * net_batch_, net_batch_));
}

CoupledBatch Oversampler::next() {
    if (chunks_.empty()) {
        if (workers_ == 0)
            refill_sync();
        else
            refill_pipelined();
    } else if (workers_ > 0) {
        std::lock_guard<std::mutex> lk(mu_);
        if (next_batch_ > 0) {
            ++pipe_stats_.polls;
            ++pipe_stats_.hits;
        }
    }
    CoupledBatch out = std::move(chunks_.front());
    chunks_.pop_front();
    return out;
}

uint64_t Oversampler::coupling_solves() const {
    std::lock_guard<std::mutex> lk(mu_);
    return solves_;
}

CouplingStats Oversampler::last_stats() const {
    std::lock_guard<std::mutex> lk(mu_);
    return last_stats_;
}

PipelineStats Oversampler::pipeline_stats() const {
    std::lock_guard<std::mutex> lk(mu_);
    return pipe_stats_;
}

}  // namespace flowcouple
