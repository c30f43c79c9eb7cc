#include "flowcouple/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "flowcouple/flow.hpp"
#include "flowcouple/rng.hpp"

namespace flowcouple {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

VelocityNetParams make_shell(int dim, int hidden, bool conditional) {
    if (dim < 1 || hidden < 1) throw std::invalid_argument("VelocityNetParams: dim and hidden must be >= 1");
    VelocityNetParams p;
    p.dim = dim;
    p.hidden = hidden;
    p.conditional = conditional;
    const int h4 = 4 * hidden;
    p.in_x_w.resize(hidden, dim);
    p.in_x_b.resize(hidden);
    p.in_t_w.resize(hidden);
    p.in_t_b.resize(hidden);
    if (conditional) {
        p.in_c_w.resize(hidden);
        p.in_c_b.resize(hidden);
    }
    for (auto& blk : p.blocks) {
        blk.w1.resize(h4, hidden);
        blk.b1.resize(h4);
        blk.w2.resize(hidden, h4);
        blk.b2.resize(hidden);
    }
    p.out_w.resize(dim, hidden);
    p.out_b.resize(dim);
    return p;
}

void set_zero(VelocityNetParams& p) {
    for (auto view : tensor_views(p)) Eigen::Map<Vector>(view.data, view.size).setZero();
}

// fan-in of each tensor, in canonical order (biases share the weight's fan-in)
std::vector<Eigen::Index> fan_ins(const VelocityNetParams& p) {
    std::vector<Eigen::Index> f = {p.dim, p.dim, 1, 1};
    if (p.conditional) {
        f.push_back(1);
        f.push_back(1);
    }
    for (int k = 0; k < 3; ++k) {
        f.push_back(p.hidden);
        f.push_back(p.hidden);
        f.push_back(4 * p.hidden);
        f.push_back(4 * p.hidden);
    }
    f.push_back(p.hidden);
    f.push_back(p.hidden);
    return f;
}

}  // namespace

std::vector<TensorView> tensor_views(VelocityNetParams& p) {
    std::vector<TensorView> v;
    v.push_back({p.in_x_w.data(), p.in_x_w.size()});
    v.push_back({p.in_x_b.data(), p.in_x_b.size()});
    v.push_back({p.in_t_w.data(), p.in_t_w.size()});
    v.push_back({p.in_t_b.data(), p.in_t_b.size()});
    if (p.conditional) {
        v.push_back({p.in_c_w.data(), p.in_c_w.size()});
        v.push_back({p.in_c_b.data(), p.in_c_b.size()});
    }
    for (auto& blk : p.blocks) {
        v.push_back({blk.w1.data(), blk.w1.size()});
        v.push_back({blk.b1.data(), blk.b1.size()});
        v.push_back({blk.w2.data(), blk.w2.size()});
        v.push_back({blk.b2.data(), blk.b2.size()});
    }
    v.push_back({p.out_w.data(), p.out_w.size()});
    v.push_back({p.out_b.data(), p.out_b.size()});
    return v;
}

std::vector<ConstTensorView> tensor_views(const VelocityNetParams& p) {
    auto views = tensor_views(const_cast<VelocityNetParams&>(p));
    std::vector<ConstTensorView> v;
    v.reserve(views.size());
    for (const auto& t : views) v.push_back({t.data, t.size});
    return v;
}

Eigen::Index VelocityNetParams::parameter_count() const {
    return parameter_count(dim, hidden, conditional);
}

Eigen::Index VelocityNetParams::parameter_count(int dim, int hidden, bool conditional) {
    const Eigen::Index h = hidden, d = dim;
    Eigen::Index n = h * d + h;  // x projection
    n += h + h;                  // t projection
    if (conditional) n += h + h;
    n += 3 * (4 * h * h + 4 * h + h * 4 * h + h);  // residual blocks
    n += d * h + d;                                // output projection
    return n;
}

VelocityNetParams init_params(uint64_t seed, int dim, int hidden, bool conditional) {
    VelocityNetParams p = make_shell(dim, hidden, conditional);
    p.seed = seed;
    Rng rng(derive_seed(seed, "velocity_net_init"));
    const auto views = tensor_views(p);
    const auto fans = fan_ins(p);
    for (size_t k = 0; k < views.size(); ++k) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fans[k]));
        for (Eigen::Index i = 0; i < views[k].size; ++i)
            views[k].data[i] = rng.uniform(-bound, bound);
    }
    return p;
}

VelocityNetParams zeros_like(const VelocityNetParams& p) {
    VelocityNetParams out = make_shell(p.dim, p.hidden, p.conditional);
    out.seed = p.seed;
    set_zero(out);
    return out;
}

double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z * kInvSqrt2)); }

double gelu_deriv(double z) {
    const double phi_cdf = 0.5 * (1.0 + std::erf(z * kInvSqrt2));
    const double phi_pdf = kInvSqrt2Pi * std::exp(-0.5 * z * z);
    return phi_cdf + z * phi_pdf;
}

namespace {

// shared forward pass; caches per-block pre-activations A and gaussian CDF
// matrices when grad buffers are supplied
struct ForwardCache {
    PointBatch h0;                       // B x H input sum
    std::array<Eigen::MatrixXd, 3> a;    // B x 4H pre-activations
    std::array<Eigen::MatrixXd, 3> cdf;  // 0.5 (1 + erf(a/sqrt(2)))
    std::array<PointBatch, 3> h_in;      // block inputs, B x H
    PointBatch h_out;                    // B x H after blocks
};

PointBatch run_forward(const VelocityNetParams& p, const PointBatch& x, const Vector& t,
                       const Vector* c, ForwardCache* cache) {
    const Eigen::Index b = x.rows();
    if (x.cols() != p.dim) throw std::invalid_argument("mlp_forward: x dimension mismatch");
    if (t.size() != b) throw std::invalid_argument("mlp_forward: t size mismatch");
    if (p.conditional != (c != nullptr))
        throw std::invalid_argument("mlp_forward: condition presence must match the net");
    if (c != nullptr && c->size() != b) throw std::invalid_argument("mlp_forward: c size mismatch");

    PointBatch h = x * p.in_x_w.transpose();
    h.rowwise() += p.in_x_b.transpose();
    h.noalias() += t * p.in_t_w.transpose();
    h.rowwise() += p.in_t_b.transpose();
    if (c != nullptr) {
        h.noalias() += (*c) * p.in_c_w.transpose();
        h.rowwise() += p.in_c_b.transpose();
    }
    if (cache) cache->h0 = h;

    for (int k = 0; k < 3; ++k) {
        const auto& blk = p.blocks[static_cast<size_t>(k)];
        if (cache) cache->h_in[static_cast<size_t>(k)] = h;
        Eigen::MatrixXd a = h * blk.w1.transpose();
        a.rowwise() += blk.b1.transpose();
        Eigen::MatrixXd cdf = (0.5 * (1.0 + (a.array() * kInvSqrt2).unaryExpr(
                                                [](double z) { return std::erf(z); })))
                                  .matrix();
        Eigen::MatrixXd g = a.cwiseProduct(cdf);
        if (cache) {
            cache->a[static_cast<size_t>(k)] = std::move(a);
            cache->cdf[static_cast<size_t>(k)] = std::move(cdf);
        }
        PointBatch z = g * blk.w2.transpose();
        z.rowwise() += blk.b2.transpose();
        h += z;
    }
    if (cache) cache->h_out = h;

    PointBatch out = h * p.out_w.transpose();
    out.rowwise() += p.out_b.transpose();
    return out;
}

}  // namespace

PointBatch mlp_forward(const VelocityNetParams& p, const PointBatch& x, const Vector& t,
                       const Vector* c) {
    return run_forward(p, x, t, c, nullptr);
}

double mlp_loss_and_grad(const VelocityNetParams& p, const CoupledBatch& batch, const Vector& t,
                         VelocityNetParams& grad) {
    const Eigen::Index b = batch.size();
    if (b == 0) throw std::invalid_argument("mlp_loss_and_grad: empty batch");
    if (t.size() != b) throw std::invalid_argument("mlp_loss_and_grad: t size mismatch");

    const PointBatch xt = interpolate(batch.x0, batch.x1, t);
    const PointBatch u = target_velocity(batch.x0, batch.x1);

    Vector cond;
    const Vector* c = nullptr;
    if (p.conditional) {
        cond = batch.cond.encoded();
        c = &cond;
    }

    ForwardCache cache;
    const PointBatch out = run_forward(p, xt, t, c, &cache);

    const PointBatch r = out - u;
    const double loss = r.squaredNorm() / static_cast<double>(b);

    grad = zeros_like(p);
    const PointBatch d_out = (2.0 / static_cast<double>(b)) * r;

    grad.out_w.noalias() = d_out.transpose() * cache.h_out;
    grad.out_b = d_out.colwise().sum();
    PointBatch dh = d_out * p.out_w;  // B x H

    for (int k = 2; k >= 0; --k) {
        const auto& blk = p.blocks[static_cast<size_t>(k)];
        auto& gblk = grad.blocks[static_cast<size_t>(k)];
        const Eigen::MatrixXd& a = cache.a[static_cast<size_t>(k)];
        const Eigen::MatrixXd& cdf = cache.cdf[static_cast<size_t>(k)];
        const Eigen::MatrixXd g = a.cwiseProduct(cdf);

        // dh is dL/dZ_k and also the skip-path gradient
        gblk.w2.noalias() = dh.transpose() * g;
        gblk.b2 = dh.colwise().sum();
        Eigen::MatrixXd dg = dh * blk.w2;  // B x 4H
        // gelu'(a) = CDF(a) + a * pdf(a)
        Eigen::MatrixXd da =
            (dg.array() *
             (cdf.array() + a.array() * (kInvSqrt2Pi * (-0.5 * a.array().square()).exp())))
                .matrix();
        gblk.w1.noalias() = da.transpose() * cache.h_in[static_cast<size_t>(k)];
        gblk.b1 = da.colwise().sum();
        dh.noalias() += da * blk.w1;
    }

    grad.in_x_w.noalias() = dh.transpose() * xt;
    grad.in_x_b = dh.colwise().sum();
    grad.in_t_w.noalias() = dh.transpose() * t;
    grad.in_t_b = grad.in_x_b;
    if (p.conditional) {
        grad.in_c_w.noalias() = dh.transpose() * cond;
        grad.in_c_b = grad.in_x_b;
    }
    return loss;
}

AdamState AdamState::init(const VelocityNetParams& p, AdamConfig cfg) {
    AdamState s;
    s.m = zeros_like(p);
    s.v = zeros_like(p);
    s.step = 0;
    s.cfg = cfg;
    return s;
}

bool adam_step(AdamState& state, VelocityNetParams& params, const VelocityNetParams& grads,
               double lr) {
    auto pv = tensor_views(params);
    auto gv = tensor_views(grads);
    auto mv = tensor_views(state.m);
    auto vv = tensor_views(state.v);
    if (pv.size() != gv.size()) throw std::invalid_argument("adam_step: incongruent gradient");

    for (size_t k = 0; k < gv.size(); ++k) {
        if (gv[k].size != pv[k].size) throw std::invalid_argument("adam_step: incongruent gradient");
        if (!Eigen::Map<const Vector>(gv[k].data, gv[k].size).allFinite()) return false;
    }

    state.step += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (size_t k = 0; k < pv.size(); ++k) {
        Eigen::Map<Eigen::ArrayXd> pa(pv[k].data, pv[k].size);
        Eigen::Map<const Eigen::ArrayXd> ga(gv[k].data, gv[k].size);
        Eigen::Map<Eigen::ArrayXd> ma(mv[k].data, mv[k].size);
        Eigen::Map<Eigen::ArrayXd> va(vv[k].data, vv[k].size);
        ma = b1 * ma + (1.0 - b1) * ga;
        va = b2 * va + (1.0 - b2) * ga.square();
        pa -= lr * (ma / bc1) / ((va / bc2).sqrt() + state.cfg.eps);
    }
    return true;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'F', 'C', 'V', 'N', 'E', 'T', '1', '\0'};

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

void put_f64(std::ostream& os, double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(os, v);
}

uint32_t get_u32(std::istream& is) {
    unsigned char buf[4];
    is.read(reinterpret_cast<char*>(buf), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) {
    const uint64_t v = get_u64(is);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const VelocityNetParams& p) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os.write(kMagic, 8);
    put_u32(os, static_cast<uint32_t>(p.dim));
    put_u32(os, static_cast<uint32_t>(p.hidden));
    const char flag = p.conditional ? 1 : 0;
    os.write(&flag, 1);
    const char pad[7] = {};
    os.write(pad, 7);
    put_u64(os, p.seed);
    put_u64(os, static_cast<uint64_t>(p.parameter_count()));
    for (const auto& view : tensor_views(p))
        for (Eigen::Index i = 0; i < view.size; ++i) put_f64(os, view.data[i]);
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

VelocityNetParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    const uint32_t dim = get_u32(is);
    const uint32_t hidden = get_u32(is);
    char flag = 0;
    is.read(&flag, 1);
    char pad[7];
    is.read(pad, 7);
    const uint64_t seed = get_u64(is);
    const uint64_t count = get_u64(is);
    VelocityNetParams p = make_shell(static_cast<int>(dim), static_cast<int>(hidden), flag != 0);
    p.seed = seed;
    if (count != static_cast<uint64_t>(p.parameter_count()))
        throw std::runtime_error("load_checkpoint: parameter count mismatch in " + path);
    for (auto& view : tensor_views(p))
        for (Eigen::Index i = 0; i < view.size; ++i) view.data[i] = get_f64(is);
    if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path);
    return p;
}

}  // namespace flowcouple
