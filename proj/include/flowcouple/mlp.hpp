#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "flowcouple/types.hpp"

namespace flowcouple {

// Weights of the velocity net v(t, x[, c]): per-input linear projections into
// the hidden width (features summed), three residual blocks
// (linear -> GELU -> linear, expansion ratio 4), and an output projection.
struct VelocityNetParams {
    struct Block {
        Eigen::MatrixXd w1;  // 4H x H
        Vector b1;           // 4H
        Eigen::MatrixXd w2;  // H x 4H
        Vector b2;           // H
    };

    int dim = 2;
    int hidden = 128;
    bool conditional = false;
    uint64_t seed = 0;

    Eigen::MatrixXd in_x_w;  // H x D
    Vector in_x_b;           // H
    Vector in_t_w;           // H (scalar input)
    Vector in_t_b;           // H
    Vector in_c_w;           // H, conditional only
    Vector in_c_b;           // H, conditional only
    std::array<Block, 3> blocks;
    Eigen::MatrixXd out_w;  // D x H
    Vector out_b;           // D

    Eigen::Index parameter_count() const;
    static Eigen::Index parameter_count(int dim, int hidden, bool conditional);
};

// Flat view over every parameter tensor in canonical (checkpoint) order.
struct TensorView {
    double* data;
    Eigen::Index size;
};
struct ConstTensorView {
    const double* data;
    Eigen::Index size;
};
std::vector<TensorView> tensor_views(VelocityNetParams& p);
std::vector<ConstTensorView> tensor_views(const VelocityNetParams& p);

// Kaiming-style uniform fan-in init, fully determined by the seed.
VelocityNetParams init_params(uint64_t seed, int dim, int hidden, bool conditional);

// Same shapes, all tensors zero.
VelocityNetParams zeros_like(const VelocityNetParams& p);

// exact Gaussian-CDF GELU (erf form, no tanh approximation)
double gelu(double z);
double gelu_deriv(double z);

// v(t, x, c); c required iff the net is conditional. Pure and deterministic.
PointBatch mlp_forward(const VelocityNetParams& p, const PointBatch& x, const Vector& t,
                       const Vector* c = nullptr);

// Flow-matching loss over a coupled batch at the given per-sample times:
// mean_i |v(t_i, x_t_i, c_i) - (x1_i - x0_i)|^2, with the exact reverse-mode
// gradient written into grad (shape-congruent with p).
double mlp_loss_and_grad(const VelocityNetParams& p, const CoupledBatch& batch, const Vector& t,
                         VelocityNetParams& grad);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    VelocityNetParams m;  // first-moment accumulators, shape-congruent with the params
    VelocityNetParams v;  // second-moment accumulators
    long step = 0;
    AdamConfig cfg;

    static AdamState init(const VelocityNetParams& p, AdamConfig cfg = {});
};

// Bias-corrected Adam update. Returns false (touching nothing) if any gradient
// entry is non-finite.
bool adam_step(AdamState& state, VelocityNetParams& params, const VelocityNetParams& grads,
               double lr);

// Checkpoint file: "FCVNET1\0" magic, u32 dim, u32 hidden, u8 conditional,
// 7 pad bytes, u64 seed, u64 count, then count little-endian f64 values in
// canonical tensor order (see README).
void save_checkpoint(const std::string& path, const VelocityNetParams& p);
VelocityNetParams load_checkpoint(const std::string& path);

}  // namespace flowcouple
