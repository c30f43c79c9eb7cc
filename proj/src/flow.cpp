#include "flowcouple/flow.hpp"

#include "flowcouple/rng.hpp"

namespace flowcouple {

namespace {
void check_shapes(const PointBatch& x0, const PointBatch& x1) {
    if (x0.rows() != x1.rows() || x0.cols() != x1.cols())
        throw std::invalid_argument("flow: x0/x1 shape mismatch");
}
}  // namespace

PointBatch interpolate(const PointBatch& x0, const PointBatch& x1, const Vector& t) {
    check_shapes(x0, x1);
    if (t.size() != x0.rows()) throw std::invalid_argument("interpolate: t size mismatch");
    if ((t.array() < 0.0).any() || (t.array() > 1.0).any())
        throw std::invalid_argument("interpolate: t outside [0,1]");
    return t.asDiagonal() * x1 + (1.0 - t.array()).matrix().asDiagonal() * x0;
}

PointBatch interpolate(const PointBatch& x0, const PointBatch& x1, double t) {
    check_shapes(x0, x1);
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("interpolate: t outside [0,1]");
    return t * x1 + (1.0 - t) * x0;
}

PointBatch target_velocity(const PointBatch& x0, const PointBatch& x1) {
    check_shapes(x0, x1);
    return x1 - x0;
}

FlowBatch make_training_batch(const CoupledBatch& coupled, uint64_t seed) {
    if (coupled.size() == 0) throw std::invalid_argument("make_training_batch: empty batch");
    Rng rng(seed);
    FlowBatch out;
    out.x0 = coupled.x0;
    out.x1 = coupled.x1;
    out.cond = coupled.cond;
    out.t = uniform_vector(rng, coupled.size());
    out.xt = interpolate(out.x0, out.x1, out.t);
    out.u = target_velocity(out.x0, out.x1);
    return out;
}

}  // namespace flowcouple
