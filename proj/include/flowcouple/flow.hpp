#pragma once

#include <cstdint>

#include "flowcouple/types.hpp"

namespace flowcouple {

// x_t = t*x1 + (1-t)*x0, per-sample t
PointBatch interpolate(const PointBatch& x0, const PointBatch& x1, const Vector& t);
PointBatch interpolate(const PointBatch& x0, const PointBatch& x1, double t);

// u = x1 - x0, independent of t
PointBatch target_velocity(const PointBatch& x0, const PointBatch& x1);

struct FlowBatch {
    PointBatch x0;
    PointBatch x1;
    Vector t;        // per-sample, U[0,1]
    PointBatch xt;   // t*x1 + (1-t)*x0
    PointBatch u;    // x1 - x0
    ConditionBatch cond;
};

// Draws one independent t per sample and fills the derived fields.
FlowBatch make_training_batch(const CoupledBatch& coupled, uint64_t seed);

}  // namespace flowcouple
