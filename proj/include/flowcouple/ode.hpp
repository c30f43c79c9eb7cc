#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "flowcouple/types.hpp"

namespace flowcouple {

// Batched velocity field; conditions, if any, are bound inside the closure.
using VelocityField = std::function<PointBatch(double t, const PointBatch& x)>;

struct SolveResult {
    PointBatch terminal;   // x at t = 1
    long nfe = 0;          // field evaluations, rejected stages included
    long accepted = 0;     // adaptive only
    long rejected = 0;     // adaptive only
    std::vector<std::pair<double, PointBatch>> trajectory;  // filled when recording
};

// n uniform explicit-Euler steps from t=0 to t=1. NFE == n_steps.
SolveResult euler_integrate(const VelocityField& field, const PointBatch& x0, int n_steps,
                            bool record = false);

struct Dopri5Options {
    double rtol = 1e-5;
    double atol = 1e-5;
    double h0 = 0.01;      // initial step size
    bool record = false;   // store accepted states
};

// Dormand-Prince 5(4) embedded pair with FSAL over t in [0, 1]. One step size
// is shared across the whole batch: the error norm is the RMS over all B x D
// components of err / (atol + rtol * max(|x|, |x_new|)), accepted iff <= 1.
// Step factor = 0.9 * err^(-1/5) clamped to [0.2, 10]. NFE counts every field
// call, so NFE == 6 * (accepted + rejected) + 1.
SolveResult dopri5_integrate(const VelocityField& field, const PointBatch& x0,
                             const Dopri5Options& opt = {});

}  // namespace flowcouple
