#pragma once

#include "flowcouple/types.hpp"

namespace flowcouple {

struct W2Report {
    double w2_sq = 0.0;  // squared 2-Wasserstein distance
    Eigen::Index n = 0;
    double solve_seconds = 0.0;
};

// Exact empirical squared 2-Wasserstein between equal-size clouds with uniform
// weights: (1/n) * min over permutations of sum |a_i - b_P(i)|^2, solved by the
// shared exact LAP on squared distances (no entropic approximation).
W2Report w2_squared(const PointBatch& a, const PointBatch& b);

}  // namespace flowcouple
