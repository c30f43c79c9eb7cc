#include "flowcouple/metrics.hpp"

#include <chrono>

#include "flowcouple/lap.hpp"

namespace flowcouple {

W2Report w2_squared(const PointBatch& a, const PointBatch& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("w2_squared: cloud sizes differ");
    if (a.cols() != b.cols()) throw std::invalid_argument("w2_squared: dimensions differ");
    const int n = static_cast<int>(a.rows());
    const Eigen::Index d = a.cols();

    const auto t0 = std::chrono::steady_clock::now();
    // costs computed on the fly: a 10k x 10k matrix would not fit comfortably
    const Assignment asg = solve_lap(n, [&](int i, int j) {
        double s = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) {
            const double diff = a(i, k) - b(j, k);
            s += diff * diff;
        }
        return s;
    });

    W2Report rep;
    rep.n = n;
    rep.w2_sq = asg.total_cost / static_cast<double>(n);
    rep.solve_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

}  // namespace flowcouple
