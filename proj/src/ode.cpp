#include "flowcouple/ode.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace flowcouple {

namespace {

void check_finite(const PointBatch& v, double t, const char* who) {
    if (!v.allFinite())
        throw std::runtime_error(std::string(who) + ": non-finite field output at t=" + std::to_string(t));
}

}  // namespace

SolveResult euler_integrate(const VelocityField& field, const PointBatch& x0, int n_steps,
                            bool record) {
    if (n_steps < 1) throw std::invalid_argument("euler_integrate: n_steps must be >= 1");
    SolveResult res;
    res.terminal = x0;
    const double h = 1.0 / n_steps;
    if (record) res.trajectory.emplace_back(0.0, x0);
    for (int i = 0; i < n_steps; ++i) {
        const double t = static_cast<double>(i) * h;
        const PointBatch v = field(t, res.terminal);
        ++res.nfe;
        check_finite(v, t, "euler_integrate");
        res.terminal += h * v;
        if (record) res.trajectory.emplace_back(t + h, res.terminal);
    }
    res.accepted = n_steps;
    return res;
}

namespace {

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// Difference between the 5th- and embedded 4th-order weights
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

constexpr double kMinStep = 1e-12;

}  // namespace

SolveResult dopri5_integrate(const VelocityField& field, const PointBatch& x0,
                             const Dopri5Options& opt) {
    if (opt.rtol <= 0.0 || opt.atol <= 0.0)
        throw std::invalid_argument("dopri5_integrate: rtol and atol must be > 0");

    SolveResult res;
    PointBatch x = x0;
    double t = 0.0;
    double h = std::min(opt.h0, 1.0);
    if (opt.record) res.trajectory.emplace_back(0.0, x);

    PointBatch k1 = field(t, x);
    ++res.nfe;
    check_finite(k1, t, "dopri5_integrate");

    const double n_comp = static_cast<double>(x.size());

    while (1.0 - t > kMinStep) {
        const double hs = std::min(h, 1.0 - t);
        if (hs < kMinStep)
            throw std::runtime_error(
                "dopri5_integrate: step size underflow at t=" + std::to_string(t) + " after " +
                std::to_string(res.accepted) + " accepted / " + std::to_string(res.rejected) +
                " rejected steps");

        auto eval = [&](double ts, const PointBatch& xs) {
            const PointBatch v = field(ts, xs);
            ++res.nfe;
            check_finite(v, ts, "dopri5_integrate");
            return v;
        };

        const PointBatch k2 = eval(t + c2 * hs, x + hs * (a21 * k1));
        const PointBatch k3 = eval(t + c3 * hs, x + hs * (a31 * k1 + a32 * k2));
        const PointBatch k4 = eval(t + c4 * hs, x + hs * (a41 * k1 + a42 * k2 + a43 * k3));
        const PointBatch k5 =
            eval(t + c5 * hs, x + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const PointBatch k6 =
            eval(t + hs, x + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const PointBatch x_new = x + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const PointBatch k7 = eval(t + hs, x_new);  // FSAL stage

        const PointBatch err_vec =
            hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        const Eigen::ArrayXXd scale =
            opt.atol + opt.rtol * x.array().abs().max(x_new.array().abs());
        const double err = std::sqrt((err_vec.array() / scale).square().sum() / n_comp);

        if (err <= 1.0) {
            t += hs;
            x = x_new;
            k1 = k7;
            ++res.accepted;
            if (opt.record) res.trajectory.emplace_back(t, x);
        } else {
            ++res.rejected;
        }
        double factor = 0.2;
        if (std::isfinite(err)) factor = err > 0.0 ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 10.0) : 10.0;
        h = hs * factor;
    }

    res.terminal = std::move(x);
    return res;
}

}  // namespace flowcouple
