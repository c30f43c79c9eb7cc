#include "flowcouple/data.hpp"

#include <cmath>
#include <string>

#include "flowcouple/rng.hpp"

namespace flowcouple {

const char* to_string(ConditionMode m) {
    switch (m) {
        case ConditionMode::None: return "none";
        case ConditionMode::Binary: return "binary";
        case ConditionMode::Continuous: return "continuous";
    }
    return "?";
}

const char* to_string(CouplingMethod m) {
    switch (m) {
        case CouplingMethod::Independent: return "fm";
        case CouplingMethod::OT: return "ot";
        case CouplingMethod::C2OT: return "c2ot";
    }
    return "?";
}

ConditionMode condition_mode_from_string(const std::string& s) {
    if (s == "none") return ConditionMode::None;
    if (s == "binary") return ConditionMode::Binary;
    if (s == "continuous") return ConditionMode::Continuous;
    throw std::invalid_argument("unknown condition mode: " + s);
}

CouplingMethod coupling_method_from_string(const std::string& s) {
    if (s == "fm" || s == "independent") return CouplingMethod::Independent;
    if (s == "ot") return CouplingMethod::OT;
    if (s == "c2ot") return CouplingMethod::C2OT;
    throw std::invalid_argument("unknown coupling method: " + s);
}

PointBatch sample_eight_gaussians(Eigen::Index n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_eight_gaussians: n must be >= 1");
    Rng rng(seed);
    PointBatch out(n, 2);
    const double r = dataset::kEightGaussRadius;
    const double s = dataset::kEightGaussStd;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int k = rng.uniform_int(8);
        const double ang = k * (M_PI / 4.0);
        out(i, 0) = r * std::cos(ang) + s * rng.normal();
        out(i, 1) = r * std::sin(ang) + s * rng.normal();
    }
    return out;
}

MoonsSample sample_moons(Eigen::Index n, uint64_t seed, double noise_std, bool rescale) {
    if (n < 2 || n % 2 != 0) throw std::invalid_argument("sample_moons: n must be even and >= 2");
    Rng rng(seed);
    MoonsSample out;
    out.points.resize(n, 2);
    out.labels.resize(n);
    const Eigen::Index half = n / 2;
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool second = i >= half;
        const double theta = rng.uniform(0.0, M_PI);
        double x, y;
        if (!second) {
            x = std::cos(theta);
            y = std::sin(theta);
        } else {
            x = 1.0 - std::cos(theta);
            y = 0.5 - std::sin(theta);
        }
        // labels describe the generating half-circle, attached before noise
        out.labels[i] = second ? 1 : 0;
        x += noise_std * rng.normal();
        y += noise_std * rng.normal();
        if (rescale) {
            x = dataset::kMoonsScale * x - dataset::kMoonsShift;
            y = dataset::kMoonsScale * y - dataset::kMoonsShift;
        }
        out.points(i, 0) = x;
        out.points(i, 1) = y;
    }
    return out;
}

Bimodal1dSample sample_bimodal_1d(Eigen::Index n, uint64_t seed, BimodalSide side) {
    if (n < 1) throw std::invalid_argument("sample_bimodal_1d: n must be >= 1");
    Rng rng(seed);
    Bimodal1dSample out;
    out.points.resize(n, 1);
    if (side == BimodalSide::Prior) {
        for (Eigen::Index i = 0; i < n; ++i) out.points(i, 0) = rng.normal();
        return out;
    }
    out.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int label = rng.uniform() < 0.5 ? 0 : 1;
        const double mean = label == 0 ? -dataset::kBimodalMean : dataset::kBimodalMean;
        out.labels[i] = label;
        out.points(i, 0) = mean + dataset::kBimodalStd * rng.normal();
    }
    return out;
}

ConditionBatch make_conditions(ConditionMode mode, const PointBatch& points, const IntVector* labels) {
    switch (mode) {
        case ConditionMode::None:
            return ConditionBatch::none(points.rows());
        case ConditionMode::Binary:
            if (labels == nullptr) throw std::invalid_argument("make_conditions: binary mode needs labels");
            if (labels->size() != points.rows())
                throw std::invalid_argument("make_conditions: label count mismatch");
            return ConditionBatch::discrete(*labels, 2);
        case ConditionMode::Continuous:
            return ConditionBatch::continuous(points.col(0));
    }
    throw std::logic_error("make_conditions: bad mode");
}

}  // namespace flowcouple
