#pragma once

#include <cstdint>

#include "flowcouple/types.hpp"

namespace flowcouple {

// Pinned dataset constants, kept in one block so they are easy to correct
// against the reference generators.
namespace dataset {
inline constexpr double kEightGaussRadius = 5.0;
inline constexpr double kEightGaussStd = 0.31622776601683794;  // sqrt(0.1)
inline constexpr double kMoonsNoiseStd = 0.2;
inline constexpr double kMoonsScale = 3.0;   // p -> 3p - (1,1)
inline constexpr double kMoonsShift = 1.0;
inline constexpr double kBimodalMean = 2.0;
inline constexpr double kBimodalStd = 0.7071067811865476;  // sqrt(0.5)
}  // namespace dataset

// Mixture of 8 isotropic Gaussians with means at angles k*45 deg on a circle
// of radius 5, component chosen uniformly.
PointBatch sample_eight_gaussians(Eigen::Index n, uint64_t seed);

struct MoonsSample {
    PointBatch points;  // n x 2
    IntVector labels;   // generating half-circle, 0 or 1
};

// Two interleaving half-circles: n/2 points per moon, theta ~ U[0, pi],
// Gaussian coordinate noise, then the affine rescale p -> 3p - (1,1).
// noise_std / rescale are exposed so tests can probe the raw parameterization.
MoonsSample sample_moons(Eigen::Index n, uint64_t seed,
                         double noise_std = dataset::kMoonsNoiseStd, bool rescale = true);

enum class BimodalSide { Prior, Target };

struct Bimodal1dSample {
    PointBatch points;  // n x 1
    IntVector labels;   // side=Target only: 0 = left mode, 1 = right mode
};

// 1-d demo pair: prior N(0,1); target 1/2 N(-2, 0.5) + 1/2 N(2, 0.5) with the
// translation direction as a binary label.
Bimodal1dSample sample_bimodal_1d(Eigen::Index n, uint64_t seed, BimodalSide side);

// mode=Binary wraps the labels (k=2, encoded -1/+1 downstream); Continuous
// takes the x-coordinate of each target point; None carries only the size.
ConditionBatch make_conditions(ConditionMode mode, const PointBatch& points,
                               const IntVector* labels = nullptr);

}  // namespace flowcouple
