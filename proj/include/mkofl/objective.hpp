#pragma once

#include <cmath>
#include <limits>

#include "mkofl/kernel_features.hpp"

namespace mkofl {

using ModelParams = Eigen::VectorXd;

struct LossConfig {
  double lambda = 0.01;                                     // ridge weight
  double radius = std::numeric_limits<double>::infinity();  // projection ball; inf disables it
  bool clip_for_hedge = true;                               // clamp Hedge losses to [0, 1]

  bool projects() const { return std::isfinite(radius); }
};

// (w'z - y)^2 + lambda ||w||^2
double loss(const ModelParams& w, const FeatureVector& z, double y, double lambda);

// 2 (w'z - y) z + 2 lambda w
ModelParams gradient(const ModelParams& w, const FeatureVector& z, double y, double lambda);

// One online gradient step, followed by projection when the radius is finite.
ModelParams ogd_step(const ModelParams& w, const FeatureVector& z, double y, double step,
                     const LossConfig& cfg);

// In-place variant used on the hot path of the simulator.
void ogd_step_inplace(ModelParams& w, const FeatureVector& z, double y, double step,
                      const LossConfig& cfg);

ModelParams project_ball(const ModelParams& w, double radius);

// Loss value fed into the exponential weights.
inline double hedge_loss(double value, bool clip) {
  if (!clip) return value;
  return value < 0.0 ? 0.0 : (value > 1.0 ? 1.0 : value);
}

}  // namespace mkofl
