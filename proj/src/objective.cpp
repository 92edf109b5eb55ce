#include "mkofl/objective.hpp"

#include <limits>

#include "mkofl/errors.hpp"

namespace mkofl {

namespace {
void check_dims(const ModelParams& w, const FeatureVector& z) {
  if (w.size() != z.size()) {
    throw ShapeError("model has " + std::to_string(w.size()) + " coordinates, features have " +
                     std::to_string(z.size()));
  }
}
}  // namespace

double loss(const ModelParams& w, const FeatureVector& z, double y, double lambda) {
  check_dims(w, z);
  const double r = w.dot(z) - y;
  return r * r + lambda * w.squaredNorm();
}

ModelParams gradient(const ModelParams& w, const FeatureVector& z, double y, double lambda) {
  check_dims(w, z);
  const double r = w.dot(z) - y;
  return 2.0 * r * z + 2.0 * lambda * w;
}

void ogd_step_inplace(ModelParams& w, const FeatureVector& z, double y, double step,
                      const LossConfig& cfg) {
  check_dims(w, z);
  const double r = w.dot(z) - y;
  // w - step * (2 r z + 2 lambda w)
  w *= (1.0 - 2.0 * step * cfg.lambda);
  w.noalias() -= (2.0 * step * r) * z;
  if (cfg.projects()) w = project_ball(w, cfg.radius);
}

ModelParams ogd_step(const ModelParams& w, const FeatureVector& z, double y, double step,
                     const LossConfig& cfg) {
  ModelParams out = w;
  ogd_step_inplace(out, z, y, step, cfg);
  return out;
}

ModelParams project_ball(const ModelParams& w, double radius) {
  if (!(radius > 0.0)) throw ConfigError("projection radius must be positive");
  const double n = w.norm();
  // A rescaled vector can land a few ulps above the radius; treat that as
  // inside so projecting twice is a no-op.
  if (n <= radius * (1.0 + 8.0 * std::numeric_limits<double>::epsilon())) return w;
  return w * (radius / n);
}

}  // namespace mkofl
