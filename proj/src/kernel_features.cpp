#include "mkofl/kernel_features.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "mkofl/errors.hpp"
#include "mkofl/rng.hpp"

namespace mkofl {

double dictionary_bandwidth_sq(std::size_t one_based_index) {
  return std::pow(10.0, static_cast<double>(one_based_index) - 6.0);
}

double GaussianKernel::evaluate(const Vector& x, const Vector& x_prime) const {
  if (x.size() != x_prime.size()) throw ShapeError("kernel arguments differ in dimension");
  return std::exp(-(x - x_prime).squaredNorm() / (2.0 * bandwidth_sq));
}

SpectralSample::SpectralSample(KernelId kernel, Eigen::MatrixXd frequencies)
    : kernel_(kernel), frequencies_(std::move(frequencies)) {
  if (frequencies_.rows() < 1 || frequencies_.cols() < 1) {
    throw ShapeError("spectral sample needs at least one frequency and one input dimension");
  }
}

FeatureVector SpectralSample::map(const Vector& x) const {
  const auto d = frequencies_.cols();
  if (x.size() != d) {
    throw ShapeError("feature_map: input has dimension " + std::to_string(x.size()) +
                     ", expected " + std::to_string(d));
  }
  const auto D = frequencies_.rows();
  const Vector proj = frequencies_ * x;
  const double scale = 1.0 / std::sqrt(static_cast<double>(D));
  FeatureVector z(2 * D);
  for (Eigen::Index i = 0; i < D; ++i) {
    z[i] = scale * std::sin(proj[i]);
    z[D + i] = scale * std::cos(proj[i]);
  }
  return z;
}

FeatureVector feature_map(const SpectralSample& sample, const Vector& x) { return sample.map(x); }

Eigen::MatrixXd draw_gaussian_frequencies(double bandwidth_sq, std::size_t num_features,
                                          std::size_t input_dim, std::uint64_t seed) {
  if (!(bandwidth_sq > 0.0)) throw ConfigError("bandwidth must be positive");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(bandwidth_sq));
  Eigen::MatrixXd v(num_features, input_dim);
  for (std::size_t i = 0; i < num_features; ++i) {
    for (std::size_t j = 0; j < input_dim; ++j) v(i, j) = normal(rng);
  }
  return v;
}

KernelDictionary KernelDictionary::build(std::size_t num_kernels, std::size_t num_features,
                                         std::size_t input_dim, std::uint64_t seed) {
  if (num_kernels < 1) throw ConfigError("dictionary needs P >= 1 kernels");
  if (num_features < 1) throw ConfigError("dictionary needs D >= 1 features");
  if (input_dim < 1) throw ConfigError("dictionary needs input dimension d >= 1");

  KernelDictionary dict;
  dict.num_features_ = num_features;
  dict.input_dim_ = input_dim;
  dict.seed_ = seed;
  dict.kernels_.reserve(num_kernels);
  dict.samples_.reserve(num_kernels);
  for (std::size_t p = 0; p < num_kernels; ++p) {
    GaussianKernel k{p + 1, dictionary_bandwidth_sq(p + 1)};
    const std::uint64_t sub = derive_seed(seed, Stream::kDictionary, p);
    dict.samples_.emplace_back(p, draw_gaussian_frequencies(k.bandwidth_sq, num_features, input_dim, sub));
    dict.kernels_.push_back(k);
  }
  return dict;
}

FeatureVector KernelDictionary::features(KernelId p, const Vector& x) const {
  return samples_.at(p).map(x);
}

std::vector<FeatureVector> KernelDictionary::all_features(const Vector& x) const {
  std::vector<FeatureVector> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.map(x));
  return out;
}

std::optional<KernelId> KernelDictionary::find_bandwidth(double bandwidth_sq, double rel_tol) const {
  for (std::size_t p = 0; p < kernels_.size(); ++p) {
    if (std::abs(kernels_[p].bandwidth_sq - bandwidth_sq) <= rel_tol * bandwidth_sq) return p;
  }
  return std::nullopt;
}

nlohmann::json KernelDictionary::to_json() const {
  nlohmann::json j;
  j["format"] = "mkofl.dictionary";
  j["version"] = kFormatVersion;
  j["seed"] = seed_;
  j["num_features"] = num_features_;
  j["input_dim"] = input_dim_;
  auto& kernels = j["kernels"] = nlohmann::json::array();
  for (std::size_t p = 0; p < kernels_.size(); ++p) {
    const auto& v = samples_[p].frequencies();
    std::vector<double> flat(v.rows() * v.cols());
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index c = 0; c < v.cols(); ++c) flat[r * v.cols() + c] = v(r, c);
    kernels.push_back({{"index", kernels_[p].index},
                       {"bandwidth_sq", kernels_[p].bandwidth_sq},
                       {"frequencies", flat}});
  }
  return j;
}

KernelDictionary KernelDictionary::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mkofl.dictionary") throw IngestionError("not a dictionary artifact");
  if (j.at("version").get<int>() != kFormatVersion) {
    throw IngestionError("unsupported dictionary version " + j.at("version").dump());
  }
  KernelDictionary dict;
  dict.seed_ = j.at("seed").get<std::uint64_t>();
  dict.num_features_ = j.at("num_features").get<std::size_t>();
  dict.input_dim_ = j.at("input_dim").get<std::size_t>();
  for (const auto& k : j.at("kernels")) {
    const auto flat = k.at("frequencies").get<std::vector<double>>();
    if (flat.size() != dict.num_features_ * dict.input_dim_) {
      throw IngestionError("dictionary frequency block has the wrong size");
    }
    Eigen::MatrixXd v(dict.num_features_, dict.input_dim_);
    for (std::size_t r = 0; r < dict.num_features_; ++r)
      for (std::size_t c = 0; c < dict.input_dim_; ++c) v(r, c) = flat[r * dict.input_dim_ + c];
    const KernelId p = dict.kernels_.size();
    dict.kernels_.push_back({k.at("index").get<std::size_t>(), k.at("bandwidth_sq").get<double>()});
    dict.samples_.emplace_back(p, std::move(v));
  }
  if (dict.kernels_.empty()) throw IngestionError("dictionary artifact has no kernels");
  return dict;
}

void KernelDictionary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path);
  out << to_json().dump() << '\n';
}

KernelDictionary KernelDictionary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot read " + path);
  return from_json(nlohmann::json::parse(in));
}

}  // namespace mkofl
