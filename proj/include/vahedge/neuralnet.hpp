#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "vahedge/env.hpp"
#include "vahedge/rng.hpp"

namespace vahedge {

/// Lower bound added to the softplus-transformed standard deviation.
inline constexpr double kStdFloor = 1e-4;

struct NetworkShape {
  int inputDim = static_cast<int>(kObservationSize);
  std::vector<int> hidden{32, 64, 128, 64, 32};
  int sharedLayers = 3;

  void validate() const;
  bool operator==(const NetworkShape&) const = default;
};

/// y = W x + b, W stored out x in.
struct AffineLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

/// Policy/value network sharing the first `sharedLayers` affine maps. The
/// policy branch ends in (mean, raw std), the value branch in a scalar.
/// Hidden layers use ReLU; output layers are affine.
///
/// The same type holds gradients, which is why it supports the vector-space
/// operations below.
struct NetworkParams {
  std::vector<AffineLayer> shared;
  std::vector<AffineLayer> policy;
  std::vector<AffineLayer> value;

  static NetworkParams zeros(const NetworkShape& shape);
  /// He-style uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
  /// Output layers are scaled down by `outputGain`.
  static NetworkParams initialize(const NetworkShape& shape, std::uint64_t seed, double outputGain = 0.01,
                                  double initialStd = 0.1);

  NetworkShape shape() const;
  std::size_t size() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  NetworkParams& operator+=(const NetworkParams& other);
  NetworkParams& operator*=(double factor);
  double dot(const NetworkParams& other) const;
  double norm() const { return std::sqrt(dot(*this)); }
  bool all_finite() const;
};

struct PolicyOutput {
  double mean = 0.0;
  double stdDev = 1.0;
};

struct NetworkOutput {
  PolicyOutput policy;
  double value = 0.0;
};

/// Single-observation forward pass.
NetworkOutput forward(const NetworkParams& params, const Observation& obs);

/// Batched forward pass (one observation per column) that keeps every
/// activation for the reverse sweep.
class ForwardPass {
 public:
  ForwardPass(const NetworkParams& params, const Eigen::MatrixXd& inputs);

  Eigen::Index batch_size() const { return inputs_.cols(); }
  NetworkOutput output(Eigen::Index column) const;

  /// Gradient of a scalar objective with respect to every weight, given the
  /// objective's partial derivatives with respect to each column's policy
  /// mean, standard deviation and value estimate.
  NetworkParams backward(const Eigen::VectorXd& dMean, const Eigen::VectorXd& dStd,
                         const Eigen::VectorXd& dValue) const;

 private:
  const NetworkParams& params_;
  Eigen::MatrixXd inputs_;
  // Pre-activations of every layer, in order.
  std::vector<Eigen::MatrixXd> sharedPre_, policyPre_, valuePre_;
};

Eigen::MatrixXd stack_observations(std::span<const Observation> observations);

double sample_action(const PolicyOutput& out, Engine& rng);

/// ln of the Gaussian density at `action` with its partials in mean and std.
struct LogDensity {
  double value = 0.0;
  double dMean = 0.0;
  double dStd = 0.0;
};

LogDensity log_density(const PolicyOutput& out, double action);

class WeightFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary layout: magic "VAHGNET1", u32 version, u32 activation tag,
/// u32 input dim, u32 shared-layer count, u32 hidden count, u32 hidden dims...,
/// then every affine map (shared, policy, value) as row-major weights followed
/// by biases, all little-endian float64.
void save_params(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_params(const std::filesystem::path& path);
/// Loads and checks the stored shape against `expected`.
NetworkParams load_params(const std::filesystem::path& path, const NetworkShape& expected);

}  // namespace vahedge
