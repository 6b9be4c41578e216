#include "vahedge/neuralnet.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace vahedge {
namespace {

static_assert(std::endian::native == std::endian::little, "weight files assume a little-endian host");

constexpr int kPolicyOutputs = 2;
constexpr int kValueOutputs = 1;
constexpr std::array<char, 8> kMagic{'V', 'A', 'H', 'G', 'N', 'E', 'T', '1'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kReluTag = 1;

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

AffineLayer make_layer(int in, int out) { return {Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)}; }

std::vector<int> layer_dims(const NetworkShape& shape) {
  std::vector<int> dims{shape.inputDim};
  dims.insert(dims.end(), shape.hidden.begin(), shape.hidden.end());
  return dims;
}

template <typename Fn>
void for_each_layer(NetworkParams& p, Fn&& fn) {
  for (auto& l : p.shared) fn(l);
  for (auto& l : p.policy) fn(l);
  for (auto& l : p.value) fn(l);
}

template <typename Fn>
void for_each_layer(const NetworkParams& p, Fn&& fn) {
  for (const auto& l : p.shared) fn(l);
  for (const auto& l : p.policy) fn(l);
  for (const auto& l : p.value) fn(l);
}

template <typename Fn>
void for_each_layer_pair(NetworkParams& a, const NetworkParams& b, Fn&& fn) {
  for (std::size_t i = 0; i < a.shared.size(); ++i) fn(a.shared[i], b.shared[i]);
  for (std::size_t i = 0; i < a.policy.size(); ++i) fn(a.policy[i], b.policy[i]);
  for (std::size_t i = 0; i < a.value.size(); ++i) fn(a.value[i], b.value[i]);
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

// Runs a chain of affine maps; every map except the last of an output
// branch is followed by ReLU. Returns the pre-activations.
std::vector<Eigen::MatrixXd> run_chain(const std::vector<AffineLayer>& layers, const Eigen::MatrixXd& input,
                                       bool lastIsOutput) {
  std::vector<Eigen::MatrixXd> pre;
  pre.reserve(layers.size());
  Eigen::MatrixXd activation = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Eigen::MatrixXd z = layers[i].weight * activation;
    z.colwise() += layers[i].bias;
    pre.push_back(std::move(z));
    const bool output = lastIsOutput && i + 1 == layers.size();
    if (!output) activation = relu(pre.back());
  }
  return pre;
}

// Reverse sweep through a chain. `grad` enters as dJ/d(output of last map)
// and leaves as dJ/d(input of first map).
void backprop_chain(const std::vector<AffineLayer>& layers, const std::vector<Eigen::MatrixXd>& pre,
                    const Eigen::MatrixXd& chainInput, bool lastIsOutput, Eigen::MatrixXd& grad,
                    std::vector<AffineLayer>& out) {
  for (std::size_t idx = layers.size(); idx-- > 0;) {
    const bool output = lastIsOutput && idx + 1 == layers.size();
    if (!output) grad = grad.cwiseProduct((pre[idx].array() > 0.0).cast<double>().matrix());
    const Eigen::MatrixXd input = idx == 0 ? chainInput : relu(pre[idx - 1]);
    out[idx].weight.noalias() += grad * input.transpose();
    out[idx].bias += grad.rowwise().sum();
    grad = layers[idx].weight.transpose() * grad;
  }
}

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw WeightFileError("weight file truncated in header");
  return v;
}

}  // namespace

void NetworkShape::validate() const {
  if (inputDim < 1 || hidden.empty()) throw std::invalid_argument("NetworkShape: need an input and hidden layers");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("NetworkShape: hidden dimensions must be positive");
  // Shared maps are hidden maps, so N_s < N_p = N_v = hidden.size() + 1.
  if (sharedLayers < 0 || sharedLayers > static_cast<int>(hidden.size()))
    throw std::invalid_argument("NetworkShape: shared layers must be fewer than the branch depth");
}

NetworkParams NetworkParams::zeros(const NetworkShape& shape) {
  shape.validate();
  const auto dims = layer_dims(shape);
  const int s = shape.sharedLayers;
  const int h = static_cast<int>(shape.hidden.size());
  NetworkParams p;
  for (int i = 0; i < s; ++i) p.shared.push_back(make_layer(dims[i], dims[i + 1]));
  for (int i = s; i < h; ++i) {
    p.policy.push_back(make_layer(dims[i], dims[i + 1]));
    p.value.push_back(make_layer(dims[i], dims[i + 1]));
  }
  p.policy.push_back(make_layer(dims[h], kPolicyOutputs));
  p.value.push_back(make_layer(dims[h], kValueOutputs));
  return p;
}

NetworkParams NetworkParams::initialize(const NetworkShape& shape, std::uint64_t seed, double outputGain,
                                        double initialStd) {
  if (!(initialStd > kStdFloor)) throw std::invalid_argument("initialize: initial std must exceed the floor");
  NetworkParams p = zeros(shape);
  Engine rng = make_engine(seed, 0, StreamPurpose::kInit);
  const auto fill = [&rng](AffineLayer& layer, double gain) {
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = u(rng);
  };
  for (auto& l : p.shared) fill(l, 1.0);
  for (std::size_t i = 0; i < p.policy.size(); ++i) fill(p.policy[i], i + 1 == p.policy.size() ? outputGain : 1.0);
  for (std::size_t i = 0; i < p.value.size(); ++i) fill(p.value[i], i + 1 == p.value.size() ? outputGain : 1.0);
  // Inverse softplus, so the untrained policy explores with roughly initialStd.
  const double target = initialStd - kStdFloor;
  p.policy.back().bias(1) = target > 30.0 ? target : std::log(std::expm1(target));
  return p;
}

NetworkShape NetworkParams::shape() const {
  NetworkShape s;
  const auto& first = shared.empty() ? policy.front() : shared.front();
  s.inputDim = static_cast<int>(first.weight.cols());
  s.hidden.clear();
  for (const auto& l : shared) s.hidden.push_back(static_cast<int>(l.weight.rows()));
  for (std::size_t i = 0; i + 1 < policy.size(); ++i) s.hidden.push_back(static_cast<int>(policy[i].weight.rows()));
  s.sharedLayers = static_cast<int>(shared.size());
  return s;
}

std::size_t NetworkParams::size() const {
  std::size_t n = 0;
  for_each_layer(*this, [&n](const AffineLayer& l) { n += static_cast<std::size_t>(l.weight.size() + l.bias.size()); });
  return n;
}

std::vector<double> NetworkParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  for_each_layer(*this, [&flat](const AffineLayer& l) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rowMajor = l.weight;
    flat.insert(flat.end(), rowMajor.data(), rowMajor.data() + rowMajor.size());
    flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
  });
  return flat;
}

void NetworkParams::assign(std::span<const double> flat) {
  if (flat.size() != size()) throw std::invalid_argument("NetworkParams::assign: size mismatch");
  std::size_t pos = 0;
  for_each_layer(*this, [&](AffineLayer& l) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = flat[pos++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = flat[pos++];
  });
}

NetworkParams& NetworkParams::operator+=(const NetworkParams& other) {
  for_each_layer_pair(*this, other, [](AffineLayer& a, const AffineLayer& b) {
    a.weight += b.weight;
    a.bias += b.bias;
  });
  return *this;
}

NetworkParams& NetworkParams::operator*=(double factor) {
  for_each_layer(*this, [factor](AffineLayer& l) {
    l.weight *= factor;
    l.bias *= factor;
  });
  return *this;
}

double NetworkParams::dot(const NetworkParams& other) const {
  double total = 0.0;
  for (std::size_t i = 0; i < shared.size(); ++i)
    total += shared[i].weight.cwiseProduct(other.shared[i].weight).sum() + shared[i].bias.dot(other.shared[i].bias);
  for (std::size_t i = 0; i < policy.size(); ++i)
    total += policy[i].weight.cwiseProduct(other.policy[i].weight).sum() + policy[i].bias.dot(other.policy[i].bias);
  for (std::size_t i = 0; i < value.size(); ++i)
    total += value[i].weight.cwiseProduct(other.value[i].weight).sum() + value[i].bias.dot(other.value[i].bias);
  return total;
}

bool NetworkParams::all_finite() const {
  bool finite = true;
  for_each_layer(*this, [&finite](const AffineLayer& l) { finite = finite && l.weight.allFinite() && l.bias.allFinite(); });
  return finite;
}

Eigen::MatrixXd stack_observations(std::span<const Observation> observations) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(kObservationSize), static_cast<Eigen::Index>(observations.size()));
  for (std::size_t j = 0; j < observations.size(); ++j)
    for (std::size_t i = 0; i < kObservationSize; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = observations[j][i];
  return m;
}

ForwardPass::ForwardPass(const NetworkParams& params, const Eigen::MatrixXd& inputs)
    : params_(params), inputs_(inputs) {
  if (!inputs_.allFinite()) throw std::invalid_argument("forward: observation contains non-finite values");
  sharedPre_ = run_chain(params_.shared, inputs_, false);
  const Eigen::MatrixXd trunk = sharedPre_.empty() ? inputs_ : relu(sharedPre_.back());
  policyPre_ = run_chain(params_.policy, trunk, true);
  valuePre_ = run_chain(params_.value, trunk, true);
}

NetworkOutput ForwardPass::output(Eigen::Index column) const {
  const auto& p = policyPre_.back();
  return {{p(0, column), softplus(p(1, column)) + kStdFloor}, valuePre_.back()(0, column)};
}

NetworkParams ForwardPass::backward(const Eigen::VectorXd& dMean, const Eigen::VectorXd& dStd,
                                    const Eigen::VectorXd& dValue) const {
  const Eigen::Index B = batch_size();
  NetworkParams grad = NetworkParams::zeros(params_.shape());

  Eigen::MatrixXd gPolicy(kPolicyOutputs, B);
  const auto& raw = policyPre_.back();
  for (Eigen::Index j = 0; j < B; ++j) {
    gPolicy(0, j) = dMean(j);
    gPolicy(1, j) = dStd(j) * sigmoid(raw(1, j));
  }
  Eigen::MatrixXd gValue = dValue.transpose();

  const Eigen::MatrixXd trunk = sharedPre_.empty() ? inputs_ : relu(sharedPre_.back());
  backprop_chain(params_.policy, policyPre_, trunk, true, gPolicy, grad.policy);
  backprop_chain(params_.value, valuePre_, trunk, true, gValue, grad.value);

  // Both heads feed the trunk, so their input gradients add up.
  Eigen::MatrixXd gTrunk = gPolicy + gValue;
  if (!params_.shared.empty()) backprop_chain(params_.shared, sharedPre_, inputs_, false, gTrunk, grad.shared);
  return grad;
}

NetworkOutput forward(const NetworkParams& params, const Observation& obs) {
  Eigen::MatrixXd input(static_cast<Eigen::Index>(kObservationSize), 1);
  for (std::size_t i = 0; i < kObservationSize; ++i) input(static_cast<Eigen::Index>(i), 0) = obs[i];
  return ForwardPass(params, input).output(0);
}

double sample_action(const PolicyOutput& out, Engine& rng) {
  std::normal_distribution<double> normal;
  return out.mean + out.stdDev * normal(rng);
}

LogDensity log_density(const PolicyOutput& out, double action) {
  const double d = out.stdDev;
  const double diff = action - out.mean;
  const double z2 = diff * diff / (d * d);
  return {-std::log(d) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * z2, diff / (d * d), (z2 - 1.0) / d};
}

void save_params(const NetworkParams& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw WeightFileError("cannot open weight file for writing: " + path.string());
  const NetworkShape shape = params.shape();
  os.write(kMagic.data(), kMagic.size());
  write_u32(os, kFormatVersion);
  write_u32(os, kReluTag);
  write_u32(os, static_cast<std::uint32_t>(shape.inputDim));
  write_u32(os, static_cast<std::uint32_t>(shape.sharedLayers));
  write_u32(os, static_cast<std::uint32_t>(shape.hidden.size()));
  for (int h : shape.hidden) write_u32(os, static_cast<std::uint32_t>(h));
  const auto flat = params.flatten();
  os.write(reinterpret_cast<const char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!os) throw WeightFileError("failed writing weight file: " + path.string());
}

NetworkParams load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw WeightFileError("cannot open weight file: " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw WeightFileError("not a network weight file");
  if (read_u32(is) != kFormatVersion) throw WeightFileError("unsupported weight file version");
  if (read_u32(is) != kReluTag) throw WeightFileError("unsupported activation tag");

  NetworkShape shape;
  shape.inputDim = static_cast<int>(read_u32(is));
  shape.sharedLayers = static_cast<int>(read_u32(is));
  const std::uint32_t hiddenCount = read_u32(is);
  if (hiddenCount == 0 || hiddenCount > 64) throw WeightFileError("corrupt hidden-layer count");
  shape.hidden.resize(hiddenCount);
  for (auto& h : shape.hidden) h = static_cast<int>(read_u32(is));
  try {
    shape.validate();
  } catch (const std::invalid_argument& e) {
    throw WeightFileError(std::string("corrupt network shape: ") + e.what());
  }

  NetworkParams params = NetworkParams::zeros(shape);
  std::vector<double> flat(params.size());
  if (!is.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(double))))
    throw WeightFileError("weight file truncated in body");
  if (is.peek() != std::char_traits<char>::eof()) throw WeightFileError("trailing bytes after weights");
  params.assign(flat);
  return params;
}

NetworkParams load_params(const std::filesystem::path& path, const NetworkShape& expected) {
  NetworkParams params = load_params(path);
  if (!(params.shape() == expected)) throw WeightFileError("weight file dimensions do not match the configured network");
  return params;
}

}  // namespace vahedge
