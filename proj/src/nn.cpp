#include "nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "errors.hpp"
#include "rng.hpp"

namespace dnnh {

std::size_t MlpNetwork::num_parameters() const {
  std::size_t n = 0;
  for (int l = 0; l < num_layers(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

std::vector<int> MlpNetwork::UniformWidths(int input_dim, int depth, int width) {
  Require(input_dim > 0 && depth >= 0 && width > 0, ErrorKind::kConfig,
          "network widths must be positive");
  std::vector<int> w{input_dim};
  for (int i = 0; i < depth; ++i) w.push_back(width);
  w.push_back(1);
  return w;
}

MlpNetwork MlpNetwork::Zeros(std::vector<int> widths) {
  Require(widths.size() >= 2, ErrorKind::kShape, "network needs at least input and output widths");
  for (int w : widths) Require(w > 0, ErrorKind::kShape, "layer widths must be positive");
  MlpNetwork net;
  net.widths = std::move(widths);
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    net.weights.push_back(Matrix::Zero(net.widths[l + 1], net.widths[l]));
    net.biases.push_back(Vector::Zero(net.widths[l + 1]));
  }
  return net;
}

MlpNetwork MlpNetwork::RandomInit(std::vector<int> widths, std::uint64_t seed) {
  MlpNetwork net = Zeros(std::move(widths));
  Rng rng(seed);
  for (int l = 0; l < net.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.widths[l]));
    Matrix& w = net.weights[l];
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.Uniform(-bound, bound);
    for (Eigen::Index r = 0; r < net.biases[l].size(); ++r)
      net.biases[l](r) = rng.Uniform(-bound, bound);
  }
  return net;
}

void MlpNetwork::Validate() const {
  Require(widths.size() >= 2, ErrorKind::kShape, "network needs at least two widths");
  Require(widths.back() == 1, ErrorKind::kShape, "network output width must be 1");
  Require(weights.size() + 1 == widths.size() && biases.size() == weights.size(),
          ErrorKind::kShape, "layer count does not match widths");
  for (int l = 0; l < num_layers(); ++l) {
    Require(weights[l].rows() == widths[l + 1] && weights[l].cols() == widths[l],
            ErrorKind::kShape, "weight shape mismatch at layer " + std::to_string(l));
    Require(biases[l].size() == widths[l + 1], ErrorKind::kShape,
            "bias shape mismatch at layer " + std::to_string(l));
    Require(weights[l].allFinite() && biases[l].allFinite(), ErrorKind::kDomain,
            "non-finite parameter at layer " + std::to_string(l));
  }
  if (output_bound) Require(*output_bound > 1.0, ErrorKind::kConfig, "output bound must exceed 1");
}

void MlpNetwork::ClampParameters(double bound) {
  for (int l = 0; l < num_layers(); ++l) {
    weights[l] = weights[l].cwiseMax(-bound).cwiseMin(bound);
    biases[l] = biases[l].cwiseMax(-bound).cwiseMin(bound);
  }
}

std::vector<double> MlpNetwork::Flatten() const {
  std::vector<double> out;
  out.reserve(num_parameters());
  for (int l = 0; l < num_layers(); ++l) {
    out.insert(out.end(), weights[l].data(), weights[l].data() + weights[l].size());
    out.insert(out.end(), biases[l].data(), biases[l].data() + biases[l].size());
  }
  return out;
}

void MlpNetwork::Unflatten(const std::vector<double>& flat) {
  Require(flat.size() == num_parameters(), ErrorKind::kShape, "flat parameter size mismatch");
  std::size_t k = 0;
  for (int l = 0; l < num_layers(); ++l) {
    std::copy_n(flat.begin() + k, weights[l].size(), weights[l].data());
    k += weights[l].size();
    std::copy_n(flat.begin() + k, biases[l].size(), biases[l].data());
    k += biases[l].size();
  }
}

NetworkGrad NetworkGrad::ZerosLike(const MlpNetwork& net) {
  NetworkGrad g;
  for (int l = 0; l < net.num_layers(); ++l) {
    g.weights.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.push_back(Vector::Zero(net.biases[l].size()));
  }
  return g;
}

void NetworkGrad::SetZero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

NetworkGrad& NetworkGrad::operator+=(const NetworkGrad& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  return *this;
}

NetworkGrad& NetworkGrad::operator*=(double s) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= s;
    biases[l] *= s;
  }
  return *this;
}

double NetworkGrad::MaxAbs() const {
  double m = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].size()) m = std::max(m, weights[l].cwiseAbs().maxCoeff());
    if (biases[l].size()) m = std::max(m, biases[l].cwiseAbs().maxCoeff());
  }
  return m;
}

std::vector<double> NetworkGrad::Flatten() const {
  std::vector<double> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.insert(out.end(), weights[l].data(), weights[l].data() + weights[l].size());
    out.insert(out.end(), biases[l].data(), biases[l].data() + biases[l].size());
  }
  return out;
}

double Relu(double u) { return u > 0.0 ? u : 0.0; }

Vector Relu(const Vector& u) { return u.cwiseMax(0.0); }

namespace {

void CheckInput(const MlpNetwork& net, Eigen::Index rows) {
  Require(rows == net.input_dim(), ErrorKind::kShape,
          "input dimension " + std::to_string(rows) + " does not match network input width " +
              std::to_string(net.input_dim()));
}

RowVector ApplyClamp(const MlpNetwork& net, const RowVector& z) {
  if (!net.output_bound) return z;
  const double b = *net.output_bound;
  return (z.array() / b).tanh() * b;
}

}  // namespace

RowVector Forward(const MlpNetwork& net, const Matrix& inputs) {
  CheckInput(net, inputs.rows());
  Matrix a = inputs;
  const int layers = net.num_layers();
  for (int l = 0; l + 1 < layers; ++l) {
    Matrix z = net.weights[l] * a;
    z.colwise() += net.biases[l];
    a = z.cwiseMax(0.0);
  }
  RowVector out = net.weights[layers - 1] * a;
  out.array() += net.biases[layers - 1](0);
  return ApplyClamp(net, out);
}

double Forward(const MlpNetwork& net, const Vector& input) {
  CheckInput(net, input.size());
  Matrix in = input;
  return Forward(net, in)(0);
}

RowVector ForwardBackward(const MlpNetwork& net, const Matrix& inputs,
                          const std::function<RowVector(const RowVector&)>& cotangent_fn,
                          NetworkGrad& grad) {
  CheckInput(net, inputs.rows());
  const int layers = net.num_layers();
  // activations[l] is the input to layer l (activations[0] = inputs).
  std::vector<Matrix> activations(layers);
  activations[0] = inputs;
  for (int l = 0; l + 1 < layers; ++l) {
    Matrix z = net.weights[l] * activations[l];
    z.colwise() += net.biases[l];
    activations[l + 1] = z.cwiseMax(0.0);
  }
  RowVector raw = net.weights[layers - 1] * activations[layers - 1];
  raw.array() += net.biases[layers - 1](0);
  RowVector out = ApplyClamp(net, raw);

  RowVector cot = cotangent_fn(out);
  Require(cot.size() == out.size(), ErrorKind::kShape, "cotangent count does not match batch size");
  if (net.output_bound) {
    const double b = *net.output_bound;
    cot.array() *= 1.0 - (raw.array() / b).tanh().square();
  }

  Matrix delta = cot;
  for (int l = layers - 1; l >= 0; --l) {
    grad.weights[l].noalias() += delta * activations[l].transpose();
    grad.biases[l] += delta.rowwise().sum();
    if (l > 0) {
      Matrix back = net.weights[l].transpose() * delta;
      // ReLU derivative: active where the post-activation is positive.
      delta = (activations[l].array() > 0.0).select(back, 0.0);
    }
  }
  return out;
}

NetworkGrad Backward(const MlpNetwork& net, const Matrix& inputs, const RowVector& cotangents) {
  Require(cotangents.size() == inputs.cols(), ErrorKind::kShape,
          "cotangent count does not match batch size");
  NetworkGrad grad = NetworkGrad::ZerosLike(net);
  ForwardBackward(net, inputs, [&](const RowVector&) { return cotangents; }, grad);
  return grad;
}

AdamState AdamState::For(const MlpNetwork& net, double learning_rate) {
  AdamState s;
  s.first_moment = NetworkGrad::ZerosLike(net);
  s.second_moment = NetworkGrad::ZerosLike(net);
  s.learning_rate = learning_rate;
  return s;
}

void AdamStep(MlpNetwork& net, const NetworkGrad& grad, AdamState& state) {
  Require(state.step >= 0, ErrorKind::kConfig, "Adam step must be nonnegative");
  Require(state.beta1 > 0 && state.beta1 < 1 && state.beta2 > 0 && state.beta2 < 1 &&
              state.epsilon > 0,
          ErrorKind::kConfig, "invalid Adam hyperparameters");
  Require(grad.weights.size() == net.weights.size() &&
              state.first_moment.weights.size() == net.weights.size(),
          ErrorKind::kShape, "gradient / optimizer state shape mismatch");
  for (int l = 0; l < net.num_layers(); ++l) {
    if (!grad.weights[l].allFinite() || !grad.biases[l].allFinite())
      Fail(ErrorKind::kOptimization,
           "non-finite gradient in layer " + std::to_string(l) + "; try a lower learning rate");
  }
  ++state.step;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double lr = state.learning_rate;
  const double eps = state.epsilon;
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (int l = 0; l < net.num_layers(); ++l) {
    update(net.weights[l], grad.weights[l], state.first_moment.weights[l],
           state.second_moment.weights[l]);
    update(net.biases[l], grad.biases[l], state.first_moment.biases[l],
           state.second_moment.biases[l]);
  }
}

GradientCheckReport GradientCheck(const MlpNetwork& net, const LossFn& loss, double step,
                                  double tolerance, std::size_t max_parameters,
                                  std::uint64_t seed) {
  Require(step > 0.0, ErrorKind::kConfig, "finite-difference step must be positive");
  NetworkGrad analytic = NetworkGrad::ZerosLike(net);
  loss(net, &analytic);
  const std::vector<double> g = analytic.Flatten();
  std::vector<double> theta = net.Flatten();

  std::vector<std::size_t> idx(theta.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (idx.size() > max_parameters) {
    Rng rng(seed);
    for (std::size_t i = 0; i < max_parameters; ++i) {
      std::size_t j = i + rng.Below(idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(max_parameters);
    std::sort(idx.begin(), idx.end());
  }

  GradientCheckReport report;
  MlpNetwork probe = net;
  for (std::size_t k : idx) {
    const double orig = theta[k];
    theta[k] = orig + step;
    probe.Unflatten(theta);
    const double up = loss(probe, nullptr);
    theta[k] = orig - step;
    probe.Unflatten(theta);
    const double down = loss(probe, nullptr);
    theta[k] = orig;
    const double fd = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(fd), std::abs(g[k]), 1e-7});
    const double rel = std::abs(fd - g[k]) / denom;
    if (rel > report.max_relative_error || !std::isfinite(rel)) {
      report.max_relative_error = std::isfinite(rel) ? rel : INFINITY;
      report.worst_index = k;
    }
  }
  report.parameters_checked = idx.size();
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

nlohmann::json NetworkToJson(const MlpNetwork& net) {
  nlohmann::json j;
  j["kind"] = "mlp_network";
  j["activation"] = "relu";
  j["widths"] = net.widths;
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < net.num_layers(); ++l) {
    const Matrix& w = net.weights[l];
    std::vector<double> row_major;
    row_major.reserve(w.size());
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) row_major.push_back(w(r, c));
    std::vector<double> b(net.biases[l].data(), net.biases[l].data() + net.biases[l].size());
    layers.push_back({{"weights", row_major}, {"bias", b}});
  }
  j["layers"] = layers;
  j["output_bound"] = net.output_bound ? nlohmann::json(*net.output_bound) : nlohmann::json();
  return j;
}

MlpNetwork NetworkFromJson(const nlohmann::json& j) {
  try {
    MlpNetwork net = MlpNetwork::Zeros(j.at("widths").get<std::vector<int>>());
    const auto& layers = j.at("layers");
    Require(layers.size() == static_cast<std::size_t>(net.num_layers()), ErrorKind::kShape,
            "layer count does not match widths");
    for (int l = 0; l < net.num_layers(); ++l) {
      auto w = layers[l].at("weights").get<std::vector<double>>();
      auto b = layers[l].at("bias").get<std::vector<double>>();
      Matrix& W = net.weights[l];
      Require(w.size() == static_cast<std::size_t>(W.size()) &&
                  b.size() == static_cast<std::size_t>(net.biases[l].size()),
              ErrorKind::kShape, "serialized layer " + std::to_string(l) + " has wrong size");
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < W.rows(); ++r)
        for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = w[k++];
      for (std::size_t i = 0; i < b.size(); ++i) net.biases[l](i) = b[i];
    }
    if (j.contains("output_bound") && !j["output_bound"].is_null())
      net.output_bound = j["output_bound"].get<double>();
    net.Validate();
    return net;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kData, std::string("malformed network document: ") + e.what());
  }
}

}  // namespace dnnh
