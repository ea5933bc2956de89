#pragma once

// Feed-forward ReLU networks: forward pass, reverse-mode gradients, Adam and
// a finite-difference gradient checker.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dnnh {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Layered parameterization g(u) = W_L s(W_{L-1} ... s(W_0 u + b_0) ...) + b_L
// with s = ReLU. widths = (p_0, ..., p_{L+1}), p_{L+1} = 1.
struct MlpNetwork {
  std::vector<int> widths;
  std::vector<Matrix> weights;  // weights[l] is widths[l+1] x widths[l]
  std::vector<Vector> biases;   // biases[l] has widths[l+1] entries
  // When set, the output is passed through B * tanh(z / B).
  std::optional<double> output_bound;

  int input_dim() const { return widths.front(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
  std::size_t num_parameters() const;

  // Zero network with the given widths.
  static MlpNetwork Zeros(std::vector<int> widths);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static MlpNetwork RandomInit(std::vector<int> widths, std::uint64_t seed);
  // Input p_0, `depth` hidden layers of the same width, scalar output.
  static std::vector<int> UniformWidths(int input_dim, int depth, int width);

  // Throws kShape when widths and parameter shapes disagree, kDomain on a
  // non-finite parameter.
  void Validate() const;

  // Hard clamp of every parameter to [-bound, bound].
  void ClampParameters(double bound);

  // Flat view helpers (layer-major: W_0 column-major, b_0, W_1, ...).
  std::vector<double> Flatten() const;
  void Unflatten(const std::vector<double>& flat);
};

// Per-parameter gradient with the same shapes as the network.
struct NetworkGrad {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static NetworkGrad ZerosLike(const MlpNetwork& net);
  void SetZero();
  NetworkGrad& operator+=(const NetworkGrad& other);
  NetworkGrad& operator*=(double s);
  double MaxAbs() const;
  std::vector<double> Flatten() const;
};

Vector Relu(const Vector& u);
double Relu(double u);

// Batched forward pass: `inputs` is p_0 x N (one column per point).
RowVector Forward(const MlpNetwork& net, const Matrix& inputs);
double Forward(const MlpNetwork& net, const Vector& input);

// Gradient of sum_i c_i * Forward(net, inputs.col(i)) with respect to every
// parameter. The result is accumulated into `grad` (which must be shaped like
// the network). Returns the forward outputs for the batch.
RowVector ForwardBackward(const MlpNetwork& net, const Matrix& inputs,
                          const std::function<RowVector(const RowVector&)>& cotangent_fn,
                          NetworkGrad& grad);

NetworkGrad Backward(const MlpNetwork& net, const Matrix& inputs,
                     const RowVector& cotangents);

struct AdamState {
  std::int64_t step = 0;
  NetworkGrad first_moment;
  NetworkGrad second_moment;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState For(const MlpNetwork& net, double learning_rate);
};

// Bias-corrected Adam update in place. Throws kOptimization naming the layer
// if a gradient entry is not finite.
void AdamStep(MlpNetwork& net, const NetworkGrad& grad, AdamState& state);

// Loss callback for the gradient checker: returns the loss and, when `grad`
// is non-null, writes the analytic gradient into it.
using LossFn = std::function<double(const MlpNetwork&, NetworkGrad*)>;

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
  std::size_t worst_index = 0;
  bool passed = true;
};

// Central finite differences against the analytic gradient. Networks with
// more than `max_parameters` parameters are checked on a seeded random subset.
GradientCheckReport GradientCheck(const MlpNetwork& net, const LossFn& loss,
                                  double step, double tolerance,
                                  std::size_t max_parameters = 400,
                                  std::uint64_t seed = 0);

nlohmann::json NetworkToJson(const MlpNetwork& net);
MlpNetwork NetworkFromJson(const nlohmann::json& j);

}  // namespace dnnh
