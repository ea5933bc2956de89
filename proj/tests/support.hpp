#pragma once

#include <cmath>
#include <vector>

#include "dataset.hpp"
#include "hazard.hpp"
#include "nn.hpp"
#include "rng.hpp"

namespace testing {

// g(t,x) = c everywhere: a network whose only nonzero parameter is the
// output bias.
inline dnnh::FittedHazard ConstantHazard(int p, double c, double tau = 1.0) {
  auto net = dnnh::MlpNetwork::Zeros({p + 1, 1});
  net.biases[0](0) = c;
  return dnnh::FittedHazard(net, tau, std::vector<double>(p, 0.0), std::vector<double>(p, 1.0));
}

// g(t,x) = t / tau (linear in the scaled time input).
inline dnnh::FittedHazard TimeHazard(int p, double tau = 1.0) {
  auto net = dnnh::MlpNetwork::Zeros({p + 1, 1});
  net.weights[0](0, 0) = 1.0;
  return dnnh::FittedHazard(net, tau, std::vector<double>(p, 0.0), std::vector<double>(p, 1.0));
}

inline dnnh::FittedHazard RandomHazard(int p, int depth, int width, std::uint64_t seed,
                                       double tau = 1.0) {
  auto net = dnnh::MlpNetwork::RandomInit(dnnh::MlpNetwork::UniformWidths(p + 1, depth, width), seed);
  return dnnh::FittedHazard(net, tau, std::vector<double>(p, 0.0), std::vector<double>(p, 1.0));
}

// Unit-cube covariates, random times in (0, tau], ~half events.
inline dnnh::Dataset RandomDataset(std::size_t n, int p, std::uint64_t seed, double tau = 1.0) {
  dnnh::Rng rng(seed);
  dnnh::Dataset d;
  d.p = p;
  d.tau = tau;
  for (std::size_t i = 0; i < n; ++i) {
    dnnh::Subject s;
    s.y = tau * rng.Uniform();
    s.delta = rng.Uniform() < 0.5 ? 1 : 0;
    for (int j = 0; j < p; ++j) s.x.push_back(rng.Uniform());
    d.subjects.push_back(s);
  }
  return d;
}

// T ~ Exp(1) independent of x, C ~ Exp(mean mu), observed up to tau.
inline dnnh::Dataset ExponentialDataset(std::size_t n, int p, double mu, double tau,
                                        std::uint64_t seed) {
  dnnh::Rng rng(seed);
  dnnh::Dataset d;
  d.p = p;
  d.tau = tau;
  for (std::size_t i = 0; i < n; ++i) {
    dnnh::Subject s;
    for (int j = 0; j < p; ++j) s.x.push_back(rng.Uniform());
    const double t = rng.Exponential(), c = mu * rng.Exponential();
    s.y = std::min({t, c, tau});
    s.delta = t <= std::min(c, tau) ? 1 : 0;
    d.subjects.push_back(s);
  }
  return d;
}

}  // namespace testing
