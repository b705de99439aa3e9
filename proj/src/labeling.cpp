#include "otv/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "otv/rng.hpp"

namespace otv::label {

double linear(int t, int T, int y) {
  if (T < 1) throw std::invalid_argument("label linear: T must be >= 1");
  if (t < 0 || t > T) throw std::invalid_argument("label linear: t out of range");
  return 0.5 + (y - 0.5) * static_cast<double>(t) / T;
}

double constant(int /*t*/, int /*T*/, int y) { return static_cast<double>(y); }

double sigmoid_ramp(int t, int T, int y, double alpha) {
  if (alpha <= 0) throw std::invalid_argument("label sigmoid: alpha must be > 0");
  const double z = (2.0 * y - 1.0) * alpha * static_cast<double>(t) / T;
  return 1.0 / (1.0 + std::exp(-z));
}

double noisy(int t, int T, int y, double beta, double omega, double sigma,
             uint64_t seed) {
  if (sigma < 0) throw std::invalid_argument("label noisy: sigma must be >= 0");
  double v = linear(t, T, y) +
             beta * std::sin(2.0 * std::numbers::pi * omega * t / T);
  if (sigma > 0) {
    auto rng = make_rng(seed, "label-noise", static_cast<uint64_t>(t));
    std::normal_distribution<double> n(0.0, sigma);
    v += n(rng);
  }
  return std::clamp(v, 0.0, 1.0);
}

double stepwise(int step_of_t, int n_steps, int y) {
  if (n_steps < 1) throw std::invalid_argument("label stepwise: empty partition");
  if (step_of_t < 0 || step_of_t > n_steps)
    throw std::invalid_argument("label stepwise: step index out of range");
  return 0.5 + (y - 0.5) * static_cast<double>(step_of_t) / n_steps;
}

LabelRule parse_rule(const std::string& name) {
  LabelRule r;
  if (name == "constant") r.kind = RuleKind::Constant;
  else if (name == "linear") r.kind = RuleKind::Linear;
  else if (name == "sigmoid") r.kind = RuleKind::Sigmoid;
  else if (name == "noisy") r.kind = RuleKind::Noisy;
  else if (name == "stepwise") r.kind = RuleKind::Stepwise;
  else throw std::invalid_argument("unknown label rule: " + name);
  return r;
}

std::string rule_name(RuleKind kind) {
  switch (kind) {
    case RuleKind::Constant: return "constant";
    case RuleKind::Linear: return "linear";
    case RuleKind::Sigmoid: return "sigmoid";
    case RuleKind::Noisy: return "noisy";
    case RuleKind::Stepwise: return "stepwise";
  }
  return "?";
}

std::vector<double> make_series(const LabelRule& rule, int T, int y,
                                const std::vector<int>& step_of_token,
                                int n_steps, uint64_t trace_index) {
  std::vector<double> out(static_cast<size_t>(T));
  for (int t = 1; t <= T; ++t) {
    double c;
    switch (rule.kind) {
      case RuleKind::Constant: c = constant(t, T, y); break;
      case RuleKind::Linear: c = linear(t, T, y); break;
      case RuleKind::Sigmoid: c = sigmoid_ramp(t, T, y, rule.alpha); break;
      case RuleKind::Noisy:
        c = noisy(t, T, y, rule.beta, rule.omega, rule.sigma,
                  splitmix64(rule.seed ^ trace_index));
        break;
      case RuleKind::Stepwise:
        if (step_of_token.size() != static_cast<size_t>(T))
          throw std::invalid_argument("stepwise rule needs step indices");
        c = stepwise(step_of_token[t - 1], n_steps, y);
        break;
      default: throw std::logic_error("unreachable");
    }
    out[t - 1] = c;
  }
  return out;
}

double masked_mse(const std::vector<double>& predictions,
                  const std::vector<double>& targets,
                  const std::vector<bool>& mask) {
  if (predictions.size() != targets.size() || mask.size() != targets.size())
    throw std::invalid_argument("masked_mse: length mismatch");
  int n = 0;
  double acc = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double d = targets[i] - predictions[i];
    acc += d * d;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("masked_mse: all positions masked");
  return acc / n;
}

}  // namespace otv::label
