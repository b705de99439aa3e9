#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace otv::label {

// Pseudo-confidence target generators mapping (t, T, y) -> c_t in [0, 1].
// t = 0 means "no response evidence yet"; the linear ramp starts there at
// the neutral prior 0.5 and ends at the outcome label exactly.

double linear(int t, int T, int y);
double constant(int t, int T, int y);
double sigmoid_ramp(int t, int T, int y, double alpha = 4.0);
double noisy(int t, int T, int y, double beta, double omega, double sigma,
             uint64_t seed);
// step_of_t: 1-based step index of token t; n_steps >= 1.
double stepwise(int step_of_t, int n_steps, int y);

enum class RuleKind { Constant, Linear, Sigmoid, Noisy, Stepwise };

struct LabelRule {
  RuleKind kind = RuleKind::Linear;
  double alpha = 4.0;   // sigmoid sharpness
  double beta = 0.1;    // noisy: sinusoid amplitude
  double omega = 3.0;   // noisy: sinusoid frequency
  double sigma = 0.05;  // noisy: gaussian std
  uint64_t seed = 0;
};

LabelRule parse_rule(const std::string& name);
std::string rule_name(RuleKind kind);

// Targets c_1..c_T for a finished trace. step_of_token (1-based, length T)
// is required only by the stepwise rule; trace_index salts the noise seed.
std::vector<double> make_series(const LabelRule& rule, int T, int y,
                                const std::vector<int>& step_of_token,
                                int n_steps, uint64_t trace_index = 0);

// (1/|mask|) sum over unmasked positions of (target - pred)^2.
double masked_mse(const std::vector<double>& predictions,
                  const std::vector<double>& targets,
                  const std::vector<bool>& mask);

}  // namespace otv::label
