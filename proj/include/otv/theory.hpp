#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "otv/labeling.hpp"

namespace otv::theory {

// A finite distribution over (y, T) outcomes attached to each state.
// All statements checked here are exact enumerations over these tables.
struct Outcome {
  int y = 0;
  int length = 1;  // T >= 1
  double prob = 0.0;
};

struct State {
  std::string name;
  std::vector<Outcome> outcomes;  // probabilities sum to 1
};

struct ToyTrajectoryModel {
  std::vector<State> states;
  void validate() const;
};

struct Expectations {
  double v_mc = 0.0;  // P(y = 1 | s)
  std::optional<double> mu_plus;   // E[1/T | s, y=1], absent if class empty
  std::optional<double> mu_minus;  // E[1/T | s, y=0]
  double e_linear = 0.0;           // E[c_lin(t, T, y) | s]
};

Expectations enumerate_expectations(const State& s, int t);

// Closed form 0.5 - (t/2) mu_minus + V_MC * (t/2)(mu_plus + mu_minus).
double linear_closed_form(double v_mc, double mu_plus, double mu_minus, int t);

struct Prop1Report {
  double a_star = 0.0;         // enumerated conditional expectation
  double argmin_gap = 0.0;     // |grid argmin - a_star|
  double identity_gap = 0.0;   // worst bias-variance identity residual
};

// Grid search of the quadratic risk over [0,1] (a_star injected into the
// grid so the argmin check is exact), plus the pointwise decomposition
// E[(a-c)^2] = (a - a_star)^2 + Var(c).
Prop1Report check_prop1(const State& s, int t, const label::LabelRule& rule,
                        int grid_points = 1001);

struct Prop2Row {
  std::string state;
  int t = 0;
  bool skipped = false;
  std::string skip_reason;
  double enumerated = 0.0;
  double closed_form = 0.0;
  double gap = 0.0;
};

Prop2Row check_prop2(const State& s, int t);

// Deterministic random model generator for the property suites.
ToyTrajectoryModel random_model(uint64_t seed, int n_states, int max_length);

}  // namespace otv::theory
