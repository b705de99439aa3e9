#include "otv/theory.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "otv/rng.hpp"

namespace otv::theory {

namespace {

// Rule evaluation on a bare (t, T, y) outcome. The stepwise rule is read
// at token granularity here: every token is its own step.
double rule_value(const label::LabelRule& rule, int t, int T, int y) {
  switch (rule.kind) {
    case label::RuleKind::Constant: return label::constant(t, T, y);
    case label::RuleKind::Linear: return label::linear(t, T, y);
    case label::RuleKind::Sigmoid: return label::sigmoid_ramp(t, T, y, rule.alpha);
    case label::RuleKind::Noisy:
      return label::noisy(t, T, y, rule.beta, rule.omega, rule.sigma, rule.seed);
    case label::RuleKind::Stepwise: return label::stepwise(t, T, y);
  }
  throw std::logic_error("unreachable");
}

void require_t_in_support(const State& s, int t) {
  for (const Outcome& o : s.outcomes)
    if (o.prob > 0 && t > o.length)
      throw std::invalid_argument("position t exceeds a supported length");
}

}  // namespace

void ToyTrajectoryModel::validate() const {
  for (const State& s : states) {
    double total = 0;
    for (const Outcome& o : s.outcomes) {
      if (o.length < 1) throw std::invalid_argument("outcome length < 1");
      if (o.prob < 0) throw std::invalid_argument("negative probability");
      total += o.prob;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("state " + s.name + " does not sum to 1");
  }
}

Expectations enumerate_expectations(const State& s, int t) {
  require_t_in_support(s, t);
  Expectations e;
  double p_pos = 0, p_neg = 0, inv_pos = 0, inv_neg = 0;
  for (const Outcome& o : s.outcomes) {
    if (o.y == 1) {
      p_pos += o.prob;
      inv_pos += o.prob / o.length;
    } else {
      p_neg += o.prob;
      inv_neg += o.prob / o.length;
    }
    e.e_linear += o.prob * label::linear(t, o.length, o.y);
  }
  e.v_mc = p_pos;
  if (p_pos > 0) e.mu_plus = inv_pos / p_pos;
  if (p_neg > 0) e.mu_minus = inv_neg / p_neg;
  return e;
}

double linear_closed_form(double v_mc, double mu_plus, double mu_minus, int t) {
  return 0.5 - 0.5 * t * mu_minus + v_mc * 0.5 * t * (mu_plus + mu_minus);
}

Prop1Report check_prop1(const State& s, int t, const label::LabelRule& rule,
                        int grid_points) {
  require_t_in_support(s, t);
  double a_star = 0, second = 0;
  for (const Outcome& o : s.outcomes) {
    const double c = rule_value(rule, t, o.length, o.y);
    a_star += o.prob * c;
    second += o.prob * c * c;
  }
  const double variance = second - a_star * a_star;
  auto risk = [&](double a) {
    double r = 0;
    for (const Outcome& o : s.outcomes) {
      const double d = a - rule_value(rule, t, o.length, o.y);
      r += o.prob * d * d;
    }
    return r;
  };

  std::vector<double> grid;
  grid.reserve(grid_points + 1);
  for (int i = 0; i < grid_points; ++i)
    grid.push_back(static_cast<double>(i) / (grid_points - 1));
  grid.push_back(a_star);

  Prop1Report rep;
  rep.a_star = a_star;
  double best = grid[0], best_risk = risk(grid[0]);
  for (double a : grid) {
    const double r = risk(a);
    if (r < best_risk) {
      best_risk = r;
      best = a;
    }
    const double reconstructed = (a - a_star) * (a - a_star) + variance;
    rep.identity_gap = std::max(rep.identity_gap, std::abs(r - reconstructed));
  }
  rep.argmin_gap = std::abs(best - a_star);
  return rep;
}

Prop2Row check_prop2(const State& s, int t) {
  Prop2Row row;
  row.state = s.name;
  row.t = t;
  Expectations e = enumerate_expectations(s, t);
  if (!e.mu_plus || !e.mu_minus) {
    row.skipped = true;
    row.skip_reason = !e.mu_plus ? "no correct completions at this state"
                                 : "no incorrect completions at this state";
    return row;
  }
  row.enumerated = e.e_linear;
  row.closed_form = linear_closed_form(e.v_mc, *e.mu_plus, *e.mu_minus, t);
  row.gap = std::abs(row.enumerated - row.closed_form);
  return row;
}

ToyTrajectoryModel random_model(uint64_t seed, int n_states, int max_length) {
  auto rng = make_rng(seed, "toy-model");
  std::uniform_int_distribution<int> n_out(2, 5);
  std::uniform_int_distribution<int> len(1, max_length);
  std::uniform_int_distribution<int> lab(0, 1);
  std::uniform_real_distribution<double> mass(0.05, 1.0);
  ToyTrajectoryModel m;
  for (int i = 0; i < n_states; ++i) {
    State s;
    s.name = "s" + std::to_string(i);
    const int k = n_out(rng);
    double total = 0;
    for (int j = 0; j < k; ++j) {
      Outcome o;
      o.y = lab(rng);
      o.length = len(rng);
      o.prob = mass(rng);
      total += o.prob;
      s.outcomes.push_back(o);
    }
    for (Outcome& o : s.outcomes) o.prob /= total;
    m.states.push_back(std::move(s));
  }
  m.validate();
  return m;
}

}  // namespace otv::theory
