#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace otv::synth {

// Fixed token layout for a modulus-M arithmetic chain task.
// ids 0..M-1: digits; then the operators and structural tokens below.
// [ToT] is reserved and never appears in rendered data.
struct Vocabulary {
  int modulus = 10;

  int plus() const { return modulus; }
  int minus() const { return modulus + 1; }
  int times() const { return modulus + 2; }
  int eq() const { return modulus + 3; }
  int step() const { return modulus + 4; }
  int ans() const { return modulus + 5; }
  int eos() const { return modulus + 6; }
  int tot() const { return modulus + 7; }
  int size() const { return modulus + 8; }
};

// One chain: a0 op1 a1 ... op_d a_d, evaluated left to right mod M.
struct ProblemSpec {
  int id = 0;
  int modulus = 10;
  std::vector<int> operands;       // d + 1 values in [0, M)
  std::vector<int> ops;            // d entries: 0 '+', 1 '-', 2 '*'
  std::vector<int> intermediates;  // d partial results
  int answer = 0;

  int depth() const { return static_cast<int>(ops.size()); }
};

struct Rendered {
  std::vector<int> prompt;  // operands/operators then EQ
  std::vector<int> gold;    // per step: value STEP; then ANS digits EOS
};

ProblemSpec generate_problem(std::mt19937_64& rng, int depth, int modulus);
Rendered render(const ProblemSpec& p, const Vocabulary& vocab);

// Final-answer check: digits between the last ANS and EOS must equal the
// gold answer. Unfinished or malformed responses score 0.
int check_answer(const std::vector<int>& response, bool finished,
                 const ProblemSpec& p, const Vocabulary& vocab);

// 1-based reasoning-step index per response token, plus the step count.
// Feeds the stepwise labeling rule; STEP tokens close their step.
struct StepIndex {
  std::vector<int> step_of_token;
  int n_steps = 0;
};
StepIndex step_boundaries(const std::vector<int>& response,
                          const Vocabulary& vocab);

// Line-delimited dataset records, documented stable field order:
// problem_id modulus depth operands.. ops.. answer | prompt ids | gold ids
void save_dataset(const std::vector<ProblemSpec>& problems,
                  const Vocabulary& vocab, const std::string& path);
std::vector<ProblemSpec> load_dataset(const std::string& path);

}  // namespace otv::synth
