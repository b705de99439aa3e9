#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "otv/model.hpp"
#include "otv/synthetic.hpp"
#include "otv/verifier.hpp"

namespace otv::agg {

enum class Window { All, LastFraction, LastTokens };
enum class Op { Mean, Min, Max };

// Trace-level score from a token-level confidence series. Defaults mirror
// the tail-mean protocol: mean over the last 100 tokens.
struct ScoringProtocol {
  Window window = Window::LastTokens;
  double fraction = 0.1;  // for LastFraction
  int last_tokens = 100;  // for LastTokens
  Op op = Op::Mean;
};

double trace_confidence(const std::vector<double>& series,
                        const ScoringProtocol& protocol);

// Drops the floor(rho * n) lowest-scoring entries; ties drop the lower
// index first. Returns surviving indices in original order.
std::vector<int> filter_bottom(const std::vector<double>& scores, double rho);

struct VoteResult {
  std::vector<int> winning_answer;
  double winning_weight = 0.0;
  int n_voters = 0;
};

// answers[i] is the extracted final answer of trace i (empty = abstain).
VoteResult weighted_majority_vote(const std::vector<std::vector<int>>& answers,
                                  const std::vector<double>& scores);

int best_of_n(const std::vector<double>& scores);  // argmax, lowest index wins

// Per-problem view of a pool used by the offline metrics.
struct ProblemTraces {
  int problem_id = 0;
  std::vector<int> correct;                 // y per trace
  std::vector<std::vector<int>> answers;    // extracted answers
  std::vector<double> scores;               // optional per-trace scores
};

double pass_at_1(const std::vector<ProblemTraces>& pool);
// Sampled without replacement, averaged over n_runs.
double pass_at_k(const std::vector<ProblemTraces>& pool, int k, int n_runs,
                 uint64_t seed);
double maj_at_k(const std::vector<ProblemTraces>& pool, int k, int n_runs,
                uint64_t seed);
// Exhaustive over all k-subsets (small pools; used as oracle in tests).
double pass_at_k_exhaustive(const std::vector<int>& correct, int k);

// Weighted vote accuracy with bottom-rho filtering, sampled subsets of
// size k per problem, averaged over n_runs.
double weighted_vote_at_k(const std::vector<ProblemTraces>& pool, int k,
                          double rho, int n_runs, uint64_t seed,
                          bool uniform_scores = false);

// Mean tail log-probability, affinely rescaled to [0, 1] across the pool.
std::vector<double> logit_confidence_baseline(
    const std::vector<std::vector<double>>& logprobs, int window);

// ---------------------------------------------------------------------------
// Online schedules.

enum class ScheduleKind { BestOfN, Drop, Stop, Halve };

struct Schedule {
  ScheduleKind kind = ScheduleKind::BestOfN;
  int interval = 10;  // Drop@m / Halve@B checkpoint spacing, Stop@L length
};

struct CostReport {
  long long generated_tokens = 0;
  long long verification_calls = 0;
  int surviving_length = 0;
};

// One lockstep candidate. step() decodes one token and reports whether
// the trace is still running; probe() scores the current prefix.
class TraceRunner {
 public:
  virtual ~TraceRunner() = default;
  virtual bool step() = 0;
  virtual bool finished() const = 0;
  virtual double probe() = 0;
  virtual int length() const = 0;
  virtual std::vector<int> answer() const = 0;
  virtual int correct() const = 0;
};

using RunnerFactory = std::function<std::vector<std::unique_ptr<TraceRunner>>()>;

struct ScheduleOutcome {
  std::vector<int> answer;
  int chosen_correct = 0;
  CostReport cost;
};

// Lockstep decoding with the schedule's pruning rule. Finished traces are
// exempt from pruning but stay candidates for final selection.
ScheduleOutcome run_schedule(std::vector<std::unique_ptr<TraceRunner>> runners,
                             const Schedule& schedule);

// Model-backed runner for real schedule runs.
std::vector<std::unique_ptr<TraceRunner>> make_model_runners(
    const ModelBundle& bundle, const synth::ProblemSpec& problem,
    const synth::Vocabulary& vocab, int n, double temperature, uint64_t seed);

// Fixed-length stub runner (never finishes before max_len); exercises the
// call-count accounting without a model.
std::vector<std::unique_ptr<TraceRunner>> make_stub_runners(int n, int max_len,
                                                            uint64_t seed);

}  // namespace otv::agg
