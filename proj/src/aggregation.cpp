#include "otv/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "otv/rng.hpp"

namespace otv::agg {

double trace_confidence(const std::vector<double>& series,
                        const ScoringProtocol& protocol) {
  if (series.empty()) throw std::invalid_argument("trace_confidence: empty series");
  const int n = static_cast<int>(series.size());
  int take = n;
  switch (protocol.window) {
    case Window::All: take = n; break;
    case Window::LastFraction:
      take = std::clamp(
          static_cast<int>(std::ceil(protocol.fraction * n)), 1, n);
      break;
    case Window::LastTokens:
      take = std::min(protocol.last_tokens, n);
      break;
  }
  auto begin = series.end() - take;
  switch (protocol.op) {
    case Op::Mean: return std::accumulate(begin, series.end(), 0.0) / take;
    case Op::Min: return *std::min_element(begin, series.end());
    case Op::Max: return *std::max_element(begin, series.end());
  }
  throw std::logic_error("unreachable");
}

std::vector<int> filter_bottom(const std::vector<double>& scores, double rho) {
  if (rho < 0.0 || rho >= 1.0)
    throw std::invalid_argument("filter_bottom: rho must be in [0,1)");
  const int n = static_cast<int>(scores.size());
  const int drop = static_cast<int>(std::floor(rho * n));
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return scores[a] < scores[b]; });
  std::vector<bool> dropped(n, false);
  for (int i = 0; i < drop; ++i) dropped[idx[i]] = true;
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (!dropped[i]) out.push_back(i);
  return out;
}

VoteResult weighted_majority_vote(const std::vector<std::vector<int>>& answers,
                                  const std::vector<double>& scores) {
  if (answers.empty() || answers.size() != scores.size())
    throw std::invalid_argument("weighted_majority_vote: bad input");
  std::map<std::vector<int>, double> weight;
  int voters = 0;
  for (size_t i = 0; i < answers.size(); ++i) {
    if (answers[i].empty()) continue;  // unfinished traces abstain
    if (scores[i] < 0)
      throw std::invalid_argument("weighted_majority_vote: negative weight");
    weight[answers[i]] += scores[i];
    ++voters;
  }
  if (weight.empty())
    throw std::invalid_argument("weighted_majority_vote: no votes");
  VoteResult r;
  r.n_voters = voters;
  // map iteration is in canonical answer order, so ties resolve
  // deterministically to the smaller answer.
  for (const auto& [ans, w] : weight) {
    if (w > r.winning_weight) {
      r.winning_weight = w;
      r.winning_answer = ans;
    }
  }
  return r;
}

int best_of_n(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("best_of_n: empty");
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

namespace {

std::vector<int> sample_without_replacement(int n, int k,
                                            std::mt19937_64& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

bool vote_correct(const ProblemTraces& p, const std::vector<int>& subset,
                  const std::vector<double>& scores) {
  std::vector<std::vector<int>> answers;
  std::vector<double> w;
  std::vector<int> ys;
  for (size_t pos = 0; pos < subset.size(); ++pos) {
    int i = subset[pos];
    if (p.answers[i].empty()) continue;
    answers.push_back(p.answers[i]);
    w.push_back(scores[pos]);
    ys.push_back(p.correct[i]);
  }
  if (answers.empty()) return false;
  VoteResult r = weighted_majority_vote(answers, w);
  for (size_t i = 0; i < answers.size(); ++i)
    if (answers[i] == r.winning_answer) return ys[i] == 1;
  return false;
}

}  // namespace

double pass_at_1(const std::vector<ProblemTraces>& pool) {
  long long correct = 0, total = 0;
  for (const auto& p : pool) {
    for (int y : p.correct) correct += y;
    total += static_cast<long long>(p.correct.size());
  }
  if (total == 0) throw std::invalid_argument("pass_at_1: empty pool");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double pass_at_k(const std::vector<ProblemTraces>& pool, int k, int n_runs,
                 uint64_t seed) {
  double acc = 0;
  for (int run = 0; run < n_runs; ++run) {
    auto rng = make_rng(seed, "pass-at-k", run);
    double hit = 0;
    for (const auto& p : pool) {
      const int n = static_cast<int>(p.correct.size());
      if (k > n) throw std::invalid_argument("pass_at_k: k exceeds pool");
      auto subset = sample_without_replacement(n, k, rng);
      bool any = false;
      for (int i : subset) any = any || p.correct[i] == 1;
      hit += any ? 1.0 : 0.0;
    }
    acc += hit / pool.size();
  }
  return acc / n_runs;
}

double maj_at_k(const std::vector<ProblemTraces>& pool, int k, int n_runs,
                uint64_t seed) {
  double acc = 0;
  for (int run = 0; run < n_runs; ++run) {
    auto rng = make_rng(seed, "maj-at-k", run);
    double hit = 0;
    for (const auto& p : pool) {
      const int n = static_cast<int>(p.correct.size());
      if (k > n) throw std::invalid_argument("maj_at_k: k exceeds pool");
      auto subset = sample_without_replacement(n, k, rng);
      std::vector<double> uniform(subset.size(), 1.0);
      hit += vote_correct(p, subset, uniform) ? 1.0 : 0.0;
    }
    acc += hit / pool.size();
  }
  return acc / n_runs;
}

double pass_at_k_exhaustive(const std::vector<int>& correct, int k) {
  const int n = static_cast<int>(correct.size());
  if (k < 1 || k > n) throw std::invalid_argument("pass_at_k_exhaustive: bad k");
  const int incorrect = n - std::accumulate(correct.begin(), correct.end(), 0);
  // 1 - C(incorrect, k) / C(n, k), computed as a running ratio.
  double p_none = 1.0;
  for (int i = 0; i < k; ++i) {
    if (incorrect - i <= 0) return 1.0;
    p_none *= static_cast<double>(incorrect - i) / (n - i);
  }
  return 1.0 - p_none;
}

double weighted_vote_at_k(const std::vector<ProblemTraces>& pool, int k,
                          double rho, int n_runs, uint64_t seed,
                          bool uniform_scores) {
  double acc = 0;
  for (int run = 0; run < n_runs; ++run) {
    auto rng = make_rng(seed, "weighted-vote", run);
    double hit = 0;
    for (const auto& p : pool) {
      const int n = static_cast<int>(p.correct.size());
      if (k > n)
        throw std::invalid_argument("weighted_vote_at_k: k exceeds pool");
      auto subset = sample_without_replacement(n, k, rng);
      std::vector<double> scores(subset.size());
      for (size_t i = 0; i < subset.size(); ++i)
        scores[i] = uniform_scores ? 1.0 : p.scores[subset[i]];
      auto keep = filter_bottom(scores, rho);
      std::vector<int> kept_subset;
      std::vector<double> kept_scores;
      for (int i : keep) {
        kept_subset.push_back(subset[i]);
        kept_scores.push_back(scores[i]);
      }
      hit += vote_correct(p, kept_subset, kept_scores) ? 1.0 : 0.0;
    }
    acc += hit / pool.size();
  }
  return acc / n_runs;
}

std::vector<double> logit_confidence_baseline(
    const std::vector<std::vector<double>>& logprobs, int window) {
  std::vector<double> raw;
  raw.reserve(logprobs.size());
  for (const auto& lp : logprobs) {
    if (lp.empty()) {
      raw.push_back(-1e9);
      continue;
    }
    const int take = std::min<int>(window, static_cast<int>(lp.size()));
    raw.push_back(std::accumulate(lp.end() - take, lp.end(), 0.0) / take);
  }
  const double lo = *std::min_element(raw.begin(), raw.end());
  const double hi = *std::max_element(raw.begin(), raw.end());
  std::vector<double> out(raw.size(), 0.5);
  if (hi > lo)
    for (size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) / (hi - lo);
  return out;
}

// ---------------------------------------------------------------------------
// Schedules

ScheduleOutcome run_schedule(std::vector<std::unique_ptr<TraceRunner>> runners,
                             const Schedule& schedule) {
  const int n = static_cast<int>(runners.size());
  if (n < 2) throw std::invalid_argument("run_schedule: need at least 2 traces");
  std::vector<bool> alive(n, true);
  std::vector<double> score(n, 0.0);
  std::vector<bool> scored(n, false);
  CostReport cost;
  auto probe_idx = [&](int i) {
    score[i] = runners[i]->probe();
    scored[i] = true;
    ++cost.verification_calls;
  };
  auto alive_count = [&] {
    int c = 0;
    for (int i = 0; i < n; ++i) c += alive[i] ? 1 : 0;
    return c;
  };
  auto drop_lowest_unfinished = [&](int how_many) {
    for (int d = 0; d < how_many; ++d) {
      int worst = -1;
      for (int i = 0; i < n; ++i) {
        if (!alive[i] || runners[i]->finished()) continue;
        if (worst < 0 || score[i] < score[worst]) worst = i;
      }
      if (worst < 0) return;
      alive[worst] = false;
    }
  };

  const bool online = schedule.kind != ScheduleKind::BestOfN;
  bool pruning = online;
  bool stop_fired = false;
  long long clock = 0;
  while (true) {
    bool any_running = false;
    for (int i = 0; i < n; ++i) {
      if (!alive[i] || runners[i]->finished()) continue;
      runners[i]->step();
      ++cost.generated_tokens;
      if (runners[i]->finished() && online && !scored[i]) probe_idx(i);
      any_running = any_running || !runners[i]->finished();
    }
    (void)any_running;
    ++clock;
    const bool fires =
        pruning &&
        ((schedule.kind == ScheduleKind::Drop &&
          clock % schedule.interval == 0) ||
         (schedule.kind == ScheduleKind::Halve &&
          clock % schedule.interval == 0) ||
         (schedule.kind == ScheduleKind::Stop && !stop_fired &&
          clock == schedule.interval));
    if (fires) {
      for (int i = 0; i < n; ++i)
        if (alive[i] && !runners[i]->finished()) probe_idx(i);
      const int live = alive_count();
      switch (schedule.kind) {
        case ScheduleKind::Drop:
          if (live > 1) drop_lowest_unfinished(1);
          else pruning = false;
          break;
        case ScheduleKind::Halve:
          drop_lowest_unfinished(live / 2);
          if (alive_count() <= 1) pruning = false;
          break;
        case ScheduleKind::Stop: {
          stop_fired = true;
          int best = -1;
          for (int i = 0; i < n; ++i)
            if (alive[i] && scored[i] && (best < 0 || score[i] > score[best]))
              best = i;
          for (int i = 0; i < n; ++i)
            if (alive[i] && i != best && !runners[i]->finished())
              alive[i] = false;
          pruning = false;
          break;
        }
        case ScheduleKind::BestOfN: break;
      }
    }
    bool done = true;
    for (int i = 0; i < n; ++i)
      if (alive[i] && !runners[i]->finished()) done = false;
    if (done) break;
  }

  if (schedule.kind == ScheduleKind::BestOfN)
    for (int i = 0; i < n; ++i)
      if (alive[i]) probe_idx(i);

  int chosen = -1;
  for (int i = 0; i < n; ++i) {
    if (!alive[i] || !scored[i]) continue;
    if (chosen < 0 || score[i] > score[chosen]) chosen = i;
  }
  if (chosen < 0)  // nothing was ever probed (cannot happen in practice)
    for (int i = 0; i < n; ++i)
      if (alive[i]) { chosen = i; break; }

  ScheduleOutcome out;
  out.answer = runners[chosen]->answer();
  out.chosen_correct = runners[chosen]->correct();
  out.cost = cost;
  out.cost.surviving_length = runners[chosen]->length();
  return out;
}

namespace {

class ModelRunner : public TraceRunner {
 public:
  ModelRunner(const ModelBundle& bundle, const synth::ProblemSpec& problem,
              const synth::Vocabulary& vocab, double temperature, uint64_t seed)
      : bundle_(bundle), problem_(problem), vocab_(vocab),
        temperature_(temperature), rng_(make_rng(seed, "schedule-decode")),
        cache_(bundle.cfg.n_layers) {
    auto r = synth::render(problem, vocab);
    for (int id : r.prompt) logits_ = bundle_.forward_reasoning(id, cache_);
  }

  bool step() override {
    if (done_) return false;
    Vector masked = logits_;
    masked(bundle_.cfg.tot_id) = -std::numeric_limits<double>::infinity();
    int chosen;
    if (temperature_ == 0.0) {
      masked.maxCoeff(&chosen);
    } else {
      Vector z = masked / temperature_;
      const double mx = z.maxCoeff();
      Vector e = (z.array() - mx).exp();
      e(bundle_.cfg.tot_id) = 0.0;
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      double u = unif(rng_) * e.sum();
      chosen = 0;
      for (int i = 0; i < e.size(); ++i) {
        u -= e(i);
        if (u <= 0) { chosen = i; break; }
        if (i + 1 == e.size()) chosen = i;
      }
    }
    response_.push_back(chosen);
    if (chosen == vocab_.eos()) {
      finished_flag_ = true;
      done_ = true;
      if (cache_.len < bundle_.cfg.max_seq_len)
        bundle_.forward_reasoning(chosen, cache_);
      return false;
    }
    if (cache_.len + 1 >= bundle_.cfg.max_seq_len) {
      done_ = true;  // ran out of context without EOS
      bundle_.forward_reasoning(chosen, cache_);
      return false;
    }
    logits_ = bundle_.forward_reasoning(chosen, cache_);
    return true;
  }

  bool finished() const override { return done_; }
  double probe() override { return probe_single(bundle_, cache_); }
  int length() const override { return static_cast<int>(response_.size()); }
  std::vector<int> answer() const override {
    if (!finished_flag_) return {};
    int last_ans = -1;
    for (int i = 0; i < static_cast<int>(response_.size()); ++i)
      if (response_[i] == vocab_.ans()) last_ans = i;
    if (last_ans < 0) return {};
    std::vector<int> digits;
    for (int i = last_ans + 1; i < static_cast<int>(response_.size()); ++i) {
      if (response_[i] == vocab_.eos()) return digits;
      digits.push_back(response_[i]);
    }
    return {};
  }
  int correct() const override {
    return synth::check_answer(response_, finished_flag_, problem_, vocab_);
  }

 private:
  const ModelBundle& bundle_;
  const synth::ProblemSpec& problem_;
  synth::Vocabulary vocab_;
  double temperature_;
  std::mt19937_64 rng_;
  KVCache cache_;
  Vector logits_;
  std::vector<int> response_;
  bool finished_flag_ = false;
  bool done_ = false;
};

class StubRunner : public TraceRunner {
 public:
  StubRunner(int max_len, uint64_t seed) : max_len_(max_len), state_(seed) {}
  bool step() override {
    if (len_ >= max_len_) return false;
    ++len_;
    return len_ < max_len_;
  }
  bool finished() const override { return len_ >= max_len_; }
  double probe() override {
    state_ = splitmix64(state_);
    return static_cast<double>(state_ >> 11) * 0x1.0p-53;
  }
  int length() const override { return len_; }
  std::vector<int> answer() const override { return {0}; }
  int correct() const override { return 0; }

 private:
  int max_len_;
  int len_ = 0;
  uint64_t state_;
};

}  // namespace

std::vector<std::unique_ptr<TraceRunner>> make_model_runners(
    const ModelBundle& bundle, const synth::ProblemSpec& problem,
    const synth::Vocabulary& vocab, int n, double temperature, uint64_t seed) {
  std::vector<std::unique_ptr<TraceRunner>> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    out.push_back(std::make_unique<ModelRunner>(
        bundle, problem, vocab, temperature,
        stream_seed(seed, "schedule-trace", uint64_t(problem.id) * 8191ULL + i)));
  return out;
}

std::vector<std::unique_ptr<TraceRunner>> make_stub_runners(int n, int max_len,
                                                            uint64_t seed) {
  std::vector<std::unique_ptr<TraceRunner>> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    out.push_back(std::make_unique<StubRunner>(max_len,
                                               stream_seed(seed, "stub", i)));
  return out;
}

}  // namespace otv::agg
