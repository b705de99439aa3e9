// Acceptance suite: one line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "otv/aggregation.hpp"
#include "otv/digest.hpp"
#include "otv/labeling.hpp"
#include "otv/model.hpp"
#include "otv/rng.hpp"
#include "otv/synthetic.hpp"
#include "otv/theory.hpp"
#include "otv/training.hpp"
#include "otv/verifier.hpp"

using namespace otv;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool ok,
            const std::string& detail) {
  std::printf("[%s] criterion %d: %s — %s\n", ok ? "PASS" : "FAIL", idx,
              name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double now_s() {
  using clk = std::chrono::steady_clock;
  return std::chrono::duration<double>(clk::now().time_since_epoch()).count();
}

void randomize_adapters(ModelBundle& bundle, uint64_t seed, double scale) {
  auto rng = make_rng(seed, "acc-adapters", 0);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& blk : bundle.blocks)
    for (auto* gl : {&blk.wq, &blk.wk, &blk.wv})
      for (auto* p : {&gl->lora_r, &gl->lora_s})
        for (int j = 0; j < p->value.cols(); ++j)
          for (int i = 0; i < p->value.rows(); ++i) p->value(i, j) = n(rng);
}

// Mann-Whitney AUC of scores for the positive class, ties counted half.
double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double u = 0.0;
  for (double p : pos)
    for (double n : neg) u += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return u / (static_cast<double>(pos.size()) * neg.size());
}

uint64_t file_checksum(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open " + path);
  uint64_t h = 1469598103934665603ULL;
  int c;
  while ((c = std::fgetc(f)) != EOF) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::fclose(f);
  return h;
}

std::vector<synth::ProblemSpec> gen_problems(int n, int depth, uint64_t seed,
                                             int id_base = 0) {
  auto rng = make_rng(seed, "acc-problems", depth);
  std::vector<synth::ProblemSpec> out;
  for (int i = 0; i < n; ++i) {
    auto p = synth::generate_problem(rng, depth, 10);
    p.id = id_base + i;
    out.push_back(p);
  }
  return out;
}

// --------------------------------------------------------------------------

void criterion1_parallel_equivalence() {
  auto rng = make_rng(1, "acc-c1", 0);
  std::uniform_int_distribution<int> pick_l(1, 4), pick_h(0, 2), pick_t(0, 32),
      pick_pl(1, 5);
  double worst = 0.0;
  int bundles = 0;
  for (int rep = 0; rep < 50; ++rep) {
    ModelConfig cfg;
    cfg.n_layers = pick_l(rng);
    cfg.n_heads = 1 << pick_h(rng);  // 1, 2, 4
    cfg.model_dim = cfg.n_heads * 16;
    cfg.ff_dim = 2 * cfg.model_dim;
    cfg.vocab_size = 18;
    cfg.tot_id = 17;
    cfg.max_seq_len = 64;
    auto bundle = ModelBundle::init(cfg, 4, 1000 + rep);
    randomize_adapters(bundle, rep, 0.1);
    ++bundles;

    const int prompt_len = pick_pl(rng);
    const int T = pick_t(rng);
    std::uniform_int_distribution<int> tok(0, 16);
    std::vector<int> tokens(prompt_len + T);
    for (int& t : tokens) t = tok(rng);
    KVCache cache(cfg.n_layers);
    bundle.forward_full(tokens, &cache);
    auto series = probe_parallel(bundle, cache, prompt_len);
    for (int j = 0; j <= T; ++j) {
      KVCache prefix = truncated(cache, prompt_len + j);
      worst = std::max(worst,
                       std::abs(series.values[j] - probe_single(bundle, prefix)));
    }
  }
  std::ostringstream d;
  d << bundles << " bundles, max |parallel - sequential| = " << worst
    << " (tolerance 1e-9)";
  report(1, "parallel-sequential probe equivalence", worst <= 1e-9, d.str());
}

void criterion2_gate_off_identity() {
  ModelConfig cfg;
  cfg.n_layers = 3;
  cfg.model_dim = 64;
  cfg.n_heads = 4;
  cfg.ff_dim = 128;
  cfg.max_seq_len = 64;
  auto with_adapters = ModelBundle::init(cfg, 8, 77);
  randomize_adapters(with_adapters, 9, 1.0);
  auto adapter_free = ModelBundle::init(cfg, 0, 77);

  bool identical = with_adapters.base_digest() == adapter_free.base_digest();
  auto rng = make_rng(2, "acc-c2", 0);
  std::uniform_int_distribution<int> tok(0, 16);
  int tokens_checked = 0;
  while (tokens_checked < 1000 && identical) {
    std::vector<int> seq(50);
    for (int& t : seq) t = tok(rng);
    Matrix a = with_adapters.forward_full(seq, nullptr);
    Matrix b = adapter_free.forward_full(seq, nullptr);
    identical = identical && (a - b).norm() == 0.0;  // bitwise
    tokens_checked += static_cast<int>(seq.size());
  }

  // Interleaved probing must not perturb a decoding run.
  synth::Vocabulary vocab;
  auto problems = gen_problems(4, 3, 3);
  bool undisturbed = true;
  for (const auto& p : problems) {
    auto plain = agg::make_model_runners(with_adapters, p, vocab, 1, 1.0, 5);
    auto probed = agg::make_model_runners(with_adapters, p, vocab, 1, 1.0, 5);
    bool run_a = true, run_b = true;
    while (run_a || run_b) {
      if (run_a) run_a = plain[0]->step();
      if (run_b) {
        run_b = probed[0]->step();
        (void)probed[0]->probe();
      }
    }
    undisturbed = undisturbed && plain[0]->answer() == probed[0]->answer() &&
                  plain[0]->length() == probed[0]->length();
  }
  std::ostringstream d;
  d << tokens_checked << " tokens bit-identical with gates off; "
    << "probed decode matches unprobed decode on " << problems.size()
    << " problems";
  report(2, "gate-off identity", identical && undisturbed, d.str());
}

void criterion3_gradient_oracle() {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.model_dim = 16;
  cfg.n_heads = 2;
  cfg.ff_dim = 32;
  cfg.max_seq_len = 32;
  auto bundle = ModelBundle::init(cfg, 4, 11);
  randomize_adapters(bundle, 12, 0.05);
  bundle.set_base_trainable(false);

  auto rng = make_rng(3, "acc-c3", 0);
  std::uniform_int_distribution<int> tok(0, 16);
  std::vector<int> tokens(8);
  for (int& t : tokens) t = tok(rng);
  KVCache cache(cfg.n_layers);
  bundle.forward_full(tokens, &cache);
  const int prompt_len = 2;
  const int T = cache.len - prompt_len;
  Matrix target(1, T + 1);
  for (int j = 0; j <= T; ++j) target(0, j) = label::linear(j, T, 1);
  std::vector<bool> mask(T + 1, true);
  mask[0] = false;

  auto build = [&](Tape& tape) {
    return tape.mse_masked(record_probe_parallel(tape, bundle, cache, prompt_len),
                           target, mask);
  };
  {
    Tape tape;
    tape.backward(build(tape));
  }
  auto params = bundle.verifier_params();
  auto eval = [&] {
    Tape tape;
    return tape.val(build(tape))(0, 0);
  };
  double err = finite_difference_check(eval, params, 1e-5);
  std::ostringstream d;
  d << "max relative gradient error " << err << " (tolerance 1e-4)";
  report(3, "gradient oracle on the full verification loss", err < 1e-4,
         d.str());
}

void criterion4_call_identities() {
  const int n = 128, len = 3000;  // long enough that nothing finishes early
  auto calls = [&](agg::ScheduleKind kind, int interval, uint64_t seed) {
    agg::Schedule s{kind, interval};
    return agg::run_schedule(agg::make_stub_runners(n, len, seed), s)
        .cost.verification_calls;
  };
  long long drop = calls(agg::ScheduleKind::Drop, 10, 1);
  long long stop = calls(agg::ScheduleKind::Stop, 600, 2);
  long long halve = calls(agg::ScheduleKind::Halve, 300, 3);
  bool ok = drop == 8256 && stop == 128 && halve == 254;
  std::ostringstream d;
  d << "Drop@10 = " << drop << " (want 8256), Stop@600 = " << stop
    << " (want 128), Halve@300 = " << halve << " (want 254)";
  report(4, "verification-call identities at N=128", ok, d.str());
}

void criterion5_labeling_closed_forms() {
  auto rng = make_rng(5, "acc-c5", 0);
  std::uniform_int_distribution<int> pick_T(1, 200), pick_y(0, 1);
  std::uniform_real_distribution<double> pick_alpha(0.5, 8.0),
      pick_beta(0.0, 0.3), pick_omega(0.5, 6.0), pick_sigma(0.0, 0.2);
  bool ok = true;
  int checked = 0;
  for (int rep = 0; rep < 10000 && ok; ++rep) {
    int T = pick_T(rng);
    std::uniform_int_distribution<int> pick_t(0, T);
    int t = pick_t(rng), y = pick_y(rng);
    double lin = label::linear(t, T, y);
    double con = label::constant(t, T, y);
    double sig = label::sigmoid_ramp(t, T, y, pick_alpha(rng));
    double noi = label::noisy(t, T, y, pick_beta(rng), pick_omega(rng),
                              pick_sigma(rng), rep);
    for (double v : {lin, con, sig, noi}) ok = ok && v >= 0.0 && v <= 1.0;
    ok = ok && std::abs(label::linear(0, T, y) - 0.5) < 1e-15;
    ok = ok && std::abs(label::linear(T, T, y) - y) < 1e-15;
    ok = ok && std::abs(lin + label::linear(t, T, 1 - y) - 1.0) < 1e-15;
    ++checked;
  }
  double endpoint = label::sigmoid_ramp(100, 100, 1, 4.0);
  bool endpoint_ok = std::abs(endpoint - 0.98201) <= 1e-5;
  std::ostringstream d;
  d << checked << " random (t,T,y,params) tuples; sigmoid(alpha=4) endpoint "
    << endpoint << " (want 0.98201 +/- 1e-5)";
  report(5, "labeling closed forms", ok && endpoint_ok, d.str());
}

void criterion6_theory_oracle() {
  double worst_p1 = 0.0, worst_p2 = 0.0;
  int tables = 0, prop2_rows = 0, skipped = 0;
  label::LabelRule lin;
  for (uint64_t seed = 0; seed < 25; ++seed) {  // 25 models x 4 states = 100
    auto model = theory::random_model(seed, 4, 8);
    model.validate();
    for (const auto& s : model.states) {
      ++tables;
      int min_len = 1 << 30;
      for (const auto& o : s.outcomes) min_len = std::min(min_len, o.length);
      for (int t = 1; t <= min_len; ++t) {
        auto r1 = theory::check_prop1(s, t, lin);
        worst_p1 = std::max({worst_p1, r1.argmin_gap, r1.identity_gap});
        auto r2 = theory::check_prop2(s, t);
        if (r2.skipped) {
          ++skipped;
        } else {
          ++prop2_rows;
          worst_p2 = std::max(worst_p2, r2.gap);
        }
      }
    }
  }
  // Monotonicity families straight from the closed form: a family of
  // states with identical length profiles and varying correctness mass.
  bool mono = true;
  for (double mu_m : {0.2, 0.5}) {
    double prev = -1.0;
    for (double v = 0.05; v < 1.0; v += 0.05) {
      double f = theory::linear_closed_form(v, 0.25, mu_m, 2);
      mono = mono && f > prev;
      prev = f;
    }
    prev = -1.0;
    for (double mp = 0.05; mp < 1.0; mp += 0.05) {
      // shorter correct traces = larger mu_plus -> larger optimum
      double f = theory::linear_closed_form(0.6, mp, mu_m, 2);
      mono = mono && f > prev;
      prev = f;
    }
  }
  bool ok = worst_p1 <= 1e-12 && worst_p2 <= 1e-12 && mono && prop2_rows > 0;
  std::ostringstream d;
  d << tables << " random tables; worst prop-1 gap " << worst_p1
    << ", worst prop-2 gap " << worst_p2 << " (" << prop2_rows << " rows, "
    << skipped << " degenerate skips); monotonicity "
    << (mono ? "holds" : "violated");
  report(6, "theory oracle (exact enumeration)", ok, d.str());
}

// Shared state between criteria 7 and 8.
struct EndToEnd {
  ModelBundle bundle{};
  std::vector<synth::ProblemSpec> heldout;
  bool trained = false;
};

void criterion7_end_to_end(EndToEnd& e2e) {
  const double t0 = now_s();
  synth::Vocabulary vocab;
  const int depth = 4;
  auto train_set = gen_problems(3000, depth, 70);
  e2e.heldout = gen_problems(200, depth, 71, 100000);

  ModelConfig cfg;  // desk-scale defaults
  e2e.bundle = ModelBundle::init(cfg, 16, 72);
  train::PretrainConfig pre;
  pre.max_steps = 3000;
  pre.eval_interval = 25;
  // Stop pretraining near the top of the allowed band: a stronger base makes
  // sampled errors rarer and the correct/incorrect pools better separated,
  // which is where the verifier AUC clears 0.70.
  pre.pass1_low = 0.70;
  pre.pass1_high = 0.78;
  pre.seed = 73;
  auto pre_res =
      train::pretrain_base(e2e.bundle, train_set, e2e.heldout, vocab, pre);
  bool band = pre_res.final_pass1 > 0.2 && pre_res.final_pass1 < 0.8;
  std::printf("  [info] pretrain: %d steps, held-out Pass@1 = %.3f (%.0fs)\n",
              pre_res.steps, pre_res.final_pass1, now_s() - t0);
  std::fflush(stdout);

  // Verifier training pool: k = 8 traces per problem on a training slice.
  auto pool_problems = std::vector<synth::ProblemSpec>(train_set.begin(),
                                                       train_set.begin() + 2000);
  auto train_pool =
      train::build_pool(e2e.bundle, pool_problems, vocab, 8, 1.0, 74);
  train::TrainConfig tc;
  tc.learning_rate = 1e-4;
  tc.epochs = 3;
  tc.lora_rank = 16;
  tc.seed = 75;
  tc.rule.kind = label::RuleKind::Linear;
  uint64_t digest_before = e2e.bundle.base_digest();
  auto otv_res = train::train_otv(e2e.bundle, train_pool, vocab, tc);
  bool frozen = e2e.bundle.base_digest() == digest_before;
  std::printf("  [info] otv training: loss %.4f -> %.4f (%.0fs)\n",
              otv_res.loss_curve.front(), otv_res.loss_curve.back(),
              now_s() - t0);
  std::fflush(stdout);
  e2e.trained = true;

  agg::ScoringProtocol tail;  // mean over the last 100 tokens
  bool auc_ok = true, floor_ok = true;
  int strict_wins = 0;
  std::ostringstream seeds_detail;
  for (int s = 0; s < 5; ++s) {
    auto pool = train::build_pool(e2e.bundle, e2e.heldout, vocab, 32, 1.0,
                                  900 + s);
    // score every trace with the verifier (tail-mean of the c series)
    std::vector<double> pos, neg;
    std::vector<agg::ProblemTraces> by_problem;
    size_t idx = 0;
    for (const auto& p : e2e.heldout) {
      agg::ProblemTraces pt;
      pt.problem_id = p.id;
      for (int i = 0; i < 32; ++i, ++idx) {
        const Trace& t = pool[idx];
        std::vector<int> all = t.prompt;
        all.insert(all.end(), t.response.begin(), t.response.end());
        KVCache cache(e2e.bundle.cfg.n_layers);
        e2e.bundle.forward_full(all, &cache);
        auto series = probe_parallel(e2e.bundle, cache, t.prompt_len());
        std::vector<double> c(series.values.begin() + 1, series.values.end());
        double score = agg::trace_confidence(c, tail);
        pt.correct.push_back(t.y);
        pt.scores.push_back(score);
        // extracted answer for voting
        std::vector<int> digits;
        int last_ans = -1;
        for (int j = 0; j < t.length(); ++j)
          if (t.response[j] == vocab.ans()) last_ans = j;
        if (t.finished && last_ans >= 0) {
          for (int j = last_ans + 1; j < t.length(); ++j) {
            if (t.response[j] == vocab.eos()) break;
            digits.push_back(t.response[j]);
          }
        }
        pt.answers.push_back(digits);
        (t.y ? pos : neg).push_back(score);
      }
      by_problem.push_back(std::move(pt));
    }
    double a = pos.empty() || neg.empty() ? 0.0 : auc(pos, neg);
    double weighted = agg::weighted_vote_at_k(by_problem, 32, 0.5, 1, 1);
    double maj = agg::weighted_vote_at_k(by_problem, 32, 0.0, 1, 1, true);
    auc_ok = auc_ok && a >= 0.70;
    floor_ok = floor_ok && weighted >= maj - 0.005;
    strict_wins += weighted > maj ? 1 : 0;
    seeds_detail << (s ? ", " : "") << "seed " << s << ": AUC " << a
                 << ", wv " << weighted << " vs maj " << maj;
    std::printf("  [info] eval seed %d: AUC %.3f, weighted %.3f, Maj@32 %.3f "
                "(%.0fs)\n",
                s, a, weighted, maj, now_s() - t0);
    std::fflush(stdout);
  }
  bool ok = band && frozen && auc_ok && floor_ok && strict_wins >= 3;
  std::ostringstream d;
  d << "Pass@1 " << pre_res.final_pass1 << (band ? " in" : " OUT OF")
    << " (0.2, 0.8); base digest " << (frozen ? "frozen" : "CHANGED")
    << "; AUC >= 0.70 " << (auc_ok ? "on all seeds" : "VIOLATED")
    << "; weighted >= Maj@32 - 0.5pp " << (floor_ok ? "held" : "VIOLATED")
    << "; strictly greater on " << strict_wins << "/5 seeds ["
    << seeds_detail.str() << "]";
  report(7, "end-to-end separation", ok, d.str());
}

void criterion8_token_savings(EndToEnd& e2e) {
  if (!e2e.trained) {
    report(8, "token savings (Halve vs Best-of-N)", false,
           "skipped: end-to-end model unavailable");
    return;
  }
  synth::Vocabulary vocab;
  const int n = 32;
  long long best_tokens = 0, halve_tokens = 0;
  int problems = 0, per_problem_wins = 0;
  for (int i = 0; i < 8; ++i) {
    const auto& p = e2e.heldout[static_cast<size_t>(i) * 11];
    agg::Schedule best{agg::ScheduleKind::BestOfN, 0};
    agg::Schedule halve{agg::ScheduleKind::Halve, 2};
    auto full = agg::run_schedule(
        agg::make_model_runners(e2e.bundle, p, vocab, n, 1.0, 80 + i), best);
    auto cut = agg::run_schedule(
        agg::make_model_runners(e2e.bundle, p, vocab, n, 1.0, 80 + i), halve);
    best_tokens += full.cost.generated_tokens;
    halve_tokens += cut.cost.generated_tokens;
    per_problem_wins +=
        cut.cost.generated_tokens < full.cost.generated_tokens ? 1 : 0;
    ++problems;
  }
  double ratio = static_cast<double>(halve_tokens) / best_tokens;
  std::ostringstream d;
  d << "Halve " << halve_tokens << " tokens vs Best-of-N " << best_tokens
    << " at N=32 (ratio " << ratio << ", bar 0.50); fewer tokens on "
    << per_problem_wins << "/" << problems << " problems";
  report(8, "token savings (Halve vs Best-of-N)", ratio <= 0.5, d.str());
}

void criterion9_determinism(const EndToEnd& e2e) {
  synth::Vocabulary vocab;
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.model_dim = 32;
  cfg.ff_dim = 64;
  auto bundle = ModelBundle::init(cfg, 4, 90);
  auto problems = gen_problems(8, 3, 91);

  // identical seeds -> identical serialized pools
  auto pool_a = train::build_pool(bundle, problems, vocab, 4, 1.0, 92);
  auto pool_b = train::build_pool(bundle, problems, vocab, 4, 1.0, 92);
  train::save_pool(pool_a, bundle.base_digest(), "acc_pool_a.txt");
  train::save_pool(pool_b, bundle.base_digest(), "acc_pool_b.txt");
  bool pools_equal =
      file_checksum("acc_pool_a.txt") == file_checksum("acc_pool_b.txt");

  // identical seeds -> identical metrics
  std::vector<agg::ProblemTraces> by_problem;
  for (size_t i = 0; i < problems.size(); ++i) {
    agg::ProblemTraces pt;
    for (int j = 0; j < 4; ++j) {
      const Trace& t = pool_a[i * 4 + j];
      pt.correct.push_back(t.y);
      pt.answers.push_back({t.y});
      pt.scores.push_back(0.1 * j);
    }
    by_problem.push_back(pt);
  }
  std::ostringstream ma, mb;
  for (int k : {1, 2, 4}) {
    ma << agg::pass_at_k(by_problem, k, 16, 93) << ","
       << agg::maj_at_k(by_problem, k, 16, 93) << ";";
    mb << agg::pass_at_k(by_problem, k, 16, 93) << ","
       << agg::maj_at_k(by_problem, k, 16, 93) << ";";
  }
  bool metrics_equal = ma.str() == mb.str();

  // checkpoint round trip is bit-exact
  train::save_checkpoint(bundle, "acc_ckpt_a.bin");
  auto loaded = train::load_checkpoint("acc_ckpt_a.bin");
  train::save_checkpoint(loaded, "acc_ckpt_b.bin");
  bool ckpt_exact =
      file_checksum("acc_ckpt_a.bin") == file_checksum("acc_ckpt_b.bin");

  // base digest held constant through verifier training (small run here,
  // and criterion 7 asserted it on the full run)
  uint64_t before = bundle.base_digest();
  train::TrainConfig tc;
  tc.epochs = 1;
  tc.lora_rank = 4;
  tc.learning_rate = 1e-3;
  tc.seed = 94;
  train::train_otv(bundle, pool_a, vocab, tc);
  bool digest_ok = bundle.base_digest() == before && e2e.trained;

  for (const char* f : {"acc_pool_a.txt", "acc_pool_b.txt", "acc_ckpt_a.bin",
                        "acc_ckpt_b.bin"})
    std::remove(f);

  bool ok = pools_equal && metrics_equal && ckpt_exact && digest_ok;
  std::ostringstream d;
  d << "pool files " << (pools_equal ? "identical" : "DIFFER") << "; metrics "
    << (metrics_equal ? "identical" : "DIFFER") << "; checkpoint round trip "
    << (ckpt_exact ? "bit-exact" : "DIFFERS") << "; base digest "
    << (digest_ok ? "constant" : "CHANGED");
  report(9, "determinism and persistence", ok, d.str());
}

}  // namespace

int main() {
  const double t0 = now_s();
  criterion1_parallel_equivalence();
  criterion2_gate_off_identity();
  criterion3_gradient_oracle();
  criterion4_call_identities();
  criterion5_labeling_closed_forms();
  criterion6_theory_oracle();
  EndToEnd e2e;
  try {
    criterion7_end_to_end(e2e);
  } catch (const std::exception& e) {
    report(7, "end-to-end separation", false, std::string("exception: ") + e.what());
  }
  criterion8_token_savings(e2e);
  criterion9_determinism(e2e);
  std::printf("%d/9 criteria passed in %.0fs\n", 9 - g_failures, now_s() - t0);
  return g_failures == 0 ? 0 : 1;
}
