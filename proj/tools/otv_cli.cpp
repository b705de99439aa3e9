// Command-line front end: data generation, training, pools, evaluation
// sweeps, schedule runs, theory checks, trajectory export.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "otv/aggregation.hpp"
#include "otv/labeling.hpp"
#include "otv/model.hpp"
#include "otv/rng.hpp"
#include "otv/synthetic.hpp"
#include "otv/theory.hpp"
#include "otv/training.hpp"
#include "otv/verifier.hpp"

namespace fs = std::filesystem;
using namespace otv;

namespace {

constexpr const char* kArtifactVersion = "otv-1.0";

uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for checksum: " + path);
  uint64_t h = 1469598103934665603ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

// Partial outputs go to a temporary name and are renamed on success.
class AtomicFile {
 public:
  explicit AtomicFile(std::string path)
      : final_(std::move(path)), tmp_(final_ + ".tmp"), out_(tmp_) {
    if (!out_) throw std::runtime_error("cannot write " + tmp_);
  }
  std::ofstream& stream() { return out_; }
  void commit() {
    out_.close();
    fs::rename(tmp_, final_);
    committed_ = true;
  }
  ~AtomicFile() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      fs::remove(tmp_, ec);
    }
  }

 private:
  std::string final_, tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

// Resolved settings echoed to <output>.manifest before any work starts.
void write_manifest(const std::string& command, const std::string& out_path,
                    const std::map<std::string, std::string>& settings,
                    const std::vector<std::string>& inputs) {
  AtomicFile f(out_path + ".manifest");
  f.stream() << "command = " << command << "\n"
             << "artifact_version = " << kArtifactVersion << "\n";
  for (const auto& [k, v] : settings) f.stream() << k << " = " << v << "\n";
  for (const auto& in : inputs)
    f.stream() << "input " << in << " checksum = " << std::hex
               << file_checksum(in) << std::dec << "\n";
  f.commit();
}

std::vector<int> extract_answer(const Trace& t, const synth::Vocabulary& vocab) {
  if (!t.finished) return {};
  int last_ans = -1;
  for (int j = 0; j < t.length(); ++j)
    if (t.response[j] == vocab.ans()) last_ans = j;
  if (last_ans < 0) return {};
  std::vector<int> digits;
  for (int j = last_ans + 1; j < t.length(); ++j) {
    if (t.response[j] == vocab.eos()) return digits;
    digits.push_back(t.response[j]);
  }
  return {};
}

ConfidenceSeries score_trace(const ModelBundle& bundle, const Trace& t) {
  std::vector<int> all = t.prompt;
  all.insert(all.end(), t.response.begin(), t.response.end());
  KVCache cache(bundle.cfg.n_layers);
  bundle.forward_full(all, &cache);
  return probe_parallel(bundle, cache, t.prompt_len());
}

// Pool regrouped per problem with verifier (or baseline) scores attached.
std::vector<agg::ProblemTraces> pool_by_problem(
    const train::TracePool& pool, const synth::Vocabulary& vocab,
    const std::vector<double>& scores) {
  std::map<int, agg::ProblemTraces> grouped;
  for (size_t i = 0; i < pool.size(); ++i) {
    auto& pt = grouped[pool[i].problem_id];
    pt.problem_id = pool[i].problem_id;
    pt.correct.push_back(pool[i].y);
    pt.answers.push_back(extract_answer(pool[i], vocab));
    pt.scores.push_back(scores[i]);
  }
  std::vector<agg::ProblemTraces> out;
  for (auto& [_, pt] : grouped) out.push_back(std::move(pt));
  return out;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const std::string& out, int n, int depth, int modulus,
                 uint64_t seed) {
  write_manifest("gen-data", out,
                 {{"n", std::to_string(n)},
                  {"depth", std::to_string(depth)},
                  {"modulus", std::to_string(modulus)},
                  {"seed", std::to_string(seed)}},
                 {});
  synth::Vocabulary vocab;
  vocab.modulus = modulus;
  auto rng = make_rng(seed, "data");
  std::vector<synth::ProblemSpec> problems;
  for (int i = 0; i < n; ++i) {
    auto p = synth::generate_problem(rng, depth, modulus);
    p.id = i;
    problems.push_back(p);
  }
  std::string tmp = out + ".tmp";
  synth::save_dataset(problems, vocab, tmp);
  fs::rename(tmp, out);
  std::cout << "wrote " << n << " problems to " << out << "\n";
  return 0;
}

int cmd_train_base(const std::string& data, const std::string& heldout,
                   const std::string& out, const std::string& curve,
                   train::PretrainConfig pre, int lora_rank, uint64_t seed) {
  write_manifest("train-base", out,
                 {{"data", data},
                  {"heldout", heldout},
                  {"learning_rate", std::to_string(pre.learning_rate)},
                  {"batch_size", std::to_string(pre.batch_size)},
                  {"max_steps", std::to_string(pre.max_steps)},
                  {"pass1_low", std::to_string(pre.pass1_low)},
                  {"pass1_high", std::to_string(pre.pass1_high)},
                  {"lora_rank", std::to_string(lora_rank)},
                  {"seed", std::to_string(seed)}},
                 {data, heldout});
  auto train_set = synth::load_dataset(data);
  auto held = synth::load_dataset(heldout);
  synth::Vocabulary vocab;
  if (!train_set.empty()) vocab.modulus = train_set.front().modulus;
  ModelConfig cfg;
  auto bundle = ModelBundle::init(cfg, lora_rank, stream_seed(seed, "model-init"));
  pre.seed = seed;
  auto res = train::pretrain_base(bundle, train_set, held, vocab, pre);
  std::string tmp = out + ".tmp";
  train::save_checkpoint(bundle, tmp);
  fs::rename(tmp, out);
  if (!curve.empty()) {
    AtomicFile f(curve);
    f.stream() << "step,loss\n";
    for (size_t i = 0; i < res.loss_curve.size(); ++i)
      f.stream() << i + 1 << "," << std::setprecision(10) << res.loss_curve[i]
                 << "\n";
    f.commit();
  }
  std::cout << "pretrained " << res.steps << " steps, held-out Pass@1 "
            << res.final_pass1 << ", checkpoint " << out << "\n";
  return 0;
}

int cmd_build_pool(const std::string& ckpt, const std::string& data,
                   const std::string& out, int k, double temperature,
                   uint64_t seed) {
  write_manifest("build-pool", out,
                 {{"checkpoint", ckpt},
                  {"data", data},
                  {"k", std::to_string(k)},
                  {"temperature", std::to_string(temperature)},
                  {"seed", std::to_string(seed)}},
                 {ckpt, data});
  auto bundle = train::load_checkpoint(ckpt);
  auto problems = synth::load_dataset(data);
  synth::Vocabulary vocab;
  if (!problems.empty()) vocab.modulus = problems.front().modulus;
  auto pool = train::build_pool(bundle, problems, vocab, k, temperature,
                                stream_seed(seed, "pool-build"));
  std::string tmp = out + ".tmp";
  train::save_pool(pool, bundle.base_digest(), tmp);
  fs::rename(tmp, out);
  int correct = 0;
  for (const auto& t : pool) correct += t.y;
  std::cout << "wrote " << pool.size() << " traces (" << k << "/problem) to "
            << out << "; label rate "
            << static_cast<double>(correct) / pool.size() << "\n";
  return 0;
}

int cmd_train_otv(const std::string& ckpt, const std::string& pool_path,
                  const std::string& out, const std::string& curve,
                  train::TrainConfig tc, const std::string& rule,
                  uint64_t seed) {
  write_manifest("train-otv", out,
                 {{"checkpoint", ckpt},
                  {"pool", pool_path},
                  {"rule", rule},
                  {"learning_rate", std::to_string(tc.learning_rate)},
                  {"batch_size", std::to_string(tc.batch_size)},
                  {"epochs", std::to_string(tc.epochs)},
                  {"lora_rank", std::to_string(tc.lora_rank)},
                  {"seed", std::to_string(seed)}},
                 {ckpt, pool_path});
  auto bundle = train::load_checkpoint(ckpt);
  uint64_t pool_digest = 0;
  auto pool = train::load_pool(pool_path, &pool_digest);
  if (pool_digest != bundle.base_digest())
    throw std::runtime_error(
        "pool was sampled from a different base model (digest mismatch)");
  synth::Vocabulary vocab;
  tc.rule = label::parse_rule(rule);
  tc.rule.seed = stream_seed(seed, "labels");
  tc.seed = seed;
  auto res = train::train_otv(bundle, pool, vocab, tc);
  std::string tmp = out + ".tmp";
  train::save_checkpoint(bundle, tmp);
  fs::rename(tmp, out);
  if (!curve.empty()) {
    AtomicFile f(curve);
    f.stream() << "step,loss\n";
    for (size_t i = 0; i < res.loss_curve.size(); ++i)
      f.stream() << i + 1 << "," << std::setprecision(10) << res.loss_curve[i]
                 << "\n";
    f.commit();
  }
  std::cout << "verifier trained (" << res.loss_curve.size()
            << " steps), checkpoint " << out << "\n";
  return 0;
}

int cmd_eval_vote(const std::string& ckpt, const std::string& pool_path,
                  const std::string& out, const std::string& ks_flag,
                  int n_runs, uint64_t seed) {
  write_manifest("eval-vote", out,
                 {{"checkpoint", ckpt},
                  {"pool", pool_path},
                  {"k", ks_flag},
                  {"n_runs", std::to_string(n_runs)},
                  {"seed", std::to_string(seed)}},
                 {ckpt, pool_path});
  auto bundle = train::load_checkpoint(ckpt);
  auto pool = train::load_pool(pool_path);
  synth::Vocabulary vocab;

  std::vector<int> ks;
  {
    std::istringstream in(ks_flag);
    std::string piece;
    while (std::getline(in, piece, ',')) ks.push_back(std::stoi(piece));
  }

  // token-level confidence series, once per trace
  std::vector<std::vector<double>> series(pool.size());
  for (size_t i = 0; i < pool.size(); ++i) {
    auto s = score_trace(bundle, pool[i]);
    series[i].assign(s.values.begin() + 1, s.values.end());
  }

  const std::vector<std::pair<std::string, agg::Window>> windows{
      {"all", agg::Window::All},
      {"last_fraction", agg::Window::LastFraction},
      {"last_tokens", agg::Window::LastTokens}};
  const std::vector<std::pair<std::string, agg::Op>> ops{
      {"mean", agg::Op::Mean}, {"min", agg::Op::Min}, {"max", agg::Op::Max}};
  const std::vector<double> rhos{0.0, 0.25, 0.5, 0.75};

  AtomicFile f(out);
  f.stream() << "k,method,window,op,rho,accuracy\n";
  f.stream() << std::setprecision(10);
  for (int k : ks) {
    {
      // uniform scores; reported once per k
      auto grouped = pool_by_problem(pool, vocab,
                                     std::vector<double>(pool.size(), 1.0));
      f.stream() << k << ",pass_at_k,,,0,"
                 << agg::pass_at_k(grouped, k, n_runs,
                                   stream_seed(seed, "pass", k))
                 << "\n";
      f.stream() << k << ",maj_at_k,,,0,"
                 << agg::maj_at_k(grouped, k, n_runs,
                                  stream_seed(seed, "maj", k))
                 << "\n";
    }
    for (const auto& [wname, w] : windows) {
      for (const auto& [oname, o] : ops) {
        agg::ScoringProtocol proto;
        proto.window = w;
        proto.op = o;
        std::vector<double> scores(pool.size());
        for (size_t i = 0; i < pool.size(); ++i)
          scores[i] = agg::trace_confidence(series[i], proto);
        auto grouped = pool_by_problem(pool, vocab, scores);
        for (double rho : rhos)
          f.stream() << k << ",weighted_vote," << wname << "," << oname << ","
                     << rho << ","
                     << agg::weighted_vote_at_k(
                            grouped, k, rho, n_runs,
                            stream_seed(seed, "wv", k))
                     << "\n";
      }
    }
  }
  f.commit();
  std::cout << "wrote vote sweep to " << out << "\n";
  return 0;
}

int cmd_eval_schedules(const std::string& ckpt, const std::string& data,
                       const std::string& out, int n, bool stub, int stub_len,
                       double temperature, uint64_t seed) {
  write_manifest("eval-schedules", out,
                 {{"checkpoint", stub ? std::string("(stub)") : ckpt},
                  {"data", stub ? std::string("(stub)") : data},
                  {"n", std::to_string(n)},
                  {"stub", stub ? "true" : "false"},
                  {"stub_len", std::to_string(stub_len)},
                  {"temperature", std::to_string(temperature)},
                  {"seed", std::to_string(seed)}},
                 stub ? std::vector<std::string>{}
                      : std::vector<std::string>{ckpt, data});
  const std::vector<std::pair<std::string, agg::Schedule>> schedules{
      {"best_of_n", {agg::ScheduleKind::BestOfN, 0}},
      {"drop", {agg::ScheduleKind::Drop, 10}},
      {"stop", {agg::ScheduleKind::Stop, 600}},
      {"halve", {agg::ScheduleKind::Halve, 300}}};

  AtomicFile f(out);
  f.stream() << "problem_id,schedule,interval,correct,generated_tokens,"
                "verification_calls,surviving_length\n";
  if (stub) {
    for (const auto& [name, sched] : schedules) {
      auto outcome = agg::run_schedule(
          agg::make_stub_runners(n, stub_len, stream_seed(seed, "stub-run")),
          sched);
      f.stream() << "-1," << name << "," << sched.interval << ","
                 << outcome.chosen_correct << ","
                 << outcome.cost.generated_tokens << ","
                 << outcome.cost.verification_calls << ","
                 << outcome.cost.surviving_length << "\n";
    }
  } else {
    auto bundle = train::load_checkpoint(ckpt);
    auto problems = synth::load_dataset(data);
    synth::Vocabulary vocab;
    if (!problems.empty()) vocab.modulus = problems.front().modulus;
    // desk-scale checkpoint spacing for 256-token contexts
    const std::vector<std::pair<std::string, agg::Schedule>> desk{
        {"best_of_n", {agg::ScheduleKind::BestOfN, 0}},
        {"drop", {agg::ScheduleKind::Drop, 4}},
        {"stop", {agg::ScheduleKind::Stop, 64}},
        {"halve", {agg::ScheduleKind::Halve, 32}}};
    for (const auto& p : problems) {
      for (const auto& [name, sched] : desk) {
        auto outcome = agg::run_schedule(
            agg::make_model_runners(bundle, p, vocab, n, temperature,
                                    stream_seed(seed, "schedule", p.id)),
            sched);
        f.stream() << p.id << "," << name << "," << sched.interval << ","
                   << outcome.chosen_correct << ","
                   << outcome.cost.generated_tokens << ","
                   << outcome.cost.verification_calls << ","
                   << outcome.cost.surviving_length << "\n";
      }
    }
  }
  f.commit();
  std::cout << "wrote schedule report to " << out << "\n";
  return 0;
}

int cmd_oracle_check(const std::string& out, int n_tables, uint64_t seed) {
  write_manifest("oracle-check", out,
                 {{"tables", std::to_string(n_tables)},
                  {"seed", std::to_string(seed)}},
                 {});
  AtomicFile f(out);
  f.stream() << "model_seed,state,t,prop1_argmin_gap,prop1_identity_gap,"
                "prop2_gap,prop2_skipped,skip_reason\n";
  f.stream() << std::setprecision(10);
  label::LabelRule lin;
  double worst = 0.0;
  for (int m = 0; m < n_tables; ++m) {
    auto model = theory::random_model(stream_seed(seed, "oracle", m), 4, 8);
    model.validate();
    for (const auto& s : model.states) {
      int min_len = 1 << 30;
      for (const auto& o : s.outcomes) min_len = std::min(min_len, o.length);
      for (int t = 1; t <= min_len; ++t) {
        auto r1 = theory::check_prop1(s, t, lin);
        auto r2 = theory::check_prop2(s, t);
        worst = std::max({worst, r1.argmin_gap, r1.identity_gap,
                          r2.skipped ? 0.0 : r2.gap});
        f.stream() << m << "," << s.name << "," << t << "," << r1.argmin_gap
                   << "," << r1.identity_gap << ","
                   << (r2.skipped ? 0.0 : r2.gap) << ","
                   << (r2.skipped ? 1 : 0) << "," << r2.skip_reason << "\n";
      }
    }
  }
  f.commit();
  std::cout << "oracle report " << out << "; worst gap " << worst << "\n";
  if (worst > 1e-12) throw std::runtime_error("oracle gap above 1e-12");
  return 0;
}

int cmd_export_trajectories(const std::string& ckpt, const std::string& data,
                            const std::string& out, int n_traces,
                            double temperature, uint64_t seed) {
  write_manifest("export-trajectories", out,
                 {{"checkpoint", ckpt},
                  {"data", data},
                  {"n_traces", std::to_string(n_traces)},
                  {"temperature", std::to_string(temperature)},
                  {"seed", std::to_string(seed)}},
                 {ckpt, data});
  auto bundle = train::load_checkpoint(ckpt);
  auto problems = synth::load_dataset(data);
  synth::Vocabulary vocab;
  if (!problems.empty()) vocab.modulus = problems.front().modulus;
  auto pool = train::build_pool(
      bundle, problems, vocab,
      std::max(1, n_traces / std::max<int>(1, problems.size())), temperature,
      stream_seed(seed, "export"));
  if (static_cast<int>(pool.size()) > n_traces) pool.resize(n_traces);

  AtomicFile f(out);
  f.stream() << "trace,problem_id,y,position,confidence\n";
  f.stream() << std::setprecision(10);
  for (size_t i = 0; i < pool.size(); ++i) {
    auto series = score_trace(bundle, pool[i]);
    for (int j = 1; j < series.size(); ++j)
      f.stream() << i << "," << pool[i].problem_id << "," << pool[i].y << ","
                 << j << "," << series.values[j] << "\n";
  }
  f.commit();
  std::cout << "wrote " << pool.size() << " trajectories to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-token verification toolkit for the synthetic "
               "modular-arithmetic reasoning task"};
  app.require_subcommand(1);

  uint64_t seed = 0;
  // key=value file with [subcommand] sections; flags override file values,
  // file values override defaults
  app.set_config("--config", "", "key=value config file");
  app.add_option("--seed", seed, "root seed; all stages derive substreams");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a problem dataset");
  std::string gen_out = "problems.txt";
  int gen_n = 1000, gen_depth = 4, gen_modulus = 10;
  gen->add_option("--out", gen_out, "output dataset path");
  gen->add_option("--n", gen_n, "number of problems");
  gen->add_option("--depth", gen_depth, "chain depth");
  gen->add_option("--modulus", gen_modulus, "arithmetic modulus");

  // train-base
  auto* tb = app.add_subcommand("train-base", "pretrain the reasoning model");
  std::string tb_data = "problems.txt", tb_heldout = "heldout.txt",
              tb_out = "base.ckpt", tb_curve;
  train::PretrainConfig pre;
  int tb_rank = 16;
  tb->add_option("--data", tb_data, "training dataset");
  tb->add_option("--heldout", tb_heldout, "held-out dataset for early stop");
  tb->add_option("--out", tb_out, "checkpoint path");
  tb->add_option("--curve", tb_curve, "loss-curve CSV path");
  tb->add_option("--lr", pre.learning_rate, "learning rate");
  tb->add_option("--batch", pre.batch_size, "batch size");
  tb->add_option("--max-steps", pre.max_steps, "step cap");
  tb->add_option("--eval-interval", pre.eval_interval, "Pass@1 eval spacing");
  tb->add_option("--pass1-low", pre.pass1_low, "early-stop band lower edge");
  tb->add_option("--pass1-high", pre.pass1_high, "early-stop band upper edge");
  tb->add_option("--rank", tb_rank, "adapter rank reserved in the checkpoint");

  // build-pool
  auto* bp = app.add_subcommand("build-pool", "sample a trace pool");
  std::string bp_ckpt = "base.ckpt", bp_data = "problems.txt",
              bp_out = "pool.txt";
  int bp_k = 8;
  double bp_temp = 1.0;
  bp->add_option("--ckpt", bp_ckpt, "model checkpoint");
  bp->add_option("--data", bp_data, "problem dataset");
  bp->add_option("--out", bp_out, "pool path");
  bp->add_option("--k", bp_k, "traces per problem");
  bp->add_option("--temperature", bp_temp, "sampling temperature");

  // train-otv
  auto* to = app.add_subcommand("train-otv", "train the verifier pathway");
  std::string to_ckpt = "base.ckpt", to_pool = "pool.txt", to_out = "otv.ckpt",
              to_curve, to_rule = "linear";
  train::TrainConfig tc;
  to->add_option("--ckpt", to_ckpt, "base checkpoint");
  to->add_option("--pool", to_pool, "training trace pool");
  to->add_option("--out", to_out, "output checkpoint");
  to->add_option("--curve", to_curve, "loss-curve CSV path");
  to->add_option("--rule", to_rule,
                 "labeling rule: linear|constant|sigmoid|noisy|stepwise");
  to->add_option("--lr", tc.learning_rate, "learning rate");
  to->add_option("--batch", tc.batch_size, "batch size");
  to->add_option("--epochs", tc.epochs, "epochs over the pool");
  to->add_option("--rank", tc.lora_rank, "adapter rank");

  // eval-vote
  auto* ev = app.add_subcommand("eval-vote", "voting/filtering metric sweep");
  std::string ev_ckpt = "otv.ckpt", ev_pool = "pool.txt",
              ev_out = "vote.csv", ev_ks = "1,2,4,8,16,32";
  int ev_runs = 64;
  ev->add_option("--ckpt", ev_ckpt, "verifier checkpoint");
  ev->add_option("--pool", ev_pool, "evaluation pool");
  ev->add_option("--out", ev_out, "metrics CSV");
  ev->add_option("--k", ev_ks, "comma-separated k values");
  ev->add_option("--n-runs", ev_runs, "subset resamples per metric");

  // eval-schedules
  auto* es = app.add_subcommand("eval-schedules", "online schedule runs");
  std::string es_ckpt = "otv.ckpt", es_data = "problems.txt",
              es_out = "schedules.csv";
  int es_n = 32, es_stub_len = 3000;
  bool es_stub = false;
  double es_temp = 1.0;
  es->add_option("--ckpt", es_ckpt, "verifier checkpoint");
  es->add_option("--data", es_data, "problem dataset");
  es->add_option("--out", es_out, "metrics CSV");
  es->add_option("--n", es_n, "traces per problem");
  es->add_flag("--stub", es_stub,
               "use fixed-length stub decoding (call-count accounting only)");
  es->add_option("--stub-len", es_stub_len, "stub trace length");
  es->add_option("--temperature", es_temp, "sampling temperature");

  // oracle-check
  auto* oc = app.add_subcommand("oracle-check", "exact theory-oracle report");
  std::string oc_out = "oracle.csv";
  int oc_tables = 25;
  oc->add_option("--out", oc_out, "report CSV");
  oc->add_option("--tables", oc_tables, "number of random trajectory tables");

  // export-trajectories
  auto* ex = app.add_subcommand("export-trajectories",
                                "per-token confidence curves, split by y");
  std::string ex_ckpt = "otv.ckpt", ex_data = "problems.txt",
              ex_out = "trajectories.csv";
  int ex_n = 32;
  double ex_temp = 1.0;
  ex->add_option("--ckpt", ex_ckpt, "verifier checkpoint");
  ex->add_option("--data", ex_data, "problem dataset");
  ex->add_option("--out", ex_out, "trajectory CSV");
  ex->add_option("--n-traces", ex_n, "total traces to export");
  ex->add_option("--temperature", ex_temp, "sampling temperature");

  // Two-phase parse so config-file values land between defaults and flags.
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (gen->parsed())
      return cmd_gen_data(gen_out, gen_n, gen_depth, gen_modulus, seed);
    if (tb->parsed())
      return cmd_train_base(tb_data, tb_heldout, tb_out, tb_curve, pre,
                            tb_rank, seed);
    if (bp->parsed())
      return cmd_build_pool(bp_ckpt, bp_data, bp_out, bp_k, bp_temp, seed);
    if (to->parsed())
      return cmd_train_otv(to_ckpt, to_pool, to_out, to_curve, tc, to_rule,
                           seed);
    if (ev->parsed())
      return cmd_eval_vote(ev_ckpt, ev_pool, ev_out, ev_ks, ev_runs, seed);
    if (es->parsed())
      return cmd_eval_schedules(es_ckpt, es_data, es_out, es_n, es_stub,
                                es_stub_len, es_temp, seed);
    if (oc->parsed()) return cmd_oracle_check(oc_out, oc_tables, seed);
    if (ex->parsed())
      return cmd_export_trajectories(ex_ckpt, ex_data, ex_out, ex_n, ex_temp,
                                     seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
