#include "otv/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "otv/rng.hpp"
#include "otv/verifier.hpp"

namespace otv::train {

Adam::Adam(std::vector<Param*> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (Param* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, t_);
  const double bc2 = 1.0 - std::pow(b2_, t_);
  for (size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    if (p->trainable) {
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * p->grad;
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * p->grad.cwiseProduct(p->grad);
      Matrix mhat = m_[i] / bc1;
      Matrix vhat = v_[i] / bc2;
      p->value -=
          lr_ * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps_).matrix());
    }
    p->zero_grad();
  }
}

namespace {

double sampled_pass1(const ModelBundle& bundle,
                     const std::vector<synth::ProblemSpec>& problems,
                     const synth::Vocabulary& vocab, int n_eval,
                     uint64_t seed) {
  int correct = 0, total = 0;
  SampleOptions opt;
  opt.temperature = 1.0;
  opt.max_len = bundle.cfg.max_seq_len;
  opt.eos_id = vocab.eos();
  for (int i = 0; i < std::min<int>(n_eval, problems.size()); ++i) {
    const auto& p = problems[i];
    auto r = synth::render(p, vocab);
    Trace tr = sample_trace(bundle, r.prompt, opt,
                            stream_seed(seed, "pretrain-eval", i));
    correct += synth::check_answer(tr.response, tr.finished, p, vocab);
    ++total;
  }
  return total ? double(correct) / total : 0.0;
}

}  // namespace

PretrainResult pretrain_base(ModelBundle& bundle,
                             const std::vector<synth::ProblemSpec>& train_set,
                             const std::vector<synth::ProblemSpec>& heldout,
                             const synth::Vocabulary& vocab,
                             const PretrainConfig& cfg) {
  if (train_set.empty()) throw std::invalid_argument("pretrain: empty dataset");
  Adam opt(bundle.base_params(), cfg.learning_rate);
  auto order_rng = make_rng(cfg.seed, "pretrain-order");
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), order_rng);

  PretrainResult res;
  size_t cursor = 0;
  for (int step = 0; step < cfg.max_steps; ++step) {
    Tape tape;
    Tape::NodeId total = tape.constant(Matrix::Zero(1, 1));
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      const auto& prob = train_set[order[cursor++]];
      auto r = synth::render(prob, vocab);
      std::vector<int> tokens = r.prompt;
      tokens.insert(tokens.end(), r.gold.begin(), r.gold.end());
      const int n = static_cast<int>(tokens.size());
      const int P = static_cast<int>(r.prompt.size());
      Tape::NodeId logits = bundle.record_reasoning(tape, tokens);
      std::vector<int> targets(n, 0);
      std::vector<bool> mask(n, false);
      for (int j = 0; j + 1 < n; ++j) {
        targets[j] = tokens[j + 1];
        mask[j] = (j + 1 >= P);  // loss on response tokens only
      }
      Tape::NodeId ce = tape.cross_entropy_cols(logits, targets, mask);
      total = tape.add(total, tape.scale(ce, 1.0 / cfg.batch_size));
    }
    const double loss = tape.val(total)(0, 0);
    if (!std::isfinite(loss))
      throw std::runtime_error("pretrain diverged: loss is not finite");
    res.loss_curve.push_back(loss);
    tape.backward(total);
    opt.step();
    res.steps = step + 1;

    if ((step + 1) % cfg.eval_interval == 0) {
      const double p1 = sampled_pass1(bundle, heldout, vocab,
                                      cfg.eval_problems, cfg.seed);
      res.final_pass1 = p1;
      if (p1 > cfg.pass1_low && p1 < cfg.pass1_high) break;
    }
  }
  if (res.final_pass1 == 0.0)
    res.final_pass1 =
        sampled_pass1(bundle, heldout, vocab, cfg.eval_problems, cfg.seed);
  return res;
}

TracePool build_pool(const ModelBundle& bundle,
                     const std::vector<synth::ProblemSpec>& problems,
                     const synth::Vocabulary& vocab, int k, double temperature,
                     uint64_t seed) {
  if (k < 1) throw std::invalid_argument("build_pool: k must be >= 1");
  TracePool pool;
  pool.reserve(problems.size() * k);
  SampleOptions opt;
  opt.temperature = temperature;
  opt.max_len = bundle.cfg.max_seq_len;
  opt.eos_id = vocab.eos();
  for (const auto& p : problems) {
    auto r = synth::render(p, vocab);
    for (int i = 0; i < k; ++i) {
      Trace tr = sample_trace(
          bundle, r.prompt, opt,
          stream_seed(seed, "pool", uint64_t(p.id) * 1000003ULL + i));
      tr.problem_id = p.id;
      tr.y = synth::check_answer(tr.response, tr.finished, p, vocab);
      pool.push_back(std::move(tr));
    }
  }
  return pool;
}

OtvTrainResult train_otv(ModelBundle& bundle, const TracePool& pool,
                         const synth::Vocabulary& vocab,
                         const TrainConfig& cfg) {
  if (pool.empty()) throw std::invalid_argument("train_otv: empty pool");
  const uint64_t digest0 = bundle.base_digest();
  bundle.set_base_trainable(false);
  Adam opt(bundle.verifier_params(), cfg.learning_rate);

  OtvTrainResult res;
  std::vector<int> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto rng = make_rng(cfg.seed, "otv-order", epoch);
    std::shuffle(order.begin(), order.end(), rng);
    int in_batch = 0;
    double batch_loss = 0.0;
    Tape tape;
    Tape::NodeId total = tape.constant(Matrix::Zero(1, 1));
    auto flush = [&](int count) {
      if (count == 0) return;
      batch_loss = tape.val(total)(0, 0) / count;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train_otv diverged: loss is not finite");
      tape.backward(total);
      opt.step();
      res.loss_curve.push_back(batch_loss);
      tape = Tape();
      total = tape.constant(Matrix::Zero(1, 1));
    };
    for (int idx : order) {
      const Trace& tr = pool[idx];
      const int T = tr.length();
      if (T == 0) continue;
      std::vector<int> tokens = tr.prompt;
      tokens.insert(tokens.end(), tr.response.begin(), tr.response.end());
      KVCache cache(bundle.cfg.n_layers);
      bundle.forward_full(tokens, &cache);

      auto steps = synth::step_boundaries(tr.response, vocab);
      std::vector<double> targets = label::make_series(
          cfg.rule, T, tr.y, steps.step_of_token, steps.n_steps,
          static_cast<uint64_t>(idx));
      Matrix target_row(1, T + 1);
      std::vector<bool> mask(T + 1, true);
      target_row(0, 0) = 0.5;
      mask[0] = false;  // the prompt-only probe carries no response loss
      for (int t = 1; t <= T; ++t) target_row(0, t) = targets[t - 1];

      Tape::NodeId preds =
          record_probe_parallel(tape, bundle, cache, tr.prompt_len());
      total = tape.add(total, tape.mse_masked(preds, target_row, mask));
      if (++in_batch == cfg.batch_size) {
        flush(in_batch);
        in_batch = 0;
      }
    }
    flush(in_batch);
    if (bundle.base_digest() != digest0)
      throw std::runtime_error("train_otv: base weight digest changed");
  }
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoint IO

namespace {
constexpr char kMagic[8] = {'O', 'T', 'V', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& o, uint32_t v) { o.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& o, uint64_t v) { o.write(reinterpret_cast<const char*>(&v), 8); }
uint32_t read_u32(std::istream& i) {
  uint32_t v = 0;
  i.read(reinterpret_cast<char*>(&v), 4);
  if (!i) throw std::runtime_error("checkpoint truncated");
  return v;
}
uint64_t read_u64(std::istream& i) {
  uint64_t v = 0;
  i.read(reinterpret_cast<char*>(&v), 8);
  if (!i) throw std::runtime_error("checkpoint truncated");
  return v;
}
}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, 8);
  write_u32(out, kVersion);
  const ModelConfig& c = bundle.cfg;
  for (int v : {c.n_layers, c.model_dim, c.n_heads, c.vocab_size,
                c.max_seq_len, c.ff_dim, c.tot_id, bundle.lora_rank()})
    write_u32(out, static_cast<uint32_t>(v));
  auto params = const_cast<ModelBundle&>(bundle).all_params();
  write_u32(out, static_cast<uint32_t>(params.size()));
  for (Param* p : params) {
    write_u32(out, static_cast<uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u32(out, 2);  // rank: everything here is a matrix
    write_u64(out, static_cast<uint64_t>(p->value.rows()));
    write_u64(out, static_cast<uint64_t>(p->value.cols()));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(double) * p->value.size()));
  }
  write_u64(out, bundle.base_digest());
  if (!out) throw std::runtime_error("save_checkpoint: write failed");
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint magic mismatch");
  const uint32_t version = read_u32(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint version mismatch: " +
                             std::to_string(version));
  ModelConfig cfg;
  cfg.n_layers = static_cast<int>(read_u32(in));
  cfg.model_dim = static_cast<int>(read_u32(in));
  cfg.n_heads = static_cast<int>(read_u32(in));
  cfg.vocab_size = static_cast<int>(read_u32(in));
  cfg.max_seq_len = static_cast<int>(read_u32(in));
  cfg.ff_dim = static_cast<int>(read_u32(in));
  cfg.tot_id = static_cast<int>(read_u32(in));
  const int rank = static_cast<int>(read_u32(in));
  ModelBundle bundle = ModelBundle::init(cfg, rank, 0);
  auto params = bundle.all_params();
  const uint32_t n_sections = read_u32(in);
  if (n_sections != params.size())
    throw std::runtime_error("checkpoint section count mismatch");
  for (Param* p : params) {
    const uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in || name != p->name)
      throw std::runtime_error("checkpoint section name mismatch: " + name);
    if (read_u32(in) != 2) throw std::runtime_error("checkpoint bad rank");
    const auto rows = static_cast<Eigen::Index>(read_u64(in));
    const auto cols = static_cast<Eigen::Index>(read_u64(in));
    if (rows != p->value.rows() || cols != p->value.cols())
      throw std::runtime_error("checkpoint extents mismatch: " + name);
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(sizeof(double) * p->value.size()));
    if (!in) throw std::runtime_error("checkpoint truncated");
  }
  const uint64_t digest = read_u64(in);
  if (digest != bundle.base_digest())
    throw std::runtime_error("checkpoint digest failure");
  return bundle;
}

// ---------------------------------------------------------------------------
// Pool IO. One trace per line:
//   problem_id prompt_len n_response finished y | prompt | response | logprobs

void save_pool(const TracePool& pool, uint64_t base_digest,
               const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_pool: cannot open " + path);
  out << "# otv-pool v1 digest=" << std::hex << base_digest << std::dec << "\n";
  out << std::setprecision(17);
  for (const Trace& t : pool) {
    out << t.problem_id << ' ' << t.prompt_len() << ' ' << t.length() << ' '
        << (t.finished ? 1 : 0) << ' ' << t.y << " |";
    for (int id : t.prompt) out << ' ' << id;
    out << " |";
    for (int id : t.response) out << ' ' << id;
    out << " |";
    for (double lp : t.logprobs) out << ' ' << lp;
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_pool: write failed");
}

TracePool load_pool(const std::string& path, uint64_t* base_digest) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_pool: cannot open " + path);
  std::string header;
  std::getline(in, header);
  const std::string prefix = "# otv-pool v1 digest=";
  if (header.rfind(prefix, 0) != 0)
    throw std::runtime_error("load_pool: bad header");
  if (base_digest)
    *base_digest = std::stoull(header.substr(prefix.size()), nullptr, 16);
  TracePool pool;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Trace t;
    int prompt_len, n_resp, fin;
    std::string sep;
    ss >> t.problem_id >> prompt_len >> n_resp >> fin >> t.y >> sep;
    if (!ss || sep != "|") throw std::runtime_error("load_pool: bad record");
    t.finished = fin != 0;
    t.prompt.resize(prompt_len);
    for (int& id : t.prompt) ss >> id;
    ss >> sep;
    t.response.resize(n_resp);
    for (int& id : t.response) ss >> id;
    ss >> sep;
    t.logprobs.resize(n_resp);
    for (double& lp : t.logprobs) ss >> lp;
    if (!ss) throw std::runtime_error("load_pool: bad record");
    pool.push_back(std::move(t));
  }
  return pool;
}

}  // namespace otv::train
