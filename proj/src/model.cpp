#include "otv/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "otv/digest.hpp"
#include "otv/rng.hpp"

namespace otv {

namespace {
constexpr double kNormEps = 1e-6;

Matrix rmsnorm_plain(const Matrix& x, const Vector& gain) {
  Matrix out(x.rows(), x.cols());
  for (int j = 0; j < x.cols(); ++j) {
    const double ir =
        1.0 / std::sqrt(x.col(j).squaredNorm() / double(x.rows()) + kNormEps);
    out.col(j) = x.col(j).cwiseProduct(gain) * ir;
  }
  return out;
}

Matrix random_matrix(int rows, int cols, double std_dev,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, std_dev);
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}
}  // namespace

double ModelConfig::head_scale() const {
  return std::sqrt(static_cast<double>(head_dim()));
}

void ModelConfig::validate() const {
  if (model_dim % n_heads != 0)
    throw std::invalid_argument("model_dim must be divisible by n_heads");
  if (tot_id < 0 || tot_id >= vocab_size)
    throw std::invalid_argument("tot_id outside vocabulary");
}

Matrix GatedLinear::forward(const Matrix& x, bool gate) const {
  if (!gate) return w.value * x;
  return w.value * x + lora_r.value * (lora_s.value * x);
}

Tape::NodeId GatedLinear::record(Tape& tape, Tape::NodeId x, bool gate) {
  Tape::NodeId base = tape.matmul(tape.param(w), x);
  if (!gate) return base;
  Tape::NodeId low = tape.matmul(tape.param(lora_s), x);
  return tape.add(base, tape.matmul(tape.param(lora_r), low));
}

double RegressionHead::eval(const Vector& h) const {
  Vector a = (w1.value * h + b1.value.col(0)).array().tanh();
  Vector b = (w2.value * a + b2.value.col(0)).array().tanh();
  const double z = (w3.value * b)(0, 0) + b3.value(0, 0);
  return 1.0 / (1.0 + std::exp(-z));
}

Tape::NodeId RegressionHead::record(Tape& tape, Tape::NodeId h) {
  const int n = static_cast<int>(tape.val(h).cols());
  auto affine = [&](Param& w, Param& b, Tape::NodeId x) {
    return tape.add(tape.matmul(tape.param(w), x),
                    tape.broadcast_col(tape.param(b), n));
  };
  Tape::NodeId a = tape.tanh(affine(w1, b1, h));
  Tape::NodeId b = tape.tanh(affine(w2, b2, a));
  return tape.sigmoid(affine(w3, b3, b));
}

uint64_t KVCache::digest() const {
  Digest d;
  d.update(&len, sizeof(len));
  for (const auto& m : k) d.update(m);
  for (const auto& m : v) d.update(m);
  return d.value();
}

ModelBundle ModelBundle::init(const ModelConfig& cfg, int lora_rank,
                              uint64_t seed) {
  cfg.validate();
  if (lora_rank < 0 || lora_rank > cfg.model_dim)
    throw std::invalid_argument("bad lora rank");
  auto rng = make_rng(seed, "model-init");
  // Separate stream for adapters: base weights are identical across ranks,
  // so a rank-0 build is the adapter-free reference for the gate-off check.
  auto arng = make_rng(seed, "adapter-init");
  const int d = cfg.model_dim;
  const double ws = 1.0 / std::sqrt(double(d));

  ModelBundle m;
  m.cfg = cfg;
  m.tok_embed = Param(random_matrix(d, cfg.vocab_size, 0.08, rng), "tok_embed");
  m.pos_embed =
      Param(random_matrix(d, cfg.max_seq_len + 1, 0.08, rng), "pos_embed");
  m.blocks.resize(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    Block& b = m.blocks[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    auto gated = [&](const std::string& nm) {
      GatedLinear g;
      g.w = Param(random_matrix(d, d, ws, rng), p + nm);
      g.lora_r = Param(Matrix::Zero(d, lora_rank), p + nm + ".lora_r");
      g.lora_s = Param(random_matrix(lora_rank, d, ws, arng), p + nm + ".lora_s");
      return g;
    };
    b.attn_norm = Param(Matrix::Ones(d, 1), p + "attn_norm");
    b.wq = gated("wq");
    b.wk = gated("wk");
    b.wv = gated("wv");
    b.wo = Param(random_matrix(d, d, ws, rng), p + "wo");
    b.ffn_norm = Param(Matrix::Ones(d, 1), p + "ffn_norm");
    b.ff_in = Param(random_matrix(cfg.ff_dim, d, ws, rng), p + "ff_in");
    b.ff_gate = Param(random_matrix(cfg.ff_dim, d, ws, rng), p + "ff_gate");
    b.ff_out = Param(
        random_matrix(d, cfg.ff_dim, 1.0 / std::sqrt(double(cfg.ff_dim)), rng),
        p + "ff_out");
  }
  m.final_norm = Param(Matrix::Ones(d, 1), "final_norm");
  m.unembed = Param(random_matrix(cfg.vocab_size, d, ws, rng), "unembed");
  m.tot_embed = Param(random_matrix(d, 1, 0.08, rng), "tot_embed");
  m.head.w1 = Param(random_matrix(d, d, ws, rng), "head.w1");
  m.head.b1 = Param(Matrix::Zero(d, 1), "head.b1");
  m.head.w2 = Param(random_matrix(d / 2, d, ws, rng), "head.w2");
  m.head.b2 = Param(Matrix::Zero(d / 2, 1), "head.b2");
  m.head.w3 =
      Param(random_matrix(1, d / 2, 1.0 / std::sqrt(double(d / 2)), rng),
            "head.w3");
  m.head.b3 = Param(Matrix::Zero(1, 1), "head.b3");
  return m;
}

std::vector<Param*> ModelBundle::base_params() {
  std::vector<Param*> out{&tok_embed, &pos_embed, &final_norm, &unembed};
  for (Block& b : blocks) {
    out.push_back(&b.attn_norm);
    out.push_back(&b.wq.w);
    out.push_back(&b.wk.w);
    out.push_back(&b.wv.w);
    out.push_back(&b.wo);
    out.push_back(&b.ffn_norm);
    out.push_back(&b.ff_in);
    out.push_back(&b.ff_gate);
    out.push_back(&b.ff_out);
  }
  return out;
}

std::vector<Param*> ModelBundle::verifier_params() {
  std::vector<Param*> out{&tot_embed, &head.w1, &head.b1, &head.w2,
                          &head.b2,   &head.w3, &head.b3};
  for (Block& b : blocks) {
    out.push_back(&b.wq.lora_r);
    out.push_back(&b.wq.lora_s);
    out.push_back(&b.wk.lora_r);
    out.push_back(&b.wk.lora_s);
    out.push_back(&b.wv.lora_r);
    out.push_back(&b.wv.lora_s);
  }
  return out;
}

std::vector<Param*> ModelBundle::all_params() {
  auto out = base_params();
  auto v = verifier_params();
  out.insert(out.end(), v.begin(), v.end());
  return out;
}

void ModelBundle::set_base_trainable(bool trainable) {
  for (Param* p : base_params()) p->trainable = trainable;
}

uint64_t ModelBundle::base_digest() const {
  Digest d;
  for (Param* p : const_cast<ModelBundle*>(this)->base_params())
    d.update(p->value);
  return d.value();
}

int ModelBundle::lora_rank() const {
  return static_cast<int>(blocks.at(0).wq.lora_r.value.cols());
}

Vector ModelBundle::forward_reasoning(int token_id, KVCache& cache) const {
  if (cache.len >= cfg.max_seq_len)
    throw std::runtime_error("forward_reasoning: cache full");
  if (static_cast<int>(cache.k.size()) != cfg.n_layers) {
    cache.k.assign(cfg.n_layers, Matrix());
    cache.v.assign(cfg.n_layers, Matrix());
  }
  const int d = cfg.model_dim;
  const int dh = cfg.head_dim();
  const int pos = cache.len;
  Vector x = tok_embed.value.col(token_id) + pos_embed.value.col(pos);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const Block& b = blocks[l];
    Vector n1 = rmsnorm_plain(x, b.attn_norm.value.col(0));
    Vector q = b.wq.forward(n1, false);
    Vector k = b.wk.forward(n1, false);
    Vector v = b.wv.forward(n1, false);
    cache.k[l].conservativeResize(d, pos + 1);
    cache.v[l].conservativeResize(d, pos + 1);
    cache.k[l].col(pos) = k;
    cache.v[l].col(pos) = v;
    Vector attn(d);
    for (int h = 0; h < cfg.n_heads; ++h) {
      auto kh = cache.k[l].middleRows(h * dh, dh).leftCols(pos + 1);
      auto vh = cache.v[l].middleRows(h * dh, dh).leftCols(pos + 1);
      Vector logits = kh.transpose() * q.segment(h * dh, dh);
      Matrix mask = Matrix::Zero(pos + 1, 1);
      Matrix p = softmax_cols(logits, mask, cfg.head_scale());
      attn.segment(h * dh, dh) = vh * p.col(0);
    }
    x += b.wo.value * attn;
    Vector n2 = rmsnorm_plain(x, b.ffn_norm.value.col(0));
    Vector gate_in = b.ff_in.value * n2;
    Vector silu = gate_in.array() / (1.0 + (-gate_in.array()).exp());
    x += b.ff_out.value * silu.cwiseProduct(b.ff_gate.value * n2);
  }
  cache.len += 1;
  return unembed.value * rmsnorm_plain(x, final_norm.value.col(0));
}

Matrix ModelBundle::forward_full(const std::vector<int>& tokens,
                                 KVCache* cache) const {
  const int n = static_cast<int>(tokens.size());
  if (n > cfg.max_seq_len) throw std::runtime_error("forward_full: too long");
  const int d = cfg.model_dim;
  const int dh = cfg.head_dim();
  Matrix x(d, n);
  for (int j = 0; j < n; ++j)
    x.col(j) = tok_embed.value.col(tokens[j]) + pos_embed.value.col(j);
  Matrix causal(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) causal(i, j) = i <= j ? 0.0 : kMaskSentinel;
  if (cache) {
    cache->k.assign(cfg.n_layers, Matrix());
    cache->v.assign(cfg.n_layers, Matrix());
    cache->len = n;
  }
  for (int l = 0; l < cfg.n_layers; ++l) {
    const Block& b = blocks[l];
    Matrix n1 = rmsnorm_plain(x, b.attn_norm.value.col(0));
    Matrix q = b.wq.forward(n1, false);
    Matrix k = b.wk.forward(n1, false);
    Matrix v = b.wv.forward(n1, false);
    if (cache) {
      cache->k[l] = k;
      cache->v[l] = v;
    }
    Matrix attn(d, n);
    for (int h = 0; h < cfg.n_heads; ++h) {
      Matrix logits =
          k.middleRows(h * dh, dh).transpose() * q.middleRows(h * dh, dh);
      Matrix p = softmax_cols(logits, causal, cfg.head_scale());
      attn.middleRows(h * dh, dh) = v.middleRows(h * dh, dh) * p;
    }
    x += b.wo.value * attn;
    Matrix n2 = rmsnorm_plain(x, b.ffn_norm.value.col(0));
    Matrix gate_in = b.ff_in.value * n2;
    Matrix silu = (gate_in.array() / (1.0 + (-gate_in.array()).exp())).matrix();
    x += b.ff_out.value * silu.cwiseProduct(b.ff_gate.value * n2);
  }
  return unembed.value * rmsnorm_plain(x, final_norm.value.col(0));
}

Tape::NodeId ModelBundle::record_reasoning(Tape& tape,
                                           const std::vector<int>& tokens) {
  const int n = static_cast<int>(tokens.size());
  if (n > cfg.max_seq_len) throw std::runtime_error("record_reasoning: too long");
  const int d = cfg.model_dim;
  const int dh = cfg.head_dim();

  // Embedding gather as a one-hot matmul keeps the gradient path simple.
  Matrix onehot_tok = Matrix::Zero(cfg.vocab_size, n);
  Matrix onehot_pos = Matrix::Zero(cfg.max_seq_len + 1, n);
  for (int j = 0; j < n; ++j) {
    onehot_tok(tokens[j], j) = 1.0;
    onehot_pos(j, j) = 1.0;
  }
  Tape::NodeId x =
      tape.add(tape.matmul(tape.param(tok_embed), tape.constant(onehot_tok)),
               tape.matmul(tape.param(pos_embed), tape.constant(onehot_pos)));
  Matrix causal(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) causal(i, j) = i <= j ? 0.0 : kMaskSentinel;

  for (Block& b : blocks) {
    Tape::NodeId n1 = tape.rmsnorm_cols(x, tape.param(b.attn_norm), kNormEps);
    Tape::NodeId q = b.wq.record(tape, n1, false);
    Tape::NodeId k = b.wk.record(tape, n1, false);
    Tape::NodeId v = b.wv.record(tape, n1, false);
    std::vector<Tape::NodeId> heads;
    for (int h = 0; h < cfg.n_heads; ++h) {
      Tape::NodeId logits =
          tape.matmul(tape.transpose(tape.rows(k, h * dh, dh)),
                      tape.rows(q, h * dh, dh));
      Tape::NodeId p = tape.softmax_cols(logits, causal, cfg.head_scale());
      heads.push_back(tape.matmul(tape.rows(v, h * dh, dh), p));
    }
    x = tape.add(x, tape.matmul(tape.param(b.wo), tape.vstack(heads)));
    Tape::NodeId n2 = tape.rmsnorm_cols(x, tape.param(b.ffn_norm), kNormEps);
    Tape::NodeId ff = tape.matmul(
        tape.param(b.ff_out),
        tape.cmul(tape.silu(tape.matmul(tape.param(b.ff_in), n2)),
                  tape.matmul(tape.param(b.ff_gate), n2)));
    x = tape.add(x, ff);
  }
  Tape::NodeId fin = tape.rmsnorm_cols(x, tape.param(final_norm), kNormEps);
  return tape.matmul(tape.param(unembed), fin);
}

Trace sample_trace(const ModelBundle& bundle, const std::vector<int>& prompt,
                   const SampleOptions& opt, uint64_t seed,
                   KVCache* cache_out) {
  if (opt.temperature < 0)
    throw std::invalid_argument("sample_trace: negative temperature");
  auto rng = make_rng(seed, "sampling");
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Trace tr;
  tr.prompt = prompt;
  KVCache cache(bundle.cfg.n_layers);
  Vector logits;
  for (int id : prompt) logits = bundle.forward_reasoning(id, cache);

  if (opt.eos_id < 0) throw std::invalid_argument("sample_trace: eos_id unset");
  const int eos = opt.eos_id;
  while (cache.len < opt.max_len) {
    Vector masked = logits;
    masked(bundle.cfg.tot_id) = -std::numeric_limits<double>::infinity();
    int chosen;
    double logprob;
    if (opt.temperature == 0.0) {
      masked.maxCoeff(&chosen);
      logprob = 0.0;
    } else {
      Vector z = masked / opt.temperature;
      const double mx = z.maxCoeff();
      Vector e = (z.array() - mx).exp();
      e(bundle.cfg.tot_id) = 0.0;
      const double s = e.sum();
      double u = unif(rng) * s;
      chosen = 0;
      for (int i = 0; i < e.size(); ++i) {
        u -= e(i);
        if (u <= 0) {
          chosen = i;
          break;
        }
        if (i + 1 == e.size()) chosen = i;
      }
      logprob = std::log(e(chosen) / s);
    }
    tr.response.push_back(chosen);
    tr.logprobs.push_back(logprob);
    if (chosen == eos) {
      tr.finished = true;
      // EOS still enters the cache so probes can see the full response.
      if (cache.len < bundle.cfg.max_seq_len)
        bundle.forward_reasoning(chosen, cache);
      break;
    }
    logits = bundle.forward_reasoning(chosen, cache);
  }
  if (cache_out) *cache_out = std::move(cache);
  return tr;
}

}  // namespace otv
