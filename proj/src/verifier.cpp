#include "otv/verifier.hpp"

#include <cmath>
#include <stdexcept>

namespace otv {

namespace {
constexpr double kNormEps = 1e-6;

Vector rmsnorm_col(const Vector& x, const Vector& gain) {
  const double ir =
      1.0 / std::sqrt(x.squaredNorm() / double(x.size()) + kNormEps);
  return x.cwiseProduct(gain) * ir;
}
}  // namespace

Matrix build_probe_mask(int T) {
  if (T < 0) throw std::invalid_argument("build_probe_mask: negative T");
  return build_probe_mask_offset(T, 0);
}

Matrix build_probe_mask_offset(int T, int offset) {
  Matrix m(offset + T, T + 1);
  for (int i = 0; i < offset + T; ++i)
    for (int j = 0; j < T + 1; ++j)
      m(i, j) = i < offset + j ? 0.0 : kMaskSentinel;
  return m;
}

KVCache truncated(const KVCache& cache, int len) {
  if (len < 0 || len > cache.len)
    throw std::invalid_argument("truncated: bad length");
  KVCache out(static_cast<int>(cache.k.size()));
  out.len = len;
  for (size_t l = 0; l < cache.k.size(); ++l) {
    out.k[l] = cache.k[l].leftCols(len);
    out.v[l] = cache.v[l].leftCols(len);
  }
  return out;
}

double probe_single(const ModelBundle& bundle, const KVCache& cache) {
  if (cache.len == 0) throw std::invalid_argument("probe_single: empty cache");
  const ModelConfig& cfg = bundle.cfg;
  const int d = cfg.model_dim;
  const int dh = cfg.head_dim();
  const int t = cache.len;  // probe sits at the next position

  Vector x = bundle.tot_embed.value + bundle.pos_embed.value.col(t);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const Block& b = bundle.blocks[l];
    Vector n1 = rmsnorm_col(x, b.attn_norm.value.col(0));
    Vector q = b.wq.forward(n1, true);
    Vector k = b.wk.forward(n1, true);
    Vector v = b.wv.forward(n1, true);
    Vector attn(d);
    for (int h = 0; h < cfg.n_heads; ++h) {
      auto kh = cache.k[l].middleRows(h * dh, dh);
      auto vh = cache.v[l].middleRows(h * dh, dh);
      Vector logits(t + 1);
      logits.head(t) = kh.transpose() * q.segment(h * dh, dh);
      logits(t) = k.segment(h * dh, dh).dot(q.segment(h * dh, dh));
      Matrix p = softmax_cols(logits, Matrix::Zero(t + 1, 1), cfg.head_scale());
      attn.segment(h * dh, dh) =
          vh * p.topRows(t) + v.segment(h * dh, dh) * p(t, 0);
    }
    x += b.wo.value * attn;
    Vector n2 = rmsnorm_col(x, b.ffn_norm.value.col(0));
    Vector gate_in = b.ff_in.value * n2;
    Vector silu = gate_in.array() / (1.0 + (-gate_in.array()).exp());
    x += b.ff_out.value * silu.cwiseProduct(b.ff_gate.value * n2);
  }
  Vector fin = rmsnorm_col(x, bundle.final_norm.value.col(0));
  return bundle.head.eval(fin);
}

ConfidenceSeries probe_parallel(const ModelBundle& bundle,
                                const KVCache& cache, int prompt_len) {
  Tape tape;
  Tape::NodeId out = record_probe_parallel(
      tape, const_cast<ModelBundle&>(bundle), cache, prompt_len);
  ConfidenceSeries s;
  s.prompt_len = prompt_len;
  const Matrix& v = tape.val(out);
  s.values.assign(v.data(), v.data() + v.size());
  return s;
}

Tape::NodeId record_probe_parallel(Tape& tape, ModelBundle& bundle,
                                   const KVCache& cache, int prompt_len) {
  const ModelConfig& cfg = bundle.cfg;
  const int dh = cfg.head_dim();
  if (prompt_len < 0 || prompt_len > cache.len)
    throw std::invalid_argument("probe_parallel: prompt_len out of range");
  const int T = cache.len - prompt_len;
  const int np = T + 1;  // probes for prefix lengths prompt_len .. cache.len

  // Probe j gets the positional index of the next (unwritten) slot.
  Matrix pos_block(cfg.model_dim, np);
  for (int j = 0; j < np; ++j)
    pos_block.col(j) = bundle.pos_embed.value.col(prompt_len + j);
  Tape::NodeId x = tape.add(tape.broadcast_col(tape.param(bundle.tot_embed), np),
                            tape.constant(pos_block));

  Matrix ctp_mask = build_probe_mask_offset(T, prompt_len);
  Matrix full_mask(cache.len + 1, np);
  full_mask.topRows(cache.len) = ctp_mask;
  full_mask.bottomRows(1).setZero();  // every probe may attend to itself

  for (Block& b : bundle.blocks) {
    Tape::NodeId n1 = tape.rmsnorm_cols(x, tape.param(b.attn_norm), kNormEps);
    Tape::NodeId q = b.wq.record(tape, n1, true);
    Tape::NodeId k = b.wk.record(tape, n1, true);
    Tape::NodeId v = b.wv.record(tape, n1, true);
    std::vector<Tape::NodeId> heads;
    for (int h = 0; h < cfg.n_heads; ++h) {
      Tape::NodeId qh = tape.rows(q, h * dh, dh);
      Tape::NodeId kh = tape.rows(k, h * dh, dh);
      Tape::NodeId vh = tape.rows(v, h * dh, dh);
      // Cached prefix enters as constants: the base is frozen, so no
      // gradient flows into the reasoning pass.
      Tape::NodeId kc = tape.constant(cache.k[&b - bundle.blocks.data()]
                                          .middleRows(h * dh, dh));
      Tape::NodeId vc = tape.constant(cache.v[&b - bundle.blocks.data()]
                                          .middleRows(h * dh, dh));
      Tape::NodeId a_ctp = tape.matmul(tape.transpose(kc), qh);
      Tape::NodeId a_self = tape.colwise_dot(kh, qh);
      Tape::NodeId stacked = tape.vstack({a_ctp, a_self});
      Tape::NodeId p = tape.softmax_cols(stacked, full_mask, cfg.head_scale());
      Tape::NodeId p_ctp = tape.rows(p, 0, cache.len);
      Tape::NodeId p_self = tape.rows(p, cache.len, 1);
      heads.push_back(tape.add(tape.matmul(vc, p_ctp),
                               tape.scale_cols(vh, p_self)));
    }
    x = tape.add(x, tape.matmul(tape.param(b.wo), tape.vstack(heads)));
    Tape::NodeId n2 = tape.rmsnorm_cols(x, tape.param(b.ffn_norm), kNormEps);
    Tape::NodeId ff = tape.matmul(
        tape.param(b.ff_out),
        tape.cmul(tape.silu(tape.matmul(tape.param(b.ff_in), n2)),
                  tape.matmul(tape.param(b.ff_gate), n2)));
    x = tape.add(x, ff);
  }
  Tape::NodeId fin =
      tape.rmsnorm_cols(x, tape.param(bundle.final_norm), kNormEps);
  return bundle.head.record(tape, fin);
}

}  // namespace otv
