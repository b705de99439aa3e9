#pragma once

#include <cstdint>
#include <vector>

#include "otv/autograd.hpp"

namespace otv {

struct ModelConfig {
  int n_layers = 4;
  int model_dim = 128;
  int n_heads = 4;
  int vocab_size = 18;
  int max_seq_len = 256;
  int ff_dim = 512;
  int tot_id = 17;  // reserved; never emitted by sampling

  int head_dim() const { return model_dim / n_heads; }
  double head_scale() const;
  void validate() const;
};

// W x, optionally plus the low-rank update R (S x). With the gate off the
// adapter path is skipped entirely, not multiplied by zero.
struct GatedLinear {
  Param w;       // d_out x d_in
  Param lora_r;  // d_out x rank, zero-initialized so adapters start inert
  Param lora_s;  // rank x d_in

  Matrix forward(const Matrix& x, bool gate) const;
  Tape::NodeId record(Tape& tape, Tape::NodeId x, bool gate);
};

struct Block {
  Param attn_norm;
  GatedLinear wq, wk, wv;
  Param wo;
  Param ffn_norm;
  Param ff_in, ff_gate, ff_out;
};

// Three affine layers D -> D -> D/2 -> 1 with tanh between, logistic
// squash at the end, so outputs live strictly inside (0, 1).
struct RegressionHead {
  Param w1, b1, w2, b2, w3, b3;

  double eval(const Vector& h) const;
  Tape::NodeId record(Tape& tape, Tape::NodeId h);  // h: D x n -> 1 x n
};

// Append-only per-layer key/value history for one prefix.
struct KVCache {
  std::vector<Matrix> k, v;  // per layer, D x len (head blocks in rows)
  int len = 0;

  explicit KVCache(int n_layers = 0) : k(n_layers), v(n_layers) {}
  uint64_t digest() const;
};

// One sampled trajectory. y is meaningful only when finished; traces that
// hit max_len are unfinished and labeled incorrect downstream.
struct Trace {
  int problem_id = 0;
  std::vector<int> prompt;
  std::vector<int> response;
  std::vector<double> logprobs;  // per response token, post-temperature
  bool finished = false;
  int y = 0;
  std::vector<double> confidence;  // optional verifier series

  int prompt_len() const { return static_cast<int>(prompt.size()); }
  int length() const { return static_cast<int>(response.size()); }
};

struct ModelBundle {
  ModelConfig cfg;
  Param tok_embed;  // D x V
  Param pos_embed;  // D x (max_seq_len + 1); index t embeds position t
  std::vector<Block> blocks;
  Param final_norm;
  Param unembed;  // V x D
  Param tot_embed;  // D x 1, input embedding of [ToT]
  RegressionHead head;

  static ModelBundle init(const ModelConfig& cfg, int lora_rank,
                          uint64_t seed);

  std::vector<Param*> base_params();
  std::vector<Param*> verifier_params();  // adapters + [ToT] + head
  std::vector<Param*> all_params();
  void set_base_trainable(bool trainable);
  uint64_t base_digest() const;
  int lora_rank() const;

  // Incremental reasoning step (gates off, no recording): appends one
  // K/V column per layer and returns next-token logits.
  Vector forward_reasoning(int token_id, KVCache& cache) const;

  // Full-sequence reasoning pass without recording; fills `cache` with
  // the same K/V the incremental path produces (up to float roundoff).
  Matrix forward_full(const std::vector<int>& tokens, KVCache* cache) const;

  // Full-sequence pass on the tape for next-token training. Returns the
  // logits node (V x n); column j predicts token j+1.
  Tape::NodeId record_reasoning(Tape& tape, const std::vector<int>& tokens);
};

struct SampleOptions {
  double temperature = 1.0;  // 0 selects argmax decoding
  int max_len = 256;
  int eos_id = -1;
};

// Autoregressive sampling from a prompt. [ToT] is masked out of the
// sampling distribution. Deterministic under a fixed seed.
Trace sample_trace(const ModelBundle& bundle, const std::vector<int>& prompt,
                   const SampleOptions& opt, uint64_t seed,
                   KVCache* cache_out = nullptr);

}  // namespace otv
