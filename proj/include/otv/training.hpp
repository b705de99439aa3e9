#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "otv/labeling.hpp"
#include "otv/model.hpp"
#include "otv/synthetic.hpp"

namespace otv::train {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  int epochs = 3;
  int samples_per_instance = 8;  // k traces sampled per training problem
  int lora_rank = 16;
  uint64_t seed = 0;
  label::LabelRule rule;
};

// First/second moment state for Adam with standard defaults.
class Adam {
 public:
  Adam(std::vector<Param*> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);
  void step();       // applies grads of trainable params, then zeroes them
  int steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  std::vector<Matrix> m_, v_;
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
};

struct PretrainConfig {
  double learning_rate = 3e-4;
  int batch_size = 16;
  int max_steps = 4000;
  int eval_interval = 50;
  // Training stops once sampled held-out Pass@1 enters this band, leaving
  // a deliberately imperfect reasoner so trace pools mix both labels.
  double pass1_low = 0.30;
  double pass1_high = 0.60;
  int eval_problems = 64;
  uint64_t seed = 0;
};

struct PretrainResult {
  std::vector<double> loss_curve;  // mean batch loss per step
  double final_pass1 = 0.0;
  int steps = 0;
};

// Next-token cross-entropy on gold solutions (gates off throughout).
PretrainResult pretrain_base(ModelBundle& bundle,
                             const std::vector<synth::ProblemSpec>& train_set,
                             const std::vector<synth::ProblemSpec>& heldout,
                             const synth::Vocabulary& vocab,
                             const PretrainConfig& cfg);

using TracePool = std::vector<Trace>;

// k sampled traces per problem, outcome-labeled by the exact checker.
TracePool build_pool(const ModelBundle& bundle,
                     const std::vector<synth::ProblemSpec>& problems,
                     const synth::Vocabulary& vocab, int k, double temperature,
                     uint64_t seed);

struct OtvTrainResult {
  std::vector<double> loss_curve;  // mean loss per optimizer step
};

// Verifier training per the parallel probing procedure. Base weights stay
// frozen; a digest mismatch after any epoch is fatal.
OtvTrainResult train_otv(ModelBundle& bundle, const TracePool& pool,
                         const synth::Vocabulary& vocab,
                         const TrainConfig& cfg);

// Binary checkpoint: magic, version, config block, named parameter
// sections (rank + extents + little-endian f64 payload), base digest.
void save_checkpoint(const ModelBundle& bundle, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

// Line-delimited trace-pool records.
void save_pool(const TracePool& pool, uint64_t base_digest,
               const std::string& path);
TracePool load_pool(const std::string& path, uint64_t* base_digest = nullptr);

}  // namespace otv::train
