#pragma once

#include <vector>

#include "otv/model.hpp"

namespace otv {

// Verifier confidences for prefix lengths prompt_len + 0 .. prompt_len + T.
struct ConfidenceSeries {
  int prompt_len = 0;
  std::vector<double> values;  // values[j] = c for prefix length prompt_len + j

  int size() const { return static_cast<int>(values.size()); }
};

// Spec mask: T x (T+1), zero where i < j (1-based), sentinel elsewhere.
// Probe column j sees cache rows 1..j-1.
Matrix build_probe_mask(int T);

// Cache-to-probe mask with a prompt offset: (offset + T) x (T+1), probe
// column j (0-based) sees cache rows i < offset + j.
Matrix build_probe_mask_offset(int T, int offset);

// One-token verification of the prefix held in `cache`. Gates on at every
// adapter; the probe's k/v are transient, the cache is not mutated.
double probe_single(const ModelBundle& bundle, const KVCache& cache);

// Copy of the first `len` cache entries (for probing shorter prefixes).
KVCache truncated(const KVCache& cache, int len);

// Single-pass parallel probing over the response region of a cached
// trace: T + 1 probes for prefix lengths prompt_len .. cache.len.
// Mathematically equivalent to T + 1 probe_single calls.
ConfidenceSeries probe_parallel(const ModelBundle& bundle,
                                const KVCache& cache, int prompt_len);

// Tape-recorded variant used for training. Returns the 1 x (T+1) node of
// squashed confidences; cached K/V enter the graph as constants.
Tape::NodeId record_probe_parallel(Tape& tape, ModelBundle& bundle,
                                   const KVCache& cache, int prompt_len);

}  // namespace otv
