#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "otv/digest.hpp"
#include "otv/model.hpp"
#include "otv/rng.hpp"
#include "otv/synthetic.hpp"
#include "otv/verifier.hpp"

using namespace otv;

namespace {
ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.model_dim = 32;
  cfg.n_heads = 4;
  cfg.vocab_size = 18;
  cfg.max_seq_len = 64;
  cfg.ff_dim = 64;
  cfg.tot_id = 17;
  return cfg;
}

// A bundle whose adapters are non-trivial, so the gated path actually
// differs from the base path.
ModelBundle perturbed_bundle(uint64_t seed) {
  auto bundle = ModelBundle::init(small_cfg(), 4, seed);
  auto rng = make_rng(seed, "perturb", 0);
  std::normal_distribution<double> n(0.0, 0.05);
  for (auto& blk : bundle.blocks)
    for (auto* gl : {&blk.wq, &blk.wk, &blk.wv})
      for (int j = 0; j < gl->lora_r.value.cols(); ++j)
        for (int i = 0; i < gl->lora_r.value.rows(); ++i)
          gl->lora_r.value(i, j) = n(rng);
  return bundle;
}

KVCache cache_for(const ModelBundle& bundle, const std::vector<int>& tokens) {
  KVCache cache(bundle.cfg.n_layers);
  bundle.forward_full(tokens, &cache);
  return cache;
}

std::vector<int> chain_tokens(int n, uint64_t seed) {
  auto rng = make_rng(seed, "chain", 0);
  std::uniform_int_distribution<int> d(0, 16);  // never [ToT]
  std::vector<int> out(n);
  for (int& t : out) t = d(rng);
  return out;
}
}  // namespace

TEST_CASE("probe mask matches the documented pattern") {
  // T = 2: 2 x 3, zero iff i < j with 1-based i over cache rows, columns
  // are probes at prefix lengths 0, 1, 2.
  Matrix m = build_probe_mask(2);
  REQUIRE(m.rows() == 2);
  REQUIRE(m.cols() == 3);
  // probe column 0 sees nothing
  CHECK(m(0, 0) == kMaskSentinel);
  CHECK(m(1, 0) == kMaskSentinel);
  // probe column 1 sees only row 0
  CHECK(m(0, 1) == 0.0);
  CHECK(m(1, 1) == kMaskSentinel);
  // probe column 2 sees both rows
  CHECK(m(0, 2) == 0.0);
  CHECK(m(1, 2) == 0.0);

  // T = 0 degenerates to a 0 x 1 matrix
  Matrix z = build_probe_mask(0);
  CHECK(z.rows() == 0);
  CHECK(z.cols() == 1);

  // offset: probe column j sees rows i < offset + j
  Matrix off = build_probe_mask_offset(2, 3);
  REQUIRE(off.rows() == 5);
  REQUIRE(off.cols() == 3);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 5; ++i)
      CHECK(off(i, j) == (i < 3 + j ? 0.0 : kMaskSentinel));
}

TEST_CASE("probe_single rejects an empty cache and leaves the cache alone") {
  auto bundle = perturbed_bundle(1);
  KVCache empty(bundle.cfg.n_layers);
  CHECK_THROWS(probe_single(bundle, empty));

  auto cache = cache_for(bundle, chain_tokens(10, 2));
  uint64_t before = cache.digest();
  double c = probe_single(bundle, cache);
  CHECK(cache.digest() == before);
  CHECK(c > 0.0);
  CHECK(c < 1.0);
  // repeat probes are bit-identical
  CHECK(probe_single(bundle, cache) == c);
}

TEST_CASE("parallel probing equals sequential probing") {
  auto bundle = perturbed_bundle(3);
  for (int prompt_len : {1, 4}) {
    for (int total : {prompt_len, prompt_len + 1, prompt_len + 9}) {
      auto cache = cache_for(bundle, chain_tokens(total, 100 + total));
      auto series = probe_parallel(bundle, cache, prompt_len);
      int T = total - prompt_len;
      REQUIRE(series.size() == T + 1);
      for (int j = 0; j <= T; ++j) {
        KVCache prefix = truncated(cache, prompt_len + j);
        double seq = probe_single(bundle, prefix);
        CHECK(std::abs(series.values[j] - seq) < 1e-9);
      }
    }
  }
}

TEST_CASE("first probe attends only to itself") {
  // With an empty visible cache region the probe's only attention target
  // is its own transient k/v, so the output cannot depend on cache
  // contents beyond... there are none: two different prefixes of length 0
  // are the same probe. Check instead that the prompt_len = cache.len
  // series has exactly one value and equals probing nothing extra.
  auto bundle = perturbed_bundle(4);
  auto tokens = chain_tokens(6, 5);
  auto cache = cache_for(bundle, tokens);
  auto series = probe_parallel(bundle, cache, cache.len);
  REQUIRE(series.size() == 1);
  CHECK(std::abs(series.values[0] - probe_single(bundle, cache)) < 1e-12);
}

TEST_CASE("probing does not touch weights or cache (digest purity)") {
  auto bundle = perturbed_bundle(6);
  auto cache = cache_for(bundle, chain_tokens(12, 7));
  uint64_t w_before = bundle.base_digest();
  uint64_t c_before = cache.digest();
  (void)probe_parallel(bundle, cache, 3);
  (void)probe_single(bundle, cache);
  CHECK(bundle.base_digest() == w_before);
  CHECK(cache.digest() == c_before);
}

TEST_CASE("record_probe_parallel value matches probe_parallel") {
  auto bundle = perturbed_bundle(8);
  auto cache = cache_for(bundle, chain_tokens(9, 9));
  auto series = probe_parallel(bundle, cache, 2);
  Tape tape;
  Matrix vals = tape.val(record_probe_parallel(tape, bundle, cache, 2));
  REQUIRE(vals.cols() == series.size());
  for (int j = 0; j < series.size(); ++j)
    CHECK(vals(0, j) == doctest::Approx(series.values[j]).epsilon(1e-14));
}

TEST_CASE("record_probe_parallel gradients pass finite differences") {
  auto bundle = perturbed_bundle(10);
  auto cache = cache_for(bundle, chain_tokens(7, 11));
  bundle.set_base_trainable(false);
  const int prompt_len = 2;
  const int T = cache.len - prompt_len;

  Matrix target = Matrix::Constant(1, T + 1, 0.8);
  std::vector<bool> mask(T + 1, true);
  mask[0] = false;

  auto build = [&](Tape& tape) {
    auto pred = record_probe_parallel(tape, bundle, cache, prompt_len);
    return tape.mse_masked(pred, target, mask);
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
  CHECK(finite_difference_check(eval, params, 1e-5) < 1e-4);

  // frozen base weights accumulated no gradient
  for (Param* p : bundle.base_params()) CHECK(p->grad.norm() == 0.0);
}

TEST_CASE("confidence depends on the cached prefix") {
  auto bundle = perturbed_bundle(12);
  auto c1 = cache_for(bundle, chain_tokens(10, 21));
  auto c2 = cache_for(bundle, chain_tokens(10, 22));
  CHECK(probe_single(bundle, c1) != probe_single(bundle, c2));
}
