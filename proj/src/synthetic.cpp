#include "otv/synthetic.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace otv::synth {

namespace {
int apply_op(int a, int op, int b, int m) {
  switch (op) {
    case 0: return (a + b) % m;
    case 1: return ((a - b) % m + m) % m;
    case 2: return (a * b) % m;
    default: throw std::invalid_argument("apply_op: bad operator");
  }
}

void push_digits(std::vector<int>& out, int value, int modulus) {
  // All values live in [0, modulus); with the default modulus 10 every
  // value is a single digit token.
  if (value < 0 || value >= modulus)
    throw std::invalid_argument("push_digits: value out of range");
  out.push_back(value);
}
}  // namespace

ProblemSpec generate_problem(std::mt19937_64& rng, int depth, int modulus) {
  if (depth < 1) throw std::invalid_argument("generate_problem: depth < 1");
  if (modulus < 2) throw std::invalid_argument("generate_problem: modulus < 2");
  std::uniform_int_distribution<int> dig(0, modulus - 1);
  std::uniform_int_distribution<int> op(0, 2);
  ProblemSpec p;
  p.modulus = modulus;
  p.operands.resize(depth + 1);
  p.ops.resize(depth);
  for (int& a : p.operands) a = dig(rng);
  for (int& o : p.ops) o = op(rng);
  int acc = p.operands[0];
  for (int i = 0; i < depth; ++i) {
    acc = apply_op(acc, p.ops[i], p.operands[i + 1], modulus);
    p.intermediates.push_back(acc);
  }
  p.answer = acc;
  return p;
}

Rendered render(const ProblemSpec& p, const Vocabulary& vocab) {
  Rendered r;
  push_digits(r.prompt, p.operands[0], p.modulus);
  for (int i = 0; i < p.depth(); ++i) {
    r.prompt.push_back(vocab.plus() + p.ops[i]);
    push_digits(r.prompt, p.operands[i + 1], p.modulus);
  }
  r.prompt.push_back(vocab.eq());
  for (int v : p.intermediates) {
    push_digits(r.gold, v, p.modulus);
    r.gold.push_back(vocab.step());
  }
  r.gold.push_back(vocab.ans());
  push_digits(r.gold, p.answer, p.modulus);
  r.gold.push_back(vocab.eos());
  return r;
}

int check_answer(const std::vector<int>& response, bool finished,
                 const ProblemSpec& p, const Vocabulary& vocab) {
  if (!finished) return 0;
  int last_ans = -1;
  for (int i = 0; i < static_cast<int>(response.size()); ++i)
    if (response[i] == vocab.ans()) last_ans = i;
  if (last_ans < 0) return 0;
  std::vector<int> digits;
  for (int i = last_ans + 1; i < static_cast<int>(response.size()); ++i) {
    if (response[i] == vocab.eos()) {
      std::vector<int> gold;
      push_digits(gold, p.answer, p.modulus);
      return digits == gold ? 1 : 0;
    }
    if (response[i] >= p.modulus) return 0;  // non-digit before EOS
    digits.push_back(response[i]);
  }
  return 0;  // no EOS after ANS
}

StepIndex step_boundaries(const std::vector<int>& response,
                          const Vocabulary& vocab) {
  StepIndex s;
  s.step_of_token.reserve(response.size());
  int cur = 1;
  for (int tok : response) {
    s.step_of_token.push_back(cur);
    if (tok == vocab.step()) ++cur;
  }
  s.n_steps = cur;
  return s;
}

void save_dataset(const std::vector<ProblemSpec>& problems,
                  const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  for (const auto& p : problems) {
    out << p.id << ' ' << p.modulus << ' ' << p.depth();
    for (int a : p.operands) out << ' ' << a;
    for (int o : p.ops) out << ' ' << o;
    out << ' ' << p.answer << " |";
    Rendered r = render(p, vocab);
    for (int t : r.prompt) out << ' ' << t;
    out << " |";
    for (int t : r.gold) out << ' ' << t;
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_dataset: write failed");
}

std::vector<ProblemSpec> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  std::vector<ProblemSpec> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ProblemSpec p;
    int depth;
    ss >> p.id >> p.modulus >> depth;
    p.operands.resize(depth + 1);
    p.ops.resize(depth);
    for (int& a : p.operands) ss >> a;
    for (int& o : p.ops) ss >> o;
    ss >> p.answer;
    if (!ss) throw std::runtime_error("load_dataset: malformed record");
    int acc = p.operands[0];
    for (int i = 0; i < depth; ++i) {
      acc = apply_op(acc, p.ops[i], p.operands[i + 1], p.modulus);
      p.intermediates.push_back(acc);
    }
    if (acc != p.answer)
      throw std::runtime_error("load_dataset: answer/spec mismatch");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace otv::synth
