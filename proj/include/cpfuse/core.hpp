#pragma once

// Core value types shared by every module: vocabulary, normalized
// log-probability distributions, decode state and per-step traces.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace cpfuse {

using TokenId = int;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct DegenerateDistribution : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VocabMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// log(sum(exp(v))) with the max-shift trick; -inf entries contribute 0.
inline double log_sum_exp(const std::vector<double>& v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) {
    if (x != kNegInf) s += std::exp(x - m);
  }
  return m + std::log(s);
}

class Vocab {
 public:
  Vocab(std::vector<std::string> tokens, int eos_id)
      : tokens_(std::move(tokens)), eos_id_(eos_id) {
    if (tokens_.empty()) throw ContractViolation("Vocab: empty token list");
    if (eos_id_ < 0 || eos_id_ >= static_cast<int>(tokens_.size()))
      throw ContractViolation("Vocab: eos_id out of range");
    std::unordered_set<std::string> seen;
    for (const auto& t : tokens_) {
      if (!seen.insert(t).second)
        throw ContractViolation("Vocab: duplicate token '" + t + "'");
    }
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  int eos_id() const { return eos_id_; }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // -1 if absent
  TokenId find(const std::string& tok) const {
    auto it = std::find(tokens_.begin(), tokens_.end(), tok);
    return it == tokens_.end() ? -1 : static_cast<TokenId>(it - tokens_.begin());
  }

  bool operator==(const Vocab& o) const {
    return tokens_ == o.tokens_ && eos_id_ == o.eos_id_;
  }

 private:
  std::vector<std::string> tokens_;
  int eos_id_;
};

// Normalized natural-log probability vector. Entries may be -inf.
class LogDist {
 public:
  explicit LogDist(std::vector<double> logp) : logp_(std::move(logp)) {
    double lse = log_sum_exp(logp_);
    if (lse == kNegInf)
      throw DegenerateDistribution("LogDist: all entries are -inf");
    if (std::abs(lse) > 1e-9)
      throw ContractViolation("LogDist: not normalized (lse = " +
                              std::to_string(lse) + ")");
    for (double& x : logp_) {
      if (x > 1e-12) throw ContractViolation("LogDist: entry above zero");
      if (x > 0.0) x = 0.0;
    }
  }

  int size() const { return static_cast<int>(logp_.size()); }
  double operator[](int i) const { return logp_[i]; }
  const std::vector<double>& values() const { return logp_; }

  double prob(int i) const {
    return logp_[i] == kNegInf ? 0.0 : std::exp(logp_[i]);
  }

  TokenId argmax() const {
    TokenId best = 0;
    for (int i = 1; i < size(); ++i)
      if (logp_[i] > logp_[best]) best = i;
    return best;  // ties keep the lowest id
  }

 private:
  std::vector<double> logp_;
};

// Shift raw logits by -lse so they form a valid LogDist. -inf stays -inf.
inline LogDist normalize(const std::vector<double>& raw_logits) {
  double lse = log_sum_exp(raw_logits);
  if (lse == kNegInf)
    throw DegenerateDistribution("normalize: no finite entry");
  std::vector<double> out(raw_logits.size());
  for (size_t i = 0; i < raw_logits.size(); ++i)
    out[i] = raw_logits[i] == kNegInf ? kNegInf : raw_logits[i] - lse;
  return LogDist(std::move(out));
}

// Decode history plus cumulative log-probabilities of the fused model and
// both base models.
struct SequenceState {
  std::vector<TokenId> prompt;
  std::vector<TokenId> emitted;
  double cum_self = 0.0;
  double cum_base1 = 0.0;
  double cum_base2 = 0.0;
};

inline SequenceState advance(const SequenceState& state, TokenId token,
                             double logp_self, double logp_b1,
                             double logp_b2) {
  if (logp_self > 0.0 || logp_b1 > 0.0 || logp_b2 > 0.0)
    throw ContractViolation("advance: positive log-probability");
  SequenceState next = state;
  next.emitted.push_back(token);
  next.cum_self += logp_self;
  next.cum_base1 += logp_b1;
  next.cum_base2 += logp_b2;
  return next;
}

// (alpha, beta) exponents of the fused distribution plus the log-normalizer.
struct FusionWeights {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

// Candidate exponent values for the grid search.
struct GridSpec {
  std::vector<double> values;

  GridSpec() = default;
  explicit GridSpec(std::vector<double> v) : values(std::move(v)) {
    if (values.empty()) throw ContractViolation("GridSpec: empty grid");
    for (size_t i = 0; i < values.size(); ++i) {
      if (values[i] < 0.0) throw ContractViolation("GridSpec: negative value");
      if (i > 0 && values[i] <= values[i - 1])
        throw ContractViolation("GridSpec: values not strictly increasing");
    }
  }

  // {0.0, 0.2, ..., 1.8} plus {2, 3, ..., 10}; 19 values.
  static GridSpec default_grid() {
    std::vector<double> v;
    for (int i = 0; i < 10; ++i) v.push_back(0.2 * i);
    for (int i = 2; i <= 10; ++i) v.push_back(static_cast<double>(i));
    return GridSpec(std::move(v));
  }
};

// Per-step decode record for trace export and diagnostics.
struct StepTrace {
  int step = 0;
  TokenId token = 0;
  FusionWeights weights;
  double objective = 0.0;
  double cum_self = 0.0;
  double cum_base1 = 0.0;
  double cum_base2 = 0.0;
};

}  // namespace cpfuse
