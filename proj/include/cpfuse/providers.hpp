#pragma once

// Next-token distribution providers: trainable smoothed n-gram models and
// the analytic memorizer/clean pair used for enumeration checks.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpfuse/core.hpp"

namespace cpfuse {

struct EmptyCorpus : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidParams : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Universal provider contract: a pure function of (prompt, history, state).
class Provider {
 public:
  virtual ~Provider() = default;
  virtual const Vocab& vocab() const = 0;
  virtual LogDist next_dist(const std::vector<TokenId>& prompt,
                            const std::vector<TokenId>& history) const = 0;
};

// Interpolated add-lambda n-gram model. Each order k interpolates its
// counts with the order k-1 estimate:
//   p_k(y|c) = (count(c,y) + lambda*|V|*p_{k-1}(y|c')) / (count(c) + lambda*|V|)
// down to the uniform p_0. lambda > 0 guarantees full support.
class NGramModel : public Provider {
 public:
  using Context = std::vector<TokenId>;

  NGramModel(Vocab vocab, int order, double smoothing_lambda)
      : vocab_(std::move(vocab)),
        order_(order),
        lambda_(smoothing_lambda),
        counts_(order) {
    if (order_ < 1) throw ContractViolation("NGramModel: order must be >= 1");
    if (lambda_ <= 0.0)
      throw ContractViolation("NGramModel: smoothing_lambda must be > 0");
  }

  int order() const { return order_; }
  double smoothing_lambda() const { return lambda_; }
  const Vocab& vocab() const override { return vocab_; }

  void add_sequence(const std::vector<TokenId>& seq, double weight = 1.0) {
    for (size_t t = 0; t < seq.size(); ++t) {
      for (int k = 0; k < order_; ++k) {  // context length k
        if (static_cast<size_t>(k) > t) break;
        Context ctx(seq.begin() + (t - k), seq.begin() + t);
        auto& slot = counts_[k][ctx];
        slot.per_token[seq[t]] += weight;
        slot.total += weight;
      }
    }
  }

  LogDist next_dist(const std::vector<TokenId>& prompt,
                    const std::vector<TokenId>& history) const override {
    const int V = vocab_.size();
    std::vector<TokenId> ctx_full;
    ctx_full.reserve(prompt.size() + history.size());
    ctx_full.insert(ctx_full.end(), prompt.begin(), prompt.end());
    ctx_full.insert(ctx_full.end(), history.begin(), history.end());
    for (TokenId t : ctx_full)
      if (t < 0 || t >= V) throw VocabMismatch("NGramModel: token out of range");

    // interpolate from the uniform prior up through context lengths
    // 0 (unigram) .. min(order-1, available history)
    std::vector<double> p(V, 1.0 / V);
    const double lv = lambda_ * V;
    int max_k = std::min<int>(order_ - 1, static_cast<int>(ctx_full.size()));
    for (int k = 0; k <= max_k; ++k) {
      Context ctx(ctx_full.end() - k, ctx_full.end());
      auto it = counts_[k].find(ctx);
      double total = it == counts_[k].end() ? 0.0 : it->second.total;
      double denom = total + lv;
      for (int y = 0; y < V; ++y) p[y] = lv * p[y] / denom;
      if (it != counts_[k].end())
        for (const auto& [y, c] : it->second.per_token) p[y] += c / denom;
    }
    std::vector<double> logp(V);
    for (int y = 0; y < V; ++y) logp[y] = std::log(p[y]);
    return normalize(logp);
  }

  // serialization access
  struct CountSlot {
    std::unordered_map<TokenId, double> per_token;
    double total = 0.0;
  };
  struct ContextHash {
    size_t operator()(const Context& c) const {
      size_t h = 1469598103934665603ull;
      for (TokenId t : c) {
        h ^= static_cast<size_t>(t) + 0x9e3779b9;
        h *= 1099511628211ull;
      }
      return h;
    }
  };
  using CountTable = std::unordered_map<Context, CountSlot, ContextHash>;

  const std::vector<CountTable>& counts() const { return counts_; }
  std::vector<CountTable>& counts() { return counts_; }

 private:
  Vocab vocab_;
  int order_;
  double lambda_;
  // counts_[k]: contexts of length k
  std::vector<CountTable> counts_;
};

inline NGramModel train_ngram(const std::vector<std::vector<TokenId>>& corpus,
                              const Vocab& vocab, int order,
                              double smoothing_lambda, int passes = 1) {
  if (corpus.empty()) throw EmptyCorpus("train_ngram: empty corpus");
  if (passes < 1) throw ContractViolation("train_ngram: passes must be >= 1");
  NGramModel model(vocab, order, smoothing_lambda);
  for (const auto& seq : corpus)
    model.add_sequence(seq, static_cast<double>(passes));
  return model;
}

// Parameters of the analytic memorizer/clean model pair. The protected
// sequence is a^T where a = token 0.
struct ToyModelParams {
  double delta = 0.1;      // leak mass of the memorizer
  int m = 4;               // |Omega| - 1
  double alpha_mass = 0.2; // clean model's mass on a
  double gamma_mass = 0.4; // clean model's mass spread over S \ {a}
  int K = 2;               // |S \ {a}|
  int vocab_size = 8;
  int T = 6;               // sequence length
  unsigned seed = 0;       // draw of S

  void validate() const {
    if (delta <= 0.0 || delta >= 1.0)
      throw InvalidParams("ToyModelParams: delta must be in (0,1)");
    if (m < 1 || m + 1 > vocab_size)
      throw InvalidParams("ToyModelParams: need 1 <= m and m+1 <= vocab_size");
    if (alpha_mass <= 0.0 || alpha_mass >= 1.0 || gamma_mass < 0.0 ||
        alpha_mass + gamma_mass > 1.0)
      throw InvalidParams("ToyModelParams: invalid alpha/gamma masses");
    if (K < 0 || K > vocab_size - 1)
      throw InvalidParams("ToyModelParams: K out of range");
    if (vocab_size - K - 1 <= 0 && alpha_mass + gamma_mass < 1.0)
      throw InvalidParams("ToyModelParams: leftover mass with no tokens");
    if (T < 1) throw InvalidParams("ToyModelParams: T must be >= 1");
  }
};

inline constexpr TokenId kToyProtectedToken = 0;

// S \ {a}: K tokens drawn uniformly without replacement from V \ {a},
// fixed across steps.
inline std::vector<TokenId> toy_draw_s(const ToyModelParams& params) {
  params.validate();
  std::vector<TokenId> pool;
  for (int y = 1; y < params.vocab_size; ++y) pool.push_back(y);
  std::mt19937 rng(params.seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(params.K);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Memorizer p1: on the protected path, mass 1-delta on a and delta/m on the
// other m tokens of Omega = {0..m}. Off the path: uniform over Omega.
inline LogDist toy_memorizer_dist(const ToyModelParams& params,
                                  const std::vector<TokenId>& history) {
  params.validate();
  bool on_path = true;
  for (TokenId t : history)
    if (t != kToyProtectedToken) on_path = false;
  std::vector<double> logp(params.vocab_size, kNegInf);
  if (on_path) {
    logp[kToyProtectedToken] = std::log(1.0 - params.delta);
    for (int y = 1; y <= params.m; ++y)
      logp[y] = std::log(params.delta / params.m);
  } else {
    for (int y = 0; y <= params.m; ++y)
      logp[y] = -std::log(static_cast<double>(params.m + 1));
  }
  return normalize(logp);
}

// Clean model p2: mass alpha on a, gamma/K on each token of S \ {a}, and
// the leftover spread uniformly over the remaining |V|-K-1 tokens.
inline LogDist toy_clean_dist(const ToyModelParams& params) {
  params.validate();
  auto s = toy_draw_s(params);
  int rest = params.vocab_size - params.K - 1;
  double leftover = 1.0 - params.alpha_mass - params.gamma_mass;
  if (leftover < -1e-12)
    throw InvalidParams("toy_clean_dist: negative leftover mass");
  std::vector<double> logp(params.vocab_size, kNegInf);
  logp[kToyProtectedToken] = std::log(params.alpha_mass);
  for (TokenId y : s) logp[y] = std::log(params.gamma_mass / params.K);
  if (rest > 0 && leftover > 0.0) {
    double each = leftover / rest;
    for (int y = 1; y < params.vocab_size; ++y)
      if (logp[y] == kNegInf) logp[y] = std::log(each);
  }
  return normalize(logp);
}

class ToyMemorizerProvider : public Provider {
 public:
  ToyMemorizerProvider(ToyModelParams params, Vocab vocab)
      : params_(params), vocab_(std::move(vocab)) {
    params_.validate();
    if (vocab_.size() != params_.vocab_size)
      throw VocabMismatch("ToyMemorizerProvider: vocab size mismatch");
  }
  const Vocab& vocab() const override { return vocab_; }
  LogDist next_dist(const std::vector<TokenId>& /*prompt*/,
                    const std::vector<TokenId>& history) const override {
    return toy_memorizer_dist(params_, history);
  }

 private:
  ToyModelParams params_;
  Vocab vocab_;
};

class ToyCleanProvider : public Provider {
 public:
  ToyCleanProvider(ToyModelParams params, Vocab vocab)
      : dist_(toy_clean_dist(params)), vocab_(std::move(vocab)) {
    if (vocab_.size() != params.vocab_size)
      throw VocabMismatch("ToyCleanProvider: vocab size mismatch");
  }
  const Vocab& vocab() const override { return vocab_; }
  LogDist next_dist(const std::vector<TokenId>& /*prompt*/,
                    const std::vector<TokenId>& /*history*/) const override {
    return dist_;
  }

 private:
  LogDist dist_;
  Vocab vocab_;
};

}  // namespace cpfuse
