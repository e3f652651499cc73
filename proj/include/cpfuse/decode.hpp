#pragma once

// Greedy decoding loop over two providers with a per-token fusion rule,
// trace recording, teacher-forced scoring and perplexity.

#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cpfuse/core.hpp"
#include "cpfuse/fusion.hpp"
#include "cpfuse/providers.hpp"

namespace cpfuse {

enum class FusionRule { cpfuse, cpdelta, base1, base2 };

inline const char* to_string(FusionRule r) {
  switch (r) {
    case FusionRule::cpfuse: return "cpfuse";
    case FusionRule::cpdelta: return "cpdelta";
    case FusionRule::base1: return "base1";
    case FusionRule::base2: return "base2";
  }
  return "?";
}

inline std::optional<FusionRule> parse_rule(const std::string& s) {
  if (s == "cpfuse") return FusionRule::cpfuse;
  if (s == "cpdelta") return FusionRule::cpdelta;
  if (s == "base1") return FusionRule::base1;
  if (s == "base2") return FusionRule::base2;
  return std::nullopt;
}

struct DecodeConfig {
  int max_len = 256;
  FusionRule fusion_rule = FusionRule::cpfuse;
  GridSpec grid = GridSpec::default_grid();
  bool record_traces = false;
  // stochastic sampling instead of argmax, behind a fixed seed
  bool sample = false;
  unsigned sample_seed = 0;
};

struct DecodeResult {
  std::vector<TokenId> tokens;
  std::vector<StepTrace> traces;
};

// Provider failures mid-sequence abort the decode; the partial output is
// carried on the exception. Falling back to a single model would void the
// protection guarantee.
struct DecodeAborted : std::runtime_error {
  DecodeAborted(const std::string& what, DecodeResult partial)
      : std::runtime_error(what), partial(std::move(partial)) {}
  DecodeResult partial;
};

namespace detail {

inline FusionOutcome apply_rule(FusionRule rule, const LogDist& l1,
                                const LogDist& l2, const SequenceState& state,
                                const GridSpec& grid) {
  switch (rule) {
    case FusionRule::cpfuse:
      return cpfuse_step(l1, l2, state, grid);
    case FusionRule::cpdelta:
      return cpdelta_step(l1, l2, state);
    case FusionRule::base1: {
      double c1 = state.cum_self - state.cum_base1;
      double c2 = kl_divergence(l1, l2) + (state.cum_self - state.cum_base2);
      return FusionOutcome{l1, FusionWeights{1.0, 0.0, 0.0},
                           std::max(c1, c2), {c1, c2}};
    }
    case FusionRule::base2: {
      double c1 = kl_divergence(l2, l1) + (state.cum_self - state.cum_base1);
      double c2 = state.cum_self - state.cum_base2;
      return FusionOutcome{l2, FusionWeights{0.0, 1.0, 0.0},
                           std::max(c1, c2), {c1, c2}};
    }
  }
  throw ContractViolation("apply_rule: unknown rule");
}

inline TokenId sample_token(const LogDist& d, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  double acc = 0.0;
  for (int y = 0; y < d.size(); ++y) {
    acc += d.prob(y);
    if (r < acc) return y;
  }
  return d.size() - 1;
}

}  // namespace detail

inline DecodeResult greedy_decode(const Provider& p1, const Provider& p2,
                                  const std::vector<TokenId>& prompt,
                                  const DecodeConfig& cfg) {
  if (!(p1.vocab() == p2.vocab()))
    throw VocabMismatch("greedy_decode: providers disagree on the vocab");
  const Vocab& vocab = p1.vocab();
  for (TokenId t : prompt)
    if (t < 0 || t >= vocab.size())
      throw VocabMismatch("greedy_decode: prompt token out of range");

  SequenceState state;
  state.prompt = prompt;
  DecodeResult result;
  std::mt19937 rng(cfg.sample_seed);

  for (int step = 0; step < cfg.max_len; ++step) {
    FusionOutcome out{LogDist(std::vector<double>{0.0}), {}, 0.0, {0.0, 0.0}};
    LogDist l1 = out.dist, l2 = out.dist;
    try {
      l1 = p1.next_dist(prompt, state.emitted);
      l2 = p2.next_dist(prompt, state.emitted);
      out = detail::apply_rule(cfg.fusion_rule, l1, l2, state, cfg.grid);
    } catch (const std::exception& e) {
      throw DecodeAborted(e.what(), std::move(result));
    }
    TokenId tok = cfg.sample ? detail::sample_token(out.dist, rng)
                             : out.dist.argmax();
    state = advance(state, tok, out.dist[tok], l1[tok], l2[tok]);
    result.tokens.push_back(tok);
    if (cfg.record_traces) {
      result.traces.push_back(StepTrace{step, tok, out.weights, out.objective,
                                        state.cum_self, state.cum_base1,
                                        state.cum_base2});
    }
    if (tok == vocab.eos_id()) break;
  }
  return result;
}

// Per-step |cum_base1 - cum_base2| over a trace series.
inline std::vector<double> balancing_gap(const std::vector<StepTrace>& traces) {
  if (traces.empty()) throw ContractViolation("balancing_gap: empty traces");
  std::vector<double> gaps;
  gaps.reserve(traces.size());
  for (const auto& t : traces)
    gaps.push_back(std::abs(t.cum_base1 - t.cum_base2));
  return gaps;
}

// Teacher-forced log-probability of `tokens` given `prompt`.
inline double sequence_logprob(const Provider& p,
                               const std::vector<TokenId>& prompt,
                               const std::vector<TokenId>& tokens) {
  double lp = 0.0;
  std::vector<TokenId> history;
  history.reserve(tokens.size());
  for (TokenId tok : tokens) {
    LogDist d = p.next_dist(prompt, history);
    lp += d[tok];
    history.push_back(tok);
  }
  return lp;
}

// Teacher-forced log-probability of `tokens` under a fusion rule, carrying
// the sequence state along the reference path.
inline double fused_sequence_logprob(const Provider& p1, const Provider& p2,
                                     FusionRule rule, const GridSpec& grid,
                                     const std::vector<TokenId>& prompt,
                                     const std::vector<TokenId>& tokens) {
  SequenceState state;
  state.prompt = prompt;
  for (TokenId tok : tokens) {
    LogDist l1 = p1.next_dist(prompt, state.emitted);
    LogDist l2 = p2.next_dist(prompt, state.emitted);
    FusionOutcome out = detail::apply_rule(rule, l1, l2, state, grid);
    state = advance(state, tok, out.dist[tok], l1[tok], l2[tok]);
  }
  return state.cum_self;
}

inline double perplexity(const Provider& p,
                         const std::vector<std::pair<std::vector<TokenId>,
                                                     std::vector<TokenId>>>&
                             corpus) {
  if (corpus.empty()) throw EmptyCorpus("perplexity: empty corpus");
  double total_lp = 0.0;
  size_t total_tokens = 0;
  for (const auto& [prompt, reference] : corpus) {
    total_lp += sequence_logprob(p, prompt, reference);
    total_tokens += reference.size();
  }
  return std::exp(-total_lp / static_cast<double>(total_tokens));
}

// Trace CSV schema shared by the trace/experiment exports.
inline void write_trace_csv(std::ostream& os,
                            const std::vector<StepTrace>& traces) {
  os << "step,token_id,alpha,beta,gamma,objective,cum_self,cum_base1,cum_base2\n";
  os.precision(17);
  for (const auto& t : traces) {
    os << t.step << ',' << t.token << ',' << t.weights.alpha << ','
       << t.weights.beta << ',' << t.weights.gamma << ',' << t.objective << ','
       << t.cum_self << ',' << t.cum_base1 << ',' << t.cum_base2 << '\n';
  }
}

}  // namespace cpfuse
