#ifndef SAN_QUESTION_MODEL_HPP
#define SAN_QUESTION_MODEL_HPP

// Question encoders. Both map a right-padded token batch to v_Q with one
// row per question (B×d).

#include <algorithm>
#include <array>
#include <string>
#include <utility>
#include <vector>

#include "san/ops.hpp"
#include "san/params.hpp"
#include "san/vocab.hpp"

namespace san {

/// Right-padded questions with the count of real tokens per row.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<TokenId> ids;        // batch × length, row-major
  std::vector<std::size_t> mask;   // real tokens per row

  TokenId at(std::size_t b, std::size_t t) const { return ids[b * length + t]; }

  /// Pads every sequence with PAD to a common length of at least `min_length`.
  static TokenBatch from(const std::vector<std::vector<TokenId>>& seqs,
                         std::size_t min_length = 1) {
    TokenBatch tb;
    tb.batch = seqs.size();
    tb.length = min_length;
    for (const auto& s : seqs) tb.length = std::max(tb.length, s.size());
    tb.ids.assign(tb.batch * tb.length, Vocab::kPad);
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      if (seqs[b].empty()) throw ContractError("token batch: empty question");
      std::copy(seqs[b].begin(), seqs[b].end(), tb.ids.begin() + static_cast<std::ptrdiff_t>(b * tb.length));
      tb.mask.push_back(seqs[b].size());
    }
    return tb;
  }

  static TokenBatch single(const std::vector<TokenId>& tokens, std::size_t mask) {
    TokenBatch tb;
    tb.batch = 1;
    tb.length = tokens.size();
    tb.ids = tokens;
    tb.mask = {mask};
    return tb;
  }

  void validate() const {
    if (ids.size() != batch * length || mask.size() != batch) {
      throw ContractError("token batch: inconsistent sizes");
    }
    for (std::size_t m : mask) {
      if (m < 1) throw ContractError("token batch: empty question");
      if (m > length) throw ContractError("token batch: mask exceeds padded length");
    }
  }
};

/// Embedding lookup x_t = W_e q_t for every token; row t of the result is
/// row tokens[t] of W_e.
inline Tensor embed_tokens(const std::vector<TokenId>& tokens, const Tensor& embedding) {
  if (tokens.empty()) throw ContractError("embed_tokens: empty token list");
  for (TokenId id : tokens) {
    if (id >= embedding.dim(0)) {
      throw VocabError("embed_tokens: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(embedding.dim(0)));
    }
  }
  return ops::gather_rows(embedding, tokens);
}

// --------------------------------------------------------------------- LSTM

struct LstmParams {
  Tensor embedding;  // |V|×e
  Tensor w_xi, w_hi, b_i;
  Tensor w_xf, w_hf, b_f;
  Tensor w_xo, w_ho, b_o;
  Tensor w_xc, w_hc, b_c;

  std::size_t vocab_size() const { return embedding.dim(0); }
  std::size_t embed_dim() const { return embedding.dim(1); }
  std::size_t hidden_dim() const { return w_hi.dim(0); }

  static LstmParams init(std::size_t vocab, std::size_t embed, std::size_t hidden, Rng& rng,
                         real forget_bias = 0) {
    LstmParams p;
    p.embedding = xavier_uniform(vocab, embed, rng);
    auto gate = [&](Tensor& wx, Tensor& wh, Tensor& b, real bias) {
      wx = xavier_uniform(hidden, embed, rng);
      wh = xavier_uniform(hidden, hidden, rng);
      b = constant_param({hidden}, bias);
    };
    gate(p.w_xi, p.w_hi, p.b_i, 0);
    gate(p.w_xf, p.w_hf, p.b_f, forget_bias);
    gate(p.w_xo, p.w_ho, p.b_o, 0);
    gate(p.w_xc, p.w_hc, p.b_c, 0);
    return p;
  }

  void collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + "embedding", embedding});
    out.push_back({prefix + "w_xi", w_xi});
    out.push_back({prefix + "w_hi", w_hi});
    out.push_back({prefix + "b_i", b_i});
    out.push_back({prefix + "w_xf", w_xf});
    out.push_back({prefix + "w_hf", w_hf});
    out.push_back({prefix + "b_f", b_f});
    out.push_back({prefix + "w_xo", w_xo});
    out.push_back({prefix + "w_ho", w_ho});
    out.push_back({prefix + "b_o", b_o});
    out.push_back({prefix + "w_xc", w_xc});
    out.push_back({prefix + "w_hc", w_hc});
    out.push_back({prefix + "b_c", b_c});
  }

  void validate() const {
    const std::size_t e = embed_dim(), d = hidden_dim();
    for (const Tensor* w : {&w_xi, &w_xf, &w_xo, &w_xc}) {
      if (w->shape() != Shape{d, e}) throw DimensionError("lstm: input weight must be d×e");
    }
    for (const Tensor* w : {&w_hi, &w_hf, &w_ho, &w_hc}) {
      if (w->shape() != Shape{d, d}) throw DimensionError("lstm: recurrent weight must be d×d");
    }
    for (const Tensor* b : {&b_i, &b_f, &b_o, &b_c}) {
      if (b->shape() != Shape{d}) throw DimensionError("lstm: bias must have length d");
    }
  }
};

struct LstmState {
  Tensor h;  // B×d
  Tensor c;  // B×d
};

/// One LSTM update for a batch of inputs x (B×e):
///   i, f, o = σ(W_x· x + W_h· h + b),  c' = f∘c + i∘tanh(W_xc x + W_hc h + b_c),
///   h' = o∘tanh(c').
inline LstmState lstm_step(const Tensor& x, const LstmState& prev, const LstmParams& p) {
  const std::size_t d = p.hidden_dim();
  if (x.rank() != 2 || x.dim(1) != p.embed_dim() || prev.h.rank() != 2 || prev.h.dim(1) != d ||
      prev.c.shape() != prev.h.shape() || prev.h.dim(0) != x.dim(0)) {
    throw DimensionError("lstm_step: x " + shape_string(x.shape()) + ", h " +
                         shape_string(prev.h.shape()) + ", c " + shape_string(prev.c.shape()) +
                         " do not fit e=" + std::to_string(p.embed_dim()) +
                         ", d=" + std::to_string(d));
  }
  auto affine = [&](const Tensor& wx, const Tensor& wh, const Tensor& b) {
    return ops::add_rows(ops::add(ops::matmul_nt(x, wx), ops::matmul_nt(prev.h, wh)), b);
  };
  Tensor i = ops::sigmoid(affine(p.w_xi, p.w_hi, p.b_i));
  Tensor f = ops::sigmoid(affine(p.w_xf, p.w_hf, p.b_f));
  Tensor o = ops::sigmoid(affine(p.w_xo, p.w_ho, p.b_o));
  Tensor candidate = ops::tanh(affine(p.w_xc, p.w_hc, p.b_c));
  Tensor c = ops::add(ops::mul(f, prev.c), ops::mul(i, candidate));
  Tensor h = ops::mul(o, ops::tanh(c));
  return {h, c};
}

/// v_Q = h at each question's last real token, from a zero initial state.
inline Tensor encode_lstm(const TokenBatch& tokens, const LstmParams& p) {
  tokens.validate();
  const std::size_t batch = tokens.batch, d = p.hidden_dim();
  const std::size_t steps = *std::max_element(tokens.mask.begin(), tokens.mask.end());
  LstmState state{Tensor::zeros({batch, d}), Tensor::zeros({batch, d})};
  std::vector<TokenId> column(batch);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < batch; ++b) column[b] = tokens.at(b, t);
    LstmState next = lstm_step(embed_tokens(column, p.embedding), state, p);
    bool all_live = true;
    for (std::size_t m : tokens.mask) all_live = all_live && t < m;
    if (all_live) {
      state = std::move(next);
      continue;
    }
    // Rows whose question already ended keep their previous state.
    std::vector<real> keep_new(batch * d), keep_old(batch * d);
    for (std::size_t b = 0; b < batch; ++b) {
      const real live = t < tokens.mask[b] ? real(1) : real(0);
      std::fill_n(keep_new.begin() + static_cast<std::ptrdiff_t>(b * d), d, live);
      std::fill_n(keep_old.begin() + static_cast<std::ptrdiff_t>(b * d), d, real(1) - live);
    }
    Tensor mn({batch, d}, std::move(keep_new)), mo({batch, d}, std::move(keep_old));
    state.h = ops::add(ops::mul(next.h, mn), ops::mul(state.h, mo));
    state.c = ops::add(ops::mul(next.c, mn), ops::mul(state.c, mo));
  }
  return state.h;
}

// ---------------------------------------------------------------------- CNN

inline constexpr std::array<std::size_t, 3> kCnnWindows{1, 2, 3};
inline constexpr std::array<std::size_t, 3> kDefaultCnnFilters{128, 256, 256};

struct TextCnnParams {
  Tensor embedding;                 // |V|×e
  std::array<Tensor, 3> weights;    // filters_c × (c·e), for c = 1, 2, 3
  std::array<Tensor, 3> biases;     // filters_c

  std::size_t embed_dim() const { return embedding.dim(1); }
  std::size_t filters(std::size_t window_index) const { return weights[window_index].dim(0); }
  std::size_t output_dim() const { return filters(0) + filters(1) + filters(2); }

  static TextCnnParams init(std::size_t vocab, std::size_t embed,
                            std::array<std::size_t, 3> filter_counts, Rng& rng) {
    TextCnnParams p;
    p.embedding = xavier_uniform(vocab, embed, rng);
    for (std::size_t w = 0; w < 3; ++w) {
      p.weights[w] = xavier_uniform(filter_counts[w], kCnnWindows[w] * embed, rng);
      p.biases[w] = zero_param({filter_counts[w]});
    }
    return p;
  }

  void collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + "embedding", embedding});
    for (std::size_t w = 0; w < 3; ++w) {
      out.push_back({prefix + "w_conv" + std::to_string(kCnnWindows[w]), weights[w]});
      out.push_back({prefix + "b_conv" + std::to_string(kCnnWindows[w]), biases[w]});
    }
  }

  void validate() const {
    for (std::size_t w = 0; w < 3; ++w) {
      if (weights[w].rank() != 2 || weights[w].dim(1) != kCnnWindows[w] * embed_dim() ||
          biases[w].shape() != Shape{weights[w].dim(0)}) {
        throw DimensionError("text cnn: window " + std::to_string(kCnnWindows[w]) +
                             " weights do not match embedding size");
      }
    }
  }
};

/// Questions shorter than the widest window are treated as padded up to it.
inline constexpr std::size_t kCnnMinLength = 3;

/// v_Q = [max_t h_1,t | max_t h_2,t | max_t h_3,t] with
/// h_c,t = tanh(W_c [x_t; …; x_{t+c-1}] + b_c).
///
/// Embeddings at PAD positions are zeroed before convolution. Only windows
/// starting at t ≤ max(mask, 3) − c enter the max.
inline Tensor encode_cnn(const TokenBatch& tokens, const TextCnnParams& p) {
  tokens.validate();
  p.validate();
  const std::size_t batch = tokens.batch, e = p.embed_dim();
  std::vector<std::size_t> span(batch);
  for (std::size_t b = 0; b < batch; ++b) span[b] = std::max(tokens.mask[b], kCnnMinLength);
  const std::size_t longest = *std::max_element(span.begin(), span.end());

  std::vector<Tensor> pooled;
  for (std::size_t w = 0; w < 3; ++w) {
    const std::size_t width = kCnnWindows[w];
    const std::size_t positions = longest - width + 1;
    const std::size_t rows = positions * batch;  // row t·B + b
    std::vector<Tensor> offsets;
    for (std::size_t j = 0; j < width; ++j) {
      std::vector<TokenId> ids(rows, Vocab::kPad);
      std::vector<real> live(rows * e, real(0));
      for (std::size_t t = 0; t < positions; ++t) {
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t pos = t + j;
          if (pos < tokens.mask[b]) {
            ids[t * batch + b] = tokens.at(b, pos);
            std::fill_n(live.begin() + static_cast<std::ptrdiff_t>((t * batch + b) * e), e, real(1));
          }
        }
      }
      Tensor x = embed_tokens(ids, p.embedding);
      offsets.push_back(ops::mul(x, Tensor({rows, e}, std::move(live))));
    }
    Tensor windows = width == 1 ? offsets.front() : ops::concat(offsets, 1);
    Tensor h = ops::tanh(ops::add_rows(ops::matmul_nt(windows, p.weights[w]), p.biases[w]));
    const std::size_t filters = p.filters(w);

    bool ragged = false;
    std::vector<real> penalty(rows * filters, real(0));
    for (std::size_t t = 0; t < positions; ++t) {
      for (std::size_t b = 0; b < batch; ++b) {
        if (t + width > span[b]) {
          ragged = true;
          // tanh ∈ (−1, 1), so an offset of −4 can never win the max.
          std::fill_n(penalty.begin() + static_cast<std::ptrdiff_t>((t * batch + b) * filters),
                      filters, real(-4));
        }
      }
    }
    if (ragged) h = ops::add(h, Tensor({rows, filters}, std::move(penalty)));
    pooled.push_back(ops::max(ops::reshape(h, {positions, batch, filters}), 0));
  }
  return ops::concat(pooled, 1);
}

}  // namespace san

#endif  // SAN_QUESTION_MODEL_HPP
