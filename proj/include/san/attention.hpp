#ifndef SAN_ATTENTION_HPP
#define SAN_ATTENTION_HPP

// Stacked attention over image regions and the answer classifier.
//
// Layout: image regions are rows. For a batch of B images with m regions
// each, v_I is (B·m × d), queries u^k are (B × d) and attention
// distributions p^k are (B × m).

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "san/config.hpp"
#include "san/dropout.hpp"
#include "san/image_model.hpp"
#include "san/question_model.hpp"

namespace san {

enum class EncoderKind { lstm, cnn };

inline std::string encoder_name(EncoderKind kind) { return kind == EncoderKind::lstm ? "lstm" : "cnn"; }

inline EncoderKind parse_encoder(const std::string& name) {
  if (name == "lstm") return EncoderKind::lstm;
  if (name == "cnn") return EncoderKind::cnn;
  throw ConfigError("encoder must be lstm or cnn, got '" + name + "'");
}

inline constexpr std::size_t kMaxLayers = 4;

struct ModelConfig {
  EncoderKind encoder = EncoderKind::lstm;
  std::size_t vocab_size = 0;
  std::size_t answer_count = 0;
  std::size_t raw_dim = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;  // LSTM state size
  std::array<std::size_t, 3> cnn_filters = kDefaultCnnFilters;
  std::size_t attention_dim = 0;  // k; 0 means k = d
  std::size_t layers = 2;         // K
  real dropout = 0.5;
  real forget_bias = 0;

  /// d: size of v_Q, of every u^k and of projected regions.
  std::size_t question_dim() const {
    return encoder == EncoderKind::lstm ? hidden_dim
                                        : cnn_filters[0] + cnn_filters[1] + cnn_filters[2];
  }
  std::size_t attention_hidden() const { return attention_dim == 0 ? question_dim() : attention_dim; }

  /// Model name in the "SAN(2, LSTM)" style.
  std::string tag() const {
    return "SAN(" + std::to_string(layers) + ", " + (encoder == EncoderKind::lstm ? "LSTM" : "CNN") + ")";
  }

  void validate() const {
    if (layers < 1 || layers > kMaxLayers) {
      throw ConfigError("layers must be in 1.." + std::to_string(kMaxLayers));
    }
    if (answer_count < 2) throw ConfigError("answer vocabulary needs at least 2 answers");
    if (vocab_size < 2) throw ConfigError("vocabulary needs PAD and UNK");
    if (raw_dim == 0 || embed_dim == 0 || question_dim() == 0) {
      throw ConfigError("model dimensions must be positive");
    }
    if (!(dropout >= 0) || dropout >= 1) throw ConfigError("dropout must lie in [0, 1)");
  }

  std::map<std::string, std::string> to_key_values() const {
    auto num = [](real x) {
      std::ostringstream os;
      os.precision(17);
      os << x;
      return os.str();
    };
    return {
        {"encoder", encoder_name(encoder)},
        {"vocab_size", std::to_string(vocab_size)},
        {"answer_count", std::to_string(answer_count)},
        {"raw_dim", std::to_string(raw_dim)},
        {"embed_dim", std::to_string(embed_dim)},
        {"hidden_dim", std::to_string(hidden_dim)},
        {"cnn_filters", std::to_string(cnn_filters[0]) + "," + std::to_string(cnn_filters[1]) + "," +
                            std::to_string(cnn_filters[2])},
        {"attention_dim", std::to_string(attention_dim)},
        {"layers", std::to_string(layers)},
        {"dropout", num(dropout)},
        {"forget_bias", num(forget_bias)},
    };
  }

  static ModelConfig from_key_values(const std::map<std::string, std::string>& kv) {
    Config c;
    for (const auto& [k, v] : ModelConfig{}.to_key_values()) c.declare(k, v);
    for (const auto& [k, v] : kv) c.set(k, v);
    ModelConfig m;
    m.encoder = parse_encoder(c.str("encoder"));
    m.vocab_size = c.size_value("vocab_size");
    m.answer_count = c.size_value("answer_count");
    m.raw_dim = c.size_value("raw_dim");
    m.embed_dim = c.size_value("embed_dim");
    m.hidden_dim = c.size_value("hidden_dim");
    auto filters = c.size_list("cnn_filters");
    if (filters.size() != 3) throw ConfigError("cnn_filters needs three counts");
    std::copy(filters.begin(), filters.end(), m.cnn_filters.begin());
    m.attention_dim = c.size_value("attention_dim");
    m.layers = c.size_value("layers");
    m.dropout = static_cast<real>(c.real_value("dropout"));
    m.forget_bias = static_cast<real>(c.real_value("forget_bias"));
    return m;
  }
};

/// One attention layer: W_IA, W_QA (k×d), b_A (k), W_P (1×k), b_P (scalar).
struct AttentionLayerParams {
  Tensor w_image;
  Tensor w_query;
  Tensor b_attn;
  Tensor w_prob;
  Tensor b_prob;  // shape {1}; shifts every logit equally

  std::size_t hidden() const { return w_image.dim(0); }
  std::size_t dim() const { return w_image.dim(1); }

  static AttentionLayerParams init(std::size_t k, std::size_t d, Rng& rng) {
    AttentionLayerParams p;
    p.w_image = xavier_uniform(k, d, rng);
    p.w_query = xavier_uniform(k, d, rng);
    p.b_attn = zero_param({k});
    p.w_prob = xavier_uniform(1, k, rng);
    p.b_prob = zero_param({1});
    return p;
  }

  void collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + "w_image_attn", w_image});
    out.push_back({prefix + "w_query_attn", w_query});
    out.push_back({prefix + "b_attn", b_attn});
    out.push_back({prefix + "w_prob", w_prob});
    out.push_back({prefix + "b_prob", b_prob});
  }
};

/// Answer layer W_u (|A|×d), b_u (|A|).
struct ClassifierParams {
  Tensor weight;
  Tensor bias;

  static ClassifierParams init(std::size_t answers, std::size_t d, Rng& rng) {
    return {xavier_uniform(answers, d, rng), zero_param({answers})};
  }

  void collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + "w_answer", weight});
    out.push_back({prefix + "b_answer", bias});
  }
};

/// p = softmax(W_P tanh(W_IA v_I ⊕ (W_QA u + b_A)) + b_P) over each image's
/// regions. Returns (B × m).
inline Tensor attention_step(const Tensor& regions, const Tensor& query,
                             const AttentionLayerParams& layer) {
  if (regions.rank() != 2 || query.rank() != 2 || regions.dim(1) != layer.dim() ||
      query.dim(1) != layer.dim() || query.dim(0) == 0 || regions.dim(0) % query.dim(0) != 0 ||
      layer.w_query.shape() != layer.w_image.shape() || layer.w_prob.shape() != Shape{1, layer.hidden()}) {
    throw DimensionError("attention_step: regions " + shape_string(regions.shape()) + ", query " +
                         shape_string(query.shape()) + ", W_IA " +
                         shape_string(layer.w_image.shape()));
  }
  const std::size_t batch = query.dim(0), m = regions.dim(0) / batch;
  Tensor image_part = ops::matmul_nt(regions, layer.w_image);                          // B·m × k
  Tensor query_part = ops::add_rows(ops::matmul_nt(query, layer.w_query), layer.b_attn);  // B × k
  Tensor hidden = ops::tanh(ops::add_rows(image_part, query_part));
  Tensor logits = ops::add_rows(ops::matmul_nt(hidden, layer.w_prob), layer.b_prob);      // B·m × 1
  return ops::softmax(ops::reshape(logits, {batch, m}), 1);
}

inline constexpr real kDistributionTolerance = 1e-6;

struct Refinement {
  Tensor attended;  // ṽ^k, B × d
  Tensor query;     // u^k, B × d
};

/// ṽ = Σ_i p_i v_i per image, u = ṽ + u_prev.
inline Refinement aggregate_and_refine(const Tensor& regions, const Tensor& p,
                                       const Tensor& query_prev) {
  if (p.rank() != 2) throw DimensionError("aggregate_and_refine: p must be B×m");
  const std::size_t m = p.dim(1);
  for (std::size_t b = 0; b < p.dim(0); ++b) {
    real total = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const real x = p.at(b, i);
      if (x < -kDistributionTolerance || x > 1 + kDistributionTolerance) {
        throw ContractError("aggregate_and_refine: attention weight outside [0, 1]");
      }
      total += x;
    }
    if (std::abs(total - 1) > kDistributionTolerance) {
      throw ContractError("aggregate_and_refine: attention weights sum to " + std::to_string(total));
    }
  }
  Tensor attended = ops::weighted_rows(p, regions);
  if (attended.shape() != query_prev.shape()) {
    throw DimensionError("aggregate_and_refine: query " + shape_string(query_prev.shape()) +
                         " vs attended " + shape_string(attended.shape()));
  }
  return {attended, ops::add(attended, query_prev)};
}

/// Per-layer record of one forward pass (batched).
struct AttentionTrace {
  Tensor question;                  // u^0 = v_Q, B × d
  std::vector<Tensor> attention;    // p^k, B × m
  std::vector<Tensor> attended;     // ṽ^k, B × d
  std::vector<Tensor> queries;      // u^k, B × d
  Tensor answer_probs;              // p_ans, B × |A|

  std::size_t layers() const { return attention.size(); }

  /// p^k of sample b, k counted from 1.
  std::vector<real> attention_of(std::size_t layer, std::size_t b) const {
    const Tensor& p = attention.at(layer - 1);
    const auto row = p.values().subspan(b * p.dim(1), p.dim(1));
    return {row.begin(), row.end()};
  }
};

struct ForwardResult {
  Tensor logits;  // B × |A|
  AttentionTrace trace;
};

/// Train-time randomness for a forward pass; default is evaluation.
struct ForwardMode {
  Mode mode = Mode::eval;
  Rng* rng = nullptr;
};

class SanModel {
 public:
  ModelConfig config;
  std::optional<LstmParams> lstm;
  std::optional<TextCnnParams> cnn;
  ImageProjection image;
  std::vector<AttentionLayerParams> layers;
  ClassifierParams classifier;

  static SanModel init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    SanModel m;
    m.config = cfg;
    const std::size_t d = cfg.question_dim();
    if (cfg.encoder == EncoderKind::lstm) {
      m.lstm = LstmParams::init(cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim, rng, cfg.forget_bias);
    } else {
      m.cnn = TextCnnParams::init(cfg.vocab_size, cfg.embed_dim, cfg.cnn_filters, rng);
    }
    m.image = ImageProjection::init(d, cfg.raw_dim, rng);
    for (std::size_t k = 0; k < cfg.layers; ++k) {
      m.layers.push_back(AttentionLayerParams::init(cfg.attention_hidden(), d, rng));
    }
    m.classifier = ClassifierParams::init(cfg.answer_count, d, rng);
    return m;
  }

  /// All learnable tensors in a fixed order with stable names.
  ParamList parameters() const {
    ParamList out;
    if (lstm) lstm->collect(out, "question.");
    if (cnn) cnn->collect(out, "question.");
    image.collect(out, "image.");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      layers[k].collect(out, "attention" + std::to_string(k + 1) + ".");
    }
    classifier.collect(out, "classifier.");
    return out;
  }

  /// Deep copy; the clone shares no storage with this model.
  SanModel clone() const {
    SanModel copy = *this;
    auto fresh = [](Tensor& t) {
      Tensor c = t.detach();
      c.set_requires_grad(true);
      t = c;
    };
    if (copy.lstm) {
      auto& p = *copy.lstm;
      for (Tensor* t : {&p.embedding, &p.w_xi, &p.w_hi, &p.b_i, &p.w_xf, &p.w_hf, &p.b_f, &p.w_xo,
                        &p.w_ho, &p.b_o, &p.w_xc, &p.w_hc, &p.b_c}) {
        fresh(*t);
      }
    }
    if (copy.cnn) {
      fresh(copy.cnn->embedding);
      for (std::size_t w = 0; w < 3; ++w) {
        fresh(copy.cnn->weights[w]);
        fresh(copy.cnn->biases[w]);
      }
    }
    fresh(copy.image.weight);
    fresh(copy.image.bias);
    for (auto& l : copy.layers) {
      for (Tensor* t : {&l.w_image, &l.w_query, &l.b_attn, &l.w_prob, &l.b_prob}) fresh(*t);
    }
    fresh(copy.classifier.weight);
    fresh(copy.classifier.bias);
    return copy;
  }

  Tensor encode_question(const TokenBatch& tokens) const {
    for (TokenId id : tokens.ids) {
      if (id >= config.vocab_size) {
        throw VocabError("question token id " + std::to_string(id) + " outside vocabulary of " +
                         std::to_string(config.vocab_size));
      }
    }
    return lstm ? encode_lstm(tokens, *lstm) : encode_cnn(tokens, *cnn);
  }
};

/// Full pass: encoder → projection → K × (attend, refine) → classifier.
/// `features` stacks the region rows of every image in the batch
/// ((B·m) × d_raw). Dropout, when training, is applied to v_Q and to u^K.
inline ForwardResult forward(const SanModel& model, const Tensor& features, const TokenBatch& tokens,
                             ForwardMode fm = {}) {
  const ModelConfig& cfg = model.config;
  if (features.rank() != 2 || features.dim(1) != cfg.raw_dim || tokens.batch == 0 ||
      features.dim(0) % tokens.batch != 0) {
    throw DimensionError("forward: features " + shape_string(features.shape()) + " for " +
                         std::to_string(tokens.batch) + " questions with d_raw=" +
                         std::to_string(cfg.raw_dim));
  }
  if (fm.mode == Mode::train && cfg.dropout > 0 && fm.rng == nullptr) {
    throw ContractError("forward: train mode with dropout needs an rng");
  }
  Rng unused;
  Rng& rng = fm.rng ? *fm.rng : unused;

  ForwardResult r;
  r.trace.question = model.encode_question(tokens);
  Tensor query = dropout(r.trace.question, cfg.dropout, fm.mode, rng);
  Tensor regions = project_regions(features, model.image);
  for (const auto& layer : model.layers) {
    Tensor p = attention_step(regions, query, layer);
    Refinement step = aggregate_and_refine(regions, p, query);
    r.trace.attention.push_back(p);
    r.trace.attended.push_back(step.attended);
    r.trace.queries.push_back(step.query);
    query = step.query;
  }
  Tensor final_query = dropout(query, cfg.dropout, fm.mode, rng);
  r.logits = ops::add_rows(ops::matmul_nt(final_query, model.classifier.weight), model.classifier.bias);
  {
    NoGradScope no_grad;
    r.trace.answer_probs = ops::softmax(r.logits, 1);
  }
  return r;
}

/// Index of the largest probability; ties go to the lowest index.
inline std::size_t predict_answer(std::span<const real> probs) {
  if (probs.empty()) throw ContractError("predict_answer: empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

/// predict_answer for every row of a (B × |A|) tensor.
inline std::vector<std::size_t> predict_answers(const Tensor& probs) {
  std::vector<std::size_t> out;
  const std::size_t cols = probs.dim(1);
  for (std::size_t b = 0; b < probs.dim(0); ++b) {
    out.push_back(predict_answer(probs.values().subspan(b * cols, cols)));
  }
  return out;
}

}  // namespace san

#endif  // SAN_ATTENTION_HPP
