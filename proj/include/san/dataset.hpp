#ifndef SAN_DATASET_HPP
#define SAN_DATASET_HPP

// Synthetic grid-scene question answering.
//
// A scene is a g×g grid whose cells are empty or hold one object with a shape
// and a colour. Questions come from three templates:
//   one_hop  "what color is the <shape>"
//   two_hop  "what color is the object next to the <shape>"
//            "what shape is the object next to the <color> <shape>"
//   count    "how many <color> objects"
// "next to" means the 4-neighbourhood. Every emitted answer is re-derived by
// resolve_answer(), which parses the question text independently of the
// template that produced it.

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "san/config.hpp"
#include "san/image_model.hpp"
#include "san/question_model.hpp"

namespace san {

inline constexpr std::array<const char*, 4> kShapeNames{"circle", "square", "triangle", "star"};
inline constexpr std::array<const char*, 4> kColorNames{"red", "blue", "green", "yellow"};
inline constexpr std::array<const char*, 7> kNumberWords{"zero", "one", "two", "three",
                                                         "four", "five", "six"};
inline constexpr std::size_t kMaxCount = kNumberWords.size() - 1;

struct Object {
  std::size_t shape = 0;  // index into kShapeNames
  std::size_t color = 0;  // index into kColorNames
  bool operator==(const Object&) const = default;
};

/// Cell (x, y) is region y·g + x.
struct Scene {
  std::string id;
  std::size_t grid_side = 7;
  std::vector<std::optional<Object>> cells;

  std::size_t object_count() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(),
                                                  [](const auto& c) { return c.has_value(); }));
  }

  /// Occupied 4-neighbours of a cell.
  std::vector<std::size_t> occupied_neighbors(std::size_t cell) const {
    std::vector<std::size_t> out;
    const std::size_t g = grid_side, x = cell % g, y = cell / g;
    auto probe = [&](std::size_t nx, std::size_t ny) {
      const std::size_t n = ny * g + nx;
      if (cells[n]) out.push_back(n);
    };
    if (y > 0) probe(x, y - 1);
    if (x > 0) probe(x - 1, y);
    if (x + 1 < g) probe(x + 1, y);
    if (y + 1 < g) probe(x, y + 1);
    return out;
  }

  /// Occupied cells other than `cell` within Manhattan distance `radius`.
  std::size_t occupied_within(std::size_t cell, std::size_t radius) const {
    const std::size_t g = grid_side;
    const auto x = static_cast<std::ptrdiff_t>(cell % g), y = static_cast<std::ptrdiff_t>(cell / g);
    std::size_t n = 0;
    for (std::size_t other = 0; other < cells.size(); ++other) {
      if (other == cell || !cells[other]) continue;
      const auto ox = static_cast<std::ptrdiff_t>(other % g), oy = static_cast<std::ptrdiff_t>(other / g);
      n += static_cast<std::size_t>(std::abs(ox - x) + std::abs(oy - y)) <= radius;
    }
    return n;
  }

  bool operator==(const Scene&) const = default;
};

enum class QType { one_hop, two_hop, count };

inline std::string qtype_name(QType t) {
  switch (t) {
    case QType::one_hop: return "one_hop";
    case QType::two_hop: return "two_hop";
    case QType::count: return "count";
  }
  return "?";
}

inline QType parse_qtype(const std::string& s) {
  if (s == "one_hop") return QType::one_hop;
  if (s == "two_hop") return QType::two_hop;
  if (s == "count") return QType::count;
  throw DataError("unknown question type '" + s + "'");
}

inline constexpr std::array<QType, 3> kAllQTypes{QType::one_hop, QType::two_hop, QType::count};

/// Generates a scene with a uniformly drawn object count in [min_objects,
/// max_objects], placed in distinct cells with uniform shapes and colours.
inline Scene generate_scene(Rng& rng, std::size_t grid_side, std::size_t min_objects,
                            std::size_t max_objects) {
  const std::size_t cells = grid_side * grid_side;
  if (grid_side == 0 || min_objects < 2 || min_objects > max_objects || max_objects > cells) {
    throw GenerationError("generate_scene: object range [" + std::to_string(min_objects) + ", " +
                          std::to_string(max_objects) + "] does not fit a " +
                          std::to_string(grid_side) + "x" + std::to_string(grid_side) + " grid");
  }
  Scene s;
  s.grid_side = grid_side;
  s.cells.assign(cells, std::nullopt);
  std::uniform_int_distribution<std::size_t> count_dist(min_objects, max_objects);
  std::uniform_int_distribution<std::size_t> attr(0, 3);
  const std::size_t n = count_dist(rng);
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial Fisher–Yates with explicit draws keeps the stream portable.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, cells - 1);
    std::swap(order[i], order[pick(rng)]);
    const std::size_t shape = attr(rng);
    const std::size_t color = attr(rng);
    s.cells[order[i]] = Object{shape, color};
  }
  return s;
}

inline constexpr std::size_t kSemanticDims = 8;
inline constexpr std::size_t kMinRawDim = kSemanticDims + 2;

/// Region i → [one-hot shape | one-hot colour | x/g | y/g | 0…] + N(0, σ²).
inline RegionFeatureMap render_region_features(const Scene& scene, std::size_t raw_dim, real noise,
                                               Rng& rng) {
  if (raw_dim < kMinRawDim) {
    throw ContractError("render_region_features: d_raw must be at least " +
                        std::to_string(kMinRawDim));
  }
  if (noise < 0) throw ContractError("render_region_features: negative noise");
  const std::size_t g = scene.grid_side, m = g * g;
  RegionFeatureMap f;
  f.regions = m;
  f.raw_dim = raw_dim;
  f.values.assign(m * raw_dim, 0.0f);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    float* row = f.values.data() + i * raw_dim;
    if (const auto& obj = scene.cells[i]) {
      row[obj->shape] = 1.0f;
      row[4 + obj->color] = 1.0f;
    }
    row[8] = static_cast<float>(static_cast<double>(i % g) / static_cast<double>(g));
    row[9] = static_cast<float>(static_cast<double>(i / g) / static_cast<double>(g));
    if (noise > 0) {
      for (std::size_t k = 0; k < raw_dim; ++k) {
        row[k] = static_cast<float>(row[k] + noise * gauss(rng));
      }
    }
  }
  return f;
}

/// Question text, answer and the cells that ground it.
struct Question {
  std::vector<std::string> words;
  std::string answer;
  QType type = QType::one_hop;
  std::optional<std::size_t> referent_cell;
  std::optional<std::size_t> answer_cell;  // cell holding the answered attribute
};

/// Ground truth for a question, computed directly from the scene.
struct Resolution {
  std::string answer;
  std::optional<std::size_t> referent_cell;
  std::optional<std::size_t> answer_cell;
};

namespace detail {
inline std::optional<std::size_t> index_of(const auto& names, const std::string& word) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (word == names[i]) return i;
  }
  return std::nullopt;
}

template <class Pred>
std::vector<std::size_t> cells_where(const Scene& s, Pred pred) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.cells.size(); ++i) {
    if (s.cells[i] && pred(*s.cells[i])) out.push_back(i);
  }
  return out;
}
}  // namespace detail

/// Parses a question and answers it from the scene. Throws GenerationError
/// when the question has no unique grounding in this scene.
inline Resolution resolve_answer(const Scene& scene, const std::vector<std::string>& words) {
  using detail::cells_where;
  using detail::index_of;
  auto fail = [&](const std::string& why) -> GenerationError {
    std::string q;
    for (const auto& w : words) q += (q.empty() ? "" : " ") + w;
    return GenerationError("resolve '" + q + "': " + why);
  };
  auto unique = [&](const std::vector<std::size_t>& cells) {
    if (cells.size() != 1) throw fail("referent matches " + std::to_string(cells.size()) + " objects");
    return cells.front();
  };
  auto sole_neighbor = [&](std::size_t cell) {
    auto n = scene.occupied_neighbors(cell);
    if (n.size() != 1) throw fail("referent has " + std::to_string(n.size()) + " neighbours");
    return n.front();
  };

  const std::size_t n = words.size();
  // how many <color> objects
  if (n == 4 && words[0] == "how" && words[1] == "many" && words[3] == "objects") {
    auto color = index_of(kColorNames, words[2]);
    if (!color) throw fail("unknown colour");
    auto cells = cells_where(scene, [&](const Object& o) { return o.color == *color; });
    if (cells.size() > kMaxCount) throw fail("count above " + std::to_string(kMaxCount));
    return {kNumberWords[cells.size()], std::nullopt, std::nullopt};
  }
  if (n < 5 || words[0] != "what" || words[2] != "is" || words[3] != "the") throw fail("no template");
  const bool ask_color = words[1] == "color";
  const bool ask_shape = words[1] == "shape";
  if (!ask_color && !ask_shape) throw fail("unknown attribute");
  auto attribute = [&](std::size_t cell) {
    const Object& o = *scene.cells[cell];
    return std::string(ask_color ? kColorNames[o.color] : kShapeNames[o.shape]);
  };

  // what <attr> is the <shape>
  if (n == 5) {
    auto shape = index_of(kShapeNames, words[4]);
    if (!shape) throw fail("unknown shape");
    const std::size_t ref = unique(cells_where(scene, [&](const Object& o) { return o.shape == *shape; }));
    return {attribute(ref), ref, ref};
  }
  // what <attr> is the object next to the [<color>] <shape>
  if ((n == 9 || n == 10) && words[4] == "object" && words[5] == "next" && words[6] == "to" &&
      words[7] == "the") {
    auto shape = index_of(kShapeNames, words[n - 1]);
    if (!shape) throw fail("unknown shape");
    std::optional<std::size_t> color;
    if (n == 10) {
      color = index_of(kColorNames, words[8]);
      if (!color) throw fail("unknown colour");
    }
    const std::size_t ref = unique(cells_where(scene, [&](const Object& o) {
      return o.shape == *shape && (!color || o.color == *color);
    }));
    const std::size_t target = sole_neighbor(ref);
    return {attribute(target), ref, target};
  }
  throw fail("no template");
}

/// Draws a question of the requested type that the scene grounds uniquely.
/// A two-hop referent must have no object other than its neighbour within
/// Manhattan distance `two_hop_clearance` (1 only demands a unique neighbour).
inline Question generate_question(const Scene& scene, QType type, Rng& rng,
                                  std::size_t two_hop_clearance = 1) {
  using detail::cells_where;
  auto choose = [&rng](std::size_t n) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    return pick(rng);
  };
  Question q;
  q.type = type;
  switch (type) {
    case QType::one_hop: {
      std::vector<std::size_t> referents;
      for (std::size_t s = 0; s < 4; ++s) {
        auto cells = cells_where(scene, [&](const Object& o) { return o.shape == s; });
        if (cells.size() == 1) referents.push_back(cells.front());
      }
      if (referents.empty()) throw GenerationError("one_hop: no shape occurs exactly once");
      const std::size_t ref = referents[choose(referents.size())];
      const Object& obj = *scene.cells[ref];
      q.words = {"what", "color", "is", "the", kShapeNames[obj.shape]};
      q.answer = kColorNames[obj.color];
      q.referent_cell = q.answer_cell = ref;
      break;
    }
    case QType::two_hop: {
      // Referents unique by shape (colour variant) or by colour and shape
      // (shape variant) that have exactly one occupied neighbour.
      struct Option {
        std::size_t cell;
        bool ask_shape;
      };
      std::vector<Option> options;
      for (std::size_t cell = 0; cell < scene.cells.size(); ++cell) {
        const auto& obj = scene.cells[cell];
        if (!obj || scene.occupied_neighbors(cell).size() != 1) continue;
        if (scene.occupied_within(cell, std::max<std::size_t>(two_hop_clearance, 1)) != 1) continue;
        if (cells_where(scene, [&](const Object& o) { return o.shape == obj->shape; }).size() == 1) {
          options.push_back({cell, false});
        }
        if (cells_where(scene, [&](const Object& o) { return o == *obj; }).size() == 1) {
          options.push_back({cell, true});
        }
      }
      if (options.empty()) throw GenerationError("two_hop: no referent with a unique neighbour");
      const Option pick = options[choose(options.size())];
      const Object& ref = *scene.cells[pick.cell];
      const std::size_t target = scene.occupied_neighbors(pick.cell).front();
      const Object& other = *scene.cells[target];
      if (pick.ask_shape) {
        q.words = {"what", "shape", "is", "the", "object", "next", "to", "the",
                   kColorNames[ref.color], kShapeNames[ref.shape]};
        q.answer = kShapeNames[other.shape];
      } else {
        q.words = {"what", "color", "is", "the", "object", "next", "to", "the", kShapeNames[ref.shape]};
        q.answer = kColorNames[other.color];
      }
      q.referent_cell = pick.cell;
      q.answer_cell = target;
      break;
    }
    case QType::count: {
      std::vector<std::size_t> colors;
      for (std::size_t c = 0; c < 4; ++c) {
        if (cells_where(scene, [&](const Object& o) { return o.color == c; }).size() <= kMaxCount) {
          colors.push_back(c);
        }
      }
      if (colors.empty()) throw GenerationError("count: every colour exceeds the number vocabulary");
      const std::size_t color = colors[choose(colors.size())];
      q.words = {"how", "many", kColorNames[color], "objects"};
      q.answer = kNumberWords[cells_where(scene, [&](const Object& o) { return o.color == color; }).size()];
      break;
    }
  }
  // Self-check against the text-driven resolver.
  const Resolution r = resolve_answer(scene, q.words);
  if (r.answer != q.answer || r.answer_cell != q.answer_cell) {
    throw GenerationError("generate_question: resolver disagrees on '" + q.answer + "'");
  }
  return q;
}

/// Fixed question vocabulary of the templates above.
inline Vocab question_vocab() {
  std::vector<std::string> words{"what", "color", "shape", "is", "the", "object", "next",
                                 "to", "how", "many", "objects"};
  for (auto s : kShapeNames) words.emplace_back(s);
  for (auto c : kColorNames) words.emplace_back(c);
  return Vocab(words);
}

/// Closed answer set: colours, shapes, then number words.
inline std::vector<std::string> answer_vocab() {
  std::vector<std::string> out;
  for (auto c : kColorNames) out.emplace_back(c);
  for (auto s : kShapeNames) out.emplace_back(s);
  for (auto n : kNumberWords) out.emplace_back(n);
  return out;
}

inline std::size_t answer_index(const std::vector<std::string>& answers, const std::string& a) {
  auto it = std::find(answers.begin(), answers.end(), a);
  if (it == answers.end()) throw DataError("answer '" + a + "' outside the answer vocabulary");
  return static_cast<std::size_t>(it - answers.begin());
}

struct QaSample {
  std::string scene;
  std::vector<std::string> question;
  std::string answer;
  QType type = QType::one_hop;

  std::vector<TokenId> tokens;  // filled by attach_ids
  std::size_t answer_id = 0;

  bool operator==(const QaSample& o) const {
    return scene == o.scene && question == o.question && answer == o.answer && type == o.type;
  }
};

struct DatasetSplit {
  std::vector<QaSample> samples;
  Vocab vocab = question_vocab();
  std::vector<std::string> answers = answer_vocab();
  std::map<std::string, RegionFeatureMap> features;
  std::map<std::string, Scene> scenes;  // optional ground truth

  std::size_t size() const { return samples.size(); }

  /// Resolves token and answer ids against this split's vocabularies.
  void attach_ids() {
    for (auto& s : samples) {
      s.tokens = vocab.encode(s.question);
      s.answer_id = answer_index(answers, s.answer);
    }
  }
};

struct GeneratorConfig {
  std::size_t grid_side = 7;
  std::size_t raw_dim = 16;
  real noise = 0.1;
  std::size_t min_objects = 5;
  std::size_t max_objects = 9;
  std::size_t two_hop_clearance = 1;
  std::vector<QType> types{kAllQTypes.begin(), kAllQTypes.end()};
  std::size_t max_attempts = 1000;
};

/// Generates `count` samples, one scene per sample, each from its own RNG
/// stream seeded by (seed, stream, index). Question types cycle through
/// cfg.types. Scene ids are "<prefix>-<index>".
inline DatasetSplit generate_split(const GeneratorConfig& cfg, std::size_t count, std::uint64_t seed,
                                   std::uint64_t stream, const std::string& prefix) {
  if (cfg.types.empty()) throw GenerationError("generate_split: no question types");
  DatasetSplit split;
  for (std::size_t i = 0; i < count; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(i)};
    Rng rng(seq);
    const QType type = cfg.types[i % cfg.types.size()];
    std::optional<Question> q;
    Scene scene;
    for (std::size_t attempt = 0; attempt < cfg.max_attempts && !q; ++attempt) {
      scene = generate_scene(rng, cfg.grid_side, cfg.min_objects, cfg.max_objects);
      try {
        q = generate_question(scene, type, rng, cfg.two_hop_clearance);
      } catch (const GenerationError&) {
      }
    }
    if (!q) throw GenerationError("generate_split: no " + qtype_name(type) + " question after " +
                                  std::to_string(cfg.max_attempts) + " scenes");
    char id[32];
    std::snprintf(id, sizeof id, "%s-%06zu", prefix.c_str(), i);
    scene.id = id;
    split.features[scene.id] = render_region_features(scene, cfg.raw_dim, cfg.noise, rng);
    split.scenes[scene.id] = scene;
    split.samples.push_back({scene.id, q->words, q->answer, type, {}, 0});
  }
  split.attach_ids();
  return split;
}

// ------------------------------------------------------------------ files

inline nlohmann::json sample_to_json(const QaSample& s) {
  return {{"scene", s.scene}, {"q", s.question}, {"a", s.answer}, {"type", qtype_name(s.type)}};
}

/// One JSON object per line: {"scene", "q", "a", "type"}.
inline void write_dataset(const std::filesystem::path& path, const std::vector<QaSample>& samples) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& s : samples) os << sample_to_json(s).dump() << '\n';
}

inline std::vector<QaSample> parse_dataset(std::istream& is, const std::string& origin) {
  std::vector<QaSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      QaSample s;
      s.scene = j.at("scene").get<std::string>();
      s.question = j.at("q").get<std::vector<std::string>>();
      s.answer = j.at("a").get<std::string>();
      s.type = parse_qtype(j.at("type").get<std::string>());
      if (s.question.empty()) throw DataError("empty question");
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": malformed sample: " + e.what());
    }
  }
  return out;
}

/// Reads samples and resolves each scene's <scene-id>.sanf in features_dir.
inline DatasetSplit read_dataset(const std::filesystem::path& path,
                                 const std::filesystem::path& features_dir,
                                 const Vocab& vocab = question_vocab(),
                                 const std::vector<std::string>& answers = answer_vocab()) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read " + path.string());
  DatasetSplit split;
  split.vocab = vocab;
  split.answers = answers;
  split.samples = parse_dataset(is, path.string());
  for (const auto& s : split.samples) {
    if (split.features.count(s.scene)) continue;
    const auto file = features_dir / (s.scene + ".sanf");
    if (!std::filesystem::exists(file)) {
      throw DataError("feature file for scene '" + s.scene + "' not found at " + file.string());
    }
    split.features[s.scene] = read_feature_file(file);
  }
  split.attach_ids();
  return split;
}

inline nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json objects = nlohmann::json::array();
  for (std::size_t i = 0; i < s.cells.size(); ++i) {
    if (const auto& o = s.cells[i]) {
      objects.push_back({{"cell", i}, {"shape", kShapeNames[o->shape]}, {"color", kColorNames[o->color]}});
    }
  }
  return {{"id", s.id}, {"grid", s.grid_side}, {"objects", objects}};
}

inline Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  s.id = j.at("id").get<std::string>();
  s.grid_side = j.at("grid").get<std::size_t>();
  s.cells.assign(s.grid_side * s.grid_side, std::nullopt);
  for (const auto& o : j.at("objects")) {
    const std::size_t cell = o.at("cell").get<std::size_t>();
    auto shape = detail::index_of(kShapeNames, o.at("shape").get<std::string>());
    auto color = detail::index_of(kColorNames, o.at("color").get<std::string>());
    if (cell >= s.cells.size() || !shape || !color) throw DataError("scene " + s.id + ": bad object");
    s.cells[cell] = Object{*shape, *color};
  }
  return s;
}

inline void write_scenes(const std::filesystem::path& path, const std::map<std::string, Scene>& scenes) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& [id, s] : scenes) os << scene_to_json(s).dump() << '\n';
}

inline std::map<std::string, Scene> read_scenes(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read " + path.string());
  std::map<std::string, Scene> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      Scene s = scene_from_json(nlohmann::json::parse(line));
      out[s.id] = std::move(s);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------- batches

struct Batch {
  Tensor features;                   // (B·m) × d_raw
  TokenBatch tokens;
  std::vector<std::size_t> answers;
  std::vector<std::size_t> indices;  // positions in the split
};

inline Batch make_batch(const DatasetSplit& split, const std::vector<std::size_t>& indices) {
  Batch b;
  b.indices = indices;
  std::vector<std::vector<TokenId>> seqs;
  std::vector<real> feats;
  std::size_t regions = 0, raw = 0;
  for (std::size_t i : indices) {
    const QaSample& s = split.samples.at(i);
    auto it = split.features.find(s.scene);
    if (it == split.features.end()) throw DataError("no features for scene '" + s.scene + "'");
    const RegionFeatureMap& f = it->second;
    if (regions == 0) {
      regions = f.regions;
      raw = f.raw_dim;
    } else if (f.regions != regions || f.raw_dim != raw) {
      throw DataError("scene '" + s.scene + "' has mismatched feature dimensions");
    }
    feats.insert(feats.end(), f.values.begin(), f.values.end());
    seqs.push_back(s.tokens);
    b.answers.push_back(s.answer_id);
  }
  b.features = Tensor({indices.size() * regions, raw}, std::move(feats));
  b.tokens = TokenBatch::from(seqs);
  return b;
}

/// Seeded shuffle into consecutive batches; the last batch may be partial.
inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                           std::uint64_t seed) {
  if (batch_size < 1) throw ContractError("batches: batch size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return out;
}

inline std::vector<Batch> batches(const DatasetSplit& split, std::size_t batch_size, std::uint64_t seed) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(split.size(), batch_size, seed)) out.push_back(make_batch(split, idx));
  return out;
}

}  // namespace san

#endif  // SAN_DATASET_HPP
