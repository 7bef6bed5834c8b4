#ifndef SAN_COMMANDS_HPP
#define SAN_COMMANDS_HPP

// The four pipeline commands behind tools/san: gen-data, train, eval and
// attend. Each takes a fully resolved Config and writes its artifacts under
// an output directory; the executable only parses flags and maps errors to
// exit codes.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "san/checkpoint.hpp"
#include "san/config.hpp"
#include "san/dataset.hpp"
#include "san/metrics.hpp"
#include "san/training.hpp"
#include "san/viz.hpp"

namespace san::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitDivergence = 4,
};

/// Every recognised key with its default. Model sizes are desk-scale; the
/// CNN filter counts used in the literature (128,256,256) remain available
/// through model.cnn_filters.
inline Config default_config() {
  Config c;
  c.declare("seed", "1", "master seed for generation, initialisation, shuffling and dropout")
      .declare("data.dir", "data", "dataset directory read by train/eval/attend")
      .declare("data.train", "2000", "training samples")
      .declare("data.val", "500", "validation samples")
      .declare("data.test", "500", "test samples")
      .declare("data.grid_side", "7", "scene grid side g (m = g*g regions)")
      .declare("data.raw_dim", "16", "raw region feature size (>= 10)")
      .declare("data.noise", "0.1", "Gaussian feature noise sigma")
      .declare("data.min_objects", "5")
      .declare("data.max_objects", "9")
      .declare("data.two_hop_clearance", "1",
               "two-hop referents have no other object within this Manhattan radius except their neighbour")
      .declare("data.types", "one_hop,two_hop,count", "question types, cycled in order")
      .declare("model.encoder", "lstm", "lstm or cnn")
      .declare("model.layers", "2", "attention layers K (1..4)")
      .declare("model.embed_dim", "32")
      .declare("model.hidden_dim", "32", "LSTM state size (question dimension d)")
      .declare("model.cnn_filters", "8,12,12", "unigram,bigram,trigram filter counts")
      .declare("model.attention_dim", "64", "attention hidden size k; 0 means k = d")
      .declare("model.dropout", "0.5")
      .declare("model.forget_bias", "0")
      .declare("train.lr", "0.1", "learning rate when train.lr_grid is empty")
      .declare("train.lr_grid", "", "comma-separated learning rates to search")
      .declare("train.grid_epochs", "5", "epochs per grid-search candidate")
      .declare("train.momentum", "0.9")
      .declare("train.batch_size", "32")
      .declare("train.clip_norm", "5")
      .declare("train.epochs", "30")
      .declare("eval.split", "test", "split evaluated by eval")
      .declare("eval.taxonomy", "", "taxonomy file; empty means <data.dir>/taxonomy.txt")
      .declare("eval.wups_downweight", "0", "1 scales sub-threshold similarities by 0.1 instead of zeroing")
      .declare("attend.split", "test")
      .declare("attend.image_size", "0", "heatmap side in pixels; 0 means 32 per grid cell")
      .declare("attend.sigma", "0", "blur sigma in pixels; 0 means half a cell");
  return c;
}

inline bool flag_value(const Config& c, const std::string& key) {
  const std::string& v = c.str(key);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config key '" + key + "': expected 0 or 1, got '" + v + "'");
}

inline std::uint64_t seed_of(const Config& c) { return c.size_value("seed"); }

inline GeneratorConfig generator_config(const Config& c) {
  GeneratorConfig g;
  g.grid_side = c.size_value("data.grid_side");
  g.raw_dim = c.size_value("data.raw_dim");
  g.noise = static_cast<real>(c.real_value("data.noise"));
  g.min_objects = c.size_value("data.min_objects");
  g.max_objects = c.size_value("data.max_objects");
  g.two_hop_clearance = c.size_value("data.two_hop_clearance");
  g.types.clear();
  for (const auto& t : split(c.str("data.types"), ',')) {
    try {
      g.types.push_back(parse_qtype(t));
    } catch (const Error& e) {
      throw ConfigError(std::string("data.types: ") + e.what());
    }
  }
  if (g.grid_side < 2) throw ConfigError("data.grid_side must be at least 2");
  if (g.raw_dim < kMinRawDim) {
    throw ConfigError("data.raw_dim must be at least " + std::to_string(kMinRawDim));
  }
  if (g.min_objects < 2 || g.min_objects > g.max_objects || g.max_objects > g.grid_side * g.grid_side) {
    throw ConfigError("data.min_objects/max_objects: need 2 <= min <= max <= g*g");
  }
  return g;
}

inline ModelConfig model_config(const Config& c, std::size_t vocab_size, std::size_t answer_count,
                                std::size_t raw_dim) {
  ModelConfig m;
  m.encoder = parse_encoder(c.str("model.encoder"));
  m.vocab_size = vocab_size;
  m.answer_count = answer_count;
  m.raw_dim = raw_dim;
  m.layers = c.size_value("model.layers");
  m.embed_dim = c.size_value("model.embed_dim");
  m.hidden_dim = c.size_value("model.hidden_dim");
  const auto filters = c.size_list("model.cnn_filters");
  if (filters.size() != 3) throw ConfigError("model.cnn_filters needs three counts");
  std::copy(filters.begin(), filters.end(), m.cnn_filters.begin());
  m.attention_dim = c.size_value("model.attention_dim");
  m.dropout = static_cast<real>(c.real_value("model.dropout"));
  m.forget_bias = static_cast<real>(c.real_value("model.forget_bias"));
  m.validate();
  return m;
}

inline TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.learning_rate = static_cast<real>(c.real_value("train.lr"));
  t.lr_grid.clear();
  if (!trim(c.str("train.lr_grid")).empty()) {
    for (double v : c.real_list("train.lr_grid")) t.lr_grid.push_back(static_cast<real>(v));
  }
  t.momentum = static_cast<real>(c.real_value("train.momentum"));
  t.batch_size = c.size_value("train.batch_size");
  t.clip_norm = static_cast<real>(c.real_value("train.clip_norm"));
  t.epochs = c.size_value("train.epochs");
  t.seed = seed_of(c);
  t.validate();
  return t;
}

// ------------------------------------------------------------- data layout

/// Files of a generated dataset directory.
struct DataLayout {
  fs::path root;

  fs::path split_file(const std::string& name) const { return root / (name + ".jsonl"); }
  fs::path features() const { return root / "features"; }
  fs::path vocab() const { return root / "vocab.txt"; }
  fs::path answers() const { return root / "answers.txt"; }
  fs::path scenes() const { return root / "scenes.jsonl"; }
  fs::path taxonomy() const { return root / "taxonomy.txt"; }
  fs::path manifest() const { return root / "manifest.json"; }
};

inline const std::vector<std::string>& split_names() {
  static const std::vector<std::string> names{"train", "val", "test"};
  return names;
}

/// Answer words under "entity": colour, shape and number branches.
inline std::string answer_taxonomy_text() {
  std::ostringstream os;
  os << "attribute\tentity\ncolor\tattribute\nshape\tattribute\nnumber\tentity\n";
  for (const char* c : kColorNames) os << c << "\tcolor\n";
  for (const char* s : kShapeNames) os << s << "\tshape\n";
  for (const char* n : kNumberWords) os << n << "\tnumber\n";
  return os.str();
}

inline void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text_file(path, text);
}

inline std::vector<std::string> read_lines(const fs::path& path) {
  std::istringstream is(read_text_file(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

/// 64-bit FNV-1a, used to fingerprint files in the manifest.
inline std::uint64_t fnv1a(const std::vector<char>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char b : bytes) {
    h ^= static_cast<unsigned char>(b);
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Loads one split with the dataset's own vocabularies and ground-truth
/// scenes (when scenes.jsonl is present).
inline DatasetSplit load_split(const fs::path& data_dir, const std::string& name) {
  const DataLayout layout{data_dir};
  if (!fs::exists(layout.split_file(name))) {
    throw DataError("split '" + name + "' not found at " + layout.split_file(name).string());
  }
  const Vocab vocab = fs::exists(layout.vocab()) ? Vocab::load(layout.vocab()) : question_vocab();
  const auto answers = fs::exists(layout.answers()) ? read_lines(layout.answers()) : answer_vocab();
  DatasetSplit s = read_dataset(layout.split_file(name), layout.features(), vocab, answers);
  if (fs::exists(layout.scenes())) {
    const auto all = read_scenes(layout.scenes());
    for (const auto& sample : s.samples) {
      auto it = all.find(sample.scene);
      if (it != all.end()) s.scenes.emplace(it->first, it->second);
    }
  }
  return s;
}

// ------------------------------------------------------------------ gen-data

struct GenDataResult {
  std::map<std::string, std::size_t> counts;
  fs::path manifest;
};

inline GenDataResult cmd_gen_data(const Config& c, const fs::path& out, std::ostream& log) {
  const GeneratorConfig g = generator_config(c);
  const std::uint64_t seed = seed_of(c);
  const DataLayout layout{out};
  fs::create_directories(layout.features());

  GenDataResult result;
  std::map<std::string, Scene> scenes;
  nlohmann::json manifest{{"seed", seed}, {"config", nlohmann::json::object()}, {"splits", nlohmann::json::object()}};
  for (const auto& e : c.entries()) {
    if (e.key.rfind("data.", 0) == 0 && e.key != "data.dir") manifest["config"][e.key] = e.value;
  }
  for (std::size_t i = 0; i < split_names().size(); ++i) {
    const std::string& name = split_names()[i];
    const std::size_t count = c.size_value("data." + name);
    // Distinct streams and id prefixes keep the splits scene-disjoint.
    DatasetSplit s = generate_split(g, count, seed, i + 1, name);
    for (const auto& [id, f] : s.features) write_feature_file(layout.features() / (id + ".sanf"), f);
    write_dataset(layout.split_file(name), s.samples);
    scenes.insert(s.scenes.begin(), s.scenes.end());
    result.counts[name] = count;
    manifest["splits"][name] = {{"count", count},
                                {"fnv1a", hex64(fnv1a(read_file_bytes(layout.split_file(name))))}};
    log << "gen-data: " << name << " " << count << " samples\n";
  }
  question_vocab().save(layout.vocab());
  write_lines(layout.answers(), answer_vocab());
  write_scenes(layout.scenes(), scenes);
  write_text_file(layout.taxonomy(), answer_taxonomy_text());
  write_text_file(layout.manifest(), manifest.dump(2) + "\n");
  result.manifest = layout.manifest();
  return result;
}

// --------------------------------------------------------------------- train

struct TrainResult {
  fs::path checkpoint;
  fs::path run_log;
  real learning_rate = 0;
  std::vector<EpochReport> epochs;
};

inline TrainResult cmd_train(const Config& c, const fs::path& out, std::ostream& log) {
  TrainConfig tcfg = train_config(c);
  const fs::path data_dir = c.str("data.dir");
  const DatasetSplit train = load_split(data_dir, "train");
  if (train.size() == 0) throw DataError("training split is empty");
  const bool has_val = fs::exists(DataLayout{data_dir}.split_file("val"));
  const DatasetSplit val = has_val ? load_split(data_dir, "val") : DatasetSplit{};
  const std::size_t raw_dim = train.features.begin()->second.raw_dim;
  const ModelConfig mcfg = model_config(c, train.vocab.size(), train.answers.size(), raw_dim);

  fs::create_directories(out);
  TrainResult result;
  result.run_log = out / "run.jsonl";
  result.checkpoint = out / "model.sanc";
  std::ofstream run_log(result.run_log, std::ios::trunc);
  if (!run_log) throw DataError("cannot write " + result.run_log.string());

  if (!tcfg.lr_grid.empty()) {
    if (val.size() == 0) throw DataError("learning-rate search needs a non-empty val split");
    tcfg.learning_rate = grid_search_lr(mcfg, train, val, tcfg, tcfg.lr_grid, c.size_value("train.grid_epochs"));
    log << "train: grid search picked lr " << tcfg.learning_rate << "\n";
  }
  result.learning_rate = tcfg.learning_rate;

  Rng init_rng(tcfg.seed);
  SanModel model = SanModel::init(mcfg, init_rng);
  log << "train: " << mcfg.tag() << ", " << train.size() << " samples, lr " << tcfg.learning_rate << "\n";
  result.epochs = fit(model, train, val.size() ? &val : nullptr, tcfg, [&](const EpochReport& r) {
    run_log << r.to_json().dump() << '\n';
    log << "epoch " << r.epoch << " loss " << r.mean_loss << " train_acc " << r.train_accuracy;
    if (r.val_accuracy) log << " val_acc " << *r.val_accuracy;
    log << '\n';
  });
  save_checkpoint(result.checkpoint, model, train.vocab, train.answers);
  Config used = c;
  used.set("train.lr", std::to_string(tcfg.learning_rate));
  write_text_file(out / "config.txt", used.dump());
  return result;
}

// ---------------------------------------------------------------------- eval

/// Share of correctly answered two-hop samples whose final-layer attention
/// argmax lands on the cell holding the answered attribute.
struct Localization {
  std::size_t correct_two_hop = 0;
  std::size_t hits = 0;

  double rate() const {
    return correct_two_hop ? static_cast<double>(hits) / static_cast<double>(correct_two_hop) : 0.0;
  }
};

inline std::size_t argmax_index(const std::vector<real>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline Localization attention_localization(const SanModel& model, const DatasetSplit& split,
                                           std::size_t batch_size = 64) {
  NoGradScope no_grad;
  Localization loc;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split.samples[i].type == QType::two_hop && split.scenes.count(split.samples[i].scene)) idx.push_back(i);
  }
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::vector<std::size_t> chunk(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                         idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), start + batch_size)));
    const Batch batch = make_batch(split, chunk);
    const ForwardResult fr = forward(model, batch.features, batch.tokens);
    const auto preds = predict_answers(fr.trace.answer_probs);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      if (preds[b] != batch.answers[b]) continue;
      const QaSample& s = split.samples[chunk[b]];
      const Resolution r = resolve_answer(split.scenes.at(s.scene), s.question);
      ++loc.correct_two_hop;
      if (r.answer_cell && argmax_index(fr.trace.attention_of(fr.trace.layers(), b)) == *r.answer_cell) ++loc.hits;
    }
  }
  return loc;
}

struct EvalResult {
  EvalReport report;
  Localization localization;
  fs::path report_file;
};

inline void require_same_vocabularies(const Checkpoint& ckpt, const DatasetSplit& split) {
  if (!(ckpt.vocab == split.vocab)) {
    throw DataError("vocabulary mismatch: checkpoint has " + std::to_string(ckpt.vocab.size()) +
                    " question tokens, dataset has " + std::to_string(split.vocab.size()) +
                    " (or they differ in order)");
  }
  if (ckpt.answers != split.answers) {
    throw DataError("answer vocabulary mismatch between checkpoint and dataset");
  }
}

inline EvalResult cmd_eval(const Config& c, const fs::path& checkpoint, const fs::path& out, std::ostream& log) {
  const fs::path data_dir = c.str("data.dir");
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const DatasetSplit split = load_split(data_dir, c.str("eval.split"));
  require_same_vocabularies(ckpt, split);
  const fs::path tax_path = c.str("eval.taxonomy").empty() ? DataLayout{data_dir}.taxonomy()
                                                           : fs::path(c.str("eval.taxonomy"));
  const TaxonomyTree tax = TaxonomyTree::load(tax_path);

  const Evaluation ev = evaluate(ckpt.model, split);
  std::vector<std::string> preds, labels, types;
  for (std::size_t i = 0; i < split.size(); ++i) {
    preds.push_back(split.answers[ev.predictions[i]]);
    labels.push_back(split.samples[i].answer);
    types.push_back(qtype_name(split.samples[i].type));
  }
  WupsOptions opts;
  opts.down_weight = flag_value(c, "eval.wups_downweight");

  EvalResult result;
  result.report = make_report(preds, labels, types, tax, opts);
  result.localization = attention_localization(ckpt.model, split);
  fs::create_directories(out);
  result.report_file = out / "eval.json";
  write_text_file(result.report_file, result.report.to_json().dump(2) + "\n");

  const auto& r = result.report;
  log << ckpt.model.config.tag() << " on " << c.str("eval.split") << " (" << r.count << " samples)\n"
      << std::fixed << std::setprecision(4) << "  accuracy  " << r.accuracy << "\n  WUPS@0.9  " << r.wups_09
      << "\n  WUPS@0.0  " << r.wups_00 << "\n";
  for (const auto& [t, acc] : r.type_accuracy) {
    log << "  " << std::left << std::setw(9) << t << std::right << acc << "  (" << r.type_count.at(t) << ")\n";
  }
  if (result.localization.correct_two_hop) {
    log << "  two-hop localization " << result.localization.rate() << " over "
        << result.localization.correct_two_hop << " correct answers\n";
  }
  log.unsetf(std::ios::floatfield);
  return result;
}

// -------------------------------------------------------------------- attend

struct AttendResult {
  std::string predicted;
  std::vector<fs::path> heatmaps;
  fs::path overlay;
  fs::path trace;
};

inline AttendResult cmd_attend(const Config& c, const fs::path& checkpoint, const std::string& sample_id,
                               const fs::path& out, std::ostream& log) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const DatasetSplit split = load_split(c.str("data.dir"), c.str("attend.split"));
  require_same_vocabularies(ckpt, split);
  auto it = std::find_if(split.samples.begin(), split.samples.end(),
                         [&](const QaSample& s) { return s.scene == sample_id; });
  if (it == split.samples.end()) {
    throw DataError("unknown sample id '" + sample_id + "' in split " + c.str("attend.split"));
  }
  const std::size_t index = static_cast<std::size_t>(it - split.samples.begin());
  const RegionFeatureMap& f = split.features.at(sample_id);
  const std::size_t g = f.grid_side();
  std::size_t size = c.size_value("attend.image_size");
  if (size == 0) size = 32 * g;
  if (size % g != 0) throw ConfigError("attend.image_size must be a multiple of the grid side");
  double sigma = c.real_value("attend.sigma");
  if (sigma == 0) sigma = static_cast<double>(size / g) / 2;

  ForwardResult fr;
  {
    NoGradScope no_grad;
    const Batch batch = make_batch(split, {index});
    fr = forward(ckpt.model, batch.features, batch.tokens);
  }
  AttendResult result;
  result.predicted = split.answers[predict_answers(fr.trace.answer_probs).front()];

  Scene scene;
  if (auto s = split.scenes.find(sample_id); s != split.scenes.end()) {
    scene = s->second;
  } else {
    scene.grid_side = g;
    scene.cells.assign(g * g, std::nullopt);
  }

  fs::create_directories(out);
  nlohmann::json trace{{"sample", sample_id},
                       {"question", it->question},
                       {"answer", it->answer},
                       {"predicted", result.predicted},
                       {"model", ckpt.model.config.tag()},
                       {"layers", nlohmann::json::array()}};
  std::string overlay;
  for (std::size_t k = 1; k <= fr.trace.layers(); ++k) {
    const auto p = fr.trace.attention_of(k, 0);
    const Heatmap h = gaussian_blur(upsample_attention({p.begin(), p.end()}, g, size, k), sigma);
    const fs::path file = out / (sample_id + ".layer" + std::to_string(k) + ".pgm");
    export_pgm(h, file);
    result.heatmaps.push_back(file);
    trace["layers"].push_back({{"layer", k}, {"p", p}, {"argmax", argmax_index(p)}});
    overlay += "layer " + std::to_string(k) + "\n" + overlay_ascii(h, scene);
  }
  const auto probs = fr.trace.answer_probs.values();
  trace["answer_probs"] = std::vector<real>(probs.begin(), probs.end());

  result.overlay = out / (sample_id + ".overlay.txt");
  result.trace = out / (sample_id + ".trace.json");
  write_text_file(result.overlay, overlay);
  write_text_file(result.trace, trace.dump(2) + "\n");

  log << "Q: ";
  for (const auto& w : it->question) log << w << ' ';
  log << "\nA: " << it->answer << "  predicted: " << result.predicted << "\n" << overlay;
  return result;
}

// -------------------------------------------------------------------- errors

/// Runs `body`, reporting library errors on `err` and mapping them to exit
/// codes: 2 config, 3 data, 4 numeric divergence, 1 anything else.
inline int run_guarded(const std::function<void()>& body, std::ostream& err) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const SearchError& e) {
    err << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const VocabError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const GenerationError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const TaxonomyError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace san::cli

#endif  // SAN_COMMANDS_HPP
