#ifndef SAN_CHECKPOINT_HPP
#define SAN_CHECKPOINT_HPP

// SANC checkpoint: "SANC", u32 version, u32 config length, config text
// (key=value lines), then one record per parameter until end of file:
// u32 name length, name, u32 rank, rank × u32 extents, f64 payload.
// All integers and floats little-endian.

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "san/attention.hpp"
#include "san/binary_io.hpp"
#include "san/io_util.hpp"

namespace san {

inline constexpr char kCheckpointMagic[] = "SANC";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  SanModel model;
  Vocab vocab;
  std::vector<std::string> answers;
};

namespace detail {
inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}
inline std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}
}  // namespace detail

inline std::vector<char> encode_checkpoint(const SanModel& model, const Vocab& vocab,
                                           const std::vector<std::string>& answers) {
  auto kv = model.config.to_key_values();
  kv["vocab"] = detail::join_tokens(vocab.tokens());
  kv["answers"] = detail::join_tokens(answers);
  std::string config;
  for (const auto& [k, v] : kv) config += k + "=" + v + "\n";

  binary::Writer w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(config.size()));
  w.bytes(config);
  for (const auto& [name, tensor] : model.parameters()) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t e : tensor.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (real v : tensor.values()) w.f64(static_cast<double>(v));
  }
  return w.data();
}

inline Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& what = "SANC") {
  binary::Reader r(bytes, what);
  if (r.bytes(4) != std::string_view(kCheckpointMagic, 4)) throw FormatError(what + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t config_len = r.u32();
  auto kv = parse_key_values(r.bytes(config_len), what);
  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(what + ": config block lacks '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  const auto vocab_tokens = detail::split_tokens(take("vocab"));
  const auto answers = detail::split_tokens(take("answers"));
  if (vocab_tokens.size() < 2 || vocab_tokens[0] != Vocab::kPadToken ||
      vocab_tokens[1] != Vocab::kUnkToken) {
    throw FormatError(what + ": vocabulary must start with PAD and UNK");
  }
  Checkpoint ckpt;
  ckpt.vocab = Vocab(std::vector<std::string>(vocab_tokens.begin() + 2, vocab_tokens.end()));
  ckpt.answers = answers;
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_key_values(kv);
  } catch (const ConfigError& e) {
    throw FormatError(what + ": " + e.what());
  }
  Rng rng(0);
  ckpt.model = SanModel::init(cfg, rng);

  std::map<std::string, Tensor> by_name;
  for (const auto& [name, t] : ckpt.model.parameters()) by_name.emplace(name, t);
  while (r.remaining() > 0) {
    const std::string name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError(what + ": unexpected parameter '" + name + "'");
    Tensor t = it->second;
    if (t.shape() != shape) {
      throw FormatError(what + ": parameter '" + name + "' has shape " + shape_string(shape) +
                        ", model expects " + shape_string(t.shape()));
    }
    for (auto& v : t.mutable_values()) v = static_cast<real>(r.f64());
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    throw FormatError(what + ": missing parameter '" + by_name.begin()->first + "'");
  }
  return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const SanModel& model,
                            const Vocab& vocab, const std::vector<std::string>& answers) {
  write_file_bytes(path, encode_checkpoint(model, vocab, answers));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path), path.string());
}

}  // namespace san

#endif  // SAN_CHECKPOINT_HPP
