// san: generate synthetic data, train, evaluate and visualise stacked
// attention models.
//
//   san gen-data --out data
//   san train    --set data.dir=data --set model.layers=2 --out run
//   san eval     --set data.dir=data --checkpoint run/model.sanc --out run
//   san attend   --set data.dir=data --checkpoint run/model.sanc --sample test-000003 --out viz
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric divergence.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "san/commands.hpp"

namespace {

struct Options {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool dump_config = false;
  std::string checkpoint;
  std::string sample;
};

void add_common(CLI::App* cmd, Options& o, const std::string& default_out) {
  o.out = default_out;
  cmd->add_option("--config", o.config_file, "key=value config file");
  cmd->add_option("--set", o.overrides, "override one key (key=value), repeatable");
  cmd->add_option("--seed", o.seed, "master seed (same as --set seed=N)");
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  cmd->add_flag("--dump-config", o.dump_config, "print the resolved configuration and exit");
}

san::Config resolve(const Options& o) {
  san::Config c = san::cli::default_config();
  if (!o.config_file.empty()) {
    if (!std::filesystem::exists(o.config_file)) {
      throw san::ConfigError("config file not found: " + o.config_file);
    }
    c.merge_text(san::read_text_file(o.config_file), o.config_file);
  }
  if (o.seed) c.set("seed", std::to_string(*o.seed));
  for (const auto& kv : o.overrides) c.set_assignment(kv);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stacked attention networks on synthetic grid scenes"};
  app.require_subcommand(1);

  Options gen, train, eval, attend;
  auto* gen_cmd = app.add_subcommand("gen-data", "write train/val/test splits, features and vocabularies");
  add_common(gen_cmd, gen, "data");
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint and run log");
  add_common(train_cmd, train, "run");
  auto* eval_cmd = app.add_subcommand("eval", "accuracy, per-type accuracy and WUPS of a checkpoint");
  add_common(eval_cmd, eval, "run");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "SANC checkpoint")->required();
  auto* attend_cmd = app.add_subcommand("attend", "attention heatmaps for one sample");
  add_common(attend_cmd, attend, "viz");
  attend_cmd->add_option("--checkpoint", attend.checkpoint, "SANC checkpoint")->required();
  attend_cmd->add_option("--sample", attend.sample, "sample (scene) id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : san::cli::kExitConfig;
  }

  using namespace san::cli;
  auto run = [](const Options& o, auto&& body) {
    return run_guarded(
        [&] {
          const san::Config c = resolve(o);
          if (o.dump_config) {
            std::cout << c.dump();
            return;
          }
          body(c);
        },
        std::cerr);
  };

  if (*gen_cmd) return run(gen, [&](const san::Config& c) { cmd_gen_data(c, gen.out, std::cout); });
  if (*train_cmd) return run(train, [&](const san::Config& c) { cmd_train(c, train.out, std::cout); });
  if (*eval_cmd) return run(eval, [&](const san::Config& c) { cmd_eval(c, eval.checkpoint, eval.out, std::cout); });
  return run(attend, [&](const san::Config& c) {
    cmd_attend(c, attend.checkpoint, attend.sample, attend.out, std::cout);
  });
}
