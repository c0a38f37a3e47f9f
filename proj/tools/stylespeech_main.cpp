// Copyright 2026 The stylespeech authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "stylespeech/cli.hpp"

using stylespeech::Error;
namespace cli = stylespeech::cli;

int main(int argc, char** argv) {
  CLI::App app{"Controllable Mandarin text-to-speech: pinyin front end, additive style "
               "fusion, Griffin-Lim vocoder, and the evaluation protocol"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<int> fusion_stage;
  std::optional<std::string> mode;
  std::optional<int64_t> steps;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "root seed (fans out to init/dropout/griffin_lim)");
  app.add_option("--fusion-stage", fusion_stage, "style fusion stage")->check(CLI::Range(0, 2));
  app.add_option("--mode", mode, "training regime")->check(CLI::IsMember({"joint", "lora"}));
  app.add_option("--steps", steps, "training step count override");

  auto* prepare = app.add_subcommand("prepare", "extract mel/token/duration features");
  std::string manifest, out_dir;
  prepare->add_option("--manifest", manifest, "TSV utt_id/pinyin/wav[/durations]")
      ->required()
      ->check(CLI::ExistingFile);
  prepare->add_option("--out", out_dir, "feature directory")->required();

  auto* train = app.add_subcommand("train", "train from prepared features");
  std::string features;
  train->add_option("--features", features, "prepared feature directory")->required();
  train->add_option("--out", out_dir, "run directory for checkpoints and logs")->required();

  auto* finetune = app.add_subcommand("finetune", "LoRA-adapt a base checkpoint");
  std::string base;
  finetune->add_option("--features", features, "prepared feature directory")->required();
  finetune->add_option("--base", base, "base checkpoint")->required()->check(CLI::ExistingFile);
  finetune->add_option("--out", out_dir, "run directory")->required();

  auto* synth = app.add_subcommand("synth", "synthesize mel + wav from pinyin");
  std::string checkpoint;
  std::optional<std::string> text, transcripts;
  synth->add_option("--checkpoint", checkpoint, "model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  synth->add_option("--text", text, "one pinyin sentence");
  synth->add_option("--transcripts", transcripts, "TSV utt_id/pinyin file");
  synth->add_option("--out", out_dir, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "score one system against references");
  cli::EvalArgs eval_args;
  std::string pesq_path;
  eval->add_option("--ref-transcripts", eval_args.ref_transcripts)->required()->check(CLI::ExistingFile);
  eval->add_option("--hyp-transcripts", eval_args.hyp_transcripts)->required()->check(CLI::ExistingFile);
  eval->add_option("--synth-mels", eval_args.synth_mels_dir)->required();
  eval->add_option("--ref-mels", eval_args.ref_mels_dir)->required();
  eval->add_option("--pesq", pesq_path, "utt_id<TAB>score file from an external PESQ tool");
  eval->add_option("--system", eval_args.system_id, "system label for the report");
  eval->add_option("--out", eval_args.out_path, "report path")->required();

  auto* rate = app.add_subcommand("rate", "pool eval reports into MOS-style ratings");
  std::vector<std::string> reports;
  rate->add_option("--reports", reports, "eval report files")->required()->expected(-1);
  rate->add_option("--out", out_dir, "ratings table path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    cli::RunConfig cfg;
    if (!config_path.empty()) cfg = cli::load_run_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.train.seed = *seed;
    }
    if (fusion_stage) cfg.model.fusion_stage = *fusion_stage;
    if (mode) cfg.train.mode = *mode;
    if (steps) cfg.train.steps = *steps;

    if (prepare->parsed()) {
      cli::cmd_prepare(manifest, out_dir, cfg);
    } else if (train->parsed()) {
      cli::cmd_train(features, out_dir, cfg);
    } else if (finetune->parsed()) {
      cli::cmd_finetune(features, base, out_dir, cfg);
    } else if (synth->parsed()) {
      cli::cmd_synth(checkpoint, text, transcripts, out_dir, cfg);
    } else if (eval->parsed()) {
      if (!pesq_path.empty()) eval_args.pesq_path = pesq_path;
      cli::cmd_eval(eval_args);
    } else if (rate->parsed()) {
      cli::cmd_rate(reports, out_dir);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return stylespeech::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
