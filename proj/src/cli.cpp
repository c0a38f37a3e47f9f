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

#include "stylespeech/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "stylespeech/dsp.hpp"
#include "stylespeech/rng.hpp"

namespace fs = std::filesystem;

namespace stylespeech::cli {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key))
      throw Error(ErrorKind::ConfigError, "unknown key \"" + key + "\" in " + where);
  }
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::IoFailure, "short write to " + tmp);
  }
  fs::rename(tmp, path);
}

void save_mel_atomic(const std::string& path, const dsp::MelSpectrogram& mel) {
  dsp::save_mel(path + ".tmp", mel);
  fs::rename(path + ".tmp.json", path + ".json");
  fs::rename(path + ".tmp", path);
}

dsp::MelSpectrogram mel_from_tensor(const ad::Tensor& t, const DspConfig& dcfg,
                                    int sample_rate) {
  dsp::MelSpectrogram mel;
  mel.frames = t.dim(0);
  mel.n_mels = t.dim(1);
  mel.sample_rate = sample_rate;
  mel.n_fft = dcfg.n_fft;
  mel.hop = dcfg.hop;
  mel.log_offset = 1e-5;
  mel.data = t.values();
  return mel;
}

}  // namespace

void DspConfig::validate() const {
  if (sample_rate <= 0) throw Error(ErrorKind::ConfigError, "dsp.sample_rate must be positive");
  if (n_fft <= 0 || (n_fft & (n_fft - 1)) != 0)
    throw Error(ErrorKind::ConfigError, "dsp.n_fft must be a power of two");
  if (hop <= 0 || hop > n_fft)
    throw Error(ErrorKind::ConfigError, "dsp.hop must lie in (0, n_fft]");
  if (n_mels <= 0) throw Error(ErrorKind::ConfigError, "dsp.n_mels must be positive");
  if (griffin_lim_iters < 1)
    throw Error(ErrorKind::ConfigError, "dsp.griffin_lim_iters must be >= 1");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  dsp.validate();
  if (model.n_mels != dsp.n_mels)
    throw Error(ErrorKind::ConfigError, "model.n_mels and dsp.n_mels disagree");
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path + ": " + e.what());
  }
  RunConfig cfg;
  try {
    reject_unknown_keys(j, {"seed", "model", "train", "dsp"}, "config root");
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
    if (j.contains("model")) {
      const json& m = j.at("model");
      reject_unknown_keys(m,
                          {"d_model", "n_heads", "n_blocks", "conv_kernel1", "conv_kernel2",
                           "conv_filter", "n_mels", "fusion_stage", "dropout_fft",
                           "dropout_duration", "max_seq_len"},
                          "model config");
      auto& c = cfg.model;
      if (m.contains("d_model")) c.d_model = m.at("d_model").get<int>();
      if (m.contains("n_heads")) c.n_heads = m.at("n_heads").get<int>();
      if (m.contains("n_blocks")) c.n_blocks = m.at("n_blocks").get<int>();
      if (m.contains("conv_kernel1")) c.conv_kernel1 = m.at("conv_kernel1").get<int>();
      if (m.contains("conv_kernel2")) c.conv_kernel2 = m.at("conv_kernel2").get<int>();
      if (m.contains("conv_filter")) c.conv_filter = m.at("conv_filter").get<int>();
      if (m.contains("n_mels")) c.n_mels = m.at("n_mels").get<int>();
      if (m.contains("fusion_stage")) c.fusion_stage = m.at("fusion_stage").get<int>();
      if (m.contains("dropout_fft")) c.dropout_fft = m.at("dropout_fft").get<double>();
      if (m.contains("dropout_duration"))
        c.dropout_duration = m.at("dropout_duration").get<double>();
      if (m.contains("max_seq_len")) c.max_seq_len = m.at("max_seq_len").get<int>();
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      reject_unknown_keys(t,
                          {"mode", "steps", "batch_size", "warmup_steps", "mel_loss_weight",
                           "duration_loss_weight", "checkpoint_every", "grad_clip"},
                          "train config");
      auto& c = cfg.train;
      if (t.contains("mode")) c.mode = t.at("mode").get<std::string>();
      if (t.contains("steps")) c.steps = t.at("steps").get<int64_t>();
      if (t.contains("batch_size")) c.batch_size = t.at("batch_size").get<int>();
      if (t.contains("warmup_steps")) c.warmup_steps = t.at("warmup_steps").get<int64_t>();
      if (t.contains("mel_loss_weight"))
        c.mel_loss_weight = t.at("mel_loss_weight").get<double>();
      if (t.contains("duration_loss_weight"))
        c.duration_loss_weight = t.at("duration_loss_weight").get<double>();
      if (t.contains("checkpoint_every"))
        c.checkpoint_every = t.at("checkpoint_every").get<int64_t>();
      if (t.contains("grad_clip")) c.grad_clip = t.at("grad_clip").get<double>();
    }
    if (j.contains("dsp")) {
      const json& d = j.at("dsp");
      reject_unknown_keys(d, {"sample_rate", "n_fft", "hop", "n_mels", "griffin_lim_iters"},
                          "dsp config");
      auto& c = cfg.dsp;
      if (d.contains("sample_rate")) c.sample_rate = d.at("sample_rate").get<int>();
      if (d.contains("n_fft")) c.n_fft = d.at("n_fft").get<int>();
      if (d.contains("hop")) c.hop = d.at("hop").get<int>();
      if (d.contains("n_mels")) c.n_mels = d.at("n_mels").get<int>();
      if (d.contains("griffin_lim_iters"))
        c.griffin_lim_iters = d.at("griffin_lim_iters").get<int>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path + ": " + e.what());
  }
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

std::vector<ManifestRow> parse_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
  std::vector<ManifestRow> rows;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> fields = split_tabs(line);
    if (fields.size() < 3 || fields.size() > 4)
      throw Error(ErrorKind::ParseError,
                  path + " line " + std::to_string(line_no) + ": expected 3 or 4 fields");
    ManifestRow row;
    row.utt_id = fields[0];
    row.pinyin = fields[1];
    row.wav_path = fields[2];
    if (row.utt_id.empty())
      throw Error(ErrorKind::ParseError, path + " line " + std::to_string(line_no) + ": empty utt_id");
    if (!ids.insert(row.utt_id).second)
      throw Error(ErrorKind::ParseError, "duplicate utt_id " + row.utt_id);
    if (fields.size() == 4 && !fields[3].empty()) {
      std::vector<int> durations;
      std::stringstream ss(fields[3]);
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          durations.push_back(std::stoi(item));
        } catch (const std::exception&) {
          throw Error(ErrorKind::ParseError, row.utt_id + ": bad duration \"" + item + "\"");
        }
      }
      row.durations = std::move(durations);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::pair<std::string, std::string>> parse_transcripts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
  std::vector<std::pair<std::string, std::string>> rows;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> fields = split_tabs(line);
    if (fields.size() != 2)
      throw Error(ErrorKind::ParseError,
                  path + " line " + std::to_string(line_no) + ": expected utt_id<TAB>pinyin");
    if (!ids.insert(fields[0]).second)
      throw Error(ErrorKind::ParseError, "duplicate utt_id " + fields[0]);
    rows.emplace_back(fields[0], fields[1]);
  }
  return rows;
}

void cmd_prepare(const std::string& manifest_path, const std::string& out_dir,
                 const RunConfig& cfg) {
  cfg.validate();
  const std::vector<ManifestRow> rows = parse_manifest(manifest_path);

  struct Prepared {
    std::string id;
    pinyin::TokenSymbols symbols;
    std::vector<int> durations;
    dsp::MelSpectrogram mel;
  };

  // Everything is parsed and validated before any file is written.
  std::vector<Prepared> prepared;
  int64_t total_frames = 0;
  for (const ManifestRow& row : rows) {
    if (!fs::exists(row.wav_path))
      throw Error(ErrorKind::MissingWav, row.utt_id + ": " + row.wav_path);
    Prepared p;
    p.id = row.utt_id;
    try {
      p.symbols = pinyin::g2p_symbols(row.pinyin);
    } catch (const Error& e) {
      throw Error(ErrorKind::ParseError, row.utt_id + ": " + e.what());
    }
    const dsp::AudioBuffer audio = dsp::load_wav(row.wav_path);
    p.mel = dsp::wav_to_logmel(audio, cfg.dsp.n_fft, cfg.dsp.hop, cfg.dsp.n_mels);
    const int n = static_cast<int>(p.symbols.phonemes.size());
    if (n == 0) throw Error(ErrorKind::ParseError, row.utt_id + ": empty sentence");
    if (row.durations) {
      if (static_cast<int>(row.durations->size()) != n)
        throw Error(ErrorKind::ParseError,
                    row.utt_id + ": " + std::to_string(row.durations->size()) +
                        " durations for " + std::to_string(n) + " tokens");
      int64_t sum = 0;
      for (int d : *row.durations) {
        if (d < 0) throw Error(ErrorKind::ParseError, row.utt_id + ": negative duration");
        sum += d;
      }
      if (sum != p.mel.frames)
        throw Error(ErrorKind::ParseError,
                    row.utt_id + ": durations sum to " + std::to_string(sum) + " but mel has " +
                        std::to_string(p.mel.frames) + " frames");
      p.durations = *row.durations;
    } else {
      // Uniform split of the frame count, remainder to the earliest tokens.
      const int base = p.mel.frames / n, rem = p.mel.frames % n;
      p.durations.assign(n, base);
      for (int i = 0; i < rem; ++i) ++p.durations[i];
    }
    total_frames += p.mel.frames;
    prepared.push_back(std::move(p));
  }

  fs::create_directories(out_dir);
  pinyin::phoneme_table().save(out_dir + "/phonemes.vocab");
  pinyin::tone_table().save(out_dir + "/tones.vocab");

  std::string index;
  for (const Prepared& p : prepared) {
    save_mel_atomic(out_dir + "/" + p.id + ".mel", p.mel);
    std::string tokens;
    for (size_t i = 0; i < p.symbols.phonemes.size(); ++i)
      tokens += (i ? " " : "") + p.symbols.phonemes[i];
    tokens += "\n";
    for (size_t i = 0; i < p.symbols.tones.size(); ++i)
      tokens += (i ? " " : "") + p.symbols.tones[i];
    tokens += "\n";
    write_text_atomic(out_dir + "/" + p.id + ".tokens", tokens);
    std::string durations;
    for (size_t i = 0; i < p.durations.size(); ++i)
      durations += (i ? " " : "") + std::to_string(p.durations[i]);
    durations += "\n";
    write_text_atomic(out_dir + "/" + p.id + ".dur", durations);
    index += p.id + "\t" + std::to_string(p.symbols.phonemes.size()) + "\t" +
             std::to_string(p.mel.frames) + "\n";
  }
  write_text_atomic(out_dir + "/index.tsv", index);

  nlohmann::ordered_json summary;
  summary["utterances"] = prepared.size();
  summary["total_frames"] = total_frames;
  summary["n_mels"] = cfg.dsp.n_mels;
  summary["n_fft"] = cfg.dsp.n_fft;
  summary["hop"] = cfg.dsp.hop;
  write_text_atomic(out_dir + "/summary.json", summary.dump(2) + "\n");
  std::cout << "prepared " << prepared.size() << " utterances, " << total_frames
            << " mel frames\n";
}

FeatureStore load_features(const std::string& features_dir) {
  FeatureStore store;
  const pinyin::SymbolTable phonemes = pinyin::SymbolTable::load(features_dir + "/phonemes.vocab");
  const pinyin::SymbolTable tones = pinyin::SymbolTable::load(features_dir + "/tones.vocab");
  store.phoneme_vocab = phonemes.symbols();
  store.tone_vocab = tones.symbols();

  std::ifstream index(features_dir + "/index.tsv");
  if (!index) throw Error(ErrorKind::IoFailure, "cannot open " + features_dir + "/index.tsv");
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_tabs(line);
    const std::string& id = fields[0];
    training::Utterance utt;
    utt.id = id;

    std::ifstream tok(features_dir + "/" + id + ".tokens");
    if (!tok) throw Error(ErrorKind::IoFailure, "missing tokens for " + id);
    std::string phoneme_line, tone_line;
    std::getline(tok, phoneme_line);
    std::getline(tok, tone_line);
    auto split_space = [](const std::string& s) {
      std::vector<std::string> out;
      std::istringstream is(s);
      std::string w;
      while (is >> w) out.push_back(w);
      return out;
    };
    utt.tokens.phonemes = phonemes.encode(split_space(phoneme_line));
    utt.tokens.tones = tones.encode(split_space(tone_line));

    std::ifstream dur(features_dir + "/" + id + ".dur");
    if (!dur) throw Error(ErrorKind::IoFailure, "missing durations for " + id);
    int d;
    while (dur >> d) utt.durations.push_back(d);
    if (utt.durations.size() != utt.tokens.size())
      throw Error(ErrorKind::ParseError, id + ": duration count does not match tokens");

    utt.mel = dsp::load_mel(features_dir + "/" + id + ".mel");
    store.dataset.push_back(std::move(utt));
  }
  if (store.dataset.empty())
    throw Error(ErrorKind::DatasetEmpty, "no utterances in " + features_dir);
  return store;
}

namespace {

training::StepCallback loss_logger(std::ofstream& log) {
  return [&log](int64_t step, const training::StepStats& s) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld\t%.6f\t%.6f\t%.8g\n", static_cast<long long>(step),
                  s.mel_loss, s.duration_loss, s.lr);
    log << buf;
  };
}

}  // namespace

void cmd_train(const std::string& features_dir, const std::string& out_dir,
               const RunConfig& cfg) {
  cfg.validate();
  const FeatureStore store = load_features(features_dir);
  fs::create_directories(out_dir);
  std::ofstream log(out_dir + "/loss_log.tsv");
  if (!log) throw Error(ErrorKind::IoFailure, "cannot write " + out_dir + "/loss_log.tsv");
  training::train(store.dataset, cfg.model, cfg.train, store.phoneme_vocab, store.tone_vocab,
                  out_dir, loss_logger(log));
  std::cout << "trained " << cfg.train.steps << " steps -> " << out_dir
            << "/checkpoint_final.sspc\n";
}

void cmd_finetune(const std::string& features_dir, const std::string& base_checkpoint,
                  const std::string& out_dir, const RunConfig& cfg) {
  cfg.validate();
  const FeatureStore store = load_features(features_dir);
  const training::Checkpoint base = training::load_checkpoint(base_checkpoint);
  fs::create_directories(out_dir);
  std::ofstream log(out_dir + "/loss_log.tsv");
  if (!log) throw Error(ErrorKind::IoFailure, "cannot write " + out_dir + "/loss_log.tsv");
  training::lora_adapt(base, store.dataset, cfg.train, out_dir, loss_logger(log));
  std::cout << "adapted " << cfg.train.steps << " steps -> " << out_dir
            << "/checkpoint_final.sspc\n";
}

void cmd_synth(const std::string& checkpoint_path, const std::optional<std::string>& text,
               const std::optional<std::string>& transcripts_path, const std::string& out_dir,
               const RunConfig& cfg) {
  cfg.dsp.validate();
  if (!text && !transcripts_path)
    throw Error(ErrorKind::UsageError, "synth needs a sentence or a transcript file");
  const training::Checkpoint ckpt = training::load_checkpoint(checkpoint_path);
  const model::StyleSpeechModel model = training::model_from_checkpoint(ckpt);
  const pinyin::SymbolTable phonemes(ckpt.meta.phoneme_vocab);
  const pinyin::SymbolTable tones(ckpt.meta.tone_vocab);

  std::vector<std::pair<std::string, std::string>> sentences;
  if (transcripts_path) sentences = parse_transcripts(*transcripts_path);
  if (text) sentences.emplace_back("synth", *text);

  fs::create_directories(out_dir);
  for (const auto& [utt_id, sentence] : sentences) {
    pinyin::AcousticTokens tokens;
    try {
      tokens = pinyin::g2p(sentence, phonemes, tones);
    } catch (const Error& e) {
      throw Error(e.kind(), utt_id + ": " + e.what());
    }
    ad::Tape tape(false);
    model::ForwardOptions opts;  // inference: predicted durations, no dropout
    const model::ForwardResult fr = model.forward(tape, tokens, opts);
    if (fr.degenerate)
      std::cerr << "warning: " << utt_id << ": every predicted duration was zero\n";

    const dsp::MelSpectrogram mel = mel_from_tensor(fr.mel, cfg.dsp, cfg.dsp.sample_rate);
    save_mel_atomic(out_dir + "/" + utt_id + ".mel", mel);

    const dsp::MagnitudeSpectrogram mag = dsp::mel_to_linear(mel);
    const uint64_t gl_seed = derive_seed(cfg.seed, "griffin_lim:" + utt_id);
    const dsp::AudioBuffer audio = dsp::griffin_lim(mag, cfg.dsp.griffin_lim_iters, gl_seed);
    const std::string wav_path = out_dir + "/" + utt_id + ".wav";
    dsp::save_wav(wav_path + ".tmp", audio);
    fs::rename(wav_path + ".tmp", wav_path);
    std::cout << utt_id << ": " << fr.mel.dim(0) << " frames, " << audio.samples.size()
              << " samples\n";
  }
}

void cmd_eval(const EvalArgs& args) {
  const auto refs = parse_transcripts(args.ref_transcripts);
  const auto hyps = parse_transcripts(args.hyp_transcripts);
  std::map<std::string, std::string> hyp_map(hyps.begin(), hyps.end());

  std::vector<std::string> missing;
  for (const auto& [id, _] : refs) {
    if (!hyp_map.count(id)) missing.push_back("hyp:" + id);
    if (!fs::exists(args.synth_mels_dir + "/" + id + ".mel")) missing.push_back("synth-mel:" + id);
    if (!fs::exists(args.ref_mels_dir + "/" + id + ".mel")) missing.push_back("ref-mel:" + id);
  }
  if (!missing.empty()) {
    std::string joined;
    for (const auto& m : missing) joined += (joined.empty() ? "" : ", ") + m;
    throw Error(ErrorKind::JoinFailure, "missing inputs: " + joined);
  }

  std::map<std::string, double> pesq;
  if (args.pesq_path) pesq = metrics::ingest_pesq(*args.pesq_path);

  std::vector<metrics::MetricReport> reports;
  for (const auto& [id, ref_sentence] : refs) {
    metrics::MetricReport r;
    r.utt_id = id;
    r.system_id = args.system_id;
    const metrics::WerLevels levels = metrics::wer_levels(ref_sentence, hyp_map.at(id));
    r.wer = levels.wer;
    r.wer_p = levels.wer_p;
    r.wer_t = levels.wer_t;
    const dsp::MelSpectrogram synth = dsp::load_mel(args.synth_mels_dir + "/" + id + ".mel");
    const dsp::MelSpectrogram ref = dsp::load_mel(args.ref_mels_dir + "/" + id + ".mel");
    r.mcd = metrics::mcd(synth, ref);
    if (auto it = pesq.find(id); it != pesq.end()) r.pesq = it->second;
    reports.push_back(std::move(r));
  }
  const std::string tmp = args.out_path + ".tmp";
  metrics::write_eval_report(tmp, reports);
  fs::rename(tmp, args.out_path);
  std::cout << "evaluated " << reports.size() << " utterances -> " << args.out_path << "\n";
}

void cmd_rate(const std::vector<std::string>& report_paths, const std::string& out_path) {
  if (report_paths.empty()) throw Error(ErrorKind::UsageError, "rate needs report files");
  std::vector<metrics::MetricReport> pool;
  for (const auto& path : report_paths) {
    const auto reports = metrics::parse_eval_report(path);
    pool.insert(pool.end(), reports.begin(), reports.end());
  }
  const std::vector<metrics::MosRating> ratings = metrics::llm_mos(pool);
  const std::string tmp = out_path + ".tmp";
  metrics::write_rate_report(tmp, ratings);
  fs::rename(tmp, out_path);
  std::cout << "rated " << ratings.size() << " reports -> " << out_path << "\n";
}

}  // namespace stylespeech::cli
