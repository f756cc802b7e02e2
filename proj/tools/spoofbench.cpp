// spoofbench command-line tool
//
// Copyright 2026  The spoofbench authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Subcommands: corpus, features, train-rec, train-gan, attack, report.
// One --seed per command feeds every random draw through named substreams,
// so a rerun with identical flags reproduces byte-identical outputs.
// SPOOFBENCH_THREADS caps worker threads.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "spoofbench/attack.hpp"
#include "spoofbench/csv.hpp"
#include "spoofbench/data.hpp"
#include "spoofbench/gan.hpp"
#include "spoofbench/manifest.hpp"
#include "spoofbench/mel.hpp"
#include "spoofbench/recognizer.hpp"
#include "spoofbench/synth.hpp"
#include "spoofbench/vad.hpp"
#include "spoofbench/wav.hpp"

namespace fs = std::filesystem;
using namespace spoofbench;

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, "cannot create directory " + dir + ": " + ec.message());
}

std::string utt_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "utt%03d.wav", i);
  return buf;
}

// ---------------------------------------------------------------------------
// corpus
// ---------------------------------------------------------------------------

struct CorpusArgs {
  int speakers = 10;
  int utts = 20;
  double dur = 2.0;
  int noise_utts = 20;
  uint64_t seed = 0;
  std::string out;
};

int cmd_corpus(const CorpusArgs& a) {
  CorpusSpec spec;
  spec.speakers = a.speakers;
  spec.utterances_per_speaker = a.utts;
  spec.utterance_s = a.dur;
  spec.noise_utterances = a.noise_utts;
  spec.seed = a.seed;
  SynthCorpus corpus = build_corpus(spec);

  ensure_dir(a.out);
  RunManifest manifest("corpus");
  manifest.set("speakers", a.speakers);
  manifest.set("utterances_per_speaker", a.utts);
  manifest.set("utterance_s", a.dur);
  manifest.set("noise_utterances", a.noise_utts);
  manifest.set("seed", a.seed);

  for (size_t s = 0; s < corpus.speaker_ids.size(); ++s) {
    const std::string dir = a.out + "/" + corpus.speaker_ids[s];
    ensure_dir(dir);
    for (size_t u = 0; u < corpus.utterances[s].size(); ++u) {
      const std::string path = dir + "/" + utt_name(static_cast<int>(u));
      write_wav(path, corpus.utterances[s][u]);
      manifest.add_output(path);
    }
  }
  const std::string noise_dir = a.out + "/other";
  ensure_dir(noise_dir);
  for (size_t u = 0; u < corpus.noise.size(); ++u) {
    const std::string path = noise_dir + "/" + utt_name(static_cast<int>(u));
    write_wav(path, corpus.noise[u]);
    manifest.add_output(path);
  }
  manifest.write(a.out + "/manifest.json");
  std::printf("corpus: %d speakers x %d utterances + %d noise -> %s\n",
              a.speakers, a.utts, a.noise_utts, a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

struct FeatureArgs {
  std::string in;
  std::string out;
  int stride = 64;
  bool export_pgm = false;
};

int cmd_features(const FeatureArgs& a) {
  require(fs::is_directory(a.in), "features: " + a.in + " is not a directory");
  ensure_dir(a.out);

  // class order: sorted speaker directories, "other" pinned last
  std::vector<std::string> classes;
  for (const auto& e : fs::directory_iterator(a.in))
    if (e.is_directory()) classes.push_back(e.path().filename().string());
  std::sort(classes.begin(), classes.end());
  auto other = std::find(classes.begin(), classes.end(), "other");
  if (other != classes.end()) {
    classes.erase(other);
    classes.push_back("other");
  }
  require(!classes.empty(), "features: no class directories under " + a.in);

  RunManifest manifest("features");
  manifest.set("stride", a.stride);
  manifest.set("export_pgm", a.export_pgm);
  manifest.add_input(a.in);

  MelConfig cfg;
  int failures = 0;
  if (a.export_pgm) ensure_dir(a.out + "/pgm");
  {
    CsvWriter labels_csv(a.out + "/labels.csv");
    labels_csv.field(std::string("label")).field(std::string("speaker"));
    labels_csv.endrow();
    for (size_t c = 0; c < classes.size(); ++c) {
      labels_csv.field(static_cast<int64_t>(c)).field(classes[c]);
      labels_csv.endrow();
    }
    labels_csv.close();
  }

  for (size_t c = 0; c < classes.size(); ++c) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(fs::path(a.in) / classes[c]))
      if (e.path().extension() == ".wav") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());

    std::vector<MelPatch> patches;
    for (const auto& file : files) {
      try {
        Waveform w = vad_trim(load_wav(file));
        if (w.empty()) {
          std::fprintf(stderr, "[features] %s: all silent, skipped\n",
                       file.c_str());
          continue;
        }
        auto file_patches = extract_patches(w, cfg, a.stride);
        if (file_patches.empty()) {
          std::fprintf(stderr,
                       "[features] %s: shorter than one patch, skipped\n",
                       file.c_str());
          continue;
        }
        for (auto& p : file_patches) {
          p.label = static_cast<uint32_t>(c);
          patches.push_back(std::move(p));
        }
      } catch (const Error& e) {
        std::fprintf(stderr, "[features] %s: %s\n", file.c_str(), e.what());
        ++failures;
      }
    }
    const std::string mels_path = a.out + "/" + classes[c] + ".mels";
    write_mels(mels_path, patches);
    manifest.add_output(mels_path);
    if (a.export_pgm) {
      for (size_t i = 0; i < patches.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "/pgm/%s_%04zu.pgm",
                      classes[c].c_str(), i);
        write_pgm(a.out + buf, patches[i]);
      }
    }
    std::printf("features: %s -> %zu patches\n", classes[c].c_str(),
                patches.size());
  }
  manifest.write(a.out + "/manifest.json");
  if (failures > 0)
    std::fprintf(stderr, "[features] %d file(s) failed\n", failures);
  return failures > 0 ? 1 : 0;
}

// ---------------------------------------------------------------------------
// train-rec
// ---------------------------------------------------------------------------

struct TrainRecArgs {
  std::string in;
  std::string out;
  RecTrainConfig cfg;
};

int cmd_train_rec(const TrainRecArgs& a) {
  PatchDataset ds = load_feature_dir(a.in);
  ensure_dir(a.out);
  auto [model, metrics] = train_recognizer<float>(ds, a.cfg, /*verbose=*/true);

  save_cnn(a.out + "/recognizer.spfb", model);
  {
    CsvWriter csv(a.out + "/metrics.csv");
    csv.field(std::string("epoch"))
        .field(std::string("loss"))
        .field(std::string("accuracy"));
    csv.endrow();
    for (size_t e = 0; e < metrics.epoch_loss.size(); ++e) {
      csv.field(static_cast<int64_t>(e))
          .field(metrics.epoch_loss[e])
          .field(metrics.epoch_test_acc[e]);
      csv.endrow();
    }
    csv.close();
  }
  TrainTestSplit split = stratified_split(ds, a.cfg.train_frac, a.cfg.seed);
  EvalResult ev = evaluate(model, ds, split.test);
  write_confusion_csv(a.out + "/confusion.csv", ds.class_names, ev.confusion);

  RunManifest manifest("train-rec");
  manifest.set("epochs", a.cfg.epochs);
  manifest.set("batch", a.cfg.batch);
  manifest.set("lr", a.cfg.adam.lr);
  manifest.set("dropout", a.cfg.dropout);
  manifest.set("train_frac", a.cfg.train_frac);
  manifest.set("patience", a.cfg.patience);
  manifest.set("seed", a.cfg.seed);
  manifest.add_input(a.in);
  manifest.add_output(a.out + "/recognizer.spfb");
  manifest.add_output(a.out + "/metrics.csv");
  manifest.add_output(a.out + "/confusion.csv");
  manifest.write(a.out + "/manifest.json");

  std::printf("train-rec: final test accuracy %.4f\n",
              metrics.final_test_accuracy);
  return 0;
}

// ---------------------------------------------------------------------------
// train-gan
// ---------------------------------------------------------------------------

struct TrainGanArgs {
  std::string in;
  std::string out;
  std::string mode = "untargeted";
  std::string loss = "plain";
  std::string target;
  double alpha = 1.0;
  double sigma = -1.0;      // <0: use the mode default
  int iters = 2000;
  int critic_iters = -1;    // <0: use the mode default
  int batch = 64;
  double glr = -1.0;        // <0: use the mode default
  double clr = 1e-4;
  double lambda = 10.0;
  int latent = kDefaultLatentDim;
  uint64_t seed = 0;
  int checkpoint_every = 500;
};

int cmd_train_gan(const TrainGanArgs& a) {
  require(a.mode == "untargeted" || a.mode == "targeted",
          "train-gan: --mode must be untargeted or targeted");
  require(a.loss == "plain" || a.loss == "mixed",
          "train-gan: --loss must be plain or mixed");
  const bool mixed = a.loss == "mixed";
  if (mixed)
    require(!a.target.empty(), "train-gan: --loss mixed requires --target");
  if (a.mode == "targeted")
    require(!a.target.empty(), "train-gan: --mode targeted requires --target");
  if (a.mode == "untargeted")
    require(a.target.empty() && !mixed,
            "train-gan: untargeted mode takes neither --target nor mixed loss");

  PatchDataset ds = load_feature_dir(a.in);
  ensure_dir(a.out);

  CriticLossConfig loss_cfg;
  loss_cfg.lambda = a.lambda;
  loss_cfg.mode =
      mixed ? CriticLossConfig::Mode::kMixed : CriticLossConfig::Mode::kPlain;
  loss_cfg.alpha = mixed ? a.alpha : 0.0;

  GanTrainConfig cfg = make_gan_config(loss_cfg.mode);
  cfg.iterations = a.iters;
  cfg.batch = a.batch;
  cfg.latent_dim = a.latent;
  cfg.seed = a.seed;
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.checkpoint_dir = a.out;
  cfg.verbose = true;
  if (a.critic_iters > 0) cfg.critic_iters = a.critic_iters;
  if (a.glr > 0) cfg.gen_adam.lr = a.glr;
  cfg.critic_adam.lr = a.clr;
  if (a.sigma >= 0) cfg.sigma_rel = a.sigma;
  if (a.mode == "untargeted") cfg.sigma_rel = 0.0;

  GanTrainResult<float> result;
  if (a.mode == "untargeted") {
    std::vector<MelPatch> data = speaker_patches_excluding(ds, -1);
    require(!data.empty(), "train-gan: no speaker patches in " + a.in);
    result = train_gan<float>(data, nullptr, cfg, loss_cfg);
  } else {
    int target_label = -1;
    for (size_t c = 0; c < ds.class_names.size(); ++c)
      if (ds.class_names[c] == a.target) target_label = static_cast<int>(c);
    require(target_label >= 0,
            "train-gan: unknown target speaker '" + a.target + "'");
    std::vector<MelPatch> target = patches_of_class(ds, target_label);
    std::vector<MelPatch> others = speaker_patches_excluding(ds, target_label);
    require(!target.empty(), "train-gan: target has no patches");
    require(!others.empty(), "train-gan: no other-speaker patches");
    result = train_targeted<float>(target, others, cfg, loss_cfg);
  }

  save_generator(a.out + "/generator.spfb", result.gen);
  save_critic(a.out + "/critic.spfb", result.critic);
  write_gan_trace_csv(a.out + "/trace.csv", result.trace);

  RunManifest manifest("train-gan");
  manifest.set("mode", a.mode);
  manifest.set("loss", a.loss);
  manifest.set("target", a.target);
  manifest.set("alpha", loss_cfg.alpha);
  manifest.set("lambda", loss_cfg.lambda);
  manifest.set("sigma_rel", cfg.sigma_rel);
  manifest.set("iterations", cfg.iterations);
  manifest.set("critic_iters", cfg.critic_iters);
  manifest.set("batch", cfg.batch);
  manifest.set("generator_lr", cfg.gen_adam.lr);
  manifest.set("critic_lr", cfg.critic_adam.lr);
  manifest.set("latent_dim", cfg.latent_dim);
  manifest.set("seed", cfg.seed);
  manifest.add_input(a.in);
  manifest.add_output(a.out + "/generator.spfb");
  manifest.add_output(a.out + "/critic.spfb");
  manifest.add_output(a.out + "/trace.csv");
  manifest.write(a.out + "/manifest.json");

  if (!result.trace.empty()) {
    const auto& last = result.trace.back();
    std::printf("train-gan: done, critic %.4f gen %.4f |grad| %.3f\n",
                last.critic_loss, last.generator_loss, last.grad_norm_mean);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// attack
// ---------------------------------------------------------------------------

struct AttackArgs {
  std::string kind = "untargeted";
  std::string gen;
  std::string rec;
  std::string features;
  std::string target;
  int n = 1000;
  uint64_t seed = 0;
  std::string out;
};

int cmd_attack(const AttackArgs& a) {
  require(a.kind == "untargeted" || a.kind == "targeted",
          "attack: --kind must be untargeted or targeted");
  require(fs::exists(a.gen), "attack: generator checkpoint " + a.gen +
                                 " not found");
  require(fs::exists(a.rec), "attack: recognizer checkpoint " + a.rec +
                                 " not found");
  GeneratorModel<float> gen = load_generator<float>(a.gen);
  CnnModel<float> rec = load_cnn<float>(a.rec);
  ensure_dir(a.out);

  AttackReport report;
  if (a.kind == "untargeted") {
    require(!a.features.empty(),
            "attack: untargeted evaluation needs --features for the KNN index");
    PatchDataset ds = load_feature_dir(a.features);
    std::vector<int> which;
    for (size_t i = 0; i < ds.patches.size(); ++i)
      if (static_cast<int>(ds.patches[i].label) != ds.other_index)
        which.push_back(static_cast<int>(i));
    DeepFeatureIndex idx = build_index_from_patches(rec, ds, which);
    report = untargeted_eval(gen, rec, idx, a.n, a.seed);
    std::printf("diagonal_mass,%.6f\n", report.diagonal_mass);
  } else {
    require(!a.target.empty(), "attack: targeted evaluation needs --target");
    int target_label = -1;
    for (size_t c = 0; c < rec.labels.size(); ++c)
      if (rec.labels[c] == a.target) target_label = static_cast<int>(c);
    require(target_label >= 0,
            "attack: recognizer has no class '" + a.target + "'");
    report = targeted_eval(gen, rec, target_label, a.n, a.seed);
    std::printf("error_rate,%.6f\n", report.error_rate);
  }

  write_attack_report_csv(a.out + "/report.csv", report);
  write_confusion_csv(a.out + "/confusion.csv", report.labels,
                      report.confusion);

  RunManifest manifest("attack");
  manifest.set("kind", a.kind);
  manifest.set("target", a.target);
  manifest.set("n", a.n);
  manifest.set("seed", a.seed);
  manifest.add_input(a.gen);
  manifest.add_input(a.rec);
  if (!a.features.empty()) manifest.add_input(a.features);
  manifest.add_output(a.out + "/report.csv");
  manifest.add_output(a.out + "/confusion.csv");
  manifest.write(a.out + "/manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const std::string& dir) {
  const std::string path = dir + "/report.csv";
  std::ifstream is(path);
  require(is.is_open(), "report: cannot open " + path);
  std::printf("== %s ==\n", path.c_str());
  std::string line;
  while (std::getline(is, line)) std::printf("%s\n", line.c_str());
  std::ifstream ic(dir + "/confusion.csv");
  if (ic.is_open()) {
    std::printf("== %s/confusion.csv ==\n", dir.c_str());
    while (std::getline(ic, line)) std::printf("%s\n", line.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads();
  CLI::App app{"GAN-based spoofing benchmark for a CNN speaker recognizer"};
  app.require_subcommand(1);

  CorpusArgs corpus_args;
  auto* corpus = app.add_subcommand("corpus", "synthesize a labeled WAV corpus");
  corpus->add_option("--speakers", corpus_args.speakers, "number of speakers");
  corpus->add_option("--utts", corpus_args.utts, "utterances per speaker");
  corpus->add_option("--dur", corpus_args.dur, "utterance duration, seconds");
  corpus->add_option("--noise-utts", corpus_args.noise_utts,
                     "utterances in the noise class");
  corpus->add_option("--seed", corpus_args.seed, "master seed");
  corpus->add_option("-o,--out", corpus_args.out, "output directory")
      ->required();

  FeatureArgs feature_args;
  auto* features =
      app.add_subcommand("features", "extract 64x64 mel patches from WAVs");
  features->add_option("-i,--in", feature_args.in, "corpus directory")
      ->required();
  features->add_option("-o,--out", feature_args.out, "output directory")
      ->required();
  features->add_option("--stride", feature_args.stride,
                       "patch stride in frames");
  features->add_flag("--export-pgm", feature_args.export_pgm,
                     "write one PGM per patch");

  TrainRecArgs rec_args;
  auto* train_rec =
      app.add_subcommand("train-rec", "train the CNN speaker recognizer");
  train_rec->add_option("-i,--in", rec_args.in, "feature directory")
      ->required();
  train_rec->add_option("-o,--out", rec_args.out, "output directory")
      ->required();
  train_rec->add_option("--epochs", rec_args.cfg.epochs, "max epochs");
  train_rec->add_option("--batch", rec_args.cfg.batch, "batch size");
  train_rec->add_option("--lr", rec_args.cfg.adam.lr, "Adam learning rate");
  train_rec->add_option("--dropout", rec_args.cfg.dropout, "dropout rate");
  train_rec->add_option("--split", rec_args.cfg.train_frac,
                        "train fraction of the stratified split");
  train_rec->add_option("--patience", rec_args.cfg.patience,
                        "early-stop patience, epochs");
  train_rec->add_option("--seed", rec_args.cfg.seed, "master seed");

  TrainGanArgs gan_args;
  auto* train_gan_cmd =
      app.add_subcommand("train-gan", "train the WGAN-GP spoofer");
  train_gan_cmd->add_option("-i,--in", gan_args.in, "feature directory")
      ->required();
  train_gan_cmd->add_option("-o,--out", gan_args.out, "output directory")
      ->required();
  train_gan_cmd->add_option("--mode", gan_args.mode, "untargeted | targeted");
  train_gan_cmd->add_option("--loss", gan_args.loss, "plain | mixed");
  train_gan_cmd->add_option("--target", gan_args.target,
                            "target speaker id (targeted mode)");
  train_gan_cmd->add_option("--alpha", gan_args.alpha,
                            "different-speakers weight of the mixed loss");
  train_gan_cmd->add_option("--sigma", gan_args.sigma,
                            "target noise std relative to data std");
  train_gan_cmd->add_option("--iters", gan_args.iters,
                            "generator iterations");
  train_gan_cmd->add_option("--critic-iters", gan_args.critic_iters,
                            "critic iterations per generator iteration");
  train_gan_cmd->add_option("--batch", gan_args.batch, "batch size");
  train_gan_cmd->add_option("--glr", gan_args.glr, "generator Adam lr");
  train_gan_cmd->add_option("--clr", gan_args.clr, "critic Adam lr");
  train_gan_cmd->add_option("--lambda", gan_args.lambda,
                            "gradient-penalty weight");
  train_gan_cmd->add_option("--latent", gan_args.latent, "latent dimension");
  train_gan_cmd->add_option("--seed", gan_args.seed, "master seed");
  train_gan_cmd->add_option("--checkpoint-every", gan_args.checkpoint_every,
                            "periodic checkpoint interval, 0 = off");

  AttackArgs attack_args;
  auto* attack = app.add_subcommand("attack", "evaluate a trained generator");
  attack->add_option("--kind", attack_args.kind, "untargeted | targeted");
  attack->add_option("--gen", attack_args.gen, "generator checkpoint")
      ->required();
  attack->add_option("--rec", attack_args.rec, "recognizer checkpoint")
      ->required();
  attack->add_option("--features", attack_args.features,
                     "feature directory for the KNN index (untargeted)");
  attack->add_option("--target", attack_args.target, "target speaker id");
  attack->add_option("-n,--n", attack_args.n, "generated sample count");
  attack->add_option("--seed", attack_args.seed, "master seed");
  attack->add_option("-o,--out", attack_args.out, "report directory")
      ->required();

  std::string report_dir;
  auto* report = app.add_subcommand("report", "print a saved attack report");
  report->add_option("-i,--in", report_dir, "report directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (corpus->parsed()) return cmd_corpus(corpus_args);
    if (features->parsed()) return cmd_features(feature_args);
    if (train_rec->parsed()) return cmd_train_rec(rec_args);
    if (train_gan_cmd->parsed()) return cmd_train_gan(gan_args);
    if (attack->parsed()) return cmd_attack(attack_args);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "spoofbench: %s\n", e.what());
    return 1;
  }
  return 1;
}
