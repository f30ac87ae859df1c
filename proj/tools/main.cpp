#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "slmvc/config.hpp"
#include "slmvc/dataset.hpp"
#include "slmvc/fixtures.hpp"
#include "slmvc/tooling.hpp"
#include "slmvc/training.hpp"

namespace {

void require_cpu(const std::string& device) {
  if (device != "cpu")
    throw slmvc::ConfigError("unsupported device '" + device + "', only cpu is available");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GAN-based any-to-any voice conversion trainer with frozen speech-LM feature critics"};
  app.require_subcommand(1);

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Scan a per-speaker wav corpus and write a split manifest");
  std::string ingest_root;
  if (const char* env = std::getenv("SLMVC_DATA_ROOT")) ingest_root = env;
  std::string ingest_out = "manifest.json";
  uint64_t ingest_seed = 1234;
  double unseen_fraction = 0.0;
  ingest_cmd->add_option("--root", ingest_root, "corpus root (one subdirectory per speaker)")
      ->required(ingest_root.empty());
  ingest_cmd->add_option("--out", ingest_out, "manifest output path");
  ingest_cmd->add_option("--seed", ingest_seed, "split seed");
  ingest_cmd->add_option("--unseen-fraction", unseen_fraction,
                         "fraction of speakers held out entirely");

  // train
  auto* train_cmd = app.add_subcommand("train", "Run the staged adversarial training loop");
  std::string train_config;
  bool resume = false;
  std::string device = "cpu";
  uint64_t seed_override = 0;
  bool has_seed_override = false;
  train_cmd->add_option("--config", train_config, "run config file")->required();
  train_cmd->add_flag("--resume", resume, "resume from the latest checkpoint in run.dir");
  train_cmd->add_option("--device", device, "compute device (cpu)");
  train_cmd->add_option("--seed", seed_override, "override the config seed")
      ->each([&](const std::string&) { has_seed_override = true; });

  // convert
  auto* convert_cmd = app.add_subcommand("convert", "Convert a source utterance to a reference voice");
  std::string ckpt, src_path, ref_path, out_path;
  convert_cmd->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
  convert_cmd->add_option("--src", src_path, "source wav")->required();
  convert_cmd->add_option("--ref", ref_path, "reference wav (target voice)")->required();
  convert_cmd->add_option("--out", out_path, "output wav")->required();
  convert_cmd->add_option("--device", device, "compute device (cpu)");

  // analyze-weights
  auto* analyze_cmd = app.add_subcommand("analyze-weights",
                                         "Export per-layer importance of the feature critic head");
  std::string analyze_ckpt, analyze_out = "layer_importance.csv", norm_kind = "frobenius";
  analyze_cmd->add_option("--checkpoint", analyze_ckpt, "checkpoint directory")->required();
  analyze_cmd->add_option("--out", analyze_out, "csv output path");
  analyze_cmd->add_option("--norm", norm_kind, "layer magnitude norm: frobenius or l1")
      ->check(CLI::IsMember({"frobenius", "l1"}));

  // bench-rtf
  auto* bench_cmd = app.add_subcommand("bench-rtf", "Measure the real-time factor of conversion");
  std::string bench_ckpt;
  std::vector<std::string> bench_wavs;
  bench_cmd->add_option("--checkpoint", bench_ckpt, "checkpoint directory")->required();
  bench_cmd->add_option("wavs", bench_wavs, "input wav files")->required();

  // make-fixture
  auto* fixture_cmd = app.add_subcommand("make-fixture", "Generate the synthetic-speaker toy corpus");
  std::string fixture_out = "fixtures/corpus";
  int fx_speakers = 4, fx_utts = 3, fx_rate = 22050;
  double fx_seconds = 2.0;
  uint64_t fx_seed = 7;
  fixture_cmd->add_option("--out", fixture_out, "corpus output directory");
  fixture_cmd->add_option("--speakers", fx_speakers, "number of synthetic speakers");
  fixture_cmd->add_option("--utterances", fx_utts, "utterances per speaker");
  fixture_cmd->add_option("--seconds", fx_seconds, "utterance duration");
  fixture_cmd->add_option("--rate", fx_rate, "sample rate");
  fixture_cmd->add_option("--seed", fx_seed, "generation seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) {
      slmvc::DatasetManifest m = slmvc::ingest(ingest_root, ingest_seed, unseen_fraction);
      slmvc::write_manifest(ingest_out, m);
      int seen = 0;
      for (const auto& s : m.speakers) seen += s.seen;
      std::cout << "wrote " << ingest_out << ": " << m.speakers.size() << " speakers (" << seen
                << " seen), " << m.count_train_utterances() << " training utterances\n";
    } else if (*train_cmd) {
      require_cpu(device);
      slmvc::RunConfig cfg = slmvc::parse_run_config(train_config);
      if (has_seed_override) cfg.seed = seed_override;
      if (cfg.data_manifest.empty())
        throw slmvc::ConfigError("config: data.manifest must point to an ingested manifest");
      slmvc::DatasetManifest m = slmvc::read_manifest(cfg.data_manifest);
      slmvc::LoadedDataset data = slmvc::LoadedDataset::load(m, cfg.audio.sample_rate_hz);
      slmvc::Trainer trainer(cfg, std::move(data));
      const std::string final_ckpt = trainer.run(resume);
      std::cout << "final checkpoint: " << final_ckpt << "\n";
    } else if (*convert_cmd) {
      require_cpu(device);
      slmvc::convert_file(ckpt, src_path, ref_path, out_path);
      std::cout << "wrote " << out_path << "\n";
    } else if (*analyze_cmd) {
      const auto norm = norm_kind == "l1" ? slmvc::ImportanceNorm::kL1
                                          : slmvc::ImportanceNorm::kFrobenius;
      slmvc::LayerImportance li = slmvc::analyze_weights_csv(analyze_ckpt, analyze_out, norm);
      std::cout << "wrote " << analyze_out << "\n";
      for (int l = 0; l < slmvc::kSlmLayers; ++l)
        std::cout << "layer " << l << ": " << li.importance[static_cast<size_t>(l)] << "\n";
    } else if (*bench_cmd) {
      slmvc::RtfReport r = slmvc::bench_rtf(bench_ckpt, bench_wavs);
      std::cout << "audio_seconds: " << r.audio_seconds << "\n"
                << "processing_seconds: " << r.processing_seconds << "\n"
                << "rtf: " << r.rtf << "\n"
                << "hardware: " << r.hardware << "\n";
    } else if (*fixture_cmd) {
      slmvc::write_toy_corpus(fixture_out, fx_speakers, fx_utts, fx_seconds, fx_rate, fx_seed);
      std::cout << "wrote " << fx_speakers << " speakers x " << fx_utts << " utterances under "
                << fixture_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
