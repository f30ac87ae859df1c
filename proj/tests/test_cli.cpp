#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "slmvc/config.hpp"
#include "slmvc/fixtures.hpp"
#include "slmvc/tooling.hpp"
#include "slmvc/training.hpp"

using namespace slmvc;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
  const std::string d = (fs::temp_directory_path() / ("slmvc_cli_" + tag)).string();
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunConfig tiny_run_config(const std::string& run_dir) {
  RunConfig c;
  c.audio.n_mel_bands = 48;
  c.audio.fft_size = 512;
  c.audio.window_length = 512;
  c.audio.hop_length = 256;
  c.net.style_dim = 16;
  c.net.base_width = 8;
  c.net.decoder_width = 48;
  c.net.decoder_blocks = 1;
  c.net.f0_channels = 16;
  c.net.disc_width = 16;
  c.sched.total_epochs = 2;
  c.sched.slm_d_start_epoch = 1;
  c.sched.bcr_start_epoch = 1;
  c.sched.cls_start_epoch = 1;
  c.sched.batch_size = 2;
  c.sched.segment_seconds = 0.5;
  c.sched.steps_per_epoch = 1;
  c.sched.checkpoint_every = 2;
  c.run_dir = run_dir;
  return c;
}

}  // namespace

TEST_CASE("run config: roundtrip, unknowns, duplicates") {
  RunConfig def;
  RunConfig parsed = parse_run_config_text(serialize_run_config(def));
  CHECK(serialize_run_config(parsed) == serialize_run_config(def));
  CHECK(parsed.sched.batch_size == 28);
  CHECK(parsed.optim.beta2 == 0.99);
  CHECK(parsed.loss.lambda_f0 == 5.0);

  RunConfig custom = parse_run_config_text("sched.batch_size = 4\nseed = 99\n");
  CHECK(custom.sched.batch_size == 4);
  CHECK(custom.seed == 99);

  CHECK_THROWS_AS(parse_run_config_text("sched.batch_sizee = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("seed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("sched.batch_size = four\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("just some words\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("sched.batch_size = 0\n"), std::invalid_argument);
}

TEST_CASE("ingest: split arithmetic and determinism") {
  const std::string root = temp_dir("ingest");
  write_toy_corpus(root + "/corpus", 10, 20, 0.3, 22050, 3);

  DatasetManifest m = ingest(root + "/corpus", 17, 0.2);
  int seen = 0, unseen = 0;
  for (const auto& s : m.speakers) (s.seen ? seen : unseen)++;
  CHECK(seen == 8);
  CHECK(unseen == 2);

  for (const auto& s : m.speakers) {
    if (!s.seen) continue;  // unseen speakers carry no split
    int train = 0, val = 0;
    for (const auto& u : s.utterances) (u.val ? val : train)++;
    CHECK(train == 18);
    CHECK(val == 2);
  }

  write_manifest(root + "/m1.json", m);
  write_manifest(root + "/m2.json", ingest(root + "/corpus", 17, 0.2));
  CHECK(slurp(root + "/m1.json") == slurp(root + "/m2.json"));

  DatasetManifest other = ingest(root + "/corpus", 18, 0.2);
  write_manifest(root + "/m3.json", other);
  CHECK(slurp(root + "/m1.json") != slurp(root + "/m3.json"));

  DatasetManifest loaded = read_manifest(root + "/m1.json");
  write_manifest(root + "/m4.json", loaded);
  CHECK(slurp(root + "/m1.json") == slurp(root + "/m4.json"));

  fs::remove_all(root);
}

TEST_CASE("ingest: empty speaker dir skipped, too few seen speakers rejected") {
  const std::string root = temp_dir("ingest_edge");
  write_toy_corpus(root + "/corpus", 3, 2, 0.3, 22050, 3);
  fs::create_directories(root + "/corpus/empty_speaker");
  DatasetManifest m = ingest(root + "/corpus", 1, 0.0);
  CHECK(m.speakers.size() == 3);  // empty dir skipped

  write_toy_corpus(root + "/single", 1, 2, 0.3, 22050, 3);
  CHECK_THROWS_AS(ingest(root + "/single", 1, 0.0), ConfigError);
  CHECK_THROWS_AS(ingest(root + "/corpus", 1, 0.5), ConfigError);  // 3 -> 2 unseen, 1 seen
  CHECK_THROWS_AS(ingest(root + "/missing", 1, 0.0), ConfigError);
  fs::remove_all(root);
}

TEST_CASE("convert: duration contract and determinism") {
  const std::string root = temp_dir("convert");
  write_toy_corpus(root + "/corpus", 2, 2, 1.0, 22050, 7);
  DatasetManifest m = ingest(root + "/corpus", 3, 0.0);
  LoadedDataset data = LoadedDataset::load(m, 22050);

  RunConfig cfg = tiny_run_config(root + "/run");
  Trainer trainer(cfg, data);
  trainer.save_checkpoint(root + "/ckpt", 0);

  const std::string src = root + "/corpus/speaker0/utt0.wav";
  const std::string ref = root + "/corpus/speaker1/utt1.wav";
  convert_file(root + "/ckpt", src, ref, root + "/out1.wav");
  convert_file(root + "/ckpt", src, ref, root + "/out2.wav");
  CHECK(slurp(root + "/out1.wav") == slurp(root + "/out2.wav"));

  Waveform src_wav = read_wav(src);
  Waveform out = read_wav(root + "/out1.wav");
  CHECK(out.sample_rate_hz == 22050);
  const int64_t L = static_cast<int64_t>(src_wav.samples.size());
  const int64_t Lo = static_cast<int64_t>(out.samples.size());
  CHECK(Lo <= L);
  CHECK(L - Lo < cfg.audio.hop_length);

  // sources at a different rate are resampled on the way in
  Waveform src24 = resample(src_wav, 24000);
  write_wav(root + "/src24.wav", src24);
  convert_file(root + "/ckpt", root + "/src24.wav", ref, root + "/out3.wav");
  Waveform out3 = read_wav(root + "/out3.wav");
  CHECK(std::abs(static_cast<double>(out3.samples.size()) / 22050 -
                 src24.duration_seconds()) < 0.02);

  fs::remove_all(root);
}

TEST_CASE("checkpoints: loud failures on mismatch") {
  const std::string root = temp_dir("ckpt");
  write_toy_corpus(root + "/corpus", 3, 2, 1.0, 22050, 7);
  DatasetManifest m = ingest(root + "/corpus", 3, 0.0);
  LoadedDataset data = LoadedDataset::load(m, 22050);

  RunConfig cfg = tiny_run_config(root + "/run");
  Trainer trainer(cfg, data);
  trainer.save_checkpoint(root + "/ckpt", 1);

  CheckpointBundle bundle = load_checkpoint_bundle(root + "/ckpt");
  CHECK(bundle.roster.size() == 3);
  CHECK(bundle.epoch_done == 1);

  RunConfig other = cfg;
  other.audio.n_mel_bands = 32;
  Trainer t2(other, data);
  CHECK_THROWS_AS(t2.load_checkpoint(root + "/ckpt"), CheckpointError);

  // roster mismatch: rebuild with a 2-speaker dataset against a 3-speaker checkpoint
  write_toy_corpus(root + "/corpus2", 2, 2, 1.0, 22050, 7);
  LoadedDataset data2 = LoadedDataset::load(ingest(root + "/corpus2", 3, 0.0), 22050);
  Trainer t3(cfg, data2);
  CHECK_THROWS_AS(t3.load_checkpoint(root + "/ckpt"), CheckpointError);

  CHECK_THROWS_AS(load_checkpoint_bundle(root + "/nonexistent"), std::exception);
  fs::remove_all(root);
}

TEST_CASE("analyze-weights: csv shape and oracle agreement") {
  const std::string root = temp_dir("analyze");
  write_toy_corpus(root + "/corpus", 2, 2, 1.0, 22050, 7);
  LoadedDataset data = LoadedDataset::load(ingest(root + "/corpus", 3, 0.0), 22050);
  RunConfig cfg = tiny_run_config(root + "/run");
  Trainer trainer(cfg, data);
  trainer.save_checkpoint(root + "/ckpt", 0);

  LayerImportance li = analyze_weights_csv(root + "/ckpt", root + "/imp.csv");
  LayerImportance oracle = layer_importance(trainer.models().slm_d.head_snapshot());
  double total = 0;
  for (int l = 0; l < kSlmLayers; ++l) {
    CHECK(li.importance[l] == doctest::Approx(oracle.importance[l]).epsilon(1e-12));
    CHECK(li.importance[l] >= 0.0);
    total += li.importance[l];
  }
  CHECK(std::abs(total - 1.0) < 1e-6);

  std::ifstream is(root + "/imp.csv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "layer_index,importance");
  int rows = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 13);
  fs::remove_all(root);
}

TEST_CASE("bench-rtf: definition and measurement") {
  RtfReport direct(2.0, 0.5, "test");
  CHECK(direct.rtf == 0.25);
  CHECK_THROWS_AS(RtfReport(0.0, 0.5, "x"), std::invalid_argument);

  const std::string root = temp_dir("rtf");
  write_toy_corpus(root + "/corpus", 2, 2, 0.6, 22050, 7);
  LoadedDataset data = LoadedDataset::load(ingest(root + "/corpus", 3, 0.0), 22050);
  RunConfig cfg = tiny_run_config(root + "/run");
  Trainer trainer(cfg, data);
  trainer.save_checkpoint(root + "/ckpt", 0);

  std::vector<std::string> wavs{root + "/corpus/speaker0/utt0.wav",
                                root + "/corpus/speaker1/utt0.wav"};
  RtfReport r = bench_rtf(root + "/ckpt", wavs);
  CHECK(r.audio_seconds == doctest::Approx(1.2).epsilon(1e-6));
  CHECK(r.rtf == r.processing_seconds / r.audio_seconds);
  CHECK(r.rtf > 0.0);
  CHECK(!r.hardware.empty());

  CHECK_THROWS_AS(bench_rtf(root + "/ckpt", {}), std::invalid_argument);
  fs::remove_all(root);
}
