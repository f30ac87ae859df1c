#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>

#include "slmvc/fixtures.hpp"
#include "slmvc/tooling.hpp"
#include "slmvc/training.hpp"
#include "slmvc/util.hpp"

using namespace slmvc;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Fixture {
  std::string root;
  DatasetManifest manifest;
  LoadedDataset data;

  explicit Fixture(const std::string& tag, int speakers = 4, int utts = 3,
                   double unseen_fraction = 0.0) {
    root = (fs::temp_directory_path() / ("slmvc_train_" + tag)).string();
    fs::remove_all(root);
    write_toy_corpus(root + "/corpus", speakers, utts, 2.0, 22050, 11);
    manifest = ingest(root + "/corpus", 5, unseen_fraction);
    data = LoadedDataset::load(manifest, 22050);
  }
  ~Fixture() { fs::remove_all(root); }
};

RunConfig toy_config(const std::string& run_dir) {
  RunConfig c;
  c.audio.n_mel_bands = 48;
  c.audio.fft_size = 512;
  c.audio.window_length = 512;
  c.audio.hop_length = 256;
  c.net.style_dim = 16;
  c.net.base_width = 8;
  c.net.num_stages = 3;
  c.net.decoder_width = 48;
  c.net.decoder_blocks = 2;
  c.net.f0_channels = 16;
  c.net.disc_width = 16;
  c.sched.total_epochs = 6;
  c.sched.slm_d_start_epoch = 2;
  c.sched.bcr_start_epoch = 2;
  c.sched.cls_start_epoch = 4;
  c.sched.batch_size = 2;
  c.sched.segment_seconds = 0.5;
  c.sched.steps_per_epoch = 2;
  c.sched.checkpoint_every = 2;
  c.optim.learning_rate = 2e-3;
  c.seed = 42;
  c.run_dir = run_dir;
  return c;
}

std::vector<json> read_log(const std::string& path) {
  std::ifstream is(path);
  std::vector<json> lines;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) lines.push_back(json::parse(line));
  return lines;
}

double grad_sq_norm(const std::vector<Var>& params) {
  double acc = 0;
  for (const auto& p : params)
    if (p.has_grad())
      for (int64_t i = 0; i < p.grad().numel(); ++i) acc += p.grad()[i] * p.grad()[i];
  return acc;
}

}  // namespace

TEST_CASE("make_batch: determinism, geometry, label validity") {
  Fixture fx("batch");
  RunConfig cfg = toy_config(fx.root + "/run");
  cfg.sched.segment_seconds = 2.0;
  cfg.sched.batch_size = 4;
  Trainer trainer(cfg, fx.data);

  std::mt19937_64 r1(7), r2(7);
  TrainingBatch a = trainer.make_batch(r1);
  TrainingBatch b = trainer.make_batch(r2);
  CHECK(a.y_src == b.y_src);
  CHECK(a.y_trg == b.y_trg);
  CHECK(a.src_utterance_ids == b.src_utterance_ids);
  for (int64_t i = 0; i < a.x_src.numel(); ++i) CHECK(a.x_src[i] == b.x_src[i]);
  for (int64_t i = 0; i < a.x_ref.numel(); ++i) CHECK(a.x_ref[i] == b.x_ref[i]);

  // 2-second segments at 22050 Hz are 44100 samples -> 173 mel frames
  CHECK(a.x_src.size(0) == 4);
  CHECK(a.x_src.size(1) == 48);
  CHECK(a.x_src.size(2) == 44100 / 256 + 1);

  for (size_t i = 0; i < a.y_trg.size(); ++i) {
    CHECK(a.y_trg[i] >= 0);
    CHECK(a.y_trg[i] < 4);
    // reference utterances really belong to the drawn target speaker
    CHECK(fx.data.train[static_cast<size_t>(a.ref_utterance_ids[i])].speaker == a.y_trg[i]);
  }
}

TEST_CASE("schedule gating is exact at the step level") {
  Fixture fx("gating");
  RunConfig cfg = toy_config(fx.root + "/run");
  Trainer trainer(cfg, fx.data);
  std::mt19937_64 rng(3);

  // warm-up epoch: no feature critic, no bCR, no classifier
  TrainingBatch batch = trainer.make_batch(rng);
  const uint64_t slm_d_before = trainer.models().slm_d.parameter_hash();
  const uint64_t cls_before = trainer.models().classifier.parameter_hash();
  LossReport d1 = trainer.discriminator_step(batch, 1, rng);
  CHECK(d1.terms.at("d_slm_fake") == 0.0);
  CHECK(d1.terms.at("d_slm_real") == 0.0);
  CHECK(d1.terms.at("d_bcr") == 0.0);
  CHECK(d1.terms.at("d_cls") == 0.0);
  CHECK(grad_sq_norm(trainer.models().slm_d.trainable()) == 0.0);
  CHECK(grad_sq_norm(trainer.models().classifier.trainable()) == 0.0);
  CHECK(trainer.models().slm_d.parameter_hash() == slm_d_before);
  CHECK(trainer.models().classifier.parameter_hash() == cls_before);

  LossReport g1 = trainer.generator_step(batch, 1);
  CHECK(g1.terms.at("advcls") == 0.0);
  CHECK(g1.terms.at("g_slm_score") == 0.0);
  CHECK(g1.terms.at("slm") > 0.0);  // consistency loss is active from epoch 0

  // feature critic joined, classifier still gated
  LossReport d2 = trainer.discriminator_step(batch, 3, rng);
  CHECK(d2.terms.at("d_slm_fake") != 0.0);
  CHECK(d2.terms.at("d_bcr") != 0.0);
  CHECK(d2.terms.at("d_cls") == 0.0);
  CHECK(trainer.models().slm_d.parameter_hash() != slm_d_before);
  CHECK(trainer.models().classifier.parameter_hash() == cls_before);
  CHECK(grad_sq_norm(trainer.models().slm_d.trainable()) > 0.0);

  // classifier joined
  LossReport d3 = trainer.discriminator_step(batch, 5, rng);
  CHECK(d3.terms.at("d_cls") > 0.0);
  CHECK(trainer.models().classifier.parameter_hash() != cls_before);
  LossReport g3 = trainer.generator_step(batch, 5);
  CHECK(g3.terms.at("advcls") > 0.0);
  CHECK(g3.terms.at("g_slm_score") != 0.0);
}

TEST_CASE("generator step: report bookkeeping and frozen modules") {
  Fixture fx("gstep");
  RunConfig cfg = toy_config(fx.root + "/run");
  Trainer trainer(cfg, fx.data);
  std::mt19937_64 rng(5);
  TrainingBatch batch = trainer.make_batch(rng);

  const auto frozen_before = trainer.models().frozen_hashes();
  const uint64_t gen_before = trainer.models().generator.parameter_hash();
  const uint64_t sty_before = trainer.models().style_encoder.parameter_hash();

  LossReport g = trainer.generator_step(batch, 5);
  for (const char* k : {"adv", "advcls", "sty", "f0", "slm", "norm", "cyc"})
    CHECK(g.terms.count(k) == 1);
  const double weighted = full_generator_objective(
      {{"adv", g.terms.at("adv")}, {"advcls", g.terms.at("advcls")}, {"sty", g.terms.at("sty")},
       {"f0", g.terms.at("f0")},   {"slm", g.terms.at("slm")},       {"norm", g.terms.at("norm")},
       {"cyc", g.terms.at("cyc")}},
      cfg.loss);
  CHECK(std::abs(g.total_g - weighted) < 1e-6);

  CHECK(trainer.models().generator.parameter_hash() != gen_before);
  CHECK(trainer.models().style_encoder.parameter_hash() != sty_before);
  CHECK(trainer.models().frozen_hashes() == frozen_before);
}

TEST_CASE("every generator loss term reaches generator and style encoder") {
  Fixture fx("liveness");
  RunConfig cfg = toy_config(fx.root + "/run");
  Trainer trainer(cfg, fx.data);
  ModelSet& m = trainer.models();
  std::mt19937_64 rng(7);
  TrainingBatch batch = trainer.make_batch(rng);

  Var x_src = constant(batch.x_src);
  Var x_ref = constant(batch.x_ref);

  auto build_terms = [&]() {
    std::map<std::string, Var> terms;
    Var s_ref = m.style_encoder.forward(x_ref);
    auto f0_src = m.f0_network.forward(x_src);
    Var fake = m.generator.forward(x_src, s_ref, f0_src.features);
    std::vector<Var> fake_layers = m.slm_layers_for_mels(fake);
    std::vector<Var> real_layers;
    for (const auto& l : m.slm_layers_for_mels(x_src)) real_layers.push_back(detach(l));

    terms["adv"] = adv_g(add(m.mel_d.scores(fake, batch.y_trg),
                             m.slm_d.scores_from_layers(fake_layers)));
    terms["advcls"] =
        classification_loss(m.classifier.logits_from_layers(fake_layers), batch.y_trg);
    terms["sty"] = sty_loss(s_ref, m.style_encoder.forward(fake));
    auto f0_gen = m.f0_network.forward(fake);
    terms["f0"] = f0_loss(detach(f0_src.f0_hz), f0_gen.f0_hz);
    terms["slm"] = slm_consistency_from_layers(real_layers, fake_layers);
    terms["norm"] = norm_loss(x_src, fake);
    Var s_src = m.style_encoder.forward(x_src);
    terms["cyc"] = cyc_loss(x_src, m.generator.forward(fake, s_src, f0_gen.features));
    return terms;
  };

  for (const auto& [name, term] : build_terms()) {
    m.generator.zero_grads();
    m.style_encoder.zero_grads();
    backward(term);
    INFO("term: " << name);
    CHECK(grad_sq_norm(m.generator.trainable()) > 0.0);
    CHECK(grad_sq_norm(m.style_encoder.trainable()) > 0.0);
  }
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  Fixture fx("nan");
  RunConfig cfg = toy_config(fx.root + "/run");
  Trainer trainer(cfg, fx.data);
  std::mt19937_64 rng(9);
  TrainingBatch batch = trainer.make_batch(rng);

  const auto& params = trainer.models().generator.parameters();
  Tensor poisoned = params.front().var.value();
  poisoned[0] = std::numeric_limits<double>::quiet_NaN();
  params.front().var.set_value(poisoned);
  CHECK_THROWS_AS(trainer.generator_step(batch, 1), TrainingDiverged);
}

TEST_CASE("full runs: determinism, resume replay, log volume, audit") {
  Fixture fx("run");
  RunConfig cfg_a = toy_config(fx.root + "/runA");
  RunConfig cfg_b = toy_config(fx.root + "/runB");
  RunConfig cfg_c = toy_config(fx.root + "/runC");

  Trainer a(cfg_a, fx.data);
  const auto frozen_before = a.models().frozen_hashes();
  const std::string final_a = a.run();
  CHECK(a.models().frozen_hashes() == frozen_before);
  CHECK(fs::is_directory(final_a));

  Trainer b(cfg_b, fx.data);
  b.run();

  auto log_a = read_log(cfg_a.run_dir + "/loss_log.jsonl");
  auto log_b = read_log(cfg_b.run_dir + "/loss_log.jsonl");
  REQUIRE(log_a.size() == static_cast<size_t>(cfg_a.sched.total_epochs * 2));
  REQUIRE(log_a.size() == log_b.size());
  for (size_t i = 0; i < log_a.size(); ++i) CHECK(log_a[i] == log_b[i]);

  // interruption after epoch 2, then resume must replay epochs 3..5 exactly
  Trainer c1(cfg_c, fx.data);
  c1.run(false, 2);
  Trainer c2(cfg_c, fx.data);
  c2.run(true);
  auto log_c = read_log(cfg_c.run_dir + "/loss_log.jsonl");
  REQUIRE(log_c.size() == log_a.size());
  for (size_t i = 0; i < log_a.size(); ++i) {
    for (auto it = log_a[i].begin(); it != log_a[i].end(); ++it) {
      if (it->is_number_float()) {
        const double va = it->get<double>();
        const double vc = log_c[i].at(it.key()).get<double>();
        CHECK(std::abs(va - vc) <= 1e-6 * std::max(1.0, std::abs(va)));
      } else {
        CHECK(log_c[i].at(it.key()) == *it);
      }
    }
  }

  // config mismatch on resume fails loudly
  RunConfig cfg_d = cfg_c;
  cfg_d.optim.learning_rate *= 2;
  Trainer d(cfg_d, fx.data);
  const auto latest = Trainer::find_latest_checkpoint(cfg_c.run_dir);
  REQUIRE(latest.has_value());
  CHECK_THROWS_AS(d.load_checkpoint(*latest), CheckpointError);
}

TEST_CASE("unseen speakers never reach a training batch") {
  Fixture fx("unseen", 4, 3, 0.25);
  REQUIRE(fx.data.roster.size() == 3);

  std::vector<std::string> unseen_names;
  for (const auto& s : fx.manifest.speakers)
    if (!s.seen) unseen_names.push_back(s.name);
  REQUIRE(unseen_names.size() == 1);

  RunConfig cfg = toy_config(fx.root + "/run");
  Trainer trainer(cfg, fx.data);
  std::mt19937_64 rng(13);
  for (int step = 0; step < 40; ++step) {
    TrainingBatch batch = trainer.make_batch(rng);
    for (int id : batch.src_utterance_ids) {
      const auto& utt = fx.data.train[static_cast<size_t>(id)];
      for (const auto& name : unseen_names)
        CHECK(utt.path.find("/" + name + "/") == std::string::npos);
    }
  }
}

TEST_CASE("trained toy model: style probe and source classifier probe") {
  Fixture fx("probe", 4, 3);
  RunConfig cfg = toy_config(fx.root + "/run");
  cfg.sched.total_epochs = 22;
  cfg.sched.slm_d_start_epoch = 4;
  cfg.sched.bcr_start_epoch = 4;
  cfg.sched.cls_start_epoch = 4;
  cfg.sched.steps_per_epoch = 4;
  Trainer trainer(cfg, fx.data);
  const std::string ckpt = trainer.run();
  REQUIRE(!ckpt.empty());

  CheckpointBundle bundle = load_checkpoint_bundle(ckpt);
  const AudioConfig& audio = bundle.config.audio;

  // style probe: same-speaker cosine beats different-speaker cosine on median
  auto style_of = [&](int speaker, int utt) {
    Waveform w = synth_speaker_utterance(speaker, 100 + utt, 1.0, 22050, 77);
    return bundle.models->style_encoder.encode(compute_mel(w, audio));
  };
  auto cosine = [](const StyleVector& a, const StyleVector& b) {
    double dot = 0, na = 0, nb = 0;
    for (int64_t i = 0; i < a.values.numel(); ++i) {
      dot += a.values[i] * b.values[i];
      na += a.values[i] * a.values[i];
      nb += b.values[i] * b.values[i];
    }
    return dot / std::sqrt(na * nb);
  };
  std::vector<double> same, diff;
  for (int rep = 0; rep < 20; ++rep) {
    const int sp_a = rep % 4;
    const int sp_b = (sp_a + 1 + rep % 3) % 4;
    same.push_back(cosine(style_of(sp_a, 2 * rep), style_of(sp_a, 2 * rep + 1)));
    diff.push_back(cosine(style_of(sp_a, 2 * rep), style_of(sp_b, 2 * rep + 1)));
  }
  std::sort(same.begin(), same.end());
  std::sort(diff.begin(), diff.end());
  CHECK(same[same.size() / 2] > diff[diff.size() / 2]);

  // classifier probe: converted held-out sources classified above chance
  int correct = 0, total = 0;
  for (int sp = 0; sp < 4; ++sp) {
    Waveform src = synth_speaker_utterance(sp, 200, 1.0, 22050, 78);
    for (int trg = 0; trg < 4; ++trg) {
      if (trg == sp) continue;
      Waveform ref = synth_speaker_utterance(trg, 201, 1.0, 22050, 79);
      Waveform converted = convert_voice(bundle, src, ref);
      std::vector<double> logits =
          bundle.models->classifier.classify(bundle.models->slm_backbone, converted);
      const int pred = static_cast<int>(
          std::max_element(logits.begin(), logits.end()) - logits.begin());
      correct += (pred == sp);
      ++total;
    }
  }
  CHECK(total == 12);
  CHECK(static_cast<double>(correct) / total > 0.25);
}
