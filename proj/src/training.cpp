#include "slmvc/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "slmvc/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace slmvc {

// ---------------------------------------------------------------------------
// ModelSet
// ---------------------------------------------------------------------------

namespace {
std::mt19937_64 seeded(uint64_t seed, uint64_t stream) { return std::mt19937_64(mix_seed(seed, stream)); }
}  // namespace

ModelSet::ModelSet(const RunConfig& cfg, int roster)
    : generator([&] {
        auto rng = seeded(cfg.seed, 1);
        return Generator(cfg.net, cfg.audio, rng);
      }()),
      style_encoder([&] {
        auto rng = seeded(cfg.seed, 2);
        return StyleEncoder(cfg.net, cfg.audio, rng);
      }()),
      f0_network(cfg.net, cfg.audio),
      vocoder(cfg.audio),
      slm_backbone(cfg.net.slm_seed),
      mel_d([&] {
        auto rng = seeded(cfg.seed, 3);
        return MelDiscriminator(cfg.net, cfg.audio, roster, rng);
      }()),
      slm_d([&] {
        auto rng = seeded(cfg.seed, 4);
        return SlmDiscriminator(cfg.net, rng);
      }()),
      classifier([&] {
        auto rng = seeded(cfg.seed, 5);
        return SourceClassifier(cfg.net, roster, rng);
      }()),
      roster_size(roster) {}

ModelSet::FrozenHashes ModelSet::frozen_hashes() const {
  return {vocoder.parameter_hash(), f0_network.parameter_hash(), slm_backbone.parameter_hash()};
}

std::vector<Var> ModelSet::slm_layers_for_mels(Var mels) const {
  if (mels.value().ndim() != 3) throw std::invalid_argument("slm_layers_for_mels: want [B,N,T]");
  const int64_t B = mels.value().size(0), N = mels.value().size(1), T = mels.value().size(2);
  std::vector<Var> wavs16;
  wavs16.reserve(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    Var mel = reshape(narrow(mels, 0, b, 1), {N, T});
    Var wav = vocoder.forward(mel);
    wavs16.push_back(resample_var(wav, vocoder.sample_rate_hz(), kSlmRateHz));
  }
  return slm_backbone.forward(stack_vars(wavs16));
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(RunConfig cfg, LoadedDataset data) : cfg_(std::move(cfg)), data_(std::move(data)) {
  cfg_.validate();
  if (data_.roster.size() < 2) throw ConfigError("Trainer: need at least 2 speakers");
  if (data_.rate != cfg_.audio.sample_rate_hz)
    throw ConfigError("Trainer: dataset rate does not match audio config");
  models_ = std::make_unique<ModelSet>(cfg_, static_cast<int>(data_.roster.size()));
  segment_samples_ = static_cast<int64_t>(std::llround(cfg_.sched.segment_seconds *
                                                       cfg_.audio.sample_rate_hz));
  if (segment_samples_ < 2 * cfg_.audio.hop_length)
    throw ConfigError("Trainer: segment too short for the mel hop");

  std::vector<Var> gen_params = models_->generator.trainable();
  for (const auto& p : models_->style_encoder.trainable()) gen_params.push_back(p);
  opt_g_ = std::make_unique<AdamW>(std::move(gen_params), cfg_.optim);
  opt_mel_ = std::make_unique<AdamW>(models_->mel_d.trainable(), cfg_.optim);
  opt_slm_d_ = std::make_unique<AdamW>(models_->slm_d.trainable(), cfg_.optim);
  opt_cls_ = std::make_unique<AdamW>(models_->classifier.trainable(), cfg_.optim);
}

int Trainer::steps_per_epoch() const {
  if (cfg_.sched.steps_per_epoch > 0) return cfg_.sched.steps_per_epoch;
  const int64_t n = static_cast<int64_t>(data_.train.size());
  return static_cast<int>((n + cfg_.sched.batch_size - 1) / cfg_.sched.batch_size);
}

std::string Trainer::loss_log_path() const { return cfg_.run_dir + "/loss_log.jsonl"; }

TrainingBatch Trainer::make_batch(std::mt19937_64& rng) const {
  if (data_.roster.size() < 2) throw ConfigError("make_batch: need at least 2 speakers");
  const int B = cfg_.sched.batch_size;
  const int64_t T = segment_samples_ / cfg_.audio.hop_length + 1;
  const int64_t N = cfg_.audio.n_mel_bands;

  TrainingBatch batch;
  batch.x_src = Tensor({B, N, T});
  batch.x_ref = Tensor({B, N, T});

  std::uniform_int_distribution<int> utt_dist(0, static_cast<int>(data_.train.size()) - 1);
  std::uniform_int_distribution<int> spk_dist(0, static_cast<int>(data_.roster.size()) - 1);

  auto segment_mel = [&](const std::vector<double>& samples, int64_t offset) {
    std::vector<double> seg(static_cast<size_t>(segment_samples_), 0.0);
    const int64_t avail =
        std::min<int64_t>(segment_samples_, static_cast<int64_t>(samples.size()) - offset);
    for (int64_t i = 0; i < avail; ++i) seg[static_cast<size_t>(i)] = samples[static_cast<size_t>(offset + i)];
    return compute_mel(Waveform(std::move(seg), cfg_.audio.sample_rate_hz), cfg_.audio);
  };
  auto draw_offset = [&](const std::vector<double>& samples) -> int64_t {
    const int64_t slack = static_cast<int64_t>(samples.size()) - segment_samples_;
    if (slack <= 0) return 0;
    std::uniform_int_distribution<int64_t> d(0, slack);
    return d(rng);
  };

  for (int b = 0; b < B; ++b) {
    const int src_id = utt_dist(rng);
    const auto& src = data_.train[static_cast<size_t>(src_id)];
    const int64_t src_off = draw_offset(src.samples);
    const int y_trg = spk_dist(rng);
    const auto& ref_pool = data_.train_by_speaker[static_cast<size_t>(y_trg)];
    std::uniform_int_distribution<int> ref_dist(0, static_cast<int>(ref_pool.size()) - 1);
    const int ref_id = ref_pool[static_cast<size_t>(ref_dist(rng))];
    const auto& ref = data_.train[static_cast<size_t>(ref_id)];
    const int64_t ref_off = draw_offset(ref.samples);

    MelSpectrogram src_mel = segment_mel(src.samples, src_off);
    MelSpectrogram ref_mel = segment_mel(ref.samples, ref_off);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t t = 0; t < T; ++t) {
        batch.x_src.at3(b, n, t) = src_mel.values.at2(n, t);
        batch.x_ref.at3(b, n, t) = ref_mel.values.at2(n, t);
      }
    batch.y_src.push_back(src.speaker);
    batch.y_trg.push_back(y_trg);
    batch.src_utterance_ids.push_back(src_id);
    batch.ref_utterance_ids.push_back(ref_id);
  }
  return batch;
}

Trainer::RealBranch Trainer::real_branch(const TrainingBatch& batch) const {
  std::vector<Var> layers = models_->slm_layers_for_mels(constant(batch.x_src));
  RealBranch rb;
  rb.layers.reserve(layers.size());
  for (const auto& l : layers) rb.layers.push_back(detach(l));
  return rb;
}

void Trainer::zero_all_grads() const {
  models_->generator.zero_grads();
  models_->style_encoder.zero_grads();
  models_->mel_d.zero_grads();
  models_->slm_d.zero_grads();
  models_->classifier.zero_grads();
}

void Trainer::check_finite(const LossReport& report, int epoch) const {
  for (const auto& [name, value] : report.terms) {
    if (!std::isfinite(value) || !std::isfinite(report.total_g) ||
        !std::isfinite(report.total_d)) {
      std::ostringstream os;
      os << "training diverged at epoch " << epoch << ": ";
      for (const auto& [n, v] : report.terms) os << n << "=" << v << " ";
      os << "total_g=" << report.total_g << " total_d=" << report.total_d;
      throw TrainingDiverged(os.str());
    }
  }
}

LossReport Trainer::discriminator_step(const TrainingBatch& batch, int epoch,
                                       std::mt19937_64& rng) {
  return discriminator_step_impl(batch, epoch, rng, real_branch(batch));
}

LossReport Trainer::discriminator_step_impl(const TrainingBatch& batch, int epoch,
                                            std::mt19937_64& rng, const RealBranch& real) {
  const bool slm_active = epoch >= cfg_.sched.slm_d_start_epoch;
  const bool bcr_active = epoch >= cfg_.sched.bcr_start_epoch;
  const bool cls_active = epoch >= cfg_.sched.cls_start_epoch;
  zero_all_grads();

  Var x_src = constant(batch.x_src);
  Var x_ref = constant(batch.x_ref);

  // generator forward, then cut the graph: critics never update G
  Var s_ref = models_->style_encoder.forward(x_ref);
  auto f0_src = models_->f0_network.forward(x_src);
  Var fake = detach(models_->generator.forward(x_src, s_ref, f0_src.features));

  Var mel_fake = models_->mel_d.scores(fake, batch.y_trg);
  Var mel_real = models_->mel_d.scores(x_src, batch.y_src);

  LossReport report;
  Var d_adv;
  double slm_fake_mean = 0.0, slm_real_mean = 0.0;
  std::vector<Var> fake_layers;
  if (slm_active || cls_active) fake_layers = models_->slm_layers_for_mels(fake);
  if (!slm_active) {
    d_adv = add(adv_ce(mel_fake, false), adv_ce(mel_real, true));
  } else {
    Var slm_fake = models_->slm_d.scores_from_layers(fake_layers);
    Var slm_real = models_->slm_d.scores_from_layers(real.layers);
    slm_fake_mean = mean_all(slm_fake).scalar();
    slm_real_mean = mean_all(slm_real).scalar();
    if (cfg_.sched.mel_ce_after_warmup) {
      d_adv = add(add(adv_ce(mel_fake, false), adv_ce(mel_real, true)),
                  adv_d(slm_fake, slm_real));
    } else {
      d_adv = adv_d(add(mel_fake, slm_fake), add(mel_real, slm_real));
    }
  }

  Var bcr;
  if (bcr_active) {
    std::uniform_real_distribution<double> sdist(cfg_.loss.bcr_scale_min, cfg_.loss.bcr_scale_max);
    std::uniform_int_distribution<int> shdist(-cfg_.loss.bcr_max_shift, cfg_.loss.bcr_max_shift);
    const double amp = sdist(rng);
    const int shift = shdist(rng);
    auto critic = [&](Var m) { return models_->mel_d.scores(m, batch.y_trg); };
    auto augment = [amp, shift](Var m) { return roll_last(scale(m, amp), shift); };
    bcr = bcr_penalty(critic, x_src, fake, augment);
  } else {
    bcr = constant(Tensor::scalar(0.0));
  }

  Var cls = cls_active
                ? classification_loss(models_->classifier.logits_from_layers(fake_layers),
                                      batch.y_src)
                : constant(Tensor::scalar(0.0));

  Var total = add(add(d_adv, scale(cls, cfg_.loss.lambda_cls)), scale(bcr, cfg_.loss.bcr_weight));

  report.terms["d_adv"] = d_adv.scalar();
  report.terms["d_cls"] = cls.scalar();
  report.terms["d_bcr"] = bcr.scalar();
  report.terms["d_slm_fake"] = slm_fake_mean;
  report.terms["d_slm_real"] = slm_real_mean;
  report.total_d = full_discriminator_objective(report.terms["d_adv"], report.terms["d_cls"],
                                                cfg_.loss) +
                   cfg_.loss.bcr_weight * report.terms["d_bcr"];
  check_finite(report, epoch);

  backward(total);
  opt_mel_->step();
  if (slm_active) opt_slm_d_->step();
  if (cls_active) opt_cls_->step();
  return report;
}

LossReport Trainer::generator_step(const TrainingBatch& batch, int epoch) {
  return generator_step_impl(batch, epoch, real_branch(batch));
}

LossReport Trainer::generator_step_impl(const TrainingBatch& batch, int epoch,
                                        const RealBranch& real) {
  const bool slm_active = epoch >= cfg_.sched.slm_d_start_epoch;
  const bool cls_active = epoch >= cfg_.sched.cls_start_epoch;
  zero_all_grads();

  Var x_src = constant(batch.x_src);
  Var x_ref = constant(batch.x_ref);

  Var s_ref = models_->style_encoder.forward(x_ref);
  auto f0_src = models_->f0_network.forward(x_src);
  Var fake = models_->generator.forward(x_src, s_ref, f0_src.features);

  std::vector<Var> fake_layers = models_->slm_layers_for_mels(fake);

  Var mel_scores = models_->mel_d.scores(fake, batch.y_trg);
  Var adv;
  double slm_score_mean = 0.0;
  if (!slm_active) {
    adv = adv_ce(mel_scores, true);
  } else {
    Var slm_scores = models_->slm_d.scores_from_layers(fake_layers);
    slm_score_mean = mean_all(slm_scores).scalar();
    adv = cfg_.sched.mel_ce_after_warmup
              ? add(adv_ce(mel_scores, true), adv_g(slm_scores))
              : adv_g(add(mel_scores, slm_scores));
  }

  Var advcls = cls_active
                   ? classification_loss(models_->classifier.logits_from_layers(fake_layers),
                                         batch.y_trg)
                   : constant(Tensor::scalar(0.0));

  Var s_hat = models_->style_encoder.forward(fake);
  Var sty = sty_loss(s_ref, s_hat);

  auto f0_gen = models_->f0_network.forward(fake);
  Var f0 = f0_loss(detach(f0_src.f0_hz), f0_gen.f0_hz);

  Var slm = slm_consistency_from_layers(real.layers, fake_layers);
  Var norm = norm_loss(x_src, fake);

  Var s_src = models_->style_encoder.forward(x_src);
  Var x_cyc = models_->generator.forward(fake, s_src, f0_gen.features);
  Var cyc = cyc_loss(x_src, x_cyc);

  Var total = adv;
  total = add(total, scale(advcls, cfg_.loss.lambda_advcls));
  total = add(total, scale(sty, cfg_.loss.lambda_sty));
  total = add(total, scale(f0, cfg_.loss.lambda_f0));
  total = add(total, scale(slm, cfg_.loss.lambda_slm));
  total = add(total, scale(norm, cfg_.loss.lambda_norm));
  total = add(total, scale(cyc, cfg_.loss.lambda_cyc));

  LossReport report;
  report.terms["adv"] = adv.scalar();
  report.terms["advcls"] = advcls.scalar();
  report.terms["sty"] = sty.scalar();
  report.terms["f0"] = f0.scalar();
  report.terms["slm"] = slm.scalar();
  report.terms["norm"] = norm.scalar();
  report.terms["cyc"] = cyc.scalar();
  report.terms["g_slm_score"] = slm_score_mean;
  report.total_g = full_generator_objective(
      {{"adv", report.terms["adv"]},
       {"advcls", report.terms["advcls"]},
       {"sty", report.terms["sty"]},
       {"f0", report.terms["f0"]},
       {"slm", report.terms["slm"]},
       {"norm", report.terms["norm"]},
       {"cyc", report.terms["cyc"]}},
      cfg_.loss);
  if (std::abs(report.total_g - total.scalar()) > 1e-6 * std::max(1.0, std::abs(report.total_g)))
    throw std::logic_error("generator objective bookkeeping mismatch");
  check_finite(report, epoch);

  backward(total);
  opt_g_->step();
  return report;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

void save_roster(const std::string& path, const std::vector<std::string>& roster) {
  json j;
  j["roster"] = roster;
  std::ofstream os(path);
  if (!os) throw CheckpointError("cannot write " + path);
  os << j.dump(2) << "\n";
}

std::vector<std::string> load_roster(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw CheckpointError("cannot read " + path);
  json j;
  is >> j;
  return j.at("roster").get<std::vector<std::string>>();
}

}  // namespace

void Trainer::save_checkpoint(const std::string& dir, int epoch_done) const {
  fs::create_directories(fs::path(dir) / "weights");
  fs::create_directories(fs::path(dir) / "optim");
  write_run_config(dir + "/config.txt", cfg_);
  save_roster(dir + "/roster.json", data_.roster);

  json state;
  state["epoch_done"] = epoch_done;
  state["vocoder_hash"] = models_->vocoder.parameter_hash();
  std::ofstream os(dir + "/state.json");
  if (!os) throw CheckpointError("cannot write " + dir + "/state.json");
  os << state.dump(2) << "\n";

  models_->generator.save_file(dir + "/weights/generator.bin");
  models_->style_encoder.save_file(dir + "/weights/style_encoder.bin");
  models_->f0_network.save_file(dir + "/weights/f0_network.bin");
  models_->slm_backbone.save_file(dir + "/weights/slm_backbone.bin");
  models_->mel_d.save_file(dir + "/weights/mel_discriminator.bin");
  models_->slm_d.save_file(dir + "/weights/slm_discriminator.bin");
  models_->classifier.save_file(dir + "/weights/source_classifier.bin");

  opt_g_->save_file(dir + "/optim/generator.bin");
  opt_mel_->save_file(dir + "/optim/mel_discriminator.bin");
  opt_slm_d_->save_file(dir + "/optim/slm_discriminator.bin");
  opt_cls_->save_file(dir + "/optim/source_classifier.bin");
}

int Trainer::load_checkpoint(const std::string& dir) {
  std::ifstream cis(dir + "/config.txt");
  if (!cis) throw CheckpointError("checkpoint has no config.txt: " + dir);
  std::stringstream ss;
  ss << cis.rdbuf();
  if (ss.str() != serialize_run_config(cfg_))
    throw CheckpointError("checkpoint config does not match the current run config: " + dir);
  const auto roster = load_roster(dir + "/roster.json");
  if (roster != data_.roster)
    throw CheckpointError("checkpoint roster does not match the dataset: " + dir);

  models_->generator.load_file(dir + "/weights/generator.bin");
  models_->style_encoder.load_file(dir + "/weights/style_encoder.bin");
  models_->f0_network.load_file(dir + "/weights/f0_network.bin");
  models_->slm_backbone.load_file(dir + "/weights/slm_backbone.bin");
  models_->mel_d.load_file(dir + "/weights/mel_discriminator.bin");
  models_->slm_d.load_file(dir + "/weights/slm_discriminator.bin");
  models_->classifier.load_file(dir + "/weights/source_classifier.bin");

  opt_g_->load_file(dir + "/optim/generator.bin");
  opt_mel_->load_file(dir + "/optim/mel_discriminator.bin");
  opt_slm_d_->load_file(dir + "/optim/slm_discriminator.bin");
  opt_cls_->load_file(dir + "/optim/source_classifier.bin");

  std::ifstream sis(dir + "/state.json");
  json state;
  sis >> state;
  return state.at("epoch_done").get<int>();
}

std::optional<std::string> Trainer::find_latest_checkpoint(const std::string& run_dir) {
  const fs::path root = fs::path(run_dir) / "checkpoints";
  if (!fs::is_directory(root)) return std::nullopt;
  std::string best;
  for (const auto& e : fs::directory_iterator(root)) {
    if (!e.is_directory()) continue;
    const std::string name = e.path().filename().string();
    if (name.rfind("epoch_", 0) != 0) continue;
    if (name > best) best = name;
  }
  if (best.empty()) return std::nullopt;
  return (root / best).string();
}

std::string Trainer::run(bool resume, std::optional<int> stop_after_epoch) {
  fs::create_directories(cfg_.run_dir);
  fs::create_directories(fs::path(cfg_.run_dir) / "checkpoints");
  write_run_config(cfg_.run_dir + "/config.txt", cfg_);

  int start_epoch = 0;
  if (resume) {
    if (auto latest = find_latest_checkpoint(cfg_.run_dir)) {
      start_epoch = load_checkpoint(*latest) + 1;
    }
  }

  std::ofstream log(loss_log_path(), start_epoch > 0 ? std::ios::app : std::ios::trunc);
  if (!log) throw ConfigError("cannot open loss log: " + loss_log_path());

  const int steps = steps_per_epoch();
  std::string last_ckpt;
  auto checkpoint_name = [&](int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "epoch_%04d", epoch);
    return (fs::path(cfg_.run_dir) / "checkpoints" / buf).string();
  };

  for (int epoch = start_epoch; epoch < cfg_.sched.total_epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(cfg_.seed, 0x9000 + static_cast<uint64_t>(epoch)));
    for (int step = 0; step < steps; ++step) {
      TrainingBatch batch = make_batch(rng);
      RealBranch real = real_branch(batch);
      LossReport d = discriminator_step_impl(batch, epoch, rng, real);
      LossReport g = generator_step_impl(batch, epoch, real);

      json line;
      line["epoch"] = epoch;
      line["step"] = step;
      for (const auto& [k, v] : d.terms) line[k] = v;
      for (const auto& [k, v] : g.terms) line[k] = v;
      line["total_d"] = d.total_d;
      line["total_g"] = g.total_g;
      log << line.dump() << "\n";
    }
    log.flush();
    const bool stopping = stop_after_epoch && epoch == *stop_after_epoch;
    if ((epoch + 1) % cfg_.sched.checkpoint_every == 0 || epoch + 1 == cfg_.sched.total_epochs ||
        stopping) {
      last_ckpt = checkpoint_name(epoch);
      save_checkpoint(last_ckpt, epoch);
    }
    if (stopping) break;
  }
  return last_ckpt;
}

// ---------------------------------------------------------------------------
// checkpoint bundle for the CLI commands
// ---------------------------------------------------------------------------

CheckpointBundle load_checkpoint_bundle(const std::string& ckpt_dir) {
  CheckpointBundle b;
  b.config = parse_run_config(ckpt_dir + "/config.txt");
  b.roster = load_roster(ckpt_dir + "/roster.json");
  if (b.roster.size() < 1) throw CheckpointError("checkpoint roster is empty");
  b.models = std::make_unique<ModelSet>(b.config, static_cast<int>(b.roster.size()));
  b.models->generator.load_file(ckpt_dir + "/weights/generator.bin");
  b.models->style_encoder.load_file(ckpt_dir + "/weights/style_encoder.bin");
  b.models->f0_network.load_file(ckpt_dir + "/weights/f0_network.bin");
  b.models->slm_backbone.load_file(ckpt_dir + "/weights/slm_backbone.bin");
  b.models->mel_d.load_file(ckpt_dir + "/weights/mel_discriminator.bin");
  b.models->slm_d.load_file(ckpt_dir + "/weights/slm_discriminator.bin");
  b.models->classifier.load_file(ckpt_dir + "/weights/source_classifier.bin");
  std::ifstream sis(ckpt_dir + "/state.json");
  if (sis) {
    json state;
    sis >> state;
    b.epoch_done = state.value("epoch_done", 0);
  }
  return b;
}

}  // namespace slmvc
