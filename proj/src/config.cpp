#include "slmvc/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace slmvc {

void RunConfig::validate() const {
  audio.validate();
  net.validate(audio);
  loss.validate();
  sched.validate();
  optim.validate();
  if (run_dir.empty()) throw ConfigError("RunConfig: run_dir must not be empty");
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct KvReader {
  std::map<std::string, std::string> kv;
  std::map<std::string, bool> used;

  double num(const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    used[key] = true;
    try {
      size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing chars");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: cannot parse number for '" + key + "': " + it->second);
    }
  }
  int integer(const std::string& key, int fallback) {
    const double v = num(key, fallback);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) throw ConfigError("config: '" + key + "' must be an integer");
    return i;
  }
  uint64_t u64(const std::string& key, uint64_t fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    used[key] = true;
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config: cannot parse '" + key + "'");
    }
  }
  bool boolean(const std::string& key, bool fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    used[key] = true;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config: '" + key + "' must be true or false");
  }
  std::string str(const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    used[key] = true;
    return it->second;
  }
};

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
  KvReader r;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config: empty key or value on line " + std::to_string(lineno));
    if (r.kv.count(key)) throw ConfigError("config: duplicate key '" + key + "'");
    r.kv[key] = value;
  }

  RunConfig c;
  c.audio.sample_rate_hz = r.integer("audio.sample_rate_hz", c.audio.sample_rate_hz);
  c.audio.n_mel_bands = r.integer("audio.n_mel_bands", c.audio.n_mel_bands);
  c.audio.fft_size = r.integer("audio.fft_size", c.audio.fft_size);
  c.audio.hop_length = r.integer("audio.hop_length", c.audio.hop_length);
  c.audio.window_length = r.integer("audio.window_length", c.audio.window_length);
  c.audio.log_floor = r.num("audio.log_floor", c.audio.log_floor);

  c.net.style_dim = r.integer("net.style_dim", c.net.style_dim);
  c.net.base_width = r.integer("net.base_width", c.net.base_width);
  c.net.num_stages = r.integer("net.num_stages", c.net.num_stages);
  c.net.decoder_width = r.integer("net.decoder_width", c.net.decoder_width);
  c.net.decoder_blocks = r.integer("net.decoder_blocks", c.net.decoder_blocks);
  c.net.f0_channels = r.integer("net.f0_channels", c.net.f0_channels);
  c.net.disc_width = r.integer("net.disc_width", c.net.disc_width);
  c.net.f0_seed = r.u64("net.f0_seed", c.net.f0_seed);
  c.net.slm_seed = r.u64("net.slm_seed", c.net.slm_seed);

  c.loss.lambda_cls = r.num("loss.lambda_cls", c.loss.lambda_cls);
  c.loss.lambda_advcls = r.num("loss.lambda_advcls", c.loss.lambda_advcls);
  c.loss.lambda_sty = r.num("loss.lambda_sty", c.loss.lambda_sty);
  c.loss.lambda_f0 = r.num("loss.lambda_f0", c.loss.lambda_f0);
  c.loss.lambda_slm = r.num("loss.lambda_slm", c.loss.lambda_slm);
  c.loss.lambda_norm = r.num("loss.lambda_norm", c.loss.lambda_norm);
  c.loss.lambda_cyc = r.num("loss.lambda_cyc", c.loss.lambda_cyc);
  c.loss.bcr_weight = r.num("loss.bcr_weight", c.loss.bcr_weight);
  c.loss.bcr_scale_min = r.num("loss.bcr_scale_min", c.loss.bcr_scale_min);
  c.loss.bcr_scale_max = r.num("loss.bcr_scale_max", c.loss.bcr_scale_max);
  c.loss.bcr_max_shift = r.integer("loss.bcr_max_shift", c.loss.bcr_max_shift);

  c.sched.total_epochs = r.integer("sched.total_epochs", c.sched.total_epochs);
  c.sched.slm_d_start_epoch = r.integer("sched.slm_d_start_epoch", c.sched.slm_d_start_epoch);
  c.sched.bcr_start_epoch = r.integer("sched.bcr_start_epoch", c.sched.bcr_start_epoch);
  c.sched.cls_start_epoch = r.integer("sched.cls_start_epoch", c.sched.cls_start_epoch);
  c.sched.batch_size = r.integer("sched.batch_size", c.sched.batch_size);
  c.sched.segment_seconds = r.num("sched.segment_seconds", c.sched.segment_seconds);
  c.sched.steps_per_epoch = r.integer("sched.steps_per_epoch", c.sched.steps_per_epoch);
  c.sched.checkpoint_every = r.integer("sched.checkpoint_every", c.sched.checkpoint_every);
  c.sched.mel_ce_after_warmup = r.boolean("sched.mel_ce_after_warmup", c.sched.mel_ce_after_warmup);

  c.optim.learning_rate = r.num("optim.learning_rate", c.optim.learning_rate);
  c.optim.beta1 = r.num("optim.beta1", c.optim.beta1);
  c.optim.beta2 = r.num("optim.beta2", c.optim.beta2);
  c.optim.weight_decay = r.num("optim.weight_decay", c.optim.weight_decay);

  c.seed = r.u64("seed", c.seed);
  c.data_manifest = r.str("data.manifest", c.data_manifest);
  c.run_dir = r.str("run.dir", c.run_dir);

  for (const auto& [key, value] : r.kv)
    if (!r.used.count(key)) throw ConfigError("config: unknown key '" + key + "'");
  c.validate();
  return c;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config_text(ss.str());
}

std::string serialize_run_config(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "# run configuration\n";
  os << "seed = " << c.seed << "\n";
  if (!c.data_manifest.empty()) os << "data.manifest = " << c.data_manifest << "\n";
  os << "run.dir = " << c.run_dir << "\n";
  os << "audio.sample_rate_hz = " << c.audio.sample_rate_hz << "\n";
  os << "audio.n_mel_bands = " << c.audio.n_mel_bands << "\n";
  os << "audio.fft_size = " << c.audio.fft_size << "\n";
  os << "audio.hop_length = " << c.audio.hop_length << "\n";
  os << "audio.window_length = " << c.audio.window_length << "\n";
  os << "audio.log_floor = " << c.audio.log_floor << "\n";
  os << "net.style_dim = " << c.net.style_dim << "\n";
  os << "net.base_width = " << c.net.base_width << "\n";
  os << "net.num_stages = " << c.net.num_stages << "\n";
  os << "net.decoder_width = " << c.net.decoder_width << "\n";
  os << "net.decoder_blocks = " << c.net.decoder_blocks << "\n";
  os << "net.f0_channels = " << c.net.f0_channels << "\n";
  os << "net.disc_width = " << c.net.disc_width << "\n";
  os << "net.f0_seed = " << c.net.f0_seed << "\n";
  os << "net.slm_seed = " << c.net.slm_seed << "\n";
  os << "loss.lambda_cls = " << c.loss.lambda_cls << "\n";
  os << "loss.lambda_advcls = " << c.loss.lambda_advcls << "\n";
  os << "loss.lambda_sty = " << c.loss.lambda_sty << "\n";
  os << "loss.lambda_f0 = " << c.loss.lambda_f0 << "\n";
  os << "loss.lambda_slm = " << c.loss.lambda_slm << "\n";
  os << "loss.lambda_norm = " << c.loss.lambda_norm << "\n";
  os << "loss.lambda_cyc = " << c.loss.lambda_cyc << "\n";
  os << "loss.bcr_weight = " << c.loss.bcr_weight << "\n";
  os << "loss.bcr_scale_min = " << c.loss.bcr_scale_min << "\n";
  os << "loss.bcr_scale_max = " << c.loss.bcr_scale_max << "\n";
  os << "loss.bcr_max_shift = " << c.loss.bcr_max_shift << "\n";
  os << "sched.total_epochs = " << c.sched.total_epochs << "\n";
  os << "sched.slm_d_start_epoch = " << c.sched.slm_d_start_epoch << "\n";
  os << "sched.bcr_start_epoch = " << c.sched.bcr_start_epoch << "\n";
  os << "sched.cls_start_epoch = " << c.sched.cls_start_epoch << "\n";
  os << "sched.batch_size = " << c.sched.batch_size << "\n";
  os << "sched.segment_seconds = " << c.sched.segment_seconds << "\n";
  os << "sched.steps_per_epoch = " << c.sched.steps_per_epoch << "\n";
  os << "sched.checkpoint_every = " << c.sched.checkpoint_every << "\n";
  os << "sched.mel_ce_after_warmup = " << (c.sched.mel_ce_after_warmup ? "true" : "false") << "\n";
  os << "optim.learning_rate = " << c.optim.learning_rate << "\n";
  os << "optim.beta1 = " << c.optim.beta1 << "\n";
  os << "optim.beta2 = " << c.optim.beta2 << "\n";
  os << "optim.weight_decay = " << c.optim.weight_decay << "\n";
  return os.str();
}

void write_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw ConfigError("config: cannot write " + path);
  os << serialize_run_config(cfg);
}

}  // namespace slmvc
