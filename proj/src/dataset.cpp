#include "slmvc/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "slmvc/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace slmvc {

std::vector<std::string> DatasetManifest::seen_roster() const {
  std::vector<std::string> roster;
  for (const auto& s : speakers)
    if (s.seen) roster.push_back(s.name);
  return roster;
}

int64_t DatasetManifest::count_train_utterances() const {
  int64_t n = 0;
  for (const auto& s : speakers)
    if (s.seen)
      for (const auto& u : s.utterances)
        if (!u.val) ++n;
  return n;
}

DatasetManifest ingest(const std::string& root_dir, uint64_t seed, double unseen_fraction) {
  if (unseen_fraction < 0 || unseen_fraction >= 1)
    throw std::invalid_argument("ingest: unseen_fraction must lie in [0,1)");
  if (!fs::is_directory(root_dir)) throw ConfigError("ingest: not a directory: " + root_dir);

  std::vector<std::string> speaker_dirs;
  for (const auto& e : fs::directory_iterator(root_dir))
    if (e.is_directory()) speaker_dirs.push_back(e.path().filename().string());
  std::sort(speaker_dirs.begin(), speaker_dirs.end());

  DatasetManifest m;
  m.seed = seed;
  m.unseen_fraction = unseen_fraction;

  std::vector<DatasetManifest::Speaker> speakers;
  for (const auto& name : speaker_dirs) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(fs::path(root_dir) / name)) {
      if (!e.is_regular_file()) continue;
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      if (ext == ".wav") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      warn("ingest: speaker directory '" + name + "' has no wav files, skipping");
      continue;
    }
    DatasetManifest::Speaker spk;
    spk.name = name;
    for (const auto& f : files) {
      read_wav(f).validate();  // reject broken audio up front
      spk.utterances.push_back({f, false});
    }
    speakers.push_back(std::move(spk));
  }

  const int total = static_cast<int>(speakers.size());
  const int n_unseen = static_cast<int>(std::lround(total * unseen_fraction));
  if (total - n_unseen < 2)
    throw ConfigError("ingest: need at least 2 seen speakers, have " +
                      std::to_string(total - n_unseen));

  // deterministic speaker shuffle, tail becomes unseen
  std::mt19937_64 rng(mix_seed(seed, 0x5EEDu));
  std::vector<int> order(speakers.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 0; i < n_unseen; ++i)
    speakers[static_cast<size_t>(order[static_cast<size_t>(i)])].seen = false;

  // per seen speaker: 90/10 utterance split
  for (auto& spk : speakers) {
    if (!spk.seen) continue;
    const int n = static_cast<int>(spk.utterances.size());
    if (n < 2) continue;  // single utterance stays in train
    int n_val = static_cast<int>(std::lround(n * 0.1));
    n_val = std::clamp(n_val, 1, n - 1);
    std::vector<int> idx(spk.utterances.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::mt19937_64 srng(mix_seed(seed, fnv1a64(spk.name.data(), spk.name.size())));
    std::shuffle(idx.begin(), idx.end(), srng);
    for (int i = 0; i < n_val; ++i)
      spk.utterances[static_cast<size_t>(idx[static_cast<size_t>(i)])].val = true;
  }

  m.speakers = std::move(speakers);
  return m;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  json j;
  j["seed"] = m.seed;
  j["unseen_fraction"] = m.unseen_fraction;
  j["sample_rate_hz"] = m.sample_rate_hz;
  j["speakers"] = json::array();
  for (const auto& s : m.speakers) {
    json spk;
    spk["name"] = s.name;
    spk["seen"] = s.seen;
    spk["utterances"] = json::array();
    for (const auto& u : s.utterances)
      spk["utterances"].push_back({{"path", u.path}, {"split", u.val ? "val" : "train"}});
    j["speakers"].push_back(std::move(spk));
  }
  std::ofstream os(path);
  if (!os) throw ConfigError("write_manifest: cannot open " + path);
  os << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("read_manifest: cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("read_manifest: bad JSON in " + path + ": " + e.what());
  }
  DatasetManifest m;
  m.seed = j.at("seed").get<uint64_t>();
  m.unseen_fraction = j.at("unseen_fraction").get<double>();
  m.sample_rate_hz = j.at("sample_rate_hz").get<int>();
  for (const auto& spk : j.at("speakers")) {
    DatasetManifest::Speaker s;
    s.name = spk.at("name").get<std::string>();
    s.seen = spk.at("seen").get<bool>();
    for (const auto& u : spk.at("utterances"))
      s.utterances.push_back(
          {u.at("path").get<std::string>(), u.at("split").get<std::string>() == "val"});
    m.speakers.push_back(std::move(s));
  }
  return m;
}

LoadedDataset LoadedDataset::load(const DatasetManifest& m, int target_rate_hz) {
  LoadedDataset d;
  d.rate = target_rate_hz;
  d.roster = m.seen_roster();
  if (d.roster.size() < 2) throw ConfigError("dataset: need at least 2 seen speakers");
  d.train_by_speaker.resize(d.roster.size());
  for (const auto& spk : m.speakers) {
    if (!spk.seen) continue;
    const int sp = static_cast<int>(
        std::find(d.roster.begin(), d.roster.end(), spk.name) - d.roster.begin());
    for (const auto& u : spk.utterances) {
      Waveform w = resample(read_wav(u.path), target_rate_hz);
      Utterance utt{sp, u.path, std::move(w.samples)};
      if (u.val) {
        d.val.push_back(std::move(utt));
      } else {
        d.train_by_speaker[static_cast<size_t>(sp)].push_back(static_cast<int>(d.train.size()));
        d.train.push_back(std::move(utt));
      }
    }
  }
  for (size_t sp = 0; sp < d.train_by_speaker.size(); ++sp)
    if (d.train_by_speaker[sp].empty())
      throw ConfigError("dataset: seen speaker '" + d.roster[sp] + "' has no training utterances");
  return d;
}

}  // namespace slmvc
