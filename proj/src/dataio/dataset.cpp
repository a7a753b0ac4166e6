#include "daest/dataio/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "daest/error.hpp"
#include "daest/ndcore/parallel.hpp"
#include "daest/ndcore/snapshot.hpp"

namespace daest::io {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "f32 trial files assume a little-endian host");

void validate(const DatasetManifest& m) {
  if (m.channels.empty()) throw ConfigError("manifest: no channels");
  if (!(m.fs > 0.0)) throw ConfigError("manifest: fs must be positive");
  if (m.class_map.size() < 2) throw ConfigError("manifest: need at least two classes");
  std::map<int, int> stimulus_label;
  for (const SubjectEntry& s : m.subjects) {
    for (const TrialEntry& t : s.trials) {
      if (t.label < 0 || static_cast<std::size_t>(t.label) >= m.class_map.size()) {
        throw ConfigError("manifest: subject " + s.id + " has label " + std::to_string(t.label) +
                          " outside the class map");
      }
      if (t.length == 0) throw ConfigError("manifest: subject " + s.id + " has an empty trial");
      auto [it, inserted] = stimulus_label.emplace(t.stimulus_id, t.label);
      if (!inserted && it->second != t.label) {
        throw ConfigError("manifest: stimulus " + std::to_string(t.stimulus_id) +
                          " carries different labels across subjects");
      }
    }
  }
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["dvers"] = kManifestVersion;
  j["name"] = m.name;
  j["fs"] = m.fs;
  j["channels"] = m.channels;
  j["class_map"] = m.class_map;
  json subjects = json::array();
  for (const SubjectEntry& s : m.subjects) {
    json trials = json::array();
    for (const TrialEntry& t : s.trials) {
      trials.push_back({{"label", t.label},
                        {"stimulus_id", t.stimulus_id},
                        {"file", t.file},
                        {"offset", t.offset},
                        {"length", t.length}});
    }
    subjects.push_back({{"id", s.id}, {"trials", std::move(trials)}});
  }
  j["subjects"] = std::move(subjects);
  return j.dump(2);
}

DatasetManifest manifest_from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    const int version = j.at("dvers").get<int>();
    if (version != kManifestVersion) {
      throw FormatError("manifest: unsupported dvers " + std::to_string(version));
    }
    m.name = j.at("name").get<std::string>();
    m.fs = j.at("fs").get<double>();
    m.channels = j.at("channels").get<std::vector<std::string>>();
    m.class_map = j.at("class_map").get<std::vector<std::string>>();
    for (const json& s : j.at("subjects")) {
      SubjectEntry se;
      se.id = s.at("id").get<std::string>();
      for (const json& t : s.at("trials")) {
        se.trials.push_back(TrialEntry{t.at("label").get<int>(), t.at("stimulus_id").get<int>(),
                                       t.at("file").get<std::string>(),
                                       t.at("offset").get<std::size_t>(),
                                       t.at("length").get<std::size_t>()});
      }
      m.subjects.push_back(std::move(se));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  validate(m);
  return m;
}

DatasetManifest read_manifest(const fs::path& path) {
  return manifest_from_json(nd::read_file(path));
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  nd::write_file(path, manifest_to_json(m));
}

nd::Tensor read_f32_matrix(const fs::path& path, std::size_t rows) {
  const std::string bytes = nd::read_file(path);
  if (rows == 0 || bytes.size() % (4 * rows) != 0) {
    throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) +
                      " is not a whole number of " + std::to_string(rows) + "-channel float32 columns");
  }
  const std::size_t columns = bytes.size() / (4 * rows);
  nd::Tensor x(nd::Shape{rows, columns});
  for (std::size_t i = 0; i < x.size(); ++i) {
    float v;
    std::memcpy(&v, bytes.data() + 4 * i, 4);
    x[i] = v;
  }
  return x;
}

void write_f32_matrix(const fs::path& path, const nd::Tensor& x) {
  std::string bytes(4 * x.size(), '\0');
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto v = static_cast<float>(x[i]);
    std::memcpy(bytes.data() + 4 * i, &v, 4);
  }
  nd::write_file(path, bytes);
}

Dataset load_dataset(const fs::path& manifest_path) {
  const DatasetManifest m = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  Dataset d{m.name, m.fs, m.channels, m.class_map, {}};

  struct Job {
    std::size_t subject, trial;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < m.subjects.size(); ++s) {
    d.subjects.push_back(Subject{m.subjects[s].id, std::vector<Trial>(m.subjects[s].trials.size())});
    for (std::size_t t = 0; t < m.subjects[s].trials.size(); ++t) jobs.push_back({s, t});
  }
  const std::size_t rows = m.channel_count();
  nd::parallel_for(jobs.size(), [&](std::size_t i) {
    const TrialEntry& e = m.subjects[jobs[i].subject].trials[jobs[i].trial];
    const nd::Tensor whole = read_f32_matrix(base / e.file, rows);
    if (e.offset + e.length > whole.extent(1)) {
      throw FormatError(e.file + ": declared columns [" + std::to_string(e.offset) + ", " +
                        std::to_string(e.offset + e.length) + ") exceed file length " +
                        std::to_string(whole.extent(1)));
    }
    nd::Tensor signal(nd::Shape{rows, e.length});
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(whole.row(r).begin() + static_cast<std::ptrdiff_t>(e.offset), e.length,
                  signal.row(r).begin());
    }
    d.subjects[jobs[i].subject].trials[jobs[i].trial] = Trial{e.label, e.stimulus_id, std::move(signal)};
  });
  return d;
}

void save_dataset(const fs::path& dir, const Dataset& d) {
  fs::create_directories(dir / "data");
  DatasetManifest m{d.name, d.fs, d.channels, d.class_map, {}};
  for (const Subject& s : d.subjects) {
    SubjectEntry se{s.id, {}};
    for (std::size_t t = 0; t < s.trials.size(); ++t) {
      const Trial& tr = s.trials[t];
      if (tr.signal.rank() != 2 || tr.signal.extent(0) != d.channel_count()) {
        throw DimensionError("save_dataset: trial of subject " + s.id + " has shape " +
                             nd::to_string(tr.signal.shape()));
      }
      const std::string file = "data/" + s.id + "_t" + std::to_string(t) + ".f32";
      write_f32_matrix(dir / file, tr.signal);
      se.trials.push_back(TrialEntry{tr.label, tr.stimulus_id, file, 0, tr.signal.extent(1)});
    }
    m.subjects.push_back(std::move(se));
  }
  validate(m);
  write_manifest(dir / "manifest.json", m);
}

DatasetManifest convert_directory(const fs::path& root, double fs, std::size_t channels,
                                  const std::vector<std::string>& class_map) {
  std::ifstream labels(root / "labels.csv");
  if (!labels) throw IoError("convert: cannot open " + (root / "labels.csv").string());
  std::map<int, int> stimulus_label;
  std::string line;
  while (std::getline(labels, line)) {
    if (line.empty() || line.starts_with("stimulus")) continue;
    std::istringstream row(line);
    std::string sid, lab;
    if (!std::getline(row, sid, ',') || !std::getline(row, lab, ',')) {
      throw FormatError("convert: bad labels.csv line '" + line + "'");
    }
    try {
      stimulus_label[std::stoi(sid)] = std::stoi(lab);
    } catch (const std::exception&) {
      throw FormatError("convert: bad labels.csv line '" + line + "'");
    }
  }

  DatasetManifest m;
  m.name = root.filename().string();
  m.fs = fs;
  for (std::size_t c = 0; c < channels; ++c) m.channels.push_back("ch" + std::to_string(c));
  m.class_map = class_map;

  std::vector<fs::path> subject_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) subject_dirs.push_back(entry.path());
  }
  std::sort(subject_dirs.begin(), subject_dirs.end());
  for (const fs::path& sd : subject_dirs) {
    SubjectEntry se{sd.filename().string(), {}};
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(sd)) {
      if (entry.is_regular_file() && entry.path().extension() == ".f32") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
      int sid = 0;
      try {
        sid = std::stoi(f.stem().string());
      } catch (const std::exception&) {
        throw FormatError("convert: trial file name " + f.string() + " is not a stimulus id");
      }
      const auto it = stimulus_label.find(sid);
      if (it == stimulus_label.end()) {
        throw FormatError("convert: stimulus " + std::to_string(sid) + " missing from labels.csv");
      }
      const auto bytes = fs::file_size(f);
      if (bytes % (4 * channels) != 0) {
        throw FormatError("convert: " + f.string() + " is not a whole number of columns");
      }
      se.trials.push_back(TrialEntry{it->second, sid, fs::relative(f, root).generic_string(), 0,
                                     static_cast<std::size_t>(bytes / (4 * channels))});
    }
    if (!se.trials.empty()) m.subjects.push_back(std::move(se));
  }
  validate(m);
  return m;
}

}  // namespace daest::io
