#include "daest/app/config.hpp"

#include <set>

#include "json.hpp"

#include "daest/bundle/bundle.hpp"
#include "daest/error.hpp"
#include "daest/ndcore/snapshot.hpp"

namespace daest::app {
namespace {

using json = nlohmann::json;

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json geometry_json(const encoder::Geometry& g) { return json::parse(bundle::geometry_to_json(g)); }

}  // namespace

void RunConfig::validate() const {
  geometry.validate();
  pretrain.validate();
  classifier.validate();
  if (cv.mode != "auto" && cv.mode != "loso" && cv.mode != "kfold") {
    throw ConfigError("cv.mode must be auto, loso or kfold");
  }
  if (cv.folds < 2) throw ConfigError("cv.folds must be >= 2");
  if (parallel_folds < 1) throw ConfigError("parallel_folds must be >= 1");
  if (!(features.lds.q >= 0.0) || !(features.lds.r > 0.0)) throw ConfigError("features: need lds_q >= 0 and lds_r > 0");
  for (int v : label_map) {
    if (v < -1) throw ConfigError("label_map entries must be >= -1");
    if (v >= 0 && static_cast<std::size_t>(v) >= class_map.size()) {
      throw ConfigError("label_map points past class_map");
    }
  }
  if (!label_map.empty() && class_map.empty()) throw ConfigError("label_map needs class_map");
}

RunConfig config_from_json(const std::string& text) {
  RunConfig c;
  try {
    const json j = json::parse(text);
    only_keys(j, "config",
              {"dataset", "task", "label_map", "class_map", "geometry", "pretrain", "skip_pretrain", "classifier",
               "features", "cv", "seed", "output_dir", "shuffle_labels", "parallel_folds", "threads"});
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
    read(j, "task", c.task);
    read(j, "label_map", c.label_map);
    read(j, "class_map", c.class_map);
    if (j.contains("geometry")) {
      const json& g = j.at("geometry");
      only_keys(g, "geometry", {"M", "T", "K1", "L1", "K2", "L2", "dilations", "L3", "activation", "fs"});
      json merged = geometry_json(c.geometry);
      merged.update(g);
      if (g.contains("K1") || g.contains("K2")) {
        if (!g.contains("dilations")) {
          // Keep the dilation values, re-split K evenly.
          std::vector<std::size_t> ds;
          for (const auto& d : c.geometry.dilations) ds.push_back(d.dilation);
          const std::size_t K = merged.at("K1").get<std::size_t>() * merged.at("K2").get<std::size_t>();
          json sets = json::array();
          for (const auto& d : encoder::Geometry::even_sets(K, ds)) {
            sets.push_back({{"dilation", d.dilation}, {"count", d.count}});
          }
          merged["dilations"] = sets;
        }
      }
      c.geometry = bundle::geometry_from_json(merged.dump());
    }
    if (j.contains("pretrain")) {
      const json& p = j.at("pretrain");
      only_keys(p, "pretrain",
                {"lr", "weight_decay", "epochs", "patience", "temperature", "projector_pool", "projector_kernel",
                 "pairs_per_epoch", "val_fraction", "val_draws", "diagnostics_dir"});
      read(p, "lr", c.pretrain.lr);
      read(p, "weight_decay", c.pretrain.weight_decay);
      read(p, "epochs", c.pretrain.epochs);
      read(p, "patience", c.pretrain.patience);
      read(p, "temperature", c.pretrain.temperature);
      read(p, "projector_pool", c.pretrain.projector_pool);
      read(p, "projector_kernel", c.pretrain.projector_kernel);
      read(p, "pairs_per_epoch", c.pretrain.pairs_per_epoch);
      read(p, "val_fraction", c.pretrain.val_fraction);
      read(p, "val_draws", c.pretrain.val_draws);
      if (p.contains("diagnostics_dir")) c.pretrain.diagnostics_dir = p.at("diagnostics_dir").get<std::string>();
    }
    read(j, "skip_pretrain", c.skip_pretrain);
    if (j.contains("classifier")) {
      const json& p = j.at("classifier");
      only_keys(p, "classifier", {"lr", "wd_grid", "epochs", "patience", "batch_size", "inner_folds"});
      read(p, "lr", c.classifier.lr);
      read(p, "wd_grid", c.classifier.wd_grid);
      read(p, "epochs", c.classifier.epochs);
      read(p, "patience", c.classifier.patience);
      read(p, "batch_size", c.classifier.batch_size);
      read(p, "inner_folds", c.classifier.inner_folds);
    }
    if (j.contains("features")) {
      const json& p = j.at("features");
      only_keys(p, "features", {"norm", "smooth", "lds_q", "lds_r"});
      if (p.contains("norm")) {
        const std::string n = p.at("norm");
        if (n == "cumulative_zscore") {
          c.features.norm = classify::NormStrategy::cumulative_zscore;
        } else if (n == "none") {
          c.features.norm = classify::NormStrategy::none;
        } else {
          throw ConfigError("features.norm must be cumulative_zscore or none");
        }
      }
      read(p, "smooth", c.features.smooth);
      read(p, "lds_q", c.features.lds.q);
      read(p, "lds_r", c.features.lds.r);
    }
    if (j.contains("cv")) {
      const json& p = j.at("cv");
      only_keys(p, "cv", {"mode", "folds"});
      read(p, "mode", c.cv.mode);
      read(p, "folds", c.cv.folds);
    }
    read(j, "seed", c.seed);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    read(j, "shuffle_labels", c.shuffle_labels);
    read(j, "parallel_folds", c.parallel_folds);
    read(j, "threads", c.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_to_json(const RunConfig& c) {
  const json j = {
      {"dataset", c.dataset.string()},
      {"task", c.task},
      {"label_map", c.label_map},
      {"class_map", c.class_map},
      {"geometry", geometry_json(c.geometry)},
      {"pretrain",
       {{"lr", c.pretrain.lr},
        {"weight_decay", c.pretrain.weight_decay},
        {"epochs", c.pretrain.epochs},
        {"patience", c.pretrain.patience},
        {"temperature", c.pretrain.temperature},
        {"projector_pool", c.pretrain.projector_pool},
        {"projector_kernel", c.pretrain.projector_kernel},
        {"pairs_per_epoch", c.pretrain.pairs_per_epoch},
        {"val_fraction", c.pretrain.val_fraction},
        {"val_draws", c.pretrain.val_draws},
        {"diagnostics_dir", c.pretrain.diagnostics_dir.string()}}},
      {"skip_pretrain", c.skip_pretrain},
      {"classifier",
       {{"lr", c.classifier.lr},
        {"wd_grid", c.classifier.wd_grid},
        {"epochs", c.classifier.epochs},
        {"patience", c.classifier.patience},
        {"batch_size", c.classifier.batch_size},
        {"inner_folds", c.classifier.inner_folds}}},
      {"features",
       {{"norm", c.features.norm == classify::NormStrategy::none ? "none" : "cumulative_zscore"},
        {"smooth", c.features.smooth},
        {"lds_q", c.features.lds.q},
        {"lds_r", c.features.lds.r}}},
      {"cv", {{"mode", c.cv.mode}, {"folds", c.cv.folds}}},
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"shuffle_labels", c.shuffle_labels},
      {"parallel_folds", c.parallel_folds},
      {"threads", c.threads}};
  return j.dump(2);
}

std::string apply_override(const std::string& json_text, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json j;
  try {
    j = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty key segment");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) throw ConfigError("override '" + assignment + "' descends into a non-object");
    start = dot + 1;
  }
  return j.dump(2);
}

std::string config_hash(const RunConfig& c) {
  json j = json::parse(config_to_json(c));
  for (const char* key : {"output_dir", "threads", "parallel_folds"}) j.erase(key);
  j["pretrain"].erase("diagnostics_dir");
  return bundle::digest(j.dump());
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::string text = path.empty() ? std::string("{}") : nd::read_file(path);
  for (const auto& o : overrides) text = apply_override(text, o);
  return config_from_json(text);
}

}  // namespace daest::app
