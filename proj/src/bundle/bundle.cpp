#include "daest/bundle/bundle.hpp"

#include <cstdio>

#include "json.hpp"

#include "daest/error.hpp"

namespace daest::bundle {
namespace {

using json = nlohmann::json;

json geometry_json(const encoder::Geometry& g) {
  json sets = json::array();
  for (const auto& d : g.dilations) sets.push_back({{"dilation", d.dilation}, {"count", d.count}});
  return {{"M", g.M},   {"T", g.T},   {"K1", g.K1},         {"L1", g.L1},
          {"K2", g.K2}, {"L2", g.L2}, {"dilations", sets}, {"L3", g.L3},
          {"activation", std::string(encoder::to_string(g.activation))}, {"fs", g.fs}};
}

encoder::Geometry geometry_of(const json& j) {
  encoder::Geometry g;
  g.M = j.value("M", g.M);
  g.T = j.value("T", g.T);
  g.K1 = j.value("K1", g.K1);
  g.L1 = j.value("L1", g.L1);
  g.K2 = j.value("K2", g.K2);
  g.L2 = j.value("L2", g.L2);
  if (j.contains("dilations")) {
    g.dilations.clear();
    for (const auto& d : j.at("dilations")) g.dilations.push_back({d.at("dilation"), d.at("count")});
  }
  g.L3 = j.value("L3", g.L3);
  if (j.contains("activation")) g.activation = encoder::activation_from_string(j.at("activation").get<std::string>());
  g.fs = j.value("fs", g.fs);
  g.validate();
  return g;
}

const char* norm_name(classify::NormStrategy s) {
  return s == classify::NormStrategy::none ? "none" : "cumulative_zscore";
}

classify::NormStrategy norm_from(const std::string& s) {
  if (s == "none") return classify::NormStrategy::none;
  if (s == "cumulative_zscore") return classify::NormStrategy::cumulative_zscore;
  throw FormatError("bundle: unknown normalization '" + s + "'");
}

json header_json(const ModelBundle& b) {
  json h = {{"format", "daest-bundle"},
            {"version", kBundleVersion},
            {"geometry", geometry_json(b.geometry)},
            {"class_map", b.class_map},
            {"features",
             {{"norm", norm_name(b.norm_strategy)},
              {"epsilon", b.norm.epsilon},
              {"norm_count", b.norm.count},
              {"smooth", b.smooth},
              {"lds_q", b.lds.q},
              {"lds_r", b.lds.r}}},
            {"config_hash", b.config_hash},
            {"log_digest", b.log_digest},
            {"parameters",
             {{"encoder", b.encoder_parameters()},
              {"projector", b.projector_parameters()},
              {"classifier", b.classifier_parameters()},
              {"total", b.total_parameters()}}}};
  h["projector"] = nullptr;
  if (b.projector) {
    const auto& pg = *b.projector_geometry;
    h["projector"] = {{"pool", pg.pool}, {"kernel", pg.kernel}, {"groups", pg.groups}};
  }
  h["classifier"] = nullptr;
  if (b.classifier) h["classifier"] = {{"features", b.classifier->inputs()}, {"classes", b.classifier->classes()}};
  return h;
}

}  // namespace

std::size_t ModelBundle::total_parameters() const {
  return encoder_parameters() + projector_parameters() + classifier_parameters();
}

std::string geometry_to_json(const encoder::Geometry& g) { return geometry_json(g).dump(2); }

encoder::Geometry geometry_from_json(const std::string& text) {
  try {
    return geometry_of(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("geometry: ") + e.what());
  }
}

std::string encode(const ModelBundle& b, nd::Dtype dtype) {
  b.encoder.check(b.geometry);
  if (b.projector.has_value() != b.projector_geometry.has_value()) {
    throw ConfigError("bundle: projector weights and geometry must come together");
  }
  if (b.classifier && b.classifier->inputs() != b.geometry.K()) {
    throw DimensionError("bundle: classifier input width differs from K");
  }
  nd::Container c;
  c.header = header_json(b).dump();
  c.sections = {{"encoder.w_temp1", b.encoder.w_temp1},
                {"encoder.w_spat", b.encoder.w_spat},
                {"encoder.w_temp2", b.encoder.w_temp2},
                {"encoder.beta", b.encoder.beta}};
  if (b.projector) {
    c.sections.push_back({"projector.conv1", b.projector->conv1});
    c.sections.push_back({"projector.conv2", b.projector->conv2});
  }
  if (b.classifier) {
    const auto& p = *b.classifier;
    for (const auto& [name, t] : {std::pair<const char*, const nd::Tensor*>{"w1", &p.w1}, {"b1", &p.b1},
                                  {"w2", &p.w2}, {"b2", &p.b2}, {"w3", &p.w3}, {"b3", &p.b3}}) {
      c.sections.push_back({std::string("classifier.") + name, *t});
    }
  }
  if (!b.norm.mean.empty()) {
    c.sections.push_back({"norm.mean", nd::Tensor(nd::Shape{b.norm.mean.size()}, b.norm.mean)});
    c.sections.push_back({"norm.m2", nd::Tensor(nd::Shape{b.norm.m2.size()}, b.norm.m2)});
  }
  return nd::encode_container(c, dtype);
}

ModelBundle decode(std::string_view bytes) {
  const nd::Container c = nd::decode_container(bytes);
  ModelBundle b;
  try {
    const json h = json::parse(c.header);
    if (h.value("format", std::string()) != "daest-bundle") throw FormatError("bundle: not a model bundle");
    const int version = h.at("version");
    if (version != kBundleVersion) {
      throw FormatError("bundle: version " + std::to_string(version) + " unsupported (expected " +
                        std::to_string(kBundleVersion) + ")");
    }
    b.geometry = geometry_of(h.at("geometry"));
    b.class_map = h.at("class_map").get<std::vector<std::string>>();
    const json& f = h.at("features");
    b.norm_strategy = norm_from(f.at("norm"));
    b.norm.epsilon = f.at("epsilon");
    b.norm.count = f.at("norm_count");
    b.smooth = f.at("smooth");
    b.lds.q = f.at("lds_q");
    b.lds.r = f.at("lds_r");
    b.config_hash = h.at("config_hash");
    b.log_digest = h.at("log_digest");
    b.encoder.w_temp1 = c.get("encoder.w_temp1");
    b.encoder.w_spat = c.get("encoder.w_spat");
    b.encoder.w_temp2 = c.get("encoder.w_temp2");
    b.encoder.beta = c.get("encoder.beta");
    b.encoder.check(b.geometry);
    if (!h.at("projector").is_null()) {
      const json& pj = h.at("projector");
      b.projector_geometry = pretrain::ProjectorGeometry{pj.at("pool"), pj.at("kernel"), pj.at("groups")};
      b.projector = pretrain::ProjectorParams{c.get("projector.conv1"), c.get("projector.conv2")};
    }
    if (!h.at("classifier").is_null()) {
      b.classifier = classify::ClassifierParams{c.get("classifier.w1"), c.get("classifier.b1"),
                                                c.get("classifier.w2"), c.get("classifier.b2"),
                                                c.get("classifier.w3"), c.get("classifier.b3")};
      if (b.classifier->inputs() != h.at("classifier").at("features").get<std::size_t>() ||
          b.classifier->classes() != h.at("classifier").at("classes").get<std::size_t>()) {
        throw FormatError("bundle: classifier shape disagrees with header");
      }
    }
    if (const nd::Tensor* m = c.find("norm.mean")) {
      b.norm.mean.assign(m->values().begin(), m->values().end());
      const nd::Tensor& m2 = c.get("norm.m2");
      b.norm.m2.assign(m2.values().begin(), m2.values().end());
    }
    const json& counts = h.at("parameters");
    if (counts.at("total").get<std::size_t>() != b.total_parameters() ||
        counts.at("encoder").get<std::size_t>() != b.encoder_parameters()) {
      throw FormatError("bundle: parameter count disagrees with header");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bundle: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("bundle: ") + e.what());
  }
  return b;
}

void save(const ModelBundle& b, const std::filesystem::path& path, nd::Dtype dtype) {
  nd::write_file(path, encode(b, dtype));
}

ModelBundle load(const std::filesystem::path& path) { return decode(nd::read_file(path)); }

std::string metadata_json(const ModelBundle& b) { return header_json(b).dump(2); }

std::string digest(std::string_view bytes) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", nd::crc32(bytes));
  return buf;
}

}  // namespace daest::bundle
