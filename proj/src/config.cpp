#include "eqmesh/config.hpp"

#include <fstream>
#include <sstream>

namespace eqmesh {

using nlohmann::json;

nlohmann::json default_config_json() { return config_to_json(RunConfig{}); }

json config_to_json(const RunConfig& c) {
  const auto& m = c.model;
  const auto& t = c.train;
  return {
      {"version", kVersion},
      {"seed", c.seed},
      {"out", c.out},
      {"checkpoint", c.checkpoint},
      {"image", c.image},
      {"model",
       {{"image_size", m.image_size},
        {"group_order", m.group_order},
        {"kernel_size", m.kernel_size},
        {"stem_fields", m.stem_fields},
        {"stem_stride", m.stem_stride},
        {"block_fields", m.block_fields},
        {"block_strides", m.block_strides},
        {"final_fields", m.final_fields},
        {"projection_hidden", m.projection_hidden},
        {"decoder_widths", m.decoder_widths},
        {"vertex_count", m.vertex_count},
        {"baseline", to_string(m.baseline)},
        {"mlp_hidden", m.mlp_hidden},
        {"output_scale", m.output_scale}}},
      {"train",
       {{"lambda_v", t.lambda_v},
        {"lambda_l", t.lambda_l},
        {"epochs", t.epochs},
        {"lr", t.lr},
        {"lr_decay", t.lr_decay},
        {"lr_decay_every", t.lr_decay_every},
        {"batch_size", t.batch_size},
        {"checkpoint_every", t.checkpoint_every},
        {"grad_clip", t.grad_clip}}},
      {"data",
       {{"dir", c.data.dir}, {"n_train", c.data.n_train}, {"n_val", c.data.n_val}, {"rotations", c.data.rotations}}},
      {"eval", {{"split", c.eval.split}, {"angles", c.eval.angles}, {"batch_size", c.eval.batch_size}}},
      {"audit", {{"angles", c.audit.angles}, {"batch_size", c.audit.batch_size}}},
  };
}

namespace {

const char* type_name(const json& v) {
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  return v.type_name();
}

bool compatible(const json& expected, const json& given) {
  if (expected.is_number_integer()) return given.is_number_integer();
  if (expected.is_number()) return given.is_number();
  return expected.type() == given.type();
}

}  // namespace

void merge_config(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config" + (path.empty() ? "" : " at '" + path + "'") + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + here + "'");
    auto& slot = base[key];
    if (slot.is_object()) {
      merge_config(slot, value, here);
    } else {
      if (!compatible(slot, value))
        throw ConfigError("config key '" + here + "' expects " + type_name(slot) + ", got " + type_name(value));
      slot = value;
    }
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t p; (p = rest.find('.')) != std::string::npos; rest = rest.substr(p + 1)) parts.push_back(rest.substr(0, p));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("override key '" + key + "' has an empty component");
    patch = json{{*it, patch}};
  }
  // A string-typed slot should accept text that happens to parse as JSON
  // (e.g. data.dir=123).
  const json* slot = &config;
  for (const auto& part : parts) {
    if (!slot->is_object() || !slot->contains(part)) break;
    slot = &(*slot)[part];
  }
  if (slot->is_string() && !value.is_string()) {
    json* target = &patch;
    for (const auto& part : parts) target = &(*target)[part];
    *target = text;
  }
  merge_config(config, patch);
}

RunConfig config_from_json(const json& j) {
  json full = default_config_json();
  merge_config(full, j);
  RunConfig c;
  try {
    c.seed = full["seed"].get<std::uint64_t>();
    c.out = full["out"].get<std::string>();
    c.checkpoint = full["checkpoint"].get<std::string>();
    c.image = full["image"].get<std::string>();
    const auto& m = full["model"];
    c.model.image_size = m["image_size"].get<int>();
    c.model.group_order = m["group_order"].get<int>();
    c.model.kernel_size = m["kernel_size"].get<int>();
    c.model.stem_fields = m["stem_fields"].get<int>();
    c.model.stem_stride = m["stem_stride"].get<int>();
    c.model.block_fields = m["block_fields"].get<std::vector<int>>();
    c.model.block_strides = m["block_strides"].get<std::vector<int>>();
    c.model.final_fields = m["final_fields"].get<int>();
    c.model.projection_hidden = m["projection_hidden"].get<int>();
    c.model.decoder_widths = m["decoder_widths"].get<std::vector<int>>();
    c.model.vertex_count = m["vertex_count"].get<int>();
    c.model.baseline = model_kind_from_string(m["baseline"].get<std::string>());
    c.model.mlp_hidden = m["mlp_hidden"].get<int>();
    c.model.output_scale = m["output_scale"].get<double>();
    const auto& t = full["train"];
    c.train.lambda_v = t["lambda_v"].get<double>();
    c.train.lambda_l = t["lambda_l"].get<double>();
    c.train.epochs = t["epochs"].get<int>();
    c.train.lr = t["lr"].get<double>();
    c.train.lr_decay = t["lr_decay"].get<double>();
    c.train.lr_decay_every = t["lr_decay_every"].get<int>();
    c.train.batch_size = t["batch_size"].get<int>();
    c.train.checkpoint_every = t["checkpoint_every"].get<int>();
    c.train.grad_clip = t["grad_clip"].get<double>();
    c.train.seed = c.seed;
    const auto& d = full["data"];
    c.data.dir = d["dir"].get<std::string>();
    c.data.n_train = d["n_train"].get<int>();
    c.data.n_val = d["n_val"].get<int>();
    c.data.rotations = d["rotations"].get<std::vector<int>>();
    const auto& e = full["eval"];
    c.eval.split = e["split"].get<std::string>();
    c.eval.angles = e["angles"].get<std::vector<int>>();
    c.eval.batch_size = e["batch_size"].get<int>();
    const auto& a = full["audit"];
    c.audit.angles = a["angles"].get<std::vector<int>>();
    c.audit.batch_size = a["batch_size"].get<int>();

    c.model.validate();
    c.train.validate();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  if (c.data.n_train < 1 || c.data.n_val < 1) throw ConfigError("data.n_train and data.n_val must be >= 1");
  for (int a : c.data.rotations)
    if (a % 90 != 0) throw ConfigError("data.rotations must be multiples of 90 degrees");
  for (int a : c.eval.angles)
    if (a % 90 != 0) throw ConfigError("eval.angles must be multiples of 90 degrees");
  if (c.eval.batch_size < 1 || c.audit.batch_size < 1) throw ConfigError("batch sizes must be >= 1");
  return c;
}

RunConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  json j = default_config_json();
  if (!file.empty()) {
    std::ifstream is(file);
    if (!is) throw ConfigError("cannot read config file " + file.string());
    std::stringstream ss;
    ss << is.rdbuf();
    json patch = json::parse(ss.str(), nullptr, false);
    if (patch.is_discarded()) throw ConfigError(file.string() + ": not valid JSON");
    merge_config(j, patch);
  }
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

void echo_config(const RunConfig& cfg, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << config_to_json(cfg).dump(2) << '\n';
  if (!os.flush()) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace eqmesh
