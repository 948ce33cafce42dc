#include "moeplan/config.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "moeplan/error.hpp"
#include "moeplan/json_io.hpp"

namespace moeplan {

namespace {

// 1-based line and column of a byte offset.
std::pair<int, int> locate(std::string_view text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

GpuSpec parse_gpu_entry(const json& j, std::size_t index) {
  const std::string path = fmt::format("hardware[{}]", index);
  if (j.is_string()) return builtin_catalog().at(j.get<std::string>());
  if (!j.is_object()) throw ConfigError(fmt::format("{}: expected a GPU name or object", path));
  if (!j.contains("name") || !j.at("name").is_string()) {
    throw ConfigError(fmt::format("{}.name: missing required key", path));
  }
  const std::string name = j.at("name").get<std::string>();
  GpuSpec g;
  const Catalog builtins = builtin_catalog();
  if (const GpuSpec* builtin = builtins.find(name)) {
    g = *builtin;
  } else {
    for (const char* key : {"price", "mem_capacity", "mem_bandwidth", "compute", "net_bandwidth",
                            "intra_bandwidth"}) {
      if (!j.contains(key)) {
        throw ConfigError(fmt::format("{}.{}: missing required key for non-builtin GPU '{}'", path, key, name));
      }
    }
  }
  read_gpu(j, g, path);
  try {
    g.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
  return g;
}

MoeModelSpec parse_model(const json& j) {
  if (j.is_string()) return builtin_model(j.get<std::string>());
  if (!j.is_object()) throw ConfigError("model: expected a model name or object");
  if (!j.contains("name") || !j.at("name").is_string()) throw ConfigError("model.name: missing required key");
  MoeModelSpec m;
  if (auto builtin = find_builtin_model(j.at("name").get<std::string>())) {
    m = *builtin;
  } else {
    for (const char* key : {"layers", "hidden", "intermediate", "experts", "topk"}) {
      if (!j.contains(key)) throw ConfigError(fmt::format("model.{}: missing required key", key));
    }
  }
  read_model(j, m, "model");
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("model: {}", e.what()));
  }
  return m;
}

}  // namespace

Config parse_config(std::string_view text, std::string_view origin) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto [line, col] = locate(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError(fmt::format("{}:{}:{}: malformed JSON ({})", origin, line, col, e.what()));
  }

  try {
    if (!doc.is_object()) throw ConfigError("top level: expected an object");
    for (const auto& [key, value] : doc.items()) {
      if (key != "hardware" && key != "model" && key != "workload" && key != "limits") {
        throw ConfigError(fmt::format("{}: unknown key", key));
      }
    }
    if (!doc.contains("model")) throw ConfigError("model: missing required key");

    Config c;
    if (doc.contains("hardware")) {
      const json& hw = doc.at("hardware");
      if (!hw.is_array() || hw.empty()) throw ConfigError("hardware: expected a non-empty array");
      std::vector<GpuSpec> gpus;
      for (std::size_t i = 0; i < hw.size(); ++i) gpus.push_back(parse_gpu_entry(hw[i], i));
      c.catalog = Catalog(std::move(gpus));
    }
    c.model = parse_model(doc.at("model"));
    if (doc.contains("workload")) {
      read_workload(doc.at("workload"), c.workload, "workload");
    }
    c.workload.validate();
    if (doc.contains("limits")) read_limits(doc.at("limits"), c.limits, "limits");
    c.limits.validate();
    return c;
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", origin, e.what()));
  }
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::string dump_config(const Config& config, int indent) {
  json hw = json::array();
  for (const auto& g : config.catalog) hw.push_back(g);
  const json doc{{"hardware", hw}, {"model", config.model}, {"workload", config.workload}, {"limits", config.limits}};
  return doc.dump(indent);
}

}  // namespace moeplan
