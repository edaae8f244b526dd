#include "manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "disp/error.hpp"
#include "disp/random.hpp"

namespace disp::cli {
namespace {

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string hash_text(const std::string& text) { return hex(fnv1a64(text)); }

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return hash_text(ss.str());
}

void write_manifest(const Manifest& m) {
  if (m.outputs.empty()) return;
  nlohmann::ordered_json j;
  j["tool"] = "disp";
  j["version"] = DISP_VERSION;
  j["subcommand"] = m.subcommand;
  j["config_hash"] = hash_text(m.config_json);
  j["config"] = nlohmann::ordered_json::parse(m.config_json);
  j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& p : m.inputs) j["inputs"].push_back({{"path", p.string()}, {"fnv1a64", hash_file(p)}});
  j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& p : m.outputs) {
    if (std::filesystem::is_directory(p)) continue;
    j["outputs"].push_back({{"path", p.string()}, {"fnv1a64", hash_file(p)}});
  }
  const auto& first = m.outputs.front();
  const auto target = std::filesystem::is_directory(first) ? first / "manifest.json"
                                                           : std::filesystem::path(first.string() + ".manifest.json");
  std::ofstream(target) << j.dump(2) << '\n';
}

}  // namespace disp::cli
