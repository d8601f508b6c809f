#pragma once

// Run manifest: command, resolved parameters, seed, file digests, timestamp
// and version. Stored as JSON.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"
#include "peerbench/error.hpp"

#ifndef PEERBENCH_VERSION
#define PEERBENCH_VERSION "0.0.0"
#endif

namespace peerbench {

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  std::string version = PEERBENCH_VERSION;
  std::map<std::string, std::string> parameters;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path relative to the output directory -> sha256
  std::string created_utc;

  nlohmann::json to_json() const {
    return {{"command", command}, {"version", version},   {"parameters", parameters}, {"seed", seed},
            {"inputs", inputs},   {"outputs", outputs},   {"created_utc", created_utc}};
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    try {
      m.command = j.at("command").get<std::string>();
      m.version = j.value("version", std::string{});
      m.parameters = j.at("parameters").get<std::map<std::string, std::string>>();
      m.seed = j.at("seed").get<std::uint64_t>();
      m.inputs = j.value("inputs", std::map<std::string, std::string>{});
      m.outputs = j.value("outputs", std::map<std::string, std::string>{});
      m.created_utc = j.value("created_utc", std::string{});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(0, std::string("manifest: ") + e.what());
    }
    return m;
  }

  void add_input(const std::filesystem::path& path) { inputs[path.string()] = file_sha256(path); }

  void add_output(const std::filesystem::path& dir, const std::string& relative) {
    outputs[relative] = file_sha256(dir / relative);
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write '" + path.string() + "'");
    out << to_json().dump(2) << '\n';
  }

  static RunManifest read(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(0, "manifest '" + path.string() + "': " + e.what());
    }
    return from_json(j);
  }

  // Output paths whose current digest differs from the recorded one.
  std::vector<std::string> mismatched_outputs(const std::filesystem::path& dir) const {
    std::vector<std::string> bad;
    for (const auto& [rel, digest] : outputs) {
      const auto p = dir / rel;
      if (!std::filesystem::exists(p) || file_sha256(p) != digest) bad.push_back(rel);
    }
    return bad;
  }
};

}  // namespace peerbench
