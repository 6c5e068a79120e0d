#pragma once

// Run manifests: what was run, on which inputs (by SHA-256), and with what result.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <string>
#include <string_view>

#include <json.hpp>
#include <openssl/evp.h>

#include "fdti/text.hpp"

namespace fdti {

inline constexpr std::string_view kToolVersion = "0.1.0";

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int k = 0; k < len; ++k) {
    std::snprintf(buf, sizeof buf, "%02x", digest[k]);
    hex += buf;
  }
  return hex;
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

class RunManifest {
public:
  explicit RunManifest(std::string command)
      : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["tool_version"] = std::string(kToolVersion);
    doc_["inputs"] = nlohmann::json::object();
    doc_["outputs"] = nlohmann::json::object();
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    doc_["started_utc"] = stamp;
  }

  void input(const std::string& path) { doc_["inputs"][path] = sha256_file(path); }
  void output(const std::string& path) { doc_["outputs"][path] = sha256_file(path); }
  nlohmann::json& operator[](const std::string& key) { return doc_[key]; }

  void write(const std::string& path) {
    const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start_;
    doc_["wall_clock_s"] = wall.count();
    write_file(path, doc_.dump(2) + "\n");
  }

private:
  nlohmann::json doc_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace fdti
