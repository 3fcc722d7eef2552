#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace retain::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitInternal = 2;
inline constexpr int kExitUsage = 64;

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
// Throws IoError when the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

struct FileDigest {
  std::string path;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string subcommand;
  nlohmann::json parameters = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string started_at;
  std::string finished_at;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

// ISO-8601 UTC, second resolution.
std::string utc_timestamp();

// Flat "key = value" lines; '#' starts a comment line. Keys may carry a
// leading "--". Throws InputError on a malformed line or a repeated key.
std::map<std::string, std::string> read_config(const std::filesystem::path& path);

// Expands "--config FILE" into "--key=value" tokens placed right after the
// subcommand, ahead of the explicit flags, so that flags win. When neither
// the flags nor the file set a seed, `env_seed` (if non-empty) is used.
// `args` excludes the program name.
std::vector<std::string> resolve_arguments(std::vector<std::string> args, std::string_view env_seed);

// Entry point of the `retain` binary; returns the process exit code.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace retain::cli
