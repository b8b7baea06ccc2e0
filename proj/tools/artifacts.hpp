#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace mixql::cli {

/// Output files collected in memory and written together. Nothing appears
/// under the output directory unless every file was staged successfully.
class ArtifactSet {
 public:
  explicit ArtifactSet(std::filesystem::path out) : out_(std::move(out)) {}

  void add(const std::string& name, std::string content);
  bool contains(const std::string& name) const { return files_.contains(name); }
  const std::map<std::string, std::string>& files() const noexcept { return files_; }

  /// Writes a manifest.txt naming every artifact plus the config, then moves
  /// everything into place. Throws Error(io) on failure and removes staged files.
  void commit(const std::string& config_text);

 private:
  std::filesystem::path out_;
  std::map<std::string, std::string> files_;
};

}  // namespace mixql::cli
