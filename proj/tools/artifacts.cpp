#include "artifacts.hpp"

#include "mixql/errors.hpp"

#include <fstream>
#include <system_error>
#include <unistd.h>

namespace mixql::cli {

namespace fs = std::filesystem;

void ArtifactSet::add(const std::string& name, std::string content) {
  if (name.empty() || name.find('/') != std::string::npos) {
    throw Error(ErrorCategory::argument, "bad artifact name '" + name + "'");
  }
  files_[name] = std::move(content);
}

void ArtifactSet::commit(const std::string& config_text) {
  std::string manifest = "# artifacts\n";
  for (const auto& [name, _] : files_) manifest += name + "\n";
  manifest += "config.ini\n";
  files_["config.ini"] = config_text;
  files_["manifest.txt"] = manifest + "# config\n" + config_text;

  const fs::path target = out_.empty() ? fs::path(".") : out_;
  const fs::path parent = fs::absolute(target).parent_path();
  const fs::path staging = parent / ("." + target.filename().string() + ".staging-" + std::to_string(::getpid()));
  std::error_code ec;
  try {
    fs::create_directories(parent);
    fs::remove_all(staging, ec);
    fs::create_directories(staging);
    for (const auto& [name, content] : files_) {
      std::ofstream os(staging / name, std::ios::binary);
      os << content;
      os.close();
      if (!os) throw Error(ErrorCategory::io, "cannot write " + (staging / name).string());
    }
    if (!fs::exists(target)) {
      fs::rename(staging, target);
      return;
    }
    if (!fs::is_directory(target)) throw Error(ErrorCategory::io, target.string() + " exists and is not a directory");
    for (const auto& [name, _] : files_) fs::rename(staging / name, target / name);
    fs::remove_all(staging, ec);
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staging, ec);
    throw Error(ErrorCategory::io, e.what());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
}

}  // namespace mixql::cli
