#pragma once

#include <chrono>
#include <filesystem>
#include <string>

#include "agentjoule/subprocess.hpp"

namespace agentjoule {

// A scratch repository under git. Tool paths are resolved against root and
// rejected when they leave it.
class Workspace {
 public:
  // Copies fixture into dest (which must not exist or be empty), initializes
  // a repository and commits the copy with a fixed author and date.
  static Workspace create_from_fixture(const std::filesystem::path& fixture, const std::filesystem::path& dest);
  // Wraps an existing checkout.
  static Workspace open(const std::filesystem::path& root);

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::string& base_revision() const noexcept { return base_revision_; }

  // Zero-context diff of the working tree (new files included) against the
  // base revision.
  std::string diff() const;

  // Throws Error when p escapes the root.
  std::filesystem::path resolve(const std::string& p) const;
  bool contains(const std::filesystem::path& p) const;

  ProcessResult shell(const std::string& command, std::chrono::milliseconds timeout) const;

 private:
  explicit Workspace(std::filesystem::path root);
  ProcessResult git(const std::vector<std::string>& args) const;

  std::filesystem::path root_;
  std::string base_revision_;
};

}  // namespace agentjoule
