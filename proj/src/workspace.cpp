#include "agentjoule/workspace.hpp"

#include "agentjoule/error.hpp"

namespace agentjoule {

namespace fs = std::filesystem;

namespace {

constexpr std::chrono::seconds kGitTimeout{120};

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}

}  // namespace

Workspace::Workspace(fs::path root) : root_(fs::weakly_canonical(std::move(root))) {}

ProcessResult Workspace::git(const std::vector<std::string>& args) const {
  std::vector<std::string> argv = {"env",
                                   "GIT_CONFIG_NOSYSTEM=1",
                                   "GIT_CONFIG_GLOBAL=/dev/null",
                                   "GIT_AUTHOR_NAME=agentjoule",
                                   "GIT_AUTHOR_EMAIL=agentjoule@localhost",
                                   "GIT_COMMITTER_NAME=agentjoule",
                                   "GIT_COMMITTER_EMAIL=agentjoule@localhost",
                                   "GIT_AUTHOR_DATE=2000-01-01T00:00:00Z",
                                   "GIT_COMMITTER_DATE=2000-01-01T00:00:00Z",
                                   "git"};
  argv.insert(argv.end(), args.begin(), args.end());
  auto r = run_process(argv, root_, kGitTimeout);
  if (r.timed_out || r.exit_code != 0) {
    std::string cmd = "git";
    for (const auto& a : args) cmd += " " + a;
    throw Error(cmd + " failed (" + std::to_string(r.exit_code) + "): " + r.output);
  }
  return r;
}

Workspace Workspace::create_from_fixture(const fs::path& fixture, const fs::path& dest) {
  if (!fs::is_directory(fixture)) throw ConfigError("fixture '" + fixture.string() + "' is not a directory");
  if (fs::exists(dest) && !fs::is_empty(dest)) throw ConfigError("workspace '" + dest.string() + "' is not empty");
  fs::create_directories(dest);
  fs::copy(fixture, dest, fs::copy_options::recursive);
  fs::remove_all(dest / ".git");
  Workspace w(dest);
  w.git({"init", "-q"});
  w.git({"add", "-A"});
  w.git({"commit", "-q", "--no-gpg-sign", "-m", "base"});
  w.base_revision_ = trim(w.git({"rev-parse", "HEAD"}).output);
  return w;
}

Workspace Workspace::open(const fs::path& root) {
  if (!fs::is_directory(root / ".git")) throw ConfigError("'" + root.string() + "' is not a git checkout");
  Workspace w(root);
  w.base_revision_ = trim(w.git({"rev-parse", "HEAD"}).output);
  return w;
}

std::string Workspace::diff() const {
  git({"add", "-A", "-N"});
  return git({"diff", "--no-color", "--no-ext-diff", "-U0", base_revision_}).output;
}

bool Workspace::contains(const fs::path& p) const {
  const fs::path c = fs::weakly_canonical(p.is_absolute() ? p : root_ / p);
  auto rel = c.lexically_relative(root_);
  if (rel.empty()) return false;
  auto first = *rel.begin();
  return first != "..";
}

fs::path Workspace::resolve(const std::string& p) const {
  if (p.empty()) throw Error("empty path");
  const fs::path c = fs::weakly_canonical(fs::path(p).is_absolute() ? fs::path(p) : root_ / p);
  if (!contains(c)) throw Error("path '" + p + "' is outside the workspace");
  return c;
}

ProcessResult Workspace::shell(const std::string& command, std::chrono::milliseconds timeout) const {
  return run_shell(command, root_, timeout);
}

}  // namespace agentjoule
