#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "rulerec/graph.hpp"

namespace testutil {

// Vocab with generic names T0..T{t-1} / R0..R{r-1}.
inline rulerec::Vocab small_vocab(int t, int r) {
  std::vector<std::string> et, rt;
  for (int i = 0; i < t; ++i) et.push_back("T" + std::to_string(i));
  for (int i = 0; i < r; ++i) rt.push_back("R" + std::to_string(i));
  return rulerec::Vocab::make(et, rt);
}

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("rulerec_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct CliResult {
  int code = -1;
  std::string out;
};

// Runs the built CLI with the given arguments, capturing stdout+stderr.
inline CliResult run_cli(const std::vector<std::string>& args) {
  std::string cmd = RULEREC_CLI_PATH;
  for (const std::string& a : args) cmd += " '" + a + "'";
  cmd += " 2>&1";
  CliResult res;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return res;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) res.out.append(buf, n);
  int status = ::pclose(pipe);
  if (WIFEXITED(status)) res.code = WEXITSTATUS(status);
  return res;
}

}  // namespace testutil
