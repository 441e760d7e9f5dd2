#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace jnirm::cli {

/// SHA-256 of a file's bytes as lowercase hex.
std::string sha256_file(const std::string& path);

/// Plain-text record of one run, written to <out>/manifest.txt.
class RunManifest {
 public:
  RunManifest();

  void set_command_line(std::string line) { command_line_ = std::move(line); }
  void set_config(std::string snapshot) { config_ = std::move(snapshot); }
  void set_seed(std::uint64_t seed, bool generated) {
    seed_ = seed;
    seed_generated_ = generated;
  }
  void add_input(const std::string& path);
  void add_output(const std::string& name) { outputs_.push_back(name); }

  /// Times `fn` and records it under `stage`.
  template <class F>
  auto stage(const std::string& name, F&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record(name, t0);
    } else {
      auto result = fn();
      record(name, t0);
      return result;
    }
  }

  void write(const std::string& dir) const;

 private:
  void record(const std::string& name, std::chrono::steady_clock::time_point t0);

  std::string command_line_;
  std::string config_;
  std::uint64_t seed_ = 0;
  bool seed_generated_ = false;
  std::vector<std::pair<std::string, std::string>> inputs_;  // path, digest
  std::vector<std::string> outputs_;
  std::vector<std::pair<std::string, double>> timings_;
  std::chrono::system_clock::time_point started_;
  std::chrono::steady_clock::time_point started_steady_;
};

}  // namespace jnirm::cli
