#include "manifest.hpp"

#include "jnirm/types.hpp"
#include "jnirm/version.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>

namespace jnirm::cli {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

RunManifest::RunManifest()
    : started_(std::chrono::system_clock::now()), started_steady_(std::chrono::steady_clock::now()) {}

void RunManifest::add_input(const std::string& path) { inputs_.emplace_back(path, sha256_file(path)); }

void RunManifest::record(const std::string& name, std::chrono::steady_clock::time_point t0) {
  timings_.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

void RunManifest::write(const std::string& dir) const {
  const std::string path = dir + "/manifest.txt";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  const std::time_t t = std::chrono::system_clock::to_time_t(started_);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_steady_).count();

  out << "jnirm " << version() << '\n';
  out << "command: " << command_line_ << '\n';
  out << "seed: " << seed_ << (seed_generated_ ? " (generated)" : "") << '\n';
  out << "started: " << stamp << '\n';
  out << "wall_clock_seconds: " << wall << '\n';
  out << "\n[inputs]\n";
  for (const auto& [p, digest] : inputs_) out << "sha256 " << digest << "  " << p << '\n';
  out << "\n[outputs]\n";
  for (const auto& o : outputs_) out << o << '\n';
  out << "\n[timings]\n";
  for (const auto& [name, secs] : timings_) out << name << " " << secs << '\n';
  out << "\n[config]\n" << config_;
  if (!config_.empty() && config_.back() != '\n') out << '\n';
}

}  // namespace jnirm::cli
