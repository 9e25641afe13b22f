#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "utged/config.hpp"

namespace utged::cli {

// Output directory of one command. Holds the resolved config (config.txt)
// and a manifest (run.json) with the command line, seed, config hash and a
// content hash of every input file.
class RunDir {
 public:
  RunDir(std::filesystem::path dir, std::string command, std::vector<std::string> args, const Config& config);

  const std::filesystem::path& path() const { return dir_; }
  std::filesystem::path operator/(const std::string& name) const { return dir_ / name; }

  void record_input(const std::filesystem::path& file);
  // Copies a file into the run directory and records it as an input.
  void import(const std::filesystem::path& file, const std::string& name);
  void write_manifest() const;

 private:
  struct Input {
    std::string path;
    std::string hash;
  };
  std::filesystem::path dir_;
  std::string command_;
  std::vector<std::string> args_;
  std::string config_text_;
  std::uint64_t seed_;
  std::vector<Input> inputs_;
};

}  // namespace utged::cli
