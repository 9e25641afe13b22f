#include "run_dir.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "utged/error.hpp"

namespace utged::cli {

RunDir::RunDir(std::filesystem::path dir, std::string command, std::vector<std::string> args, const Config& config)
    : dir_(std::move(dir)),
      command_(std::move(command)),
      args_(std::move(args)),
      config_text_(config_to_text(config)),
      seed_(config.seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error("cannot create run directory " + dir_.string() + ": " + ec.message());
  std::ofstream out(dir_ / "config.txt");
  if (!out) throw Error("cannot write " + (dir_ / "config.txt").string());
  out << config_text_;
}

void RunDir::record_input(const std::filesystem::path& file) {
  inputs_.push_back({file.string(), hex64(file_hash(file))});
}

void RunDir::import(const std::filesystem::path& file, const std::string& name) {
  record_input(file);
  std::error_code ec;
  std::filesystem::copy_file(file, dir_ / name, std::filesystem::copy_options::overwrite_existing, ec);
  if (ec) throw Error("cannot copy " + file.string() + ": " + ec.message());
}

void RunDir::write_manifest() const {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["args"] = args_;
  j["format_version"] = kConfigFormatVersion;
  j["seed"] = seed_;
  j["config_hash"] = hex64(fnv1a(config_text_));
  auto inputs = nlohmann::ordered_json::array();
  for (const auto& in : inputs_) inputs.push_back({{"path", in.path}, {"fnv1a", in.hash}});
  j["inputs"] = inputs;
  std::ofstream out(dir_ / "run.json");
  if (!out) throw Error("cannot write " + (dir_ / "run.json").string());
  out << j.dump(2) << '\n';
}

}  // namespace utged::cli
