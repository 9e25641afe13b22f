#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "utged/corpus.hpp"
#include "utged/error.hpp"

namespace utged::corpus {

using nlohmann::json;

UserRecord parse_record(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("record is not a JSON object");
  auto field = [&](const char* key) -> const json& {
    auto it = j.find(key);
    if (it == j.end()) throw UsageError(std::string("missing field '") + key + "'");
    return *it;
  };
  UserRecord r;
  const json& id = field("user_id");
  if (id.is_string()) {
    r.user_id = id.get<std::string>();
  } else if (id.is_number_integer()) {
    r.user_id = id.dump();
  } else {
    throw UsageError("'user_id' must be a string");
  }
  const json& intro = field("self_intro");
  if (!intro.is_string()) throw UsageError("'self_intro' must be a string");
  r.self_intro = intro.get<std::string>();
  const json& tweets = field("tweets");
  if (!tweets.is_array()) throw UsageError("'tweets' must be an array of strings");
  for (const auto& t : tweets) {
    if (!t.is_string()) throw UsageError("'tweets' must be an array of strings");
    r.history.push_back(t.get<std::string>());
  }
  return r;
}

std::string to_json_line(const UserRecord& record) {
  json j;
  j["user_id"] = record.user_id;
  j["self_intro"] = record.self_intro;
  j["tweets"] = record.history;
  return j.dump();
}

std::vector<UserRecord> read_jsonl(std::istream& in) {
  std::vector<UserRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const UsageError& e) {
      throw UsageError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<UserRecord> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  return read_jsonl(in);
}

void write_jsonl(std::ostream& out, std::span<const UserRecord> records) {
  for (const auto& r : records) out << to_json_line(r) << '\n';
}

void save_jsonl(const std::filesystem::path& path, std::span<const UserRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_jsonl(out, records);
}

}  // namespace utged::corpus
