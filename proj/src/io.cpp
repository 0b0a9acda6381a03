// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpf/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rlpf/error.hpp"

namespace rlpf {

std::string header_comment(const FileHeader& h, char comment) {
  std::string out;
  out += comment;
  out += " schema=" + h.schema + " version=" + std::to_string(h.version) +
         " config_hash=" + h.config_hash + " seed=" + std::to_string(h.seed) + "\n";
  return out;
}

std::string header_json(const FileHeader& h) {
  nlohmann::ordered_json j;
  j["schema"] = h.schema;
  j["version"] = h.version;
  j["config_hash"] = h.config_hash;
  j["seed"] = h.seed;
  return j.dump() + "\n";
}

namespace {

FileHeader parse_comment_header(std::string_view line, const std::string& where) {
  FileHeader h;
  bool have_schema = false;
  std::size_t pos = 1;
  while (pos < line.size()) {
    while (pos < line.size() && line[pos] == ' ') ++pos;
    const auto end = line.find(' ', pos);
    const auto tok = line.substr(pos, end == std::string_view::npos ? line.size() - pos : end - pos);
    pos = end == std::string_view::npos ? line.size() : end;
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) continue;
    const auto key = tok.substr(0, eq);
    const auto val = tok.substr(eq + 1);
    if (key == "schema") {
      h.schema = std::string(val);
      have_schema = true;
    } else if (key == "version") {
      std::from_chars(val.data(), val.data() + val.size(), h.version);
    } else if (key == "config_hash") {
      h.config_hash = std::string(val);
    } else if (key == "seed") {
      std::from_chars(val.data(), val.data() + val.size(), h.seed);
    }
  }
  if (!have_schema) fail(ErrorKind::Io, where + ": header line has no schema");
  return h;
}

}  // namespace

FileHeader read_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingArtifact, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  // Binary artifacts start with "RLPFBIN1 " followed by a JSON header.
  if (line.rfind("RLPFBIN1 ", 0) == 0) line.erase(0, 9);
  if (!line.empty() && line.front() == '{') {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("schema"))
      fail(ErrorKind::Io, path.string() + ": malformed header line");
    FileHeader h;
    h.schema = j.at("schema").get<std::string>();
    h.version = j.value("version", 1);
    h.config_hash = j.value("config_hash", std::string{});
    h.seed = j.value("seed", std::uint64_t{0});
    return h;
  }
  if (!line.empty() && line.front() == '#') return parse_comment_header(line, path.string());
  fail(ErrorKind::Io, path.string() + ": missing schema header line");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingArtifact, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(ErrorKind::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s.rfind("-0.", 0) == 0 && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    lines.push_back(text.substr(0, eol));
    if (eol == std::string_view::npos) break;
    text.remove_prefix(eol + 1);
  }
  return lines;
}

}  // namespace rlpf
