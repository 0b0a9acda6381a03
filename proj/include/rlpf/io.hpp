// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rlpf {

/// Leading schema line carried by every artifact. Text tables use a comment
/// line, JSON-lines files a JSON object line, binary files a fixed block.
struct FileHeader {
  std::string schema;
  int version = 1;
  std::string config_hash;
  std::uint64_t seed = 0;
};

std::string header_comment(const FileHeader& h, char comment = '#');
std::string header_json(const FileHeader& h);

/// Reads whichever header form the file starts with.
FileHeader read_header(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never observe a
/// half-written artifact.
void write_file(const std::filesystem::path& path, std::string_view content);

/// Shortest round-trip decimal representation.
std::string format_double(double v);
/// Fixed-point with `digits` decimals.
std::string format_fixed(double v, int digits);

std::string csv_escape(std::string_view field);
std::vector<std::string> csv_split(std::string_view line);

/// Splits into lines, dropping a trailing empty line.
std::vector<std::string_view> split_lines(std::string_view text);

}  // namespace rlpf
