#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "json.hpp"

namespace kcp {

using json = nlohmann::json;

// Newline-delimited JSON, one record per line, UTF-8. All pipeline artifacts
// are stored this way. Parse failures report the absolute byte offset into
// the file.
std::vector<json> read_jsonl(const std::filesystem::path& path);
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t line_no)>& fn);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);
std::string file_hash_hex(const std::filesystem::path& path);

}  // namespace kcp
