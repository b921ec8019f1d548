#include "kcp/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "kcp/errors.hpp"
#include "kcp/hash.hpp"

namespace kcp {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open file for writing: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed: " + path.string());
}

std::string file_hash_hex(const std::filesystem::path& path) {
    return ContentHash().add(read_file(path)).hex();
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open file: " + path.string());
    std::string line;
    std::size_t line_no = 0;
    std::size_t byte_offset = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t line_bytes = line.size() + 1;  // count the newline
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string trimmed;
        bool blank = true;
        for (char c : line) {
            if (!std::isspace(static_cast<unsigned char>(c))) {
                blank = false;
                break;
            }
        }
        if (!blank) {
            json rec = json::parse(line, nullptr, false);
            if (rec.is_discarded()) {
                // Re-parse with exceptions to get the in-line byte position.
                try {
                    rec = json::parse(line);
                } catch (const json::parse_error& e) {
                    throw IngestError("parse error in " + path.string() + " at byte " +
                                      std::to_string(byte_offset + (e.byte > 0 ? e.byte - 1 : 0)) +
                                      " (line " + std::to_string(line_no) + "): " + e.what());
                }
                throw IngestError("parse error in " + path.string() + " at line " +
                                  std::to_string(line_no));
            }
            fn(rec, line_no);
        }
        byte_offset += line_bytes;
    }
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::vector<json> out;
    for_each_jsonl(path, [&](const json& rec, std::size_t) { out.push_back(rec); });
    return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open file for writing: " + path.string());
    for (const json& rec : records) {
        out << rec.dump() << '\n';
    }
    if (!out) throw Error("write failed: " + path.string());
}

}  // namespace kcp
