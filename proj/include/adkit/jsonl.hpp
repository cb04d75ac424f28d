#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace adkit {

using json = nlohmann::json;

class JsonlError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads every line of a JSONL file. Blank lines are skipped; a malformed
/// line raises JsonlError naming the file and the 1-based line number.
inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw JsonlError("cannot open " + path.string());
    }
    std::vector<json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json row = json::parse(line, nullptr, false);
        if (row.is_discarded()) {
            throw JsonlError(path.string() + ":" + std::to_string(lineno) +
                             ": malformed JSON line");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<json>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw JsonlError("cannot write " + path.string());
    }
    for (const json& row : rows) {
        out << row.dump() << '\n';
    }
}

inline void append_jsonl(const std::filesystem::path& path, const json& row) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) {
        throw JsonlError("cannot append to " + path.string());
    }
    out << row.dump() << '\n';
}

// Byte-exact text file helpers; golden-file comparisons depend on these
// never translating newlines.
inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace adkit
