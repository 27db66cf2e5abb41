#pragma once

#include "streamtal/error.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace streamtal::detail {

// Minimal reader for the small integer/real CSV files of this project:
// a fixed header line followed by comma-separated rows.
class CsvReader {
public:
    CsvReader(const std::filesystem::path& path, const std::string& expected_header) : in_(path) {
        if (!in_) throw IoError("cannot open " + path.string());
        std::string header;
        std::getline(in_, header);
        strip(header);
        if (header != expected_header) {
            throw FormatError(path.string() + ": expected header '" + expected_header + "', got '" + header + "'");
        }
        path_ = path.string();
    }

    // Returns false at EOF; blank lines are skipped.
    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            strip(line);
            if (line.empty()) continue;
            fields.clear();
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) fields.push_back(cell);
            return true;
        }
        return false;
    }

    int to_int(const std::string& s) const {
        try {
            std::size_t used = 0;
            const int v = std::stoi(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw FormatError(path_ + ":" + std::to_string(line_no_ + 1) + ": not an integer: '" + s + "'");
        }
    }

    void expect_fields(const std::vector<std::string>& fields, std::size_t n) const {
        if (fields.size() != n) {
            throw FormatError(path_ + ":" + std::to_string(line_no_ + 1) + ": expected " + std::to_string(n) +
                              " fields");
        }
    }

private:
    static void strip(std::string& s) {
        while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    }

    std::ifstream in_;
    std::string path_;
    int line_no_ = 0;
};

inline std::ofstream open_for_write(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

}  // namespace streamtal::detail
