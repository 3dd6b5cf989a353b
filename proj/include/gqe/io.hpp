#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "gqe/errors.hpp"

namespace gqe {

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Writes via temp file + rename so readers never see partial content, and
// skips the write entirely when the target already holds identical bytes
// (keeps reruns idempotent and mtimes meaningful). Returns true if the file
// changed.
inline bool atomic_write_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (fs::exists(path, ec)) {
        std::ifstream in(path, std::ios::binary);
        if (in) {
            const std::string old{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
            if (old == content) return false;
        }
    }
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path(), ec);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp);
        out << content;
        if (!out.good()) throw DataError("short write to " + tmp);
    }
    fs::rename(tmp, target, ec);
    if (ec) {
        std::remove(tmp.c_str());
        throw DataError("cannot rename " + tmp + " to " + path + ": " + ec.message());
    }
    return true;
}

}  // namespace gqe
