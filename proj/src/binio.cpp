#include "floe/binio.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace floe {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    if (size < 0) throw IoError("cannot stat " + path);
    in.seekg(0, std::ios::beg);
    std::vector<uint8_t> bytes(static_cast<size_t>(size));
    if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw IoError("short read on " + path);
    return bytes;
}

static void write_then_rename(const std::string& path, const void* data, size_t n) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp);
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out) throw IoError("short write on " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

void atomic_write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    write_then_rename(path, bytes.data(), bytes.size());
}

void atomic_write_file(const std::string& path, const std::string& text) {
    write_then_rename(path, text.data(), text.size());
}

}  // namespace floe
