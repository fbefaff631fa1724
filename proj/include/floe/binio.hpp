#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "floe/common.hpp"

namespace floe {

// Little-endian byte packing for the on-disk containers. Explicit shifts keep
// the formats portable regardless of host endianness.

class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(v); }

    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }

    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }

    void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }

    void bytes(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }

    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

    void f32_array(const std::vector<float>& v) {
        for (float x : v) f32(x);
    }

    const std::vector<uint8_t>& data() const { return buf_; }

private:
    std::vector<uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const uint8_t* p, size_t n, std::string what)
        : p_(p), n_(n), what_(std::move(what)) {}

    uint8_t u8() {
        need(1);
        return p_[pos_++];
    }

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p_[pos_++]) << (8 * i);
        return v;
    }

    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p_[pos_++]) << (8 * i);
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::string str(uint32_t max_len = 4096) {
        const uint32_t len = u32();
        if (len > max_len) throw FormatError(what_ + ": implausible string length");
        need(len);
        std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
        pos_ += len;
        return s;
    }

    std::vector<float> f32_array(size_t count) {
        std::vector<float> v(count);
        for (size_t i = 0; i < count; ++i) v[i] = f32();
        return v;
    }

    void expect_magic(const char* magic) {
        const size_t len = std::strlen(magic);
        if (n_ - pos_ < len || std::memcmp(p_ + pos_, magic, len) != 0) {
            throw FormatError(what_ + ": bad magic (expected " + std::string(magic) + ")");
        }
        pos_ += len;
    }

    void expect_end() const {
        if (pos_ != n_) throw FormatError(what_ + ": trailing bytes after payload");
    }

    size_t remaining() const { return n_ - pos_; }

private:
    void need(size_t n) {
        if (n_ - pos_ < n) throw FormatError(what_ + ": truncated file");
    }

    const uint8_t* p_;
    size_t n_;
    size_t pos_ = 0;
    std::string what_;
};

std::vector<uint8_t> read_file_bytes(const std::string& path);

// Write-temp-then-rename so partially written artifacts never appear.
void atomic_write_file(const std::string& path, const std::vector<uint8_t>& bytes);
void atomic_write_file(const std::string& path, const std::string& text);

}  // namespace floe
