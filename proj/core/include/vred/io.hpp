#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vred/errors.hpp"

namespace vred::io {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

/// Append-only little-endian byte sink.
class Writer {
   public:
    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void put_f64(double v) { put(v); }
    void put_bytes(const std::uint8_t* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
    void put_string(const std::string& s) {
        put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
        put_bytes(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
    }
    const std::vector<std::uint8_t>& bytes() const { return buf_; }
    std::vector<std::uint8_t>& bytes() { return buf_; }

   private:
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader over a byte buffer.
class Reader {
   public:
    explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        if (pos_ + sizeof(T) > buf_.size()) throw FormatError("truncated input");
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string() {
        const std::uint16_t n = get<std::uint16_t>();
        if (pos_ + n > buf_.size()) throw FormatError("truncated string");
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void get_bytes(std::uint8_t* p, std::size_t n) {
        if (pos_ + n > buf_.size()) throw FormatError("truncated input");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::size_t remaining() const { return buf_.size() - pos_; }
    std::size_t pos() const { return pos_; }

   private:
    const std::vector<std::uint8_t>& buf_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open file: " + path.string());
    f.seekg(0, std::ios::end);
    const std::streamoff n = f.tellg();
    f.seekg(0);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(n));
    f.read(reinterpret_cast<char*>(buf.data()), n);
    if (!f) throw Error("short read on file: " + path.string());
    return buf;
}

inline void write_file(const std::filesystem::path& path,
                       const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write file: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("short write on file: " + path.string());
}

}  // namespace vred::io
