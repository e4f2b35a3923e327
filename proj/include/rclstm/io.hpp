#pragma once

// Little-endian binary containers used by checkpoints and dataset caches.
// Every container starts with an 8-byte magic and a u32 format version.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rclstm/error.hpp"

namespace rclstm::io {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

class Writer {
public:
    void bytes(const void* p, std::size_t n)
    {
        const auto* c = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    void str(std::string_view s)
    {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    void f64s(std::span<const double> v)
    {
        u64(v.size());
        bytes(v.data(), v.size() * sizeof(double));
    }
    void header(std::string_view magic8, std::uint32_t version)
    {
        bytes(magic8.data(), 8);
        u32(version);
    }

    const std::vector<std::uint8_t>& data() const noexcept { return buf_; }
    std::vector<std::uint8_t> take() noexcept { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    void bytes(void* p, std::size_t n)
    {
        if (n > data_.size() - pos_) throw FormatError("corrupt stream: unexpected end of data at byte " + std::to_string(pos_));
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8()
    {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32()
    {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::uint64_t u64()
    {
        std::uint64_t v;
        bytes(&v, 8);
        return v;
    }
    double f64()
    {
        double v;
        bytes(&v, 8);
        return v;
    }
    /// Length-prefixed count, sanity-checked against the bytes remaining.
    std::size_t count(std::size_t element_size)
    {
        const auto n = u64();
        if (element_size != 0 && n > (data_.size() - pos_) / element_size)
            throw FormatError("corrupt stream: length field exceeds remaining data");
        return static_cast<std::size_t>(n);
    }
    std::string str()
    {
        std::string s(count(1), '\0');
        bytes(s.data(), s.size());
        return s;
    }
    std::vector<double> f64s()
    {
        std::vector<double> v(count(sizeof(double)));
        bytes(v.data(), v.size() * sizeof(double));
        return v;
    }
    /// Checks magic and returns the version; throws on any mismatch.
    void expect_header(std::string_view magic8, std::uint32_t version)
    {
        char m[8];
        bytes(m, 8);
        if (std::string_view(m, 8) != magic8) throw FormatError("corrupt stream: bad magic");
        const auto v = u32();
        if (v != version)
            throw FormatError("unsupported format version " + std::to_string(v) + " (expected " + std::to_string(version) +
                              ")");
    }
    void expect_end() const
    {
        if (pos_ != data_.size()) throw FormatError("corrupt stream: trailing bytes");
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to '" + path + "'");
}

}  // namespace rclstm::io
