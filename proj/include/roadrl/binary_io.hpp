#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace roadrl {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Little-endian primitive writer for checkpoint files.
class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value) {
        std::array<char, sizeof(T)> bytes;
        std::memcpy(bytes.data(), &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(bytes.begin(), bytes.end());
        }
        out_.write(bytes.data(), bytes.size());
    }

    void put_bytes(std::span<const char> bytes) { out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); }

    void put_string(const std::string& s) {
        put<std::uint64_t>(s.size());
        put_bytes(s);
    }

    void put_doubles(std::span<const double> values) {
        if constexpr (std::endian::native == std::endian::little) {
            out_.write(reinterpret_cast<const char*>(values.data()),
                       static_cast<std::streamsize>(values.size() * sizeof(double)));
        } else {
            for (double v : values) {
                put(v);
            }
        }
    }

    void check() const {
        if (!out_) {
            throw std::runtime_error("write failed");
        }
    }

private:
    std::ostream& out_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::istream& in) : in_(in) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get() {
        std::array<char, sizeof(T)> bytes;
        read_exact(bytes.data(), bytes.size());
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(bytes.begin(), bytes.end());
        }
        T value;
        std::memcpy(&value, bytes.data(), sizeof(T));
        return value;
    }

    void read_exact(char* dst, std::size_t n) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw FormatError("truncated file");
        }
    }

    std::string get_string(std::size_t max_len = std::size_t{1} << 32) {
        const auto n = get<std::uint64_t>();
        if (n > max_len) {
            throw FormatError("string length out of range");
        }
        std::string s(n, '\0');
        read_exact(s.data(), n);
        return s;
    }

    void get_doubles(std::span<double> values) {
        if constexpr (std::endian::native == std::endian::little) {
            read_exact(reinterpret_cast<char*>(values.data()), values.size() * sizeof(double));
        } else {
            for (double& v : values) {
                v = get<double>();
            }
        }
    }

private:
    std::istream& in_;
};

}  // namespace roadrl
