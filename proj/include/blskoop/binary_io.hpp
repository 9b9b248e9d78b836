#pragma once

// Little-endian binary blobs with a trailing FNV-1a 64 checksum. Used by the
// dataset, lifter and predictor file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "blskoop/numerics.hpp"

namespace blskoop {

inline std::uint64_t fnv1a64(const char* data, std::size_t size) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001B3ULL;
    }
    return h;
}

class BinaryWriter {
public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }

    void u32(std::uint32_t v) { little(v); }
    void u64(std::uint64_t v) { little(v); }
    void f64(double v) { little(std::bit_cast<std::uint64_t>(v)); }

    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

    /// Shape header followed by column-major entries.
    void matrix(const Matrix& m) {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                f64(m(i, j));
            }
        }
    }

    void vector(const Vector& v) { matrix(Matrix(v)); }

    /// Payload plus checksum.
    std::string finish() const {
        std::string out = buf_;
        const std::uint64_t h = fnv1a64(buf_.data(), buf_.size());
        for (int i = 0; i < 8; ++i) {
            out.push_back(static_cast<char>((h >> (8 * i)) & 0xFF));
        }
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot open '" + path + "' for writing");
        }
        const auto data = finish();
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out) {
            throw Error("write to '" + path + "' failed");
        }
    }

private:
    template <class T>
    void little(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }

    std::string buf_;
};

class BinaryReader {
public:
    /// Verifies the trailing checksum of `blob`.
    explicit BinaryReader(std::string blob) : buf_(std::move(blob)) {
        if (buf_.size() < 8) {
            throw FormatError("file truncated: too short for a checksum");
        }
        const std::size_t payload = buf_.size() - 8;
        std::uint64_t stored = 0;
        for (int i = 0; i < 8; ++i) {
            stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[payload + i])) << (8 * i);
        }
        if (stored != fnv1a64(buf_.data(), payload)) {
            throw FormatError("checksum mismatch (file corrupted or truncated)");
        }
        end_ = payload;
    }

    static BinaryReader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw Error("cannot open '" + path + "' for reading");
        }
        std::stringstream ss;
        ss << in.rdbuf();
        return BinaryReader(ss.str());
    }

    void expect_magic(const char (&magic)[5], std::uint32_t version) {
        char got[4];
        raw(got, 4);
        if (std::memcmp(got, magic, 4) != 0) {
            throw FormatError(std::string("bad magic: expected '") + magic + "'");
        }
        const auto v = u32();
        if (v != version) {
            throw FormatError("unsupported format version " + std::to_string(v) + " (expected " +
                              std::to_string(version) + ")");
        }
    }

    std::uint32_t u32() { return little<std::uint32_t>(); }
    std::uint64_t u64() { return little<std::uint64_t>(); }
    double f64() { return std::bit_cast<double>(little<std::uint64_t>()); }

    std::string str() {
        const auto n = u32();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    Matrix matrix() {
        const auto rows = u64();
        const auto cols = u64();
        if (rows != 0 && cols > (end_ - pos_) / 8 / rows) {
            throw FormatError("matrix block larger than the file");
        }
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                m(i, j) = f64();
            }
        }
        return m;
    }

    Vector vector() {
        Matrix m = matrix();
        if (m.cols() != 1) {
            throw FormatError("expected a column vector block");
        }
        return m.col(0);
    }

    bool at_end() const { return pos_ == end_; }

private:
    void need(std::size_t n) const {
        if (end_ - pos_ < n) {
            throw FormatError("file truncated");
        }
    }

    void raw(char* out, std::size_t n) {
        need(n);
        std::memcpy(out, buf_.data() + pos_, n);
        pos_ += n;
    }

    template <class T>
    T little() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return v;
    }

    std::string buf_;
    std::size_t pos_ = 0;
    std::size_t end_ = 0;
};

}  // namespace blskoop
