#pragma once

// Little-endian binary primitives shared by the dataset and checkpoint formats.

#include "unroll/errors.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace unroll::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <class T>
void put(std::ostream& os, T value)
{
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void put_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }

/// Writes a matrix row-major.
inline void put_matrix(std::ostream& os, const Eigen::MatrixXd& m)
{
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(os, m(r, c));
}

inline void put_vector(std::ostream& os, const Eigen::VectorXd& v)
{
    for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(os, v(i));
}

class Reader {
public:
    Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

    template <class T>
    T get()
    {
        T value{};
        is_.read(reinterpret_cast<char*>(&value), sizeof(T));
        if (is_.gcount() != static_cast<std::streamsize>(sizeof(T)))
            throw IoError(what_ + ": truncated file");
        return value;
    }

    void expect_magic(const char (&magic)[5])
    {
        char buf[4] = {};
        is_.read(buf, 4);
        if (is_.gcount() != 4) throw IoError(what_ + ": truncated file");
        if (std::memcmp(buf, magic, 4) != 0)
            throw IoError(what_ + ": bad magic (expected " + std::string(magic, 4) + ")");
    }

    void expect_version(std::uint32_t expected)
    {
        const auto v = get<std::uint32_t>();
        if (v != expected)
            throw IoError(what_ + ": unsupported format version " + std::to_string(v)
                          + " (this build reads version " + std::to_string(expected) + ")");
    }

    Eigen::MatrixXd get_matrix(Eigen::Index rows, Eigen::Index cols)
    {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get<double>();
        return m;
    }

    Eigen::VectorXd get_vector(Eigen::Index n)
    {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = get<double>();
        return v;
    }

    void expect_end()
    {
        if (is_.peek() != std::char_traits<char>::eof()) throw IoError(what_ + ": trailing bytes");
    }

private:
    std::istream& is_;
    std::string what_;
};

} // namespace unroll::binio
