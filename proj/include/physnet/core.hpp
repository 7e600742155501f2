#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace physnet {

using Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Error hierarchy. Everything thrown by the library derives from Error so the
// CLI can map it to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input or parameter arrays whose dimensions disagree with a declared shape.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A documented precondition was violated (non-scalar output, empty batch, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

// Malformed files or values supplied from outside the process.
class FormatError : public Error {
public:
    using Error::Error;
};

inline void require(bool condition, std::string_view message)
{
    if (!condition)
        throw ContractError(std::string(message));
}

inline void require_shape(bool condition, std::string_view message)
{
    if (!condition)
        throw ShapeError(std::string(message));
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m)
{
    return m.allFinite();
}

// ---------------------------------------------------------------------------
// Seeds
//
// A master seed is expanded into per-stage seeds with splitmix64:
//   derive_seed(master, tag, index) = splitmix64(splitmix64(master ^ fnv1a(tag)) + index)
// so every trial of a sweep can be reproduced on its own from (master, tag, index).
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index = 0)
{
    return splitmix64(splitmix64(master ^ fnv1a(tag)) + index);
}

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

// Round-trippable text for files (17 significant digits).
inline std::string format_full(double value)
{
    if (std::isnan(value))
        return "nan";
    if (std::isinf(value))
        return value > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

inline std::string format_fixed(double value, int decimals)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    return buf;
}

struct TimeSpan {
    double begin = 0.0;
    double end = 1.0;

    double length() const { return end - begin; }
};

inline std::vector<double> uniform_grid(TimeSpan span, Index n)
{
    require(n >= 2, "uniform grid needs at least two points");
    std::vector<double> grid(static_cast<std::size_t>(n));
    const double step = span.length() / static_cast<double>(n - 1);
    for (Index i = 0; i < n; ++i)
        grid[static_cast<std::size_t>(i)] = span.begin + step * static_cast<double>(i);
    grid.back() = span.end;
    return grid;
}

// Training allocates and frees the same large Eigen temporaries every step.
// glibc serves those from fresh mmap pages by default, which costs more than
// the arithmetic for mid-sized nets; keep them on the heap instead.
inline void tune_allocator()
{
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

} // namespace physnet
