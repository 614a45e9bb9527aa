#pragma once

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace skipsr {

// Error taxonomy maps onto CLI exit codes: usage=2, io/format=3, validation=4.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};
struct FormatError : IoError {
    explicit FormatError(const std::string& msg) : IoError(msg) {}
};
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg)
{
    if (!cond)
        throw ValidationError(msg);
}

// Thread count resolution: explicit argument > SKIPSR_THREADS > hardware.
inline int resolve_threads(int requested = 0)
{
    if (requested > 0)
        return requested;
    if (const char* env = std::getenv("SKIPSR_THREADS")) {
        int n = std::atoi(env);
        if (n > 0)
            return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Static partition of [0,n) into contiguous ranges, one per worker.
// Callers must only write to disjoint output slots indexed by i; results are
// then independent of the thread count.
template <typename Fn>
inline void parallel_for(std::int64_t n, Fn&& fn, int threads = 0)
{
    if (n <= 0)
        return;
    int nt = resolve_threads(threads);
    if (nt > n)
        nt = static_cast<int>(n);
    if (nt <= 1) {
        for (std::int64_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    std::int64_t chunk = (n + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        std::int64_t lo = t * chunk;
        std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi)
            break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::int64_t i = lo; i < hi; ++i)
                fn(i);
        });
    }
    for (auto& th : pool)
        th.join();
}

// Reflect index (boundary sample not repeated): for S=5, i=5,6,7 -> 3,2,1.
inline std::int64_t reflect_index(std::int64_t i, std::int64_t size)
{
    if (size == 1)
        return 0;
    std::int64_t period = 2 * (size - 1);
    i %= period;
    if (i < 0)
        i += period;
    return i < size ? i : period - i;
}

// ---- little-endian binary file helpers ----

inline void write_u32(std::ostream& os, std::uint32_t v)
{
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is)
{
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is)
        throw FormatError("unexpected end of file reading u32");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f64(std::ostream& os, double v)
{
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i)
        b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64(std::istream& is)
{
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is)
        throw FormatError("unexpected end of file reading f64");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i)
        u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

inline void write_f32_array(std::ostream& os, const std::vector<double>& v)
{
    std::vector<float> tmp(v.begin(), v.end());
    // float byte order is little-endian on every target we build for
    os.write(reinterpret_cast<const char*>(tmp.data()),
             static_cast<std::streamsize>(tmp.size() * sizeof(float)));
}

inline void read_f32_array(std::istream& is, std::vector<double>& v, std::size_t count)
{
    std::vector<float> tmp(count);
    is.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (!is)
        throw FormatError("unexpected end of file reading f32 array");
    v.assign(tmp.begin(), tmp.end());
}

inline std::ofstream open_out(const std::string& path, bool binary = true)
{
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os)
        throw IoError("cannot open for writing: " + path);
    return os;
}

inline std::ifstream open_in(const std::string& path, bool binary = true)
{
    std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
    if (!is)
        throw IoError("cannot open for reading: " + path);
    return is;
}

} // namespace skipsr
