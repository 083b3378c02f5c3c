#include "resgd/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace resgd::io {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary layouts assume a little-endian host");

constexpr std::array<char, 4> kDenseMagic{'R', 'G', 'D', 'M'};
constexpr std::array<char, 4> kMaskMagic{'R', 'G', 'D', 'K'};

void put_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("truncated u32 field");
    return v;
}

void expect_magic(std::istream& in, const std::array<char, 4>& magic) {
    std::array<char, 4> got{};
    if (!in.read(got.data(), 4)) throw FormatError("truncated header");
    if (got != magic) {
        throw FormatError(std::string("bad magic, expected ") + std::string(magic.data(), 4));
    }
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > UINT32_MAX) throw FormatError(std::string(what) + " exceeds u32");
    return static_cast<std::uint32_t>(v);
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open for reading: " + path.string());
    return in;
}

}  // namespace

void write_dense(std::ostream& out, const RowMajorMatrix& m) {
    out.write(kDenseMagic.data(), 4);
    put_u32(out, checked_u32(static_cast<std::size_t>(m.rows()), "rows"));
    put_u32(out, checked_u32(static_cast<std::size_t>(m.cols()), "cols"));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!out) throw FormatError("write failed");
}

RowMajorMatrix read_dense(std::istream& in) {
    expect_magic(in, kDenseMagic);
    const auto rows = get_u32(in);
    const auto cols = get_u32(in);
    RowMajorMatrix m(rows, cols);
    const auto bytes = static_cast<std::streamsize>(std::size_t{rows} * cols * sizeof(double));
    if (!in.read(reinterpret_cast<char*>(m.data()), bytes)) throw FormatError("truncated matrix body");
    if (!m.allFinite()) throw FormatError("matrix contains non-finite values");
    return m;
}

void write_mask(std::ostream& out, const MaskBlob& mask) {
    out.write(kMaskMagic.data(), 4);
    put_u32(out, checked_u32(mask.shape.h, "h"));
    put_u32(out, checked_u32(mask.shape.w, "w"));
    put_u32(out, checked_u32(mask.indices.size(), "count"));
    for (auto k : mask.indices) put_u32(out, k);
    if (!out) throw FormatError("write failed");
}

MaskBlob read_mask(std::istream& in) {
    expect_magic(in, kMaskMagic);
    MaskBlob mask;
    mask.shape.h = get_u32(in);
    mask.shape.w = get_u32(in);
    const auto count = get_u32(in);
    mask.indices.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto k = get_u32(in);
        if (k >= mask.shape.size()) throw FormatError("mask index out of range");
        mask.indices.push_back(k);
    }
    return mask;
}

void save_dense(const std::filesystem::path& path, const RowMajorMatrix& m) {
    auto out = open_out(path);
    write_dense(out, m);
}

RowMajorMatrix load_dense(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_dense(in);
}

void save_vector(const std::filesystem::path& path, const Vector& v) {
    save_dense(path, RowMajorMatrix(v));
}

Vector load_vector(const std::filesystem::path& path) {
    const auto m = load_dense(path);
    if (m.cols() != 1) throw FormatError("expected a column vector blob: " + path.string());
    return m.col(0);
}

void save_mask(const std::filesystem::path& path, const MaskBlob& mask) {
    auto out = open_out(path);
    write_mask(out, mask);
}

MaskBlob load_mask(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_mask(in);
}

}  // namespace resgd::io
