#pragma once

// Binary layouts (all little-endian):
//   dense matrix  "RGDM" u32 rows, u32 cols, rows*cols f64 row-major
//   sampling mask "RGDK" u32 h, u32 w, u32 count, count u32 flat indices
// Vectors are stored as RGDM with cols = 1.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "resgd/types.hpp"

namespace resgd::io {

struct MaskBlob {
    ImageShape shape;
    std::vector<std::uint32_t> indices;
};

void write_dense(std::ostream& out, const RowMajorMatrix& m);
[[nodiscard]] RowMajorMatrix read_dense(std::istream& in);

void write_mask(std::ostream& out, const MaskBlob& mask);
[[nodiscard]] MaskBlob read_mask(std::istream& in);

void save_dense(const std::filesystem::path& path, const RowMajorMatrix& m);
[[nodiscard]] RowMajorMatrix load_dense(const std::filesystem::path& path);
void save_vector(const std::filesystem::path& path, const Vector& v);
[[nodiscard]] Vector load_vector(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const MaskBlob& mask);
[[nodiscard]] MaskBlob load_mask(const std::filesystem::path& path);

}  // namespace resgd::io
