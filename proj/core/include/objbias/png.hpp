#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "objbias/util.hpp"

namespace objbias::png {

struct ImageInfo {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint8_t bit_depth = 0;
  std::uint8_t color_type = 0;
};

/// Encodes 8-bit RGB pixels (row-major, 3 bytes per pixel) as a PNG stream.
Bytes encode_rgb(std::uint32_t width, std::uint32_t height, std::span<const std::uint8_t> rgb);

/// Structural check: signature, chunk CRCs, IHDR, and that the inflated IDAT
/// stream has the size the header implies. Returns nullopt on any defect.
std::optional<ImageInfo> inspect(std::span<const std::uint8_t> data);

/// Deterministic placeholder: a solid colour field with a 64-bit barcode
/// label strip, both derived from (prompt, seed).
Bytes placeholder(std::string_view prompt, std::optional<std::int64_t> seed,
                  std::uint32_t size = 64);

}  // namespace objbias::png
