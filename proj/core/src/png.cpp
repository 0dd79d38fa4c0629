#include "objbias/png.hpp"

#include <zlib.h>

#include <array>
#include <cstring>

#include "objbias/errors.hpp"

namespace objbias::png {

namespace {

constexpr std::array<std::uint8_t, 8> kSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

void put_chunk(Bytes& out, const char type[4], std::span<const std::uint8_t> body) {
  put_u32(out, static_cast<std::uint32_t>(body.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  const uLong crc = crc32(0L, out.data() + type_at, static_cast<uInt>(4 + body.size()));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

Bytes encode_rgb(std::uint32_t width, std::uint32_t height, std::span<const std::uint8_t> rgb) {
  if (width == 0 || height == 0) throw ValidationError("png: empty image");
  const std::size_t stride = std::size_t{width} * 3;
  if (rgb.size() != stride * height) throw ValidationError("png: pixel buffer size mismatch");

  Bytes raw;
  raw.reserve((stride + 1) * height);
  for (std::uint32_t y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), rgb.begin() + static_cast<std::ptrdiff_t>(y * stride),
               rgb.begin() + static_cast<std::ptrdiff_t>((y + 1) * stride));
  }
  uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
  Bytes packed(packed_len);
  if (compress2(packed.data(), &packed_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw Error("png: deflate failed");
  }
  packed.resize(packed_len);

  Bytes out(kSignature.begin(), kSignature.end());
  Bytes ihdr;
  put_u32(ihdr, width);
  put_u32(ihdr, height);
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit, truecolour, deflate, adaptive, no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", {});
  return out;
}

std::optional<ImageInfo> inspect(std::span<const std::uint8_t> data) {
  if (data.size() < kSignature.size() || !std::equal(kSignature.begin(), kSignature.end(), data.begin())) {
    return std::nullopt;
  }
  std::size_t pos = kSignature.size();
  std::optional<ImageInfo> info;
  Bytes idat;
  bool saw_end = false;
  while (pos + 12 <= data.size()) {
    const std::uint32_t len = get_u32(data.data() + pos);
    if (pos + 12 + std::size_t{len} > data.size()) return std::nullopt;
    const std::uint8_t* type = data.data() + pos + 4;
    const std::uint8_t* body = type + 4;
    const std::uint32_t crc = get_u32(body + len);
    if (crc32(crc32(0L, type, 4), body, len) != crc) return std::nullopt;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) return std::nullopt;
      info = ImageInfo{get_u32(body), get_u32(body + 4), body[8], body[9]};
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), body, body + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_end = true;
      break;
    }
    pos += 12 + len;
  }
  if (!info || !saw_end || idat.empty() || info->width == 0 || info->height == 0) return std::nullopt;

  // Only the layouts this toolkit sees in practice are size-checked; others pass on structure alone.
  std::size_t channels = 0;
  switch (info->color_type) {
    case 0: channels = 1; break;
    case 2: channels = 3; break;
    case 4: channels = 2; break;
    case 6: channels = 4; break;
    default: return info;
  }
  if (info->bit_depth != 8) return info;
  const std::size_t expected = (std::size_t{info->width} * channels + 1) * info->height;
  Bytes raw(expected + 1);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != expected) {
    return std::nullopt;
  }
  return info;
}

Bytes placeholder(std::string_view prompt, std::optional<std::int64_t> seed, std::uint32_t size) {
  if (size < 16) throw ValidationError("png: placeholder size must be at least 16");
  std::string key(prompt);
  key += '\x1f';
  key += seed ? std::to_string(*seed) : std::string("none");
  const std::uint64_t h = stable_hash64(key);
  const std::uint64_t label = stable_hash64(key + "\x1flabel");

  const std::uint8_t r = static_cast<std::uint8_t>(h >> 56);
  const std::uint8_t g = static_cast<std::uint8_t>(h >> 48);
  const std::uint8_t b = static_cast<std::uint8_t>(h >> 40);
  const std::uint32_t strip = size / 8;

  Bytes rgb(std::size_t{size} * size * 3);
  for (std::uint32_t y = 0; y < size; ++y) {
    for (std::uint32_t x = 0; x < size; ++x) {
      std::uint8_t* px = rgb.data() + (std::size_t{y} * size + x) * 3;
      if (y >= size - strip) {
        const unsigned bit = (x * 64) / size;
        const std::uint8_t v = ((label >> bit) & 1U) ? 255 : 0;
        px[0] = px[1] = px[2] = v;
      } else {
        px[0] = r;
        px[1] = g;
        px[2] = b;
      }
    }
  }
  return encode_rgb(size, size, rgb);
}

}  // namespace objbias::png
