#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace geomat::io {

// Minimal PNG emitters (filter None, fixed zlib level) so identical pixels
// always produce identical bytes.
std::vector<std::uint8_t> encode_png_rgb8(const std::uint8_t* rgb, int width, int height);
std::vector<std::uint8_t> encode_png_gray8(const std::uint8_t* gray, int width, int height);

// Binary PGM (P5), maxval 255.
std::vector<std::uint8_t> encode_pgm(const std::uint8_t* gray, int width, int height);

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace geomat::io
