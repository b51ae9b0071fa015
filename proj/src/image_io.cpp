#include "geomat/image_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "geomat/errors.hpp"

namespace geomat::io {
namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

void append_chunk(std::vector<std::uint8_t>& png, const char type[5],
                  const std::vector<std::uint8_t>& data) {
    put_be32(png, std::uint32_t(data.size()));
    std::size_t crc_start = png.size();
    png.insert(png.end(), type, type + 4);
    png.insert(png.end(), data.begin(), data.end());
    uLong crc = crc32(0L, png.data() + crc_start, uInt(png.size() - crc_start));
    put_be32(png, std::uint32_t(crc));
}

std::vector<std::uint8_t> deflate_bytes(const std::vector<std::uint8_t>& raw) {
    uLongf bound = compressBound(uLong(raw.size()));
    std::vector<std::uint8_t> out(bound);
    // Pinned compression level: output bytes must not depend on zlib defaults.
    int rc = compress2(out.data(), &bound, raw.data(), uLong(raw.size()), 6);
    if (rc != Z_OK) {
        throw std::runtime_error("zlib compression failed: " + std::to_string(rc));
    }
    out.resize(bound);
    return out;
}

std::vector<std::uint8_t> encode_png(const std::uint8_t* pixels, int width, int height,
                                     int channels) {
    if (width <= 0 || height <= 0) {
        throw InputError("png: non-positive image dimensions");
    }
    std::vector<std::uint8_t> raw;
    std::size_t stride = std::size_t(width) * std::size_t(channels);
    raw.reserve((stride + 1) * std::size_t(height));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);  // filter: None
        const std::uint8_t* row = pixels + std::size_t(y) * stride;
        raw.insert(raw.end(), row, row + stride);
    }

    std::vector<std::uint8_t> png = {137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, std::uint32_t(width));
    put_be32(ihdr, std::uint32_t(height));
    ihdr.push_back(8);                              // bit depth
    ihdr.push_back(channels == 3 ? 2 : 0);          // color type: RGB / gray
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    append_chunk(png, "IHDR", ihdr);
    append_chunk(png, "IDAT", deflate_bytes(raw));
    append_chunk(png, "IEND", {});
    return png;
}

}  // namespace

std::vector<std::uint8_t> encode_png_rgb8(const std::uint8_t* rgb, int width, int height) {
    return encode_png(rgb, width, height, 3);
}

std::vector<std::uint8_t> encode_png_gray8(const std::uint8_t* gray, int width, int height) {
    return encode_png(gray, width, height, 1);
}

std::vector<std::uint8_t> encode_pgm(const std::uint8_t* gray, int width, int height) {
    std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), gray, gray + std::size_t(width) * std::size_t(height));
    return out;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InputError("cannot open file for writing: " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) {
        throw InputError("short write: " + path.string());
    }
}

}  // namespace geomat::io
