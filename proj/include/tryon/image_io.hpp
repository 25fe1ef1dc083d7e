#ifndef TRYON_IMAGE_IO_HPP
#define TRYON_IMAGE_IO_HPP

#include <string>
#include <vector>

#include "tryon/video.hpp"

namespace tryon {

// 8-bit RGB PNG. Values are mapped n <-> n/255; images written after
// quantize_u8_inplace round trip bit-exactly.
void write_png_rgb(const std::string& path, const Image& img);
Image read_png_rgb(const std::string& path);

// Binary masks as 8-bit grayscale PNG (0 or 255).
void write_png_mask(const std::string& path, const MaskVideo& m, int64_t frame);
void read_png_mask(const std::string& path, MaskVideo& m, int64_t frame);
// Reads a grayscale PNG returning (h, w, data 0/1).
std::vector<uint8_t> read_png_gray(const std::string& path, int64_t& h, int64_t& w);

// In-memory PNG encode of an RGB image (for the judge client payloads).
std::vector<uint8_t> encode_png_rgb(const Image& img);

}  // namespace tryon

#endif
