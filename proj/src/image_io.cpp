#include "tryon/image_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>

namespace tryon {

namespace {

uint8_t to_u8(float v) {
    float clamped = std::min(1.0f, std::max(0.0f, v));
    return uint8_t(std::lround(clamped * 255.0f));
}

struct PngWriteCtx {
    std::vector<uint8_t>* out;
};

void png_mem_write(png_structp png, png_bytep data, png_size_t len) {
    auto* ctx = static_cast<PngWriteCtx*>(png_get_io_ptr(png));
    ctx->out->insert(ctx->out->end(), data, data + len);
}

void png_mem_flush(png_structp) {}

std::vector<uint8_t> encode_png(const uint8_t* rows_data, int64_t h, int64_t w,
                                int color_type, int64_t stride) {
    std::vector<uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(ErrorKind::Io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorKind::Io, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, "png encode failed");
    }
    PngWriteCtx ctx{&out};
    png_set_write_fn(png, &ctx, png_mem_write, png_mem_flush);
    png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int64_t y = 0; y < h; y++)
        rows[size_t(y)] = const_cast<png_bytep>(rows_data + y * stride);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

struct PngReadCtx {
    const std::vector<uint8_t>* in;
    size_t pos;
};

void png_mem_read(png_structp png, png_bytep data, png_size_t len) {
    auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
    if (ctx->pos + len > ctx->in->size()) png_error(png, "png truncated");
    std::memcpy(data, ctx->in->data() + ctx->pos, len);
    ctx->pos += len;
}

// Decodes to 8-bit; returns channel count via out param.
std::vector<uint8_t> decode_png(const std::vector<uint8_t>& bytes, int64_t& h,
                                int64_t& w, int& channels) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
        fail(ErrorKind::Format, "not a png file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(ErrorKind::Io, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(ErrorKind::Io, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::Format, "png decode failed");
    }
    PngReadCtx ctx{&bytes, 0};
    png_set_read_fn(png, &ctx, png_mem_read);
    png_read_info(png, info);
    w = int64_t(png_get_image_width(png, info));
    h = int64_t(png_get_image_height(png, info));
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    channels = png_get_channels(png, info);
    size_t stride = png_get_rowbytes(png, info);
    std::vector<uint8_t> data(stride * size_t(h));
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int64_t y = 0; y < h; y++) rows[size_t(y)] = data.data() + size_t(y) * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return data;
}

}  // namespace

std::vector<uint8_t> encode_png_rgb(const Image& img) {
    if (img.rank() != 3 || img.dim(2) != 3)
        fail(ErrorKind::Shape, "encode_png_rgb expects HxWx3");
    int64_t h = img.dim(0), w = img.dim(1);
    std::vector<uint8_t> rgb(size_t(h * w * 3));
    for (int64_t i = 0; i < h * w * 3; i++) rgb[size_t(i)] = to_u8(img.data[size_t(i)]);
    return encode_png(rgb.data(), h, w, PNG_COLOR_TYPE_RGB, w * 3);
}

void write_png_rgb(const std::string& path, const Image& img) {
    auto bytes = encode_png_rgb(img);
    write_binary_file(path, bytes.data(), bytes.size());
}

Image read_png_rgb(const std::string& path) {
    auto bytes = read_binary_file(path);
    int64_t h, w;
    int ch;
    auto raw = decode_png(bytes, h, w, ch);
    if (ch < 3) fail(ErrorKind::Format, "expected RGB png: " + path);
    Image img({h, w, 3});
    for (int64_t y = 0; y < h; y++)
        for (int64_t x = 0; x < w; x++)
            for (int64_t c = 0; c < 3; c++)
                img.at({y, x, c}) =
                    float(raw[size_t((y * w + x) * ch + c)]) / 255.0f;
    return img;
}

void write_png_mask(const std::string& path, const MaskVideo& m, int64_t frame) {
    std::vector<uint8_t> gray(size_t(m.height * m.width));
    for (int64_t y = 0; y < m.height; y++)
        for (int64_t x = 0; x < m.width; x++)
            gray[size_t(y * m.width + x)] = m.at(frame, y, x) ? 255 : 0;
    auto bytes = encode_png(gray.data(), m.height, m.width, PNG_COLOR_TYPE_GRAY, m.width);
    write_binary_file(path, bytes.data(), bytes.size());
}

std::vector<uint8_t> read_png_gray(const std::string& path, int64_t& h, int64_t& w) {
    auto bytes = read_binary_file(path);
    int ch;
    auto raw = decode_png(bytes, h, w, ch);
    std::vector<uint8_t> out(size_t(h * w));
    for (int64_t i = 0; i < h * w; i++) out[size_t(i)] = raw[size_t(i * ch)] >= 128 ? 1 : 0;
    return out;
}

void read_png_mask(const std::string& path, MaskVideo& m, int64_t frame) {
    int64_t h, w;
    auto gray = read_png_gray(path, h, w);
    if (h != m.height || w != m.width) fail(ErrorKind::Format, "mask png shape mismatch: " + path);
    for (int64_t y = 0; y < h; y++)
        for (int64_t x = 0; x < w; x++) m.at(frame, y, x) = gray[size_t(y * w + x)];
}

}  // namespace tryon
