#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "json.hpp"

#include "haze/errors.hpp"
#include "haze/geometry.hpp"
#include "haze/image.hpp"

namespace haze {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// PFM (portable float map): "PF"/"Pf" header, width height, scale line whose
// sign encodes endianness, then float32 scanlines stored bottom-to-top.
// Files are written little-endian with scale -1.0.
// ---------------------------------------------------------------------------

struct PfmData {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> v;  // row-major top-to-bottom, channel-interleaved
};

namespace detail {

inline float byteswap_f32(float x) {
    std::uint32_t u;
    std::memcpy(&u, &x, 4);
    u = ((u & 0x000000ffu) << 24) | ((u & 0x0000ff00u) << 8) | ((u & 0x00ff0000u) >> 8) |
        ((u & 0xff000000u) >> 24);
    std::memcpy(&x, &u, 4);
    return x;
}

inline std::string next_pfm_token(std::istream& in) {
    std::string tok;
    char ch;
    while (in.get(ch)) {
        if (ch == '#') {  // comment to end of line
            std::string line;
            std::getline(in, line);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(ch);
    }
    return tok;
}

inline void write_pfm_impl(const std::string& path, int h, int w, int channels,
                           const std::vector<double>& v) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot open for writing: " + path);
    out << (channels == 3 ? "PF" : "Pf") << "\n" << w << " " << h << "\n" << "-1.0" << "\n";
    std::vector<float> row(static_cast<std::size_t>(w) * channels);
    for (int i = h - 1; i >= 0; --i) {
        const double* src = v.data() + static_cast<std::size_t>(i) * w * channels;
        for (std::size_t k = 0; k < row.size(); ++k) {
            float f = static_cast<float>(src[k]);
            if constexpr (std::endian::native == std::endian::big) f = byteswap_f32(f);
            row[k] = f;
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * 4));
    }
    if (!out) throw IngestionError("write failed: " + path);
}

}  // namespace detail

inline PfmData read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open: " + path);
    const std::string magic = detail::next_pfm_token(in);
    int channels;
    if (magic == "PF")
        channels = 3;
    else if (magic == "Pf")
        channels = 1;
    else
        throw IngestionError("not a PFM file: " + path);

    PfmData d;
    d.channels = channels;
    try {
        d.width = std::stoi(detail::next_pfm_token(in));
        d.height = std::stoi(detail::next_pfm_token(in));
    } catch (const std::exception&) {
        throw IngestionError("malformed PFM header: " + path);
    }
    const double scale = std::stod(detail::next_pfm_token(in));
    if (d.width <= 0 || d.height <= 0) throw IngestionError("bad PFM dimensions: " + path);
    const bool file_little = scale < 0.0;

    const std::size_t per_row = static_cast<std::size_t>(d.width) * channels;
    std::vector<float> row(per_row);
    d.v.resize(static_cast<std::size_t>(d.height) * per_row);
    for (int i = d.height - 1; i >= 0; --i) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(per_row * 4));
        if (!in) throw IngestionError("truncated PFM data: " + path);
        double* dst = d.v.data() + static_cast<std::size_t>(i) * per_row;
        const bool swap = file_little != (std::endian::native == std::endian::little);
        for (std::size_t k = 0; k < per_row; ++k)
            dst[k] = static_cast<double>(swap ? detail::byteswap_f32(row[k]) : row[k]);
    }
    return d;
}

inline ScalarField read_pfm_scalar(const std::string& path) {
    PfmData d = read_pfm(path);
    if (d.channels != 1) throw IngestionError("expected single-channel PFM: " + path);
    ScalarField f(d.height, d.width);
    f.v = std::move(d.v);
    return f;
}

inline RasterImage read_pfm_image(const std::string& path) {
    PfmData d = read_pfm(path);
    if (d.channels != 3) throw IngestionError("expected three-channel PFM: " + path);
    RasterImage img(d.height, d.width);
    img.v = std::move(d.v);
    return img;
}

inline void write_pfm(const std::string& path, const ScalarField& f) {
    detail::write_pfm_impl(path, f.height, f.width, 1, f.v);
}

inline void write_pfm(const std::string& path, const RasterImage& img) {
    detail::write_pfm_impl(path, img.height, img.width, 3, img.v);
}

// ---------------------------------------------------------------------------
// PNG: 8-bit RGB for images (intensities scaled by 255), 16-bit grayscale for
// depth maps (metric value = raw / scale, scale from the sidecar), 8-bit
// grayscale for masks.
// ---------------------------------------------------------------------------

namespace detail {

struct PngRead {
    std::FILE* f = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngRead() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (f) std::fclose(f);
    }
};

struct PngWrite {
    std::FILE* f = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWrite() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (f) std::fclose(f);
    }
};

inline void open_png_reader(PngRead& ctx, const std::string& path) {
    ctx.f = std::fopen(path.c_str(), "rb");
    if (!ctx.f) throw IngestionError("cannot open: " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = ctx.png ? png_create_info_struct(ctx.png) : nullptr;
    if (!ctx.png || !ctx.info) throw IngestionError("libpng init failed: " + path);
}

inline void open_png_writer(PngWrite& ctx, const std::string& path) {
    ctx.f = std::fopen(path.c_str(), "wb");
    if (!ctx.f) throw IngestionError("cannot open for writing: " + path);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = ctx.png ? png_create_info_struct(ctx.png) : nullptr;
    if (!ctx.png || !ctx.info) throw IngestionError("libpng init failed: " + path);
}

}  // namespace detail

/// Reads any PNG as 8-bit RGB intensities in [0,1] (palette expanded, alpha
/// stripped, 16-bit narrowed).
inline RasterImage read_png_rgb8(const std::string& path) {
    detail::PngRead ctx;
    detail::open_png_reader(ctx, path);
    if (setjmp(png_jmpbuf(ctx.png))) throw IngestionError("libpng read error: " + path);

    png_init_io(ctx.png, ctx.f);
    png_read_info(ctx.png, ctx.info);
    png_set_expand(ctx.png);
    png_set_strip_16(ctx.png);
    png_set_strip_alpha(ctx.png);
    png_set_gray_to_rgb(ctx.png);
    png_set_interlace_handling(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    const int w = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    const int h = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    if (png_get_channels(ctx.png, ctx.info) != 3)
        throw IngestionError("unexpected channel count after PNG transforms: " + path);

    std::vector<std::uint8_t> data(static_cast<std::size_t>(h) * w * 3);
    std::vector<png_bytep> rows(h);
    for (int i = 0; i < h; ++i) rows[i] = data.data() + static_cast<std::size_t>(i) * w * 3;
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);

    RasterImage img(h, w);
    for (std::size_t k = 0; k < img.v.size(); ++k) img.v[k] = data[k] / 255.0;
    return img;
}

/// Writes intensities as 8-bit RGB, rounding clamp(x,0,1)*255.
inline void write_png_rgb8(const std::string& path, const RasterImage& img) {
    std::vector<std::uint8_t> data(img.v.size());
    for (std::size_t k = 0; k < img.v.size(); ++k) {
        const double x = std::clamp(img.v[k], 0.0, 1.0);
        data[k] = static_cast<std::uint8_t>(std::lround(x * 255.0));
    }
    detail::PngWrite ctx;
    detail::open_png_writer(ctx, path);
    if (setjmp(png_jmpbuf(ctx.png))) throw IngestionError("libpng write error: " + path);
    png_init_io(ctx.png, ctx.f);
    png_set_IHDR(ctx.png, ctx.info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<png_bytep> rows(img.height);
    for (int i = 0; i < img.height; ++i)
        rows[i] = data.data() + static_cast<std::size_t>(i) * img.width * 3;
    png_write_image(ctx.png, rows.data());
    png_write_end(ctx.png, nullptr);
}

/// Reads a 16-bit grayscale PNG depth map; metric depth = raw / scale.
inline ScalarField read_png16_depth(const std::string& path, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("read_png16_depth: scale must be positive");
    detail::PngRead ctx;
    detail::open_png_reader(ctx, path);
    if (setjmp(png_jmpbuf(ctx.png))) throw IngestionError("libpng read error: " + path);

    png_init_io(ctx.png, ctx.f);
    png_read_info(ctx.png, ctx.info);
    if (png_get_bit_depth(ctx.png, ctx.info) != 16 ||
        png_get_color_type(ctx.png, ctx.info) != PNG_COLOR_TYPE_GRAY)
        throw IngestionError("expected 16-bit grayscale PNG: " + path);
    if constexpr (std::endian::native == std::endian::little) png_set_swap(ctx.png);
    png_set_interlace_handling(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    const int w = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    const int h = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    std::vector<std::uint16_t> data(static_cast<std::size_t>(h) * w);
    std::vector<png_bytep> rows(h);
    for (int i = 0; i < h; ++i)
        rows[i] = reinterpret_cast<png_bytep>(data.data() + static_cast<std::size_t>(i) * w);
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);

    ScalarField f(h, w);
    for (std::size_t k = 0; k < f.v.size(); ++k) f.v[k] = data[k] / scale;
    return f;
}

inline void write_png16_depth(const std::string& path, const ScalarField& depth, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("write_png16_depth: scale must be positive");
    std::vector<std::uint16_t> data(depth.v.size());
    for (std::size_t k = 0; k < depth.v.size(); ++k) {
        const double x = std::clamp(depth.v[k] * scale, 0.0, 65535.0);
        data[k] = static_cast<std::uint16_t>(std::lround(x));
    }
    detail::PngWrite ctx;
    detail::open_png_writer(ctx, path);
    if (setjmp(png_jmpbuf(ctx.png))) throw IngestionError("libpng write error: " + path);
    png_init_io(ctx.png, ctx.f);
    png_set_IHDR(ctx.png, ctx.info, depth.width, depth.height, 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    if constexpr (std::endian::native == std::endian::little) png_set_swap(ctx.png);
    std::vector<png_bytep> rows(depth.height);
    for (int i = 0; i < depth.height; ++i)
        rows[i] = reinterpret_cast<png_bytep>(data.data() + static_cast<std::size_t>(i) * depth.width);
    png_write_image(ctx.png, rows.data());
    png_write_end(ctx.png, nullptr);
}

/// Writes a mask as 8-bit grayscale, 255 where set.
inline void write_png_mask(const std::string& path, const BoolField& mask) {
    std::vector<std::uint8_t> data(mask.v.size());
    for (std::size_t k = 0; k < mask.v.size(); ++k) data[k] = mask.v[k] ? 255 : 0;
    detail::PngWrite ctx;
    detail::open_png_writer(ctx, path);
    if (setjmp(png_jmpbuf(ctx.png))) throw IngestionError("libpng write error: " + path);
    png_init_io(ctx.png, ctx.f);
    png_set_IHDR(ctx.png, ctx.info, mask.width, mask.height, 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<png_bytep> rows(mask.height);
    for (int i = 0; i < mask.height; ++i)
        rows[i] = data.data() + static_cast<std::size_t>(i) * mask.width;
    png_write_image(ctx.png, rows.data());
    png_write_end(ctx.png, nullptr);
}

// ---------------------------------------------------------------------------
// JSON documents (sidecars, manifests, reports, intrinsics).
// ---------------------------------------------------------------------------

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw IngestionError("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IngestionError("write failed: " + path);
}

inline CameraIntrinsics read_intrinsics(const std::string& path) {
    const json j = read_json_file(path);
    CameraIntrinsics k;
    try {
        k.fx = j.at("fx").get<double>();
        k.fy = j.at("fy").get<double>();
        k.cx = j.at("cx").get<double>();
        k.cy = j.at("cy").get<double>();
        k.width = j.value("width", 0);
        k.height = j.value("height", 0);
    } catch (const json::exception& e) {
        throw IngestionError("bad intrinsics document " + path + ": " + e.what());
    }
    k.validate();
    return k;
}

inline void write_intrinsics(const std::string& path, const CameraIntrinsics& k) {
    json j{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
           {"width", k.width}, {"height", k.height}};
    write_json_file(path, j);
}

/// Reads an image by extension: .png as 8-bit RGB, .pfm as float RGB.
inline RasterImage read_image_any(const std::string& path) {
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".pfm") return read_pfm_image(path);
    if (ext == ".png") return read_png_rgb8(path);
    throw IngestionError("unsupported image format: " + path);
}

inline void write_image_any(const std::string& path, const RasterImage& img) {
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".pfm") {
        write_pfm(path, img);
        return;
    }
    if (ext == ".png") {
        write_png_rgb8(path, img);
        return;
    }
    throw IngestionError("unsupported image format: " + path);
}

}  // namespace haze
