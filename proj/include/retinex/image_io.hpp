#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "retinex/image.hpp"

namespace retinex {

/// 8-bit quantization: round half up, then clamp to [0,255].
inline std::uint8_t quantize_byte(double v) noexcept {
    const double scaled = std::floor(v * 255.0 + 0.5);
    if (!(scaled > 0.0)) return 0;
    if (scaled >= 255.0) return 255;
    return static_cast<std::uint8_t>(scaled);
}

inline double byte_to_unit(std::uint8_t b) noexcept { return static_cast<double>(b) / 255.0; }

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
    return bytes;
}

inline ColorImage image_from_rgb_bytes(std::size_t height, std::size_t width,
                                       const std::uint8_t* rgb) {
    ColorImage img(height, width);
    auto out = img.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = byte_to_unit(rgb[i]);
    return img;
}

inline std::vector<std::uint8_t> image_to_rgb_bytes(const ColorImage& img) {
    std::vector<std::uint8_t> bytes(img.values().size());
    std::transform(img.values().begin(), img.values().end(), bytes.begin(), quantize_byte);
    return bytes;
}

// ---------------------------------------------------------------- PPM (P6)

class PpmHeaderReader {
public:
    PpmHeaderReader(const std::vector<std::uint8_t>& bytes, const std::string& name)
        : bytes_(bytes), name_(name) {}

    std::size_t read_number() {
        skip_whitespace_and_comments();
        if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
            throw CorruptFileError("PPM header in '" + name_ + "': expected a number");
        }
        std::size_t value = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > (1u << 24)) throw CorruptFileError("PPM header in '" + name_ + "': number too large");
            ++pos_;
        }
        return value;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    void consume_single_whitespace() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw CorruptFileError("PPM header in '" + name_ + "': missing separator before raster");
        }
        ++pos_;
    }

    std::size_t position() const noexcept { return pos_; }
    void set_position(std::size_t p) noexcept { pos_ = p; }

private:
    void skip_whitespace_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    const std::string& name_;
    std::size_t pos_ = 0;
};

inline ColorImage decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    PpmHeaderReader reader(bytes, name);
    reader.set_position(2);
    const std::size_t width = reader.read_number();
    const std::size_t height = reader.read_number();
    const std::size_t maxval = reader.read_number();
    if (width == 0 || height == 0) throw CorruptFileError("PPM '" + name + "': zero dimension");
    if (maxval == 0 || maxval > 65535) throw CorruptFileError("PPM '" + name + "': invalid maxval");
    if (maxval != 255) {
        throw UnsupportedFormatError("PPM '" + name + "': maxval " + std::to_string(maxval) +
                                     " (only 8-bit, maxval 255, is supported)");
    }
    reader.consume_single_whitespace();
    const std::size_t expected = width * height * 3;
    if (bytes.size() - reader.position() < expected) {
        throw CorruptFileError("PPM '" + name + "': truncated raster");
    }
    return image_from_rgb_bytes(height, width, bytes.data() + reader.position());
}

inline void write_ppm(const ColorImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
    const auto bytes = image_to_rgb_bytes(img);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failure on '" + path.string() + "'");
}

// ---------------------------------------------------------------- PNG

struct PngMemoryReader {
    const std::vector<std::uint8_t>* bytes;
    std::size_t offset;
};

struct PngErrorSink {
    char message[256];
};

inline void png_error_to_sink(png_structp png, png_const_charp msg) {
    auto* sink = static_cast<PngErrorSink*>(png_get_error_ptr(png));
    std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
    png_longjmp(png, 1);
}

inline void png_warning_ignore(png_structp, png_const_charp) {}

inline void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
    auto* src = static_cast<PngMemoryReader*>(png_get_io_ptr(png));
    if (src->offset + count > src->bytes->size()) png_error(png, "unexpected end of data");
    std::memcpy(out, src->bytes->data() + src->offset, count);
    src->offset += count;
}

enum class PngStatus { ok, corrupt, unsupported };

struct PngHeader {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int bit_depth = 0;
    int color_type = 0;
};

// No C++ object with a non-trivial destructor may be constructed between
// setjmp and the end of this function.
inline PngStatus png_decode_raw(const std::vector<std::uint8_t>& bytes, PngHeader& header,
                                std::vector<std::uint8_t>& pixels, std::vector<png_bytep>& rows,
                                PngErrorSink& sink) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_to_sink,
                                             png_warning_ignore);
    if (png == nullptr) return PngStatus::corrupt;
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        return PngStatus::corrupt;
    }
    PngMemoryReader reader{&bytes, 0};
    PngStatus status = PngStatus::ok;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return PngStatus::corrupt;
    }
    png_set_read_fn(png, &reader, png_read_from_memory);
    png_read_info(png, info);
    header.width = png_get_image_width(png, info);
    header.height = png_get_image_height(png, info);
    header.bit_depth = png_get_bit_depth(png, info);
    header.color_type = png_get_color_type(png, info);

    const bool supported_layout =
        header.bit_depth == 8 &&
        (header.color_type == PNG_COLOR_TYPE_RGB || header.color_type == PNG_COLOR_TYPE_GRAY);
    if (!supported_layout || png_get_valid(png, info, PNG_INFO_tRNS) ||
        png_get_valid(png, info, PNG_INFO_iCCP)) {
        std::snprintf(sink.message, sizeof(sink.message),
                      "bit depth %d, color type %d (only 8-bit RGB or grayscale without "
                      "alpha or ICC profile is supported)",
                      header.bit_depth, header.color_type);
        status = PngStatus::unsupported;
    } else {
        png_set_interlace_handling(png);
        png_read_update_info(png, info);
        const std::size_t row_bytes = png_get_rowbytes(png, info);
        pixels.resize(row_bytes * header.height);
        rows.resize(header.height);
        for (png_uint_32 y = 0; y < header.height; ++y) rows[y] = pixels.data() + y * row_bytes;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return status;
}

inline ColorImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    PngHeader header;
    std::vector<std::uint8_t> pixels;
    std::vector<png_bytep> rows;
    PngErrorSink sink{};
    const PngStatus status = png_decode_raw(bytes, header, pixels, rows, sink);
    if (status == PngStatus::unsupported) {
        throw UnsupportedFormatError("PNG '" + name + "': " + sink.message);
    }
    if (status == PngStatus::corrupt) {
        throw CorruptFileError("PNG '" + name + "': " + std::string(sink.message));
    }
    if (header.color_type == PNG_COLOR_TYPE_RGB) {
        return image_from_rgb_bytes(header.height, header.width, pixels.data());
    }
    ColorImage img(header.height, header.width);
    auto out = img.values();
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const double v = byte_to_unit(pixels[i]);
        out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = v;
    }
    return img;
}

inline void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

inline void png_flush_noop(png_structp) {}

inline bool png_encode_raw(const std::vector<std::uint8_t>& rgb, png_uint_32 width,
                           png_uint_32 height, std::vector<std::uint8_t>& encoded,
                           std::vector<png_bytep>& rows, PngErrorSink& sink) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_to_sink,
                                              png_warning_ignore);
    if (png == nullptr) return false;
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_set_write_fn(png, &encoded, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) {
        rows[y] = const_cast<png_bytep>(rgb.data()) + static_cast<std::size_t>(y) * width * 3;
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

inline void write_png(const ColorImage& img, const std::filesystem::path& path) {
    const auto rgb = image_to_rgb_bytes(img);
    std::vector<std::uint8_t> encoded;
    std::vector<png_bytep> rows;
    PngErrorSink sink{};
    if (!png_encode_raw(rgb, static_cast<png_uint_32>(img.width()),
                        static_cast<png_uint_32>(img.height()), encoded, rows, sink)) {
        throw IoError("PNG encoding failed for '" + path.string() + "': " + sink.message);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(encoded.data()),
              static_cast<std::streamsize>(encoded.size()));
    if (!out) throw IoError("write failure on '" + path.string() + "'");
}

inline std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

}  // namespace detail

/// Loads an 8-bit PNG (RGB or grayscale) or binary PPM (P6); the format is
/// chosen from the file's magic bytes, not its extension.
inline ColorImage load_image(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    const std::string name = path.string();
    static constexpr std::array<std::uint8_t, 8> png_magic = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= png_magic.size() &&
        std::equal(png_magic.begin(), png_magic.end(), bytes.begin())) {
        return detail::decode_png(bytes, name);
    }
    if (bytes.size() >= 2 && bytes[0] == 'P') {
        if (bytes[1] == '6') return detail::decode_ppm(bytes, name);
        if (bytes[1] >= '1' && bytes[1] <= '7') {
            throw UnsupportedFormatError("'" + name + "': netpbm variant P" +
                                         std::string(1, static_cast<char>(bytes[1])) +
                                         " (only P6 is supported)");
        }
    }
    throw UnsupportedFormatError("'" + name + "': not a PNG or PPM file");
}

/// Writes PNG or PPM depending on the extension (.png / .ppm).
inline void save_image(const ColorImage& img, const std::filesystem::path& path) {
    for (double v : img.values()) {
        if (!std::isfinite(v)) throw InvariantError("save_image: non-finite value");
    }
    const std::string ext = detail::lower_extension(path);
    if (ext == ".png") {
        detail::write_png(img, path);
    } else if (ext == ".ppm") {
        detail::write_ppm(img, path);
    } else {
        throw UnsupportedFormatError("'" + path.string() + "': unknown output extension '" + ext + "'");
    }
}

}  // namespace retinex
