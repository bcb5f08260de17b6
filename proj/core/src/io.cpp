#include "rotstar/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "rotstar/error.hpp"

namespace rotstar {
namespace fs = std::filesystem;

namespace {

void check_bits(int bits) {
    if (bits != 8 && bits != 16) throw ConfigError("bits: must be 8 or 16, got " + std::to_string(bits));
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f != nullptr) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

}  // namespace

int quantize(double value, int bits) {
    check_bits(bits);
    const double max_code = static_cast<double>((1 << bits) - 1);
    return static_cast<int>(std::lround(std::clamp(value, 0.0, 1.0) * max_code));
}

void write_png(const fs::path& path, const ImageF& img, int bits) {
    check_bits(bits);
    auto file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed for " + path.string());
    }
    const int bytes = bits / 8;
    std::vector<png_byte> row(static_cast<std::size_t>(img.width()) * bytes);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), bits,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const int q = quantize(img.at(x, y), bits);
            if (bits == 8) {
                row[static_cast<std::size_t>(x)] = static_cast<png_byte>(q);
            } else {
                row[2 * static_cast<std::size_t>(x)] = static_cast<png_byte>(q >> 8);  // PNG is big-endian
                row[2 * static_cast<std::size_t>(x) + 1] = static_cast<png_byte>(q & 0xff);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

ImageF read_png(const fs::path& path) {
    auto file = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed for " + path.string());
    }
    std::vector<png_byte> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed reading PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    int bits = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && bits < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
        bits = 8;
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);
    bits = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageF img(static_cast<int>(w), static_cast<int>(h));
    const double scale = 1.0 / ((1 << bits) - 1);
    for (png_uint_32 y = 0; y < h; ++y) {
        for (png_uint_32 x = 0; x < w; ++x) {
            const png_byte* p = rows[y] + (bits == 16 ? 2 * x : x);
            const int code = bits == 16 ? (p[0] << 8) | p[1] : p[0];
            img.at(static_cast<int>(x), static_cast<int>(y)) = code * scale;
        }
    }
    return img;
}

void write_pgm(const fs::path& path, const ImageF& img, int bits) {
    check_bits(bits);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string());
    out << "P5\n" << img.width() << ' ' << img.height() << '\n' << ((1 << bits) - 1) << '\n';
    std::vector<char> row(static_cast<std::size_t>(img.width()) * (bits / 8));
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const int q = quantize(img.at(x, y), bits);
            if (bits == 8) {
                row[static_cast<std::size_t>(x)] = static_cast<char>(q);
            } else {
                row[2 * static_cast<std::size_t>(x)] = static_cast<char>(q >> 8);
                row[2 * static_cast<std::size_t>(x) + 1] = static_cast<char>(q & 0xff);
            }
        }
        out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("failed writing " + path.string());
}

ImageF read_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    auto next_token = [&]() {
        std::string tok;
        while (in) {
            const int c = in.get();
            if (c == '#') {
                std::string skip;
                std::getline(in, skip);
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) break;
                continue;
            }
            if (c == EOF) break;
            tok.push_back(static_cast<char>(c));
        }
        return tok;
    };
    const std::string magic = next_token();
    if (magic != "P5" && magic != "P2") throw IoError("not a PGM file: " + path.string());
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw IoError("malformed PGM header in " + path.string());
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw IoError("malformed PGM header in " + path.string());
    ImageF img(w, h);
    const double scale = 1.0 / maxval;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int code = 0;
            if (magic == "P2") {
                code = std::stoi(next_token());
            } else if (maxval < 256) {
                code = in.get();
            } else {
                const int hi = in.get();
                code = (hi << 8) | in.get();
            }
            if (!in) throw IoError("truncated PGM data in " + path.string());
            img.at(x, y) = code * scale;
        }
    }
    return img;
}

namespace {

std::string lower_extension(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

}  // namespace

void write_image(const fs::path& path, const ImageF& img, int bits) {
    const auto ext = lower_extension(path);
    if (ext == ".png") return write_png(path, img, bits);
    if (ext == ".pgm") return write_pgm(path, img, bits);
    throw IoError("unsupported image extension: " + path.string());
}

ImageF read_image(const fs::path& path) {
    const auto ext = lower_extension(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".pgm") return read_pgm(path);
    throw IoError("unsupported image extension: " + path.string());
}

void write_normalized_pgm(const fs::path& path, const ImageF& img) {
    double hi = 0.0;
    for (double v : img.pixels()) hi = std::max(hi, v);
    ImageF scaled = img;
    if (hi > 0.0) {
        for (double& v : scaled.pixels()) v /= hi;
    }
    write_pgm(path, scaled, 16);
}

void write_mask_pgm(const fs::path& path, const Mask& mask) {
    ImageF img(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) img.at(x, y) = mask.at(x, y) ? 1.0 : 0.0;
    }
    write_pgm(path, img, 8);
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace rotstar
