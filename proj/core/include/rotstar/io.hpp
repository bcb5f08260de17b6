#pragma once

#include <filesystem>
#include <string>

#include "rotstar/image.hpp"

namespace rotstar {

// Grey rasters are exported clamped to [0, 1] and quantised as round(v * (2^bits - 1)),
// bits in {8, 16}. Reading maps stored codes back by the inverse scale.
int quantize(double value, int bits);

void write_png(const std::filesystem::path& path, const ImageF& img, int bits = 8);
ImageF read_png(const std::filesystem::path& path);

// Binary PGM (P5), maxval 255 or 65535.
void write_pgm(const std::filesystem::path& path, const ImageF& img, int bits = 8);
ImageF read_pgm(const std::filesystem::path& path);

// Dispatch on extension (.png / .pgm).
void write_image(const std::filesystem::path& path, const ImageF& img, int bits = 8);
ImageF read_image(const std::filesystem::path& path);

// Scales to [0, 1] by the image maximum before export; for response maps and kernels.
void write_normalized_pgm(const std::filesystem::path& path, const ImageF& img);
void write_mask_pgm(const std::filesystem::path& path, const Mask& mask);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
void ensure_directory(const std::filesystem::path& dir);

}  // namespace rotstar
