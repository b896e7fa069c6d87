#pragma once

#include <filesystem>

#include "structrep/synthgen.hpp"

namespace structrep {

// 8-bit PNG, RGB for 3-channel rasters and grayscale for 1-channel ones.
void write_png(const std::filesystem::path& path, const ImageRaster& image);
ImageRaster read_png(const std::filesystem::path& path);

// Quantises every value to k/255, matching what a PNG round trip produces.
ImageRaster quantize_8bit(const ImageRaster& image);

}  // namespace structrep
