#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tsgan::pngio {

void write_gray8(const std::string& path, const std::vector<uint8_t>& pixels, int64_t height,
                 int64_t width);
std::vector<uint8_t> read_gray8(const std::string& path, int64_t& height, int64_t& width);

// 16-bit samples are stored big-endian per the PNG spec; these helpers convert.
void write_gray16(const std::string& path, const std::vector<uint16_t>& pixels,
                  int64_t height, int64_t width);
std::vector<uint16_t> read_gray16(const std::string& path, int64_t& height, int64_t& width);

void write_rgb8(const std::string& path, const std::vector<uint8_t>& pixels, int64_t height,
                int64_t width);

}  // namespace tsgan::pngio
