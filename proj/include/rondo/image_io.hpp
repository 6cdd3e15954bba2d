#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

namespace rondo {

// 8-bit PNG writers. `pixels` is row-major; RGB is interleaved.
void write_gray_png(const std::filesystem::path& file, int width, int height, std::span<const std::uint8_t> pixels);
void write_rgb_png(const std::filesystem::path& file, int width, int height, std::span<const std::uint8_t> pixels);

}  // namespace rondo
