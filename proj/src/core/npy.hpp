#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mrct::npy {

// Minimal NPY v1.0 support: little-endian '<f4' and '|u1' C-order 2-D arrays,
// which is all the dataset format uses. The exact byte layout is documented
// in the repository README.

void write_f32(const std::filesystem::path& path, const std::vector<double>& values, int rows, int cols);
void write_u8(const std::filesystem::path& path, const std::vector<std::uint8_t>& values, int rows, int cols);

std::vector<double> read_f32(const std::filesystem::path& path, int& rows, int& cols);
std::vector<std::uint8_t> read_u8(const std::filesystem::path& path, int& rows, int& cols);

} // namespace mrct::npy
