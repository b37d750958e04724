#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cgcnn/nn.hpp"

namespace cgcnn {

// Binary bank container:
//   "CGCN" | version | d | w | b | s   (uint32 little-endian)
//   filters (feature, row, col, channel) then biases, float64 little-endian.
inline constexpr std::uint32_t kBankFormatVersion = 1;

std::vector<std::uint8_t> encode_bank(const ConvFeatureBank& bank);
ConvFeatureBank decode_bank(std::span<const std::uint8_t> bytes);

void write_bank(const ConvFeatureBank& bank, const std::filesystem::path& path);
ConvFeatureBank read_bank(const std::filesystem::path& path);

}  // namespace cgcnn
