#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "okfe/tensor.hpp"

namespace okfe {

// FTS1 layout, all integers and floats little-endian:
//   "FTS1" | u32 ndims | ndims x u32 dims | prod(dims) x f32 (row-major)
inline constexpr std::string_view kFtsMagic = "FTS1";

std::vector<std::uint8_t> write_fts(const Tensor& tensor);

// Throws BadMagicError, TruncatedError or DimsOverflowError. Trailing bytes
// after the payload are rejected as a FormatError.
Tensor read_fts(std::span<const std::uint8_t> bytes);

// Parses one FTS1 record from the front of `bytes` and reports how many bytes
// it occupied; used for containers that concatenate several records.
Tensor read_fts_prefix(std::span<const std::uint8_t> bytes, std::size_t& consumed);

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

Tensor read_fts_file(const std::filesystem::path& path);
void write_fts_file(const std::filesystem::path& path, const Tensor& tensor);

// Splits a [F, ...] tensor into F tensors of the trailing shape and back.
std::vector<Tensor> unstack(const Tensor& stacked);
Tensor stack(const std::vector<Tensor>& items);

}  // namespace okfe
