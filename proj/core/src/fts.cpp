#include "okfe/fts.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "okfe/error.hpp"

namespace okfe {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> write_fts(const Tensor& tensor) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * tensor.rank() + 4 * tensor.size());
  out.insert(out.end(), kFtsMagic.begin(), kFtsMagic.end());
  put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      throw DimsOverflowError("FTS1: dimension " + std::to_string(d) +
                              " does not fit in 32 bits");
    }
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (float v : tensor.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor read_fts_prefix(std::span<const std::uint8_t> bytes, std::size_t& consumed) {
  if (bytes.size() < 4) throw TruncatedError("FTS1: missing magic");
  if (std::memcmp(bytes.data(), kFtsMagic.data(), 4) != 0) {
    throw BadMagicError("FTS1: bad magic '" +
                        std::string(reinterpret_cast<const char*>(bytes.data()), 4) +
                        "'");
  }
  if (bytes.size() < 8) throw TruncatedError("FTS1: missing ndims");
  const std::uint32_t ndims = get_u32(bytes, 4);
  const std::size_t header = 8 + 4 * static_cast<std::size_t>(ndims);
  if (bytes.size() < header) {
    throw TruncatedError("FTS1: header declares " + std::to_string(ndims) +
                         " dims but only " + std::to_string(bytes.size()) +
                         " bytes present");
  }
  Shape shape(ndims);
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < ndims; ++i) {
    shape[i] = get_u32(bytes, 8 + 4 * i);
    if (shape[i] != 0 &&
        count > std::numeric_limits<std::size_t>::max() / 4 / shape[i]) {
      throw DimsOverflowError("FTS1: element count of " + to_string(shape) +
                              " overflows");
    }
    count *= shape[i];
  }
  const std::size_t payload = 4 * count;
  if (bytes.size() - header < payload) {
    throw TruncatedError("FTS1: payload needs " + std::to_string(payload) +
                         " bytes, found " + std::to_string(bytes.size() - header));
  }
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
  }
  consumed = header + payload;
  return Tensor(std::move(shape), std::move(values));
}

Tensor read_fts(std::span<const std::uint8_t> bytes) {
  std::size_t consumed = 0;
  Tensor t = read_fts_prefix(bytes, consumed);
  if (consumed != bytes.size()) {
    throw FormatError("FTS1: " + std::to_string(bytes.size() - consumed) +
                      " trailing bytes after payload");
  }
  return t;
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

Tensor read_fts_file(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  try {
    return read_fts(bytes);
  } catch (const BadMagicError& e) {
    throw BadMagicError(path.string() + ": " + e.what());
  } catch (const TruncatedError& e) {
    throw TruncatedError(path.string() + ": " + e.what());
  } catch (const DimsOverflowError& e) {
    throw DimsOverflowError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_fts_file(const std::filesystem::path& path, const Tensor& tensor) {
  write_file_atomic(path, write_fts(tensor));
}

std::vector<Tensor> unstack(const Tensor& stacked) {
  if (stacked.rank() < 1) throw ShapeError("unstack needs rank >= 1");
  Shape inner(stacked.shape().begin() + 1, stacked.shape().end());
  const std::size_t n = stacked.shape()[0];
  const std::size_t step = element_count(inner);
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto first = stacked.values().begin() + static_cast<std::ptrdiff_t>(i * step);
    out.emplace_back(inner, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(step)));
  }
  return out;
}

Tensor stack(const std::vector<Tensor>& items) {
  if (items.empty()) throw ShapeError("stack needs at least one tensor");
  Shape shape{items.size()};
  shape.insert(shape.end(), items.front().shape().begin(), items.front().shape().end());
  std::vector<float> values;
  values.reserve(element_count(shape));
  for (const auto& t : items) {
    require_same_shape(t, items.front(), "stack");
    values.insert(values.end(), t.values().begin(), t.values().end());
  }
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace okfe
