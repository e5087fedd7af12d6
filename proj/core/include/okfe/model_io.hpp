#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "okfe/okfem.hpp"
#include "okfe/recognizer.hpp"

namespace okfe {

// Model container, little-endian:
//   magic (4 bytes) | u32 header length | header JSON | FTS1 record per array
// The header carries the configuration and the array names in visit order;
// arrays follow in the same order. "OKM1" holds an OKFEM model, "OKP1" the
// recognizer plugin together with its class labels.
std::vector<std::uint8_t> write_model(const OkfemModel& model);
OkfemModel read_model(std::span<const std::uint8_t> bytes);

struct PluginBundle {
  PluginParams params;
  std::vector<std::string> labels;  // class id order
};

std::vector<std::uint8_t> write_plugin(const PluginBundle& bundle);
PluginBundle read_plugin(std::span<const std::uint8_t> bytes);

void save_model(const std::filesystem::path& path, const OkfemModel& model);
OkfemModel load_model(const std::filesystem::path& path);
void save_plugin(const std::filesystem::path& path, const PluginBundle& bundle);
PluginBundle load_plugin(const std::filesystem::path& path);

}  // namespace okfe
