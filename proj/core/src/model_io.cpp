#include "okfe/model_io.hpp"

#include <cstring>
#include <string_view>

#include <nlohmann/json.hpp>

#include "okfe/error.hpp"
#include "okfe/fts.hpp"

namespace okfe {

namespace {

using nlohmann::ordered_json;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::vector<std::uint8_t> frame_container(std::string_view magic, const ordered_json& header,
                                          const std::vector<Tensor>& arrays) {
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(magic.begin(), magic.end());
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const Tensor& t : arrays) {
    const auto rec = write_fts(t);
    out.insert(out.end(), rec.begin(), rec.end());
  }
  return out;
}

struct Container {
  nlohmann::json header;
  std::span<const std::uint8_t> payload;
};

Container open_container(std::string_view magic, std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), magic.data(), 4) != 0) {
    throw BadMagicError("model file: expected magic " + std::string(magic));
  }
  if (bytes.size() < 8) throw TruncatedError("model file: missing header length");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= std::uint32_t{bytes[4 + i]} << (8 * i);
  if (bytes.size() - 8 < len) throw TruncatedError("model file: header cut short");
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: bad header: ") + e.what());
  }
  c.payload = bytes.subspan(8 + len);
  return c;
}

// Reads one array per name into the spans handed out by `visit`.
template <typename Visit>
void fill_arrays(std::span<const std::uint8_t> payload, const nlohmann::json& names,
                 Visit&& visit) {
  std::size_t index = 0;
  visit([&](const std::string& name, std::span<float> dst) {
    if (index >= names.size() || names[index].get<std::string>() != name) {
      throw FormatError("model file: array " + std::to_string(index) + " should be " + name);
    }
    std::size_t used = 0;
    const Tensor t = read_fts_prefix(payload, used);
    payload = payload.subspan(used);
    if (t.size() != dst.size()) {
      throw ShapeError("model file: array " + name + " has " + std::to_string(t.size()) +
                       " values, expected " + std::to_string(dst.size()));
    }
    std::copy(t.values().begin(), t.values().end(), dst.begin());
    ++index;
  });
  if (index != names.size()) throw FormatError("model file: unexpected extra arrays");
  if (!payload.empty()) throw FormatError("model file: trailing bytes after last array");
}

template <typename T>
T field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("model file: header lacks ") + key);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(std::string("model file: header field ") + key + " has the wrong type");
  }
}

const char* const kPluginNames[] = {"fc1.weight", "fc1.bias", "fc2.weight",
                                    "fc2.bias",   "head.weight", "head.bias"};

}  // namespace

std::vector<std::uint8_t> write_model(const OkfemModel& model) {
  model.validate();
  const OkfemConfig& c = model.config;
  ordered_json header = {{"channels", c.channels},
                         {"height", c.height},
                         {"width", c.width},
                         {"backbone_layers", c.backbone_layers},
                         {"backbone_channels", c.backbone_channels},
                         {"deform_kernel_size", c.deform_kernel_size},
                         {"appearance_kernel_size", c.appearance_kernel_size},
                         {"first_frame_policy", std::string(to_string(c.first_frame_policy))},
                         {"threshold_init", c.threshold_init}};
  std::vector<Tensor> arrays;
  ordered_json names = ordered_json::array();
  model.for_each_parameter([&](const std::string& name, std::span<const float> v) {
    names.push_back(name);
    arrays.emplace_back(Shape{v.size()}, std::vector<float>(v.begin(), v.end()));
  });
  header["arrays"] = names;
  return frame_container("OKM1", header, arrays);
}

OkfemModel read_model(std::span<const std::uint8_t> bytes) {
  const Container c = open_container("OKM1", bytes);
  OkfemConfig cfg;
  cfg.channels = field<std::size_t>(c.header, "channels");
  cfg.height = field<std::size_t>(c.header, "height");
  cfg.width = field<std::size_t>(c.header, "width");
  cfg.backbone_layers = field<std::size_t>(c.header, "backbone_layers");
  cfg.backbone_channels = field<std::size_t>(c.header, "backbone_channels");
  cfg.deform_kernel_size = field<std::size_t>(c.header, "deform_kernel_size");
  cfg.appearance_kernel_size = field<std::size_t>(c.header, "appearance_kernel_size");
  cfg.first_frame_policy =
      parse_first_frame_policy(field<std::string>(c.header, "first_frame_policy"));
  cfg.threshold_init = field<double>(c.header, "threshold_init");
  OkfemModel model = make_model(cfg, 0);
  fill_arrays(c.payload, field<nlohmann::json>(c.header, "arrays"),
              [&](auto&& fn) { model.for_each_parameter(fn); });
  model.validate();
  return model;
}

std::vector<std::uint8_t> write_plugin(const PluginBundle& bundle) {
  bundle.params.validate();
  if (bundle.labels.size() != bundle.params.num_classes()) {
    throw ShapeError("plugin: " + std::to_string(bundle.labels.size()) + " labels for " +
                     std::to_string(bundle.params.num_classes()) + " classes");
  }
  ordered_json header = {{"visual_dim", bundle.params.visual_dim()},
                         {"num_classes", bundle.params.num_classes()},
                         {"labels", bundle.labels},
                         {"arrays", kPluginNames}};
  std::vector<Tensor> arrays;
  bundle.params.for_each_parameter([&](std::span<const float> v) {
    arrays.emplace_back(Shape{v.size()}, std::vector<float>(v.begin(), v.end()));
  });
  return frame_container("OKP1", header, arrays);
}

PluginBundle read_plugin(std::span<const std::uint8_t> bytes) {
  const Container c = open_container("OKP1", bytes);
  PluginBundle b;
  const auto visual = field<std::size_t>(c.header, "visual_dim");
  const auto classes = field<std::size_t>(c.header, "num_classes");
  if (classes == 0) throw FormatError("plugin: zero classes");
  b.labels = field<std::vector<std::string>>(c.header, "labels");
  if (b.labels.size() != classes) throw FormatError("plugin: label count mismatch");
  b.params = PluginParams::zeros(visual, classes);
  std::size_t i = 0;
  fill_arrays(c.payload, field<nlohmann::json>(c.header, "arrays"), [&](auto&& fn) {
    b.params.for_each_parameter([&](std::span<float> v) { fn(kPluginNames[i++], v); });
  });
  b.params.validate();
  return b;
}

void save_model(const std::filesystem::path& path, const OkfemModel& model) {
  write_file_atomic(path, write_model(model));
}

OkfemModel load_model(const std::filesystem::path& path) {
  return read_model(read_binary_file(path));
}

void save_plugin(const std::filesystem::path& path, const PluginBundle& bundle) {
  write_file_atomic(path, write_plugin(bundle));
}

PluginBundle load_plugin(const std::filesystem::path& path) {
  return read_plugin(read_binary_file(path));
}

}  // namespace okfe
