#include "okfe/word_vectors.hpp"

#include <charconv>
#include <cctype>
#include <cmath>
#include <sstream>

#include "okfe/error.hpp"

namespace okfe {

std::size_t WordVectorTable::class_of(std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return i;
  }
  throw ValidationError("no word vector for class '" + std::string(label) + "'");
}

const SemanticVector& WordVectorTable::at(std::size_t class_id) const {
  if (class_id >= vectors.size()) {
    throw ValidationError("no word vector for class id " + std::to_string(class_id));
  }
  return vectors[class_id];
}

WordVectorTable read_word_vectors(std::string_view text) {
  WordVectorTable table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      const std::size_t start = i;
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i > start) tokens.push_back(line.substr(start, i - start));
    }
    if (tokens.empty() || tokens.front().starts_with('#')) continue;

    const std::string where = "word vectors line " + std::to_string(line_no);
    if (tokens.size() != kWordVectorDim + 1) {
      throw ValidationError(where + ": expected label plus " +
                            std::to_string(kWordVectorDim) + " values, found " +
                            std::to_string(tokens.size() - 1));
    }
    SemanticVector vec;
    vec.class_id = table.labels.size();
    vec.values.reserve(kWordVectorDim);
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      float v = 0.0f;
      const auto tok = tokens[t];
      const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || end != tok.data() + tok.size() || !std::isfinite(v)) {
        throw ValidationError(where + ": value " + std::to_string(t) + " ('" +
                              std::string(tok) + "') is not a finite number");
      }
      vec.values.push_back(v);
    }
    const std::string label(tokens.front());
    for (const auto& existing : table.labels) {
      if (existing == label) throw ValidationError(where + ": duplicate label '" + label + "'");
    }
    table.labels.push_back(label);
    table.vectors.push_back(std::move(vec));
  }
  return table;
}

std::string write_word_vectors(const WordVectorTable& table) {
  std::ostringstream out;
  out.precision(9);
  for (std::size_t c = 0; c < table.size(); ++c) {
    out << table.labels[c];
    for (float v : table.vectors[c].values) out << ' ' << v;
    out << '\n';
  }
  return out.str();
}

}  // namespace okfe
