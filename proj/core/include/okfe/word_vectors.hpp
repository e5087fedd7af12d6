#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace okfe {

inline constexpr std::size_t kWordVectorDim = 300;

struct SemanticVector {
  std::vector<float> values;  // kWordVectorDim entries
  std::size_t class_id = 0;
};

// One vector per class, class ids assigned in file order.
struct WordVectorTable {
  std::vector<std::string> labels;
  std::vector<SemanticVector> vectors;

  std::size_t size() const { return labels.size(); }
  // Throws ValidationError when the label is absent.
  std::size_t class_of(std::string_view label) const;
  const SemanticVector& at(std::size_t class_id) const;
};

// Whitespace-separated text: `label v1 ... v300` per line. Blank lines and
// lines starting with '#' are skipped. Diagnostics carry the line number.
WordVectorTable read_word_vectors(std::string_view text);
std::string write_word_vectors(const WordVectorTable& table);

}  // namespace okfe
