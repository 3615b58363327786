#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cefmr {

// Self-describing container of named float64 arrays. Layout (see
// docs/param_blob.md):
//
//   bytes 0..7   magic "CEFMRPB1"
//   bytes 8..15  header length H, uint64 little-endian
//   next H bytes UTF-8 JSON header
//                  {"meta": {...}, "arrays": [{"name", "shape", "offset"}]}
//   remainder    payload of IEEE-754 doubles, little-endian, row-major;
//                `offset` counts doubles from the payload start
struct NamedArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

struct ParamBlob {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray& find(std::string_view name) const;

  std::string encode() const;
  static ParamBlob decode(std::string_view bytes);
};

}  // namespace cefmr
