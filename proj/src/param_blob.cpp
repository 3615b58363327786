#include "cefmr/param_blob.hpp"

#include <bit>
#include <cstring>
#include <numeric>

#include "cefmr/error.hpp"

namespace cefmr {
namespace {

constexpr std::string_view kMagic = "CEFMRPB1";

static_assert(std::endian::native == std::endian::little,
              "blob codec assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t get_u64(std::string_view in, std::size_t pos) {
  std::uint64_t v = 0;
  std::memcpy(&v, in.data() + pos, 8);
  return v;
}

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

const NamedArray& ParamBlob::find(std::string_view name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw SchemaError("param blob: missing array '" + std::string(name) + "'");
}

std::string ParamBlob::encode() const {
  nlohmann::json header;
  header["meta"] = meta;
  header["arrays"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& a : arrays) {
    if (product(a.shape) != a.values.size()) {
      throw ShapeError("param blob: array '" + a.name + "' value count does not match shape");
    }
    header["arrays"].push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}});
    offset += a.values.size();
  }
  const std::string header_text = header.dump();

  std::string out;
  out.reserve(kMagic.size() + 8 + header_text.size() + offset * sizeof(double));
  out.append(kMagic);
  put_u64(out, header_text.size());
  out.append(header_text);
  for (const auto& a : arrays) {
    out.append(reinterpret_cast<const char*>(a.values.data()),
               a.values.size() * sizeof(double));
  }
  return out;
}

ParamBlob ParamBlob::decode(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw ParseError("param blob: bad magic or truncated preamble");
  }
  const std::uint64_t header_len = get_u64(bytes, kMagic.size());
  const std::size_t header_start = kMagic.size() + 8;
  if (header_len > bytes.size() - header_start) {
    throw ParseError("param blob: header length exceeds blob size");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(header_start, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("param blob: malformed header: ") + e.what());
  }
  const std::string_view payload = bytes.substr(header_start + header_len);
  if (payload.size() % sizeof(double) != 0) {
    throw ParseError("param blob: payload is not a whole number of doubles");
  }
  const std::size_t n_doubles = payload.size() / sizeof(double);

  ParamBlob blob;
  try {
    blob.meta = header.value("meta", nlohmann::json::object());
    std::size_t expected_offset = 0;
    for (const auto& entry : header.at("arrays")) {
      NamedArray a;
      a.name = entry.at("name").get<std::string>();
      a.shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const std::size_t count = product(a.shape);
      if (offset != expected_offset || offset + count > n_doubles) {
        throw ParseError("param blob: array '" + a.name + "' runs past the payload");
      }
      a.values.resize(count);
      std::memcpy(a.values.data(), payload.data() + offset * sizeof(double),
                  count * sizeof(double));
      expected_offset += count;
      blob.arrays.push_back(std::move(a));
    }
    if (expected_offset != n_doubles) {
      throw ParseError("param blob: trailing payload bytes");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("param blob: bad header entry: ") + e.what());
  }
  return blob;
}

}  // namespace cefmr
