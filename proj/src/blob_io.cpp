#include "dor/blob_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace dor {
namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

}  // namespace

void write_f32_blob(const std::filesystem::path& path, std::span<const float> values) {
  std::vector<std::uint32_t> words(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) words[i] = to_le(std::bit_cast<std::uint32_t>(values[i]));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_f32_blob(const std::filesystem::path& path, std::span<const double> values) {
  std::vector<float> f(values.begin(), values.end());
  write_f32_blob(path, std::span<const float>(f));
}

std::vector<float> read_f32_blob(const std::filesystem::path& path, std::size_t expected) {
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(path, ec);
  if (ec) throw std::runtime_error("cannot stat " + path.string() + ": " + ec.message());
  if (bytes != expected * sizeof(float)) {
    throw TruncatedBlobError(path.string() + ": expected " + std::to_string(expected * sizeof(float)) +
                             " bytes, found " + std::to_string(bytes));
  }
  std::vector<std::uint32_t> words(expected);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw TruncatedBlobError("short read: " + path.string());
  std::vector<float> out(expected);
  for (std::size_t i = 0; i < expected; ++i) out[i] = std::bit_cast<float>(to_le(words[i]));
  return out;
}

}  // namespace dor
