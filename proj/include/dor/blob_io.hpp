#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace dor {

class TruncatedBlobError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raw little-endian IEEE-754 binary32, no header.
void write_f32_blob(const std::filesystem::path& path, std::span<const float> values);
void write_f32_blob(const std::filesystem::path& path, std::span<const double> values);
// Throws TruncatedBlobError when the file holds a different element count.
std::vector<float> read_f32_blob(const std::filesystem::path& path, std::size_t expected);

}  // namespace dor
