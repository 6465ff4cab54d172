#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dor/autograd.hpp"
#include "dor/geometry.hpp"
#include "dor/grid.hpp"

namespace dor {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class HeadKind { Ordinal, Offset };

std::string to_string(HeadKind kind);
HeadKind parse_head_kind(const std::string& s);

// Shape contract of the ordinal heads. The x head merges the feature-map width
// with its channels into (A, K_x, logits), so K_x * A must divide evenly by
// W/s; the y head does the same over the height.
struct HeadConfig {
  std::size_t kx = 0;
  std::size_t ky = 0;
  std::size_t kz = 0;
  std::size_t joints = 0;
  bool two_logit = true;

  std::size_t logits() const { return two_logit ? 2 : 1; }
  std::size_t x_channels(const ImageGeometry& geom) const;
  std::size_t y_channels(const ImageGeometry& geom) const;
  std::size_t z_channels() const { return kz * joints * logits(); }
  // Throws ConfigError when a reshape is infeasible.
  void validate(const ImageGeometry& geom) const;
};

struct NetConfig {
  ImageGeometry geom{224, 224, 224.0};
  std::size_t joints = 14;
  HeadKind head = HeadKind::Ordinal;
  GridKind z_grid = GridKind::Normal;
  bool uvmap = true;
  bool two_logit = true;
  // One stride-2 3x3 stage per factor of two in the geometry stride.
  std::vector<std::size_t> stage_channels{16, 32, 64, 64, 64};
  std::size_t feature_channels = 768;
  // Appends a dense embedding of the whole last-stage map to every position.
  bool global_context = true;
  std::size_t context_channels = 256;
  // Channel LayerNorm with learned scale and shift after every encoder conv.
  bool layer_norm = true;
  // Truncated-normal std for heads; "he" scales encoder stages by fan-in.
  double init_std = 0.02;
  std::string encoder_init = "he";
  std::uint64_t seed = 0;

  std::size_t input_channels() const { return uvmap ? 3 : 1; }
};

struct FeatureMaps {
  nn::Var xy;  // [N, H/s, W/s, C_f]
  nn::Var z;   // [N, H/s, W/s, C_f]
};

struct NetOutput {
  nn::Var prob_x;  // [N, H/s, K_x, A]      (ordinal head only)
  nn::Var prob_y;  // [N, K_y, W/s, A]
  nn::Var prob_z;  // [N, H/s, W/s, K_z, A]
  nn::Var joints;  // [N, A, 3]
};

struct NamedParameter {
  std::string name;
  nn::Var var;
};

class DorNet {
 public:
  explicit DorNet(NetConfig cfg);

  const NetConfig& config() const { return cfg_; }
  const GridSet& grids() const { return grids_; }
  HeadConfig head_config() const;

  // input: [N, H, W, input_channels]
  FeatureMaps encode(const nn::Var& input) const;
  std::pair<nn::Var, nn::Var> ordinal_head_xy(const FeatureMaps& f) const;
  nn::Var ordinal_head_z(const FeatureMaps& f) const;
  // Attention-weighted mean of (position + offset) per joint. [N, A, 3]
  nn::Var offset_head(const FeatureMaps& f) const;
  NetOutput forward(const nn::Var& input) const;

  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  nn::Var& param(const std::string& name);
  const nn::Var& param(const std::string& name) const;

 private:
  nn::Var& add_param(const std::string& name, nn::Shape shape);
  std::size_t index_of(const std::string& name) const;

  NetConfig cfg_;
  GridSet grids_;
  std::vector<NamedParameter> params_;
};

// Differentiable interval-weighted decoding of batched probability maps into
// joint coordinates [N, A, 3].
nn::Var soft_decode(const nn::Var& prob_x, const nn::Var& prob_y, const nn::Var& prob_z,
                    const GridSet& grids);

// Directory with model.json plus one little-endian float32 blob per tensor.
void save_checkpoint(const DorNet& net, const std::filesystem::path& dir);
DorNet load_checkpoint(const std::filesystem::path& dir);

}  // namespace dor
