#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dor/codec.hpp"
#include "dor/geometry.hpp"
#include "dor/grid.hpp"

namespace dor {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Procedural hand: a palm sphere at joint 0 and up to five digit chains that
// share the remaining joints. Pixel quantities are given for a 224-pixel frame
// and rescaled by for_geometry().
struct SynthConfig {
  ImageGeometry geom{224, 224, 224.0};
  std::size_t joints = 14;
  Range bone_length{14.0, 24.0};
  Range palm_radius{15.0, 20.0};
  Range joint_radius{4.5, 6.5};
  Range bend{-0.35, 0.35};   // in-plane turn per bone, radians
  Range tilt{-0.45, 0.45};   // out-of-plane elevation per bone, radians
  double finger_jitter = 0.15;
  double root_jitter = 14.0;
  double root_depth_sigma = 1.0 / 12.0;  // fraction of D
  // Corruption scales at magnitude 1.
  double hole_ceiling = 0.5;             // fraction of pixels zeroed
  double noise_sigma = 0.03;             // fraction of D
  double edge_threshold = 0.02;          // fraction of D
  int blur_radius = 3;                   // pixels

  static SynthConfig for_geometry(const ImageGeometry& geom, std::size_t joints = 14);
  void validate() const;
};

enum class CorruptionKind { EdgeBlur, HoleDropout, PlaneNoise };

std::string to_string(CorruptionKind kind);
CorruptionKind parse_corruption_kind(const std::string& s);

struct Corruption {
  CorruptionKind kind;
  double magnitude;
  std::uint64_t seed = 0;

  friend bool operator==(const Corruption&, const Corruption&) = default;
};

struct FrameMeta {
  std::uint64_t seed = 0;
  std::vector<Corruption> corruptions;

  friend bool operator==(const FrameMeta&, const FrameMeta&) = default;
};

struct DepthFrame {
  DepthImage depth;
  JointSet joints;
  FrameMeta meta;
};

struct Sphere {
  Joint3 center;
  double radius;
};

// Solid whose front surface is swept along the segment a-b.
struct Capsule {
  Joint3 a, b;
  double radius;
};

struct Primitive {
  enum class Kind { Sphere, Capsule } kind;
  Sphere sphere{};
  Capsule capsule{};
  // Joint indices this primitive is attached to.
  std::vector<std::size_t> joints;
};

struct Skeleton {
  JointSet joints;
  std::vector<double> radii;  // sphere radius per joint, pixels
  std::vector<Primitive> primitives;
};

// Joint positions lie in [0,W) x [0,H) x [D/4, 3D/4] and are float-representable.
Skeleton sample_skeleton(const SynthConfig& cfg, std::uint64_t seed);
// Per-pixel nearest surface (z-buffer minimum) over all primitives; background D.
DepthImage render_depth(const std::vector<Primitive>& primitives, const ImageGeometry& geom);
DepthFrame generate_frame(const SynthConfig& cfg, std::uint64_t seed);

// Ground-truth joints are never touched. magnitude in [0,1]; 0 is the identity.
DepthFrame corrupt(const DepthFrame& frame, CorruptionKind kind, double magnitude, std::uint64_t seed,
                   const SynthConfig& cfg);
DepthFrame corrupt(const DepthFrame& frame, const std::string& kind, double magnitude, std::uint64_t seed,
                   const SynthConfig& cfg);

struct Dataset {
  ImageGeometry geom{224, 224, 224.0};
  std::size_t joints = 14;
  std::vector<DepthFrame> frames;
};

Dataset synthesize(const SynthConfig& cfg, std::size_t count, std::uint64_t seed,
                   const std::vector<std::pair<CorruptionKind, double>>& corruptions = {});

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DatasetVersionError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class DatasetCountError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

inline constexpr int kDatasetFormatVersion = 1;

// manifest.json + joints.csv + frame_NNNNN.f32 (row-major H x W float32 LE).
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
// Throws DatasetVersionError, DatasetCountError or TruncatedBlobError.
Dataset read_dataset(const std::filesystem::path& dir);

// Adapter for external frame sources (real captures, other generators).
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual const ImageGeometry& geometry() const = 0;
  virtual std::optional<DepthFrame> next() = 0;
};

class DatasetFrameSource : public FrameSource {
 public:
  explicit DatasetFrameSource(Dataset data) : data_(std::move(data)) {}
  const ImageGeometry& geometry() const override { return data_.geom; }
  std::optional<DepthFrame> next() override;

 private:
  Dataset data_;
  std::size_t cursor_ = 0;
};

Dataset collect(FrameSource& source, std::size_t joints);

// Probability-map files: maps.json + prob_x.f32, prob_y.f32, prob_z.f32.
struct MapsFile {
  ImageGeometry geom{224, 224, 224.0};
  GridSet grids;
  ProbabilityMaps maps;
};

void write_probability_maps(const ProbabilityMaps& maps, const GridSet& grids, const ImageGeometry& geom,
                            const std::filesystem::path& dir);
MapsFile read_probability_maps(const std::filesystem::path& dir);

}  // namespace dor
