#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dor/data.hpp"
#include "dor/losses.hpp"
#include "dor/net.hpp"

namespace dor {

struct TrainConfig {
  double lr = 3.5e-4;
  double weight_decay = 1e-4;
  double lr_decay = 0.2;
  std::size_t decay_every = 7;  // epochs
  std::size_t batch_size = 8;
  std::size_t epochs = 21;
  std::size_t max_steps = 0;  // 0: run every epoch
  std::uint64_t seed = 0;
  HeadKind head = HeadKind::Ordinal;
  GridKind z_grid = GridKind::Normal;
  bool uvmap = true;
  bool dor_loss = true;
  LossConfig loss;
  // Network shape; geometry and joint count come from the dataset.
  std::vector<std::size_t> stage_channels{16, 32, 64, 64, 64};
  std::size_t feature_channels = 768;
  bool global_context = true;
  bool layer_norm = true;
  std::size_t context_channels = 256;
  bool two_logit = true;
  double init_std = 0.02;
  std::string encoder_init = "he";

  // Throws ConfigError.
  void validate() const;
  NetConfig net_config(const ImageGeometry& geom, std::size_t joints) const;
  // lr_0 * decay^floor(epoch / decay_every)
  double lr_at(std::size_t epoch) const;
};

// JSON object whose keys mirror the fields above; missing keys keep defaults,
// unknown keys are rejected.
TrainConfig train_config_from_json(const std::string& text);
std::string to_json(const TrainConfig& cfg);
TrainConfig load_train_config(const std::filesystem::path& path);

class NonFiniteGradientError : public std::runtime_error {
 public:
  explicit NonFiniteGradientError(const std::string& param);
  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& detail);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;
};

// One decoupled-decay Adam update of a flat parameter. Throws
// NonFiniteGradientError (naming `name`) before touching anything when the
// gradient holds a NaN or infinity.
void adamw_step(std::vector<double>& param, const std::vector<double>& grad, AdamState& state, double lr,
                const AdamWConfig& cfg, const std::string& name = "param");

class AdamW {
 public:
  AdamW(std::vector<NamedParameter>& params, AdamWConfig cfg);
  // Checks every gradient first, so a bad gradient leaves all parameters as they were.
  void step(double lr);
  std::size_t steps() const { return steps_; }

 private:
  std::vector<NamedParameter>* params_;
  AdamWConfig cfg_;
  std::vector<AdamState> state_;
  std::size_t steps_ = 0;
};

// Network input [N,H,W,C] for the given frames.
nn::Tensor make_input(const std::vector<const DepthFrame*>& frames, const ImageGeometry& geom, bool uvmap);

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

// Header "step,joint,ord_x,ord_y,ord_z,total".
void write_loss_csv(const std::vector<StepRecord>& steps, std::ostream& out);

struct TrainResult {
  std::vector<StepRecord> steps;
};

struct TrainOptions {
  // When set, the final (or last good) checkpoint and loss.csv land here.
  std::filesystem::path out_dir;
  std::function<void(const StepRecord&)> on_step;
};

// Throws DivergenceError when the loss or a gradient stops being finite; the
// model is then restored to the parameters of the last good step (and
// checkpointed to out_dir if given).
TrainResult train(DorNet& model, const Dataset& data, const TrainConfig& cfg, const TrainOptions& opts = {});

struct EvalReport {
  double mean_3d_error = 0.0;
  double x_error = 0.0;  // mean |dx| over frames and joints
  double y_error = 0.0;
  double z_error = 0.0;
  std::vector<double> per_joint_error;
  std::vector<std::pair<double, double>> success_curve;  // (threshold, fraction)
};

// Evenly spaced thresholds 0, step, ..., max.
std::vector<double> success_thresholds(double max, double step);

// Throws std::invalid_argument on empty input or mismatched sizes.
EvalReport evaluate_predictions(const std::vector<JointSet>& pred, const std::vector<JointSet>& gt,
                                const std::vector<double>& thresholds);
std::vector<JointSet> predict(const DorNet& model, const Dataset& data, std::size_t batch_size = 8);
EvalReport evaluate(const DorNet& model, const Dataset& data, const std::vector<double>& thresholds);

void write_report_csv(const EvalReport& report, std::ostream& out);

// One row of the ablation table. `preferred` marks the variant the method
// recommends on that axis.
struct BenchmarkVariant {
  std::string axis;
  std::string name;
  bool preferred = false;
  TrainConfig cfg;
};

// Four axes x two variants: head (ordinal/offset), z grid (normal/uniform),
// uvmap (on/off), dor loss (on/off). Every preferred row equals `base`.
std::vector<BenchmarkVariant> ablation_matrix(const TrainConfig& base);

struct Spread {
  double mean = 0.0;
  double spread = 0.0;  // sample standard deviation across seeds
};

struct BenchmarkRow {
  std::string axis;
  std::string variant;
  bool preferred = false;
  std::size_t seeds = 0;
  std::size_t failed = 0;
  Spread x, y, z, avg, mean_3d;
  // Seeds on which the preferred row of this axis has the lower mean 3D
  // error, out of seeds where both converged.
  std::size_t preferred_wins = 0;
  std::size_t compared = 0;
  std::vector<double> per_seed_error;  // mean 3D error, NaN where failed
};

struct BenchmarkOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<double> thresholds;
  std::function<void(const std::string&)> log;
};

// Trains each distinct config once per seed on `train_set`, evaluates on
// `eval_set`. Divergent runs are counted in `failed`; the harness continues.
std::vector<BenchmarkRow> benchmark(const Dataset& train_set, const Dataset& eval_set,
                                    const std::vector<BenchmarkVariant>& variants, const BenchmarkOptions& opts);

void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, std::ostream& out);

}  // namespace dor
