#pragma once

#include <array>

#include "dor/autograd.hpp"
#include "dor/codec.hpp"

namespace dor {

struct LossConfig {
  double lambda_joint = 3.0;
  double lambda_ord = 2.0;
  double smooth_l1_beta = 1.0;
  double eps = 1e-8;  // keeps K_x * |log(1 - eps)| under 1e-5 at W = 224
  // Also divide each ordinal term by its threshold count.
  bool normalize_thresholds = false;

  void validate() const;
};

struct LossBreakdown {
  double joint = 0.0;
  double ord_x = 0.0;
  double ord_y = 0.0;
  double ord_z = 0.0;
  double total = 0.0;
};

struct OrdinalTerms {
  nn::Var x, y, z;
};

// Dense binary cross-entropy per axis. Batched maps: x [N,H/s,K_x,A],
// y [N,K_y,W/s,A], z [N,H/s,W/s,K_z,A]. Each term sums over every entry and
// divides by N * R * A, R being the replicated spatial count of that axis
// (H/s, W/s, H/s * W/s). The threshold axis is summed, not averaged.
OrdinalTerms dor_loss(const nn::Var& prob_x, const nn::Var& prob_y, const nn::Var& prob_z,
                      const nn::Tensor& gt_x, const nn::Tensor& gt_y, const nn::Tensor& gt_z,
                      const LossConfig& cfg);

// Per-coordinate smooth-L1 summed over joints and coordinates, averaged over
// the batch. pred and gt are [N, A, 3].
nn::Var joint_loss(const nn::Var& pred, const nn::Tensor& gt, const LossConfig& cfg);

struct TotalLoss {
  nn::Var total;
  LossBreakdown breakdown;
};

// lambda_joint * joint + lambda_ord * (x + y + z). A null ordinal argument
// contributes zero ordinal terms.
TotalLoss total_loss(const nn::Var& joint, const OrdinalTerms* ordinal, const LossConfig& cfg);
LossBreakdown total_loss(double joint, double ord_x, double ord_y, double ord_z, const LossConfig& cfg);

// Single-sample conveniences over plain maps and joint sets.
std::array<double, 3> dor_loss(const ProbabilityMaps& pred, const ProbabilityMaps& gt, const LossConfig& cfg);
double joint_loss(const JointSet& pred, const JointSet& gt, const LossConfig& cfg);

}  // namespace dor
