#include "dor/losses.hpp"

#include <stdexcept>
#include <string>

namespace dor {

using nn::Tensor;
using nn::Var;

void LossConfig::validate() const {
  if (!(lambda_joint >= 0.0) || !(lambda_ord >= 0.0) || lambda_joint + lambda_ord <= 0.0) {
    throw std::invalid_argument("LossConfig: weights must be non-negative and not both zero");
  }
  if (!(smooth_l1_beta > 0.0)) throw std::invalid_argument("LossConfig: beta must be positive");
  if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("LossConfig: eps must lie in (0, 0.5)");
}

namespace {

void check_binary(const Tensor& gt, const char* axis) {
  for (double v : gt.values()) {
    if (v != 0.0 && v != 1.0) {
      throw std::invalid_argument(std::string("dor_loss: ground truth for axis ") + axis + " is not binary");
    }
  }
}

Var axis_term(const Var& pred, const Tensor& gt, std::size_t replicated, std::size_t thresholds,
              const LossConfig& cfg, const char* axis) {
  if (pred.shape() != gt.shape()) {
    throw nn::ShapeError("dor_loss", std::string("axis ") + axis + ": prediction " +
                                         nn::to_string(pred.shape()) + " vs ground truth " +
                                         nn::to_string(gt.shape()));
  }
  check_binary(gt, axis);
  const std::size_t n = pred.shape().front();
  const std::size_t a = pred.shape().back();
  double denom = static_cast<double>(n * replicated * a);
  if (cfg.normalize_thresholds) denom *= static_cast<double>(thresholds);
  return nn::scale(nn::binary_cross_entropy_sum(pred, gt, cfg.eps), 1.0 / denom);
}

}  // namespace

OrdinalTerms dor_loss(const Var& prob_x, const Var& prob_y, const Var& prob_z, const Tensor& gt_x,
                      const Tensor& gt_y, const Tensor& gt_z, const LossConfig& cfg) {
  cfg.validate();
  const auto& sx = prob_x.shape();
  const auto& sy = prob_y.shape();
  const auto& sz = prob_z.shape();
  if (sx.size() != 4 || sy.size() != 4 || sz.size() != 5) {
    throw nn::ShapeError("dor_loss", "expected ranks 4/4/5, got " + nn::to_string(sx) + ", " +
                                         nn::to_string(sy) + ", " + nn::to_string(sz));
  }
  return {axis_term(prob_x, gt_x, sx[1], sx[2], cfg, "x"), axis_term(prob_y, gt_y, sy[2], sy[1], cfg, "y"),
          axis_term(prob_z, gt_z, sz[1] * sz[2], sz[3], cfg, "z")};
}

Var joint_loss(const Var& pred, const Tensor& gt, const LossConfig& cfg) {
  cfg.validate();
  if (pred.shape() != gt.shape() || pred.shape().size() != 3 || pred.shape()[2] != 3) {
    throw nn::ShapeError("joint_loss", "prediction " + nn::to_string(pred.shape()) + " vs ground truth " +
                                           nn::to_string(gt.shape()));
  }
  const double n = static_cast<double>(pred.shape()[0]);
  return nn::scale(nn::smooth_l1_sum(nn::sub(pred, nn::constant(gt)), cfg.smooth_l1_beta), 1.0 / n);
}

TotalLoss total_loss(const Var& joint, const OrdinalTerms* ordinal, const LossConfig& cfg) {
  cfg.validate();
  TotalLoss out;
  out.breakdown.joint = joint.item();
  Var total = nn::scale(joint, cfg.lambda_joint);
  if (ordinal) {
    out.breakdown.ord_x = ordinal->x.item();
    out.breakdown.ord_y = ordinal->y.item();
    out.breakdown.ord_z = ordinal->z.item();
    Var ord = nn::add(nn::add(ordinal->x, ordinal->y), ordinal->z);
    total = nn::add(total, nn::scale(ord, cfg.lambda_ord));
  }
  out.total = total;
  out.breakdown.total = total.item();
  return out;
}

LossBreakdown total_loss(double joint, double ord_x, double ord_y, double ord_z, const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown b{joint, ord_x, ord_y, ord_z, 0.0};
  b.total = cfg.lambda_joint * joint + cfg.lambda_ord * (ord_x + ord_y + ord_z);
  return b;
}

namespace {

Tensor batch_of_one(const std::vector<double>& v, nn::Shape shape) {
  shape.insert(shape.begin(), 1);
  return Tensor(std::move(shape), v);
}

}  // namespace

std::array<double, 3> dor_loss(const ProbabilityMaps& pred, const ProbabilityMaps& gt, const LossConfig& cfg) {
  if (!(pred.dims == gt.dims)) throw std::invalid_argument("dor_loss: map dimensions differ");
  const MapDims& d = pred.dims;
  const nn::Shape sx{d.rows, d.kx, d.joints}, sy{d.ky, d.cols, d.joints}, sz{d.rows, d.cols, d.kz, d.joints};
  const OrdinalTerms t =
      dor_loss(nn::constant(batch_of_one(pred.x, sx)), nn::constant(batch_of_one(pred.y, sy)),
               nn::constant(batch_of_one(pred.z, sz)), batch_of_one(gt.x, sx), batch_of_one(gt.y, sy),
               batch_of_one(gt.z, sz), cfg);
  return {t.x.item(), t.y.item(), t.z.item()};
}

double joint_loss(const JointSet& pred, const JointSet& gt, const LossConfig& cfg) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("joint_loss: " + std::to_string(pred.size()) + " predicted vs " +
                                std::to_string(gt.size()) + " ground-truth joints");
  }
  auto pack = [](const JointSet& js) {
    Tensor t({1, js.size(), 3});
    for (std::size_t a = 0; a < js.size(); ++a) {
      t.at({0, a, 0}) = js[a].x;
      t.at({0, a, 1}) = js[a].y;
      t.at({0, a, 2}) = js[a].z;
    }
    return t;
  };
  return joint_loss(nn::constant(pack(pred)), pack(gt), cfg).item();
}

}  // namespace dor
