// Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Arguments select criteria by number (default: all).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dor/data.hpp"
#include "dor/losses.hpp"
#include "dor/rng.hpp"
#include "dor/train.hpp"
#include "gradcheck.hpp"
#include "temp_dir.hpp"

using namespace dor;
using dor::testing::grad_check;
using dor::testing::random_tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. decode(encode(v)) - v lies in (0, local interval], sampled uniformly per axis.
Outcome codec_round_trip() {
  constexpr std::size_t kSamples = 10000;
  constexpr double kSlack = 1e-9;  // summation rounding, in axis units
  const ImageGeometry geom(224, 224, 224.0);
  const auto t0 = Clock::now();
  std::size_t violations = 0, checked = 0;
  double worst = 0.0;  // max of (error / local interval)
  for (int levels : {2, 3, 4}) {
    const GridSet grids{uniform_grid(Axis::X, 224.0, 112), uniform_grid(Axis::Y, 224.0, 112), normal_grid(224.0, levels)};
    Rng rng(derive_seed(1, static_cast<std::uint64_t>(levels)));
    for (std::size_t s = 0; s < kSamples; ++s) {
      const Joint3 j{rng.uniform(0, 224), rng.uniform(0, 224), rng.uniform(0, 224)};
      const Joint3 back = decode(encode_gt({j}, grids, geom), grids, geom)[0];
      const double v[3] = {j.x, j.y, j.z}, d[3] = {back.x, back.y, back.z};
      const DiscretizationGrid* g[3] = {&grids.x, &grids.y, &grids.z};
      for (int a = 0; a < 3; ++a) {
        const double err = d[a] - v[a];
        const double local = g[a]->interval(g[a]->locate(v[a]));
        ++checked;
        if (!(err > 0.0 && err <= local + kSlack)) ++violations;
        worst = std::max(worst, err / local);
      }
    }
  }
  const double t = seconds_since(t0);
  return {violations == 0 && t < 5.0,
          fmt("%zu axis samples, %zu violations, max err/interval %.6f, %.2fs (limit 5s)", checked, violations, worst, t)};
}

// 2. Every encoded map is binary and non-increasing along its threshold axis.
Outcome gt_consistency() {
  const ImageGeometry geom(224, 224, 224.0);
  const GridSet grids = default_grids(geom, GridKind::Normal);
  Rng rng(2);
  std::size_t violations = 0;
  for (int s = 0; s < 1000; ++s) {
    JointSet joints(14);
    for (auto& j : joints) j = {rng.uniform(0, 224), rng.uniform(0, 224), rng.uniform(0, 224)};
    const ProbabilityMaps m = encode_gt(joints, grids, geom);
    const MapDims& d = m.dims;
    for (auto* v : {&m.x, &m.y, &m.z})
      for (double e : *v) violations += !(e == 0.0 || e == 1.0);
    for (std::size_t a = 0; a < d.joints; ++a) {
      for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t k = 1; k < d.kx; ++k) violations += m.px(i, k, a) > m.px(i, k - 1, a);
      for (std::size_t j = 0; j < d.cols; ++j)
        for (std::size_t k = 1; k < d.ky; ++k) violations += m.py(k, j, a) > m.py(k - 1, j, a);
      for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j)
          for (std::size_t k = 1; k < d.kz; ++k) violations += m.pz(i, j, k, a) > m.pz(i, j, k - 1, a);
    }
  }
  return {violations == 0, fmt("1000 joint sets x 14 joints, %zu violations", violations)};
}

// 3. Elementary ops <= 1e-4 and the full input -> heads -> decode -> total loss
// path <= 1e-3 against central differences, over five seeds.
Outcome gradient_suite() {
  using namespace nn;
  constexpr double kElementary = 1e-4, kComposed = 1e-3;
  const auto t0 = Clock::now();
  double worst_elem = 0.0, worst_comp = 0.0;
  std::size_t checks = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto weigh = [&](const Var& y) {
      Rng r(seed * 31);
      return reduce_sum(mul(y, constant(random_tensor(y.shape(), r))));
    };
    auto elem = [&](const std::function<Var()>& f, std::vector<Var> in) {
      worst_elem = std::max(worst_elem, grad_check(f, std::move(in)).rel_error);
      ++checks;
    };
    Var a = parameter(random_tensor({3, 4}, rng)), b = parameter(random_tensor({3, 4}, rng));
    Var row = parameter(random_tensor({4}, rng)), pos = parameter(random_tensor({3, 4}, rng, 0.2, 2.0));
    elem([&] { return weigh(add(a, b)); }, {a, b});
    elem([&] { return weigh(sub(a, row)); }, {a, row});
    elem([&] { return weigh(mul(a, b)); }, {a, b});
    elem([&] { return weigh(scale(a, -1.7)); }, {a});
    elem([&] { return weigh(add_scalar(a, 0.3)); }, {a});
    elem([&] { return weigh(relu(a)); }, {a});
    elem([&] { return weigh(sigmoid(scale(a, 4.0))); }, {a});
    elem([&] { return weigh(log(pos)); }, {pos});
    elem([&] { return weigh(softmax(scale(a, 3.0))); }, {a});
    elem([&] { return weigh(layer_norm(a)); }, {a});
    Var m1 = parameter(random_tensor({3, 5}, rng)), m2 = parameter(random_tensor({5, 2}, rng));
    elem([&] { return weigh(matmul(m1, m2)); }, {m1, m2});
    Var t = parameter(random_tensor({2, 3, 4}, rng)), small = parameter(random_tensor({2, 1, 4}, rng));
    elem([&] { return weigh(reshape(t, {6, 4})); }, {t});
    elem([&] { return weigh(permute(t, {2, 0, 1})); }, {t});
    elem([&] { return weigh(select_last(t, 1)); }, {t});
    elem([&] { return weigh(concat_last({t, scale(t, 2.0)})); }, {t});
    elem([&] { return weigh(reduce_sum(t, {1})); }, {t});
    elem([&] { return weigh(reduce_mean(t, {0, 2})); }, {t});
    elem([&] { return weigh(broadcast_to(small, {2, 3, 4})); }, {small});
    Var x = parameter(random_tensor({1, 6, 6, 2}, rng)), w = parameter(random_tensor({3, 3, 2, 3}, rng));
    Var bias = parameter(random_tensor({3}, rng));
    elem([&] { return weigh(conv2d(x, w, bias, 1, 1)); }, {x, w, bias});
    elem([&] { return weigh(conv2d(x, w, bias, 2, 1)); }, {x, w, bias});
    Var prob = parameter(random_tensor({3, 4}, rng, 0.05, 0.95));
    Tensor target({3, 4}, 0.0);
    for (std::size_t i = 0; i < target.size(); i += 2) target[i] = 1.0;
    elem([&] { return binary_cross_entropy_sum(prob, target, 1e-8); }, {prob});
    Var diff = parameter(random_tensor({3, 4}, rng, -3.0, 3.0));
    elem([&] { return smooth_l1_sum(diff, 1.0); }, {diff});

    // Composed path through the whole network.
    TrainConfig tc;
    tc.stage_channels = {4, 4, 6, 6, 6};
    tc.feature_channels = 6;
    tc.context_channels = 5;
    tc.seed = seed;
    const ImageGeometry geom(64, 64, 64.0);
    DorNet net(tc.net_config(geom, 3));
    Var input = parameter(random_tensor({2, 64, 64, 3}, rng, 0.0, 1.0));
    JointSet ja(3), jb(3);
    for (auto* js : {&ja, &jb})
      for (auto& j : *js) j = {rng.uniform(0, 64), rng.uniform(0, 64), rng.uniform(0, 64)};
    const ProbabilityMaps ga = encode_gt(ja, net.grids(), geom), gb = encode_gt(jb, net.grids(), geom);
    const MapDims& d = ga.dims;
    auto stack = [](const std::vector<double>& p, const std::vector<double>& q, Shape s) {
      std::vector<double> v(p);
      v.insert(v.end(), q.begin(), q.end());
      return Tensor(std::move(s), std::move(v));
    };
    const Tensor gx = stack(ga.x, gb.x, {2, d.rows, d.kx, d.joints});
    const Tensor gy = stack(ga.y, gb.y, {2, d.ky, d.cols, d.joints});
    const Tensor gz = stack(ga.z, gb.z, {2, d.rows, d.cols, d.kz, d.joints});
    std::vector<double> jv;
    for (auto* js : {&ja, &jb})
      for (const auto& j : *js) jv.insert(jv.end(), {j.x, j.y, j.z});
    const Tensor gj({2, 3, 3}, jv);
    const LossConfig lc;
    auto total = [&] {
      const NetOutput out = net.forward(input);
      const OrdinalTerms ot = dor_loss(out.prob_x, out.prob_y, out.prob_z, gx, gy, gz, lc);
      return total_loss(joint_loss(out.joints, gj, lc), &ot, lc).total;
    };
    std::vector<Var> inputs{input};
    for (auto& p : net.parameters()) inputs.push_back(p.var);
    worst_comp = std::max(worst_comp, grad_check(total, inputs, 12, seed).rel_error);
    ++checks;
  }
  const double secs = seconds_since(t0);
  return {worst_elem <= kElementary && worst_comp <= kComposed && secs < 60.0,
          fmt("%zu checks over 5 seeds, elementary max %.2e (limit 1e-4), composed max %.2e (limit 1e-3), %.1fs "
              "(limit 60s)",
              checks, worst_elem, worst_comp, secs)};
}

// 4. Perfect prediction, constant one-half prediction, total-loss weighting.
Outcome loss_sanity() {
  const ImageGeometry geom(224, 224, 224.0);
  const GridSet grids = default_grids(geom, GridKind::Normal);
  Rng rng(4);
  JointSet joints(14);
  for (auto& j : joints) j = {rng.uniform(0, 224), rng.uniform(0, 224), rng.uniform(0, 224)};
  const ProbabilityMaps gt = encode_gt(joints, grids, geom);
  const LossConfig cfg;
  const auto perfect = dor_loss(gt, gt, cfg);
  const auto half = dor_loss(ProbabilityMaps(gt.dims, 0.5), gt, cfg);
  const double kx_log2 = static_cast<double>(gt.dims.kx) * std::log(2.0);
  const double perfect_max = std::max({perfect[0], perfect[1], perfect[2]});
  const double half_err = std::abs(half[0] - kx_log2);
  const LossBreakdown w = total_loss(1.25, 0.5, 0.75, 2.0, cfg);
  const bool weighting = w.total == 3.0 * 1.25 + 2.0 * (0.5 + 0.75 + 2.0) && cfg.lambda_joint == 3.0 &&
                         cfg.lambda_ord == 2.0;
  return {perfect_max <= 1e-5 && half_err <= 1e-6 && weighting,
          fmt("perfect max %.3e (limit 1e-5), |ord_x - K_x log 2| %.2e (limit 1e-6), weighting %s", perfect_max,
              half_err, weighting ? "exact" : "WRONG")};
}

// Configuration used for the overfit run.
TrainConfig overfit_config() {
  TrainConfig c;
  c.max_steps = 500;
  c.epochs = 1000;
  c.lr_decay = 1.0;  // a few steps per epoch on 32 frames; keep lr at its initial value
  c.seed = 1;
  return c;
}

// 5. Overfit 32 frames at 224 in 500 steps.
Outcome overfit() {
  const ImageGeometry geom(224, 224, 224.0);
  const Dataset data = synthesize(SynthConfig::for_geometry(geom, 14), 32, 7);
  const TrainConfig cfg = overfit_config();
  DorNet net(cfg.net_config(geom, 14));
  const std::size_t params = net.parameter_count();
  const auto t0 = Clock::now();
  train(net, data, cfg, {{}, [](const StepRecord& r) {
                           if (r.step % 100 == 0) std::fprintf(stderr, "  overfit step %zu loss %.3f\n", r.step, r.loss.total);
                         }});
  const double secs = seconds_since(t0);
  const EvalReport rep = evaluate(net, data, {});
  const GridSet& g = net.grids();
  const double lim_x = 2.0 * g.x.max_interval(), lim_y = 2.0 * g.y.max_interval(), lim_z = 2.0 * g.z.max_interval();
  const bool pass = params <= 5'000'000 && rep.x_error <= lim_x && rep.y_error <= lim_y && rep.z_error <= lim_z &&
                    secs <= 1200.0;
  return {pass, fmt("%zu params, 500 steps, mean |err| x %.2f (limit %.1f) y %.2f (limit %.1f) z %.2f (limit %.1f), "
                    "mean 3D %.2f, %.0fs (limit 1200s)",
                    params, rep.x_error, lim_x, rep.y_error, lim_y, rep.z_error, lim_z, rep.mean_3d_error, secs)};
}

// 6. Normal-grid shape for M = 1..6 on several depth ranges.
Outcome nd_properties() {
  std::size_t grids = 0, violations = 0;
  for (double depth : {8.0, 16.0, 100.0, 224.0, 1000.0, 4096.0}) {
    for (int m = 1; m <= 6; ++m) {
      const DiscretizationGrid g = normal_grid(depth, m);
      const std::size_t k = g.size();
      const double tol = 1e-12 * depth;
      ++grids;
      violations += k != 2 * ((std::size_t{1} << m) - 1);
      for (std::size_t i = 1; i < k; ++i) violations += !(g.threshold(i) > g.threshold(i - 1));
      const std::size_t mid = g.locate(depth / 2);
      violations += std::abs(g.threshold(mid) - depth / 2) > tol;
      for (std::size_t i = 1; i < mid; ++i) violations += g.interval(i) > g.interval(i - 1) + tol;
      for (std::size_t i = mid + 1; i < k; ++i) violations += g.interval(i) < g.interval(i - 1) - tol;
      for (std::size_t i = 0; i < k; ++i) {
        violations += std::abs(g.interval(i) - g.interval(k - 1 - i)) > tol;
        // Thresholds plus the upper bound are a mirror image about D/2.
        violations += std::abs(g.threshold(i) + g.next_threshold(k - 1 - i) - depth) > tol;
      }
    }
  }
  return {violations == 0, fmt("%zu grids (6 depth ranges x M=1..6), %zu violations", grids, violations)};
}

// 7. Four-axis ablation on a corrupted eval split.
Outcome ablation() {
  const ImageGeometry geom(64, 64, 64.0);
  const SynthConfig sc = SynthConfig::for_geometry(geom, 14);
  const Dataset train_set = synthesize(sc, 32, 101);
  const Dataset eval_set = synthesize(sc, 16, 202,
                                      {{CorruptionKind::HoleDropout, 0.3},
                                       {CorruptionKind::PlaneNoise, 0.3},
                                       {CorruptionKind::EdgeBlur, 0.5}});
  TrainConfig base;
  base.epochs = 30;
  base.decay_every = 10;
  BenchmarkOptions opts;
  opts.seeds = {1, 2, 3};
  opts.thresholds = success_thresholds(32, 4);
  const auto t0 = Clock::now();
  const auto rows = benchmark(train_set, eval_set, ablation_matrix(base), opts);
  std::ostringstream table;
  write_benchmark_csv(rows, table);
  std::cout << table.str();
  std::size_t failed = 0, finite = 0;
  std::string ordering;
  for (const auto& r : rows) {
    failed += r.failed;
    finite += std::isfinite(r.x.mean) && std::isfinite(r.y.mean) && std::isfinite(r.z.mean) &&
              std::isfinite(r.avg.mean);
    if (r.preferred) ordering += fmt(" %s %zu/%zu;", r.axis.c_str(), r.preferred_wins, r.compared);
  }
  return {rows.size() == 8 && failed == 0 && finite == rows.size(),
          fmt("8 configs x 3 seeds, %zu failed runs, preferred-variant wins per axis:%s %.0fs", failed,
              ordering.c_str(), seconds_since(t0))};
}

// 8. Success curve, the 3-4-5 case, lossless dataset round trip.
Outcome metrics() {
  Rng rng(8);
  std::vector<JointSet> pred, gt;
  for (int f = 0; f < 50; ++f) {
    JointSet p(14), g(14);
    for (std::size_t j = 0; j < 14; ++j) {
      g[j] = {rng.uniform(0, 224), rng.uniform(0, 224), rng.uniform(0, 224)};
      p[j] = {g[j].x + rng.normal() * 8, g[j].y + rng.normal() * 8, g[j].z + rng.normal() * 8};
    }
    pred.push_back(p);
    gt.push_back(g);
  }
  const EvalReport rep = evaluate_predictions(pred, gt, success_thresholds(80, 1));
  bool monotone = true;
  for (std::size_t i = 1; i < rep.success_curve.size(); ++i) {
    monotone = monotone && rep.success_curve[i].second >= rep.success_curve[i - 1].second;
  }
  const double e345 = evaluate_predictions({{{3, 4, 0}}}, {{{0, 0, 0}}}, {}).mean_3d_error;

  const ImageGeometry geom(64, 64, 64.0);
  const Dataset d = synthesize(SynthConfig::for_geometry(geom, 14), 100, 88, {{CorruptionKind::PlaneNoise, 0.4}});
  dor::testing::TempDir tmp;
  write_dataset(d, tmp.path());
  const Dataset r = read_dataset(tmp.path());
  std::size_t mismatched = r.frames.size() == d.frames.size() ? 0 : 1;
  for (std::size_t i = 0; mismatched == 0 && i < d.frames.size(); ++i) {
    mismatched += r.frames[i].depth.values != d.frames[i].depth.values;
    mismatched += r.frames[i].joints != d.frames[i].joints;
    mismatched += !(r.frames[i].meta == d.frames[i].meta);
  }
  return {monotone && e345 == 5.0 && mismatched == 0,
          fmt("success curve %s, 3-4-5 error %.17g, 100-frame round trip %zu mismatched frames",
              monotone ? "non-decreasing" : "DECREASES", e345, mismatched)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"codec round trip", codec_round_trip}, {"ground-truth ordinal consistency", gt_consistency},
      {"gradient suite", gradient_suite},     {"loss sanity", loss_sanity},
      {"overfit convergence", overfit},       {"normal grid properties", nd_properties},
      {"ablation harness", ablation},         {"metrics and dataset round trip", metrics},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << n << "] " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
