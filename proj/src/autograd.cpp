#include "dor/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <Eigen/Core>

namespace dor::nn {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ShapeError::ShapeError(const std::string& op, const std::string& detail)
    : std::invalid_argument(op + ": " + detail) {}

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape() || grad.size() != value.size()) {
    grad = Tensor(value.shape(), 0.0);
  }
  return grad;
}

namespace {

thread_local bool t_grad_enabled = true;

// Visits every multi-index of `shape` in row-major order, tracking two strided
// offsets. f(linear, offset_a, offset_b).
template <class F>
void for_each_strided(const Shape& shape, const std::vector<std::size_t>& sa,
                      const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t rank = shape.size();
  const std::size_t n = numel(shape);
  if (n == 0) return;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t lin = 0; lin < n; ++lin) {
    f(lin, oa, ob);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      oa += sa[ax];
      ob += sb[ax];
      if (idx[ax] < shape[ax]) break;
      oa -= sa[ax] * shape[ax];
      ob -= sb[ax] * shape[ax];
      idx[ax] = 0;
    }
  }
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i + a.size() >= rank ? a[i + a.size() - rank] : 1;
    const std::size_t db = i + b.size() >= rank ? b[i + b.size() - rank] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(op, "cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` viewed inside `out` (0 along broadcast axes).
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  const auto s = strides_of(in);
  std::vector<std::size_t> r(out.size(), 0);
  const std::size_t lead = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    r[lead + i] = (in[i] == 1 && out[lead + i] != 1) ? 0 : s[i];
  }
  return r;
}

std::shared_ptr<Node>& parent(Node& self, std::size_t i) { return self.parents[i]; }

enum class BinOp { Add, Sub, Mul };

Var binary(const char* op, BinOp kind, const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Shape out_shape = broadcast_shape(op, av.shape(), bv.shape());
  const auto sa = broadcast_strides(av.shape(), out_shape);
  const auto sb = broadcast_strides(bv.shape(), out_shape);
  const bool same = av.shape() == out_shape && bv.shape() == out_shape;

  Tensor out(out_shape);
  auto apply = [kind](double x, double y) {
    switch (kind) {
      case BinOp::Add: return x + y;
      case BinOp::Sub: return x - y;
      case BinOp::Mul: return x * y;
    }
    return 0.0;
  };
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(av[i], bv[i]);
  } else {
    for_each_strided(out_shape, sa, sb,
                     [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = apply(av[ia], bv[ib]); });
  }

  return make_node(op, std::move(out), {a, b}, [kind, sa, sb, same](Node& self) {
    Node& pa = *parent(self, 0);
    Node& pb = *parent(self, 1);
    const Tensor& g = self.grad;
    const Shape& shape = self.value.shape();
    if (pa.requires_grad) {
      Tensor& ga = pa.grad_buffer();
      const Tensor& bv = pb.value;
      auto push = [&](std::size_t o, std::size_t ia, std::size_t ib) {
        switch (kind) {
          case BinOp::Add:
          case BinOp::Sub: ga[ia] += g[o]; break;
          case BinOp::Mul: ga[ia] += g[o] * bv[ib]; break;
        }
      };
      if (same) {
        for (std::size_t i = 0; i < g.size(); ++i) push(i, i, i);
      } else {
        for_each_strided(shape, sa, sb, push);
      }
    }
    if (pb.requires_grad) {
      Tensor& gb = pb.grad_buffer();
      const Tensor& av = pa.value;
      auto push = [&](std::size_t o, std::size_t ia, std::size_t ib) {
        switch (kind) {
          case BinOp::Add: gb[ib] += g[o]; break;
          case BinOp::Sub: gb[ib] -= g[o]; break;
          case BinOp::Mul: gb[ib] += g[o] * av[ia]; break;
        }
      };
      if (same) {
        for (std::size_t i = 0; i < g.size(); ++i) push(i, i, i);
      } else {
        for_each_strided(shape, sa, sb, push);
      }
    }
  });
}

template <class Fwd, class Deriv>
Var unary(const char* op, const Var& x, Fwd fwd, Deriv deriv) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_node(op, std::move(out), {x}, [deriv](Node& self) {
    Node& px = *parent(self, 0);
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * deriv(px.value[i], self.value[i]);
    }
  });
}

std::vector<std::size_t> normalize_axes(const char* op, std::vector<std::size_t> axes,
                                        std::size_t rank) {
  if (axes.empty()) {
    axes.resize(rank);
    std::iota(axes.begin(), axes.end(), 0);
  }
  std::sort(axes.begin(), axes.end());
  if (std::adjacent_find(axes.begin(), axes.end()) != axes.end()) {
    throw ShapeError(op, "duplicate reduction axis");
  }
  for (auto a : axes) {
    if (a >= rank) throw ShapeError(op, "axis " + std::to_string(a) + " out of range");
  }
  return axes;
}

}  // namespace

// ---------------------------------------------------------------------------
// Var

const Tensor& Var::grad() const { return node_->grad_buffer(); }

void Var::zero_grad() { node_->grad_buffer().fill(0.0); }

void Var::backward() {
  if (node_->value.size() != 1) {
    throw ShapeError("backward", "implicit seed needs a scalar, got " + to_string(shape()));
  }
  backward(Tensor(shape(), 1.0));
}

void Var::backward(const Tensor& seed) {
  if (seed.shape() != shape()) {
    throw ShapeError("backward", "seed " + to_string(seed.shape()) + " vs value " +
                                     to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  Tensor& g = node_->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty() && n->grad.size() == n->value.size()) n->backward(*n);
  }
}

Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->op = "parameter";
  return Var(std::move(n));
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "constant";
  return Var(std::move(n));
}

Var make_node(const char* op, Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward) {
  if (!value.all_finite()) {
    throw NonFiniteError(std::string(op) + " produced non-finite values, shape " +
                         to_string(value.shape()));
  }
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  bool any = false;
  for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
  if (any && t_grad_enabled) {
    n->requires_grad = true;
    n->backward = std::move(backward);
    n->parents.reserve(parents.size());
    for (auto& p : parents) {
      // Undefined optional operands are kept as inert constants so indices stay stable.
      n->parents.push_back(p.defined() ? p.node_ : constant(Tensor()).node_);
    }
  }
  return Var(std::move(n));
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) { return binary("add", BinOp::Add, a, b); }
Var sub(const Var& a, const Var& b) { return binary("sub", BinOp::Sub, a, b); }
Var mul(const Var& a, const Var& b) { return binary("mul", BinOp::Mul, a, b); }

Var scale(const Var& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Var add_scalar(const Var& a, double offset) {
  return unary(
      "add_scalar", a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var relu(const Var& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var log(const Var& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double in, double) { return 1.0 / in; });
}

Var softmax(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw ShapeError("softmax", "needs at least one axis");
  const std::size_t width = xv.shape().back();
  const std::size_t rows = width ? xv.size() / width : 0;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * width;
    double* o = out.data().data() + r * width;
    const double mx = *std::max_element(in, in + width);
    double sum = 0.0;
    for (std::size_t c = 0; c < width; ++c) sum += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < width; ++c) o[c] /= sum;
  }
  return make_node("softmax", std::move(out), {x}, [width, rows](Node& self) {
    Node& px = *parent(self, 0);
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * width;
      double dot = 0.0;
      for (std::size_t c = 0; c < width; ++c) dot += self.grad[base + c] * self.value[base + c];
      for (std::size_t c = 0; c < width; ++c) {
        gx[base + c] += self.value[base + c] * (self.grad[base + c] - dot);
      }
    }
  });
}

Var layer_norm(const Var& x, double eps) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw ShapeError("layer_norm", "needs at least one axis");
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t width = xv.shape().back();
  const std::size_t rows = width ? xv.size() / width : 0;
  Tensor out(xv.shape());
  std::vector<double> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * width;
    double* o = out.data().data() + r * width;
    double mean = 0.0;
    for (std::size_t c = 0; c < width; ++c) mean += in[c];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(width);
    inv[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < width; ++c) o[c] = (in[c] - mean) * inv[r];
  }
  return make_node("layer_norm", std::move(out), {x}, [width, rows, inv = std::move(inv)](Node& self) {
    Node& px = *parent(self, 0);
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    const double n = static_cast<double>(width);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * width;
      double g_mean = 0.0, gy_mean = 0.0;
      for (std::size_t c = 0; c < width; ++c) {
        g_mean += self.grad[base + c];
        gy_mean += self.grad[base + c] * self.value[base + c];
      }
      g_mean /= n;
      gy_mean /= n;
      for (std::size_t c = 0; c < width; ++c) {
        gx[base + c] += inv[r] * (self.grad[base + c] - g_mean - self.value[base + c] * gy_mean);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul", to_string(av.shape()) + " x " + to_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  MapMat(out.data().data(), m, n).noalias() =
      ConstMapMat(av.data().data(), m, k) * ConstMapMat(bv.data().data(), k, n);
  return make_node("matmul", std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *parent(self, 0);
    Node& pb = *parent(self, 1);
    ConstMapMat g(self.grad.data().data(), m, n);
    if (pa.requires_grad) {
      MapMat(pa.grad_buffer().data().data(), m, k).noalias() +=
          g * ConstMapMat(pb.value.data().data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MapMat(pb.grad_buffer().data().data(), k, n).noalias() +=
          ConstMapMat(pa.value.data().data(), m, k).transpose() * g;
    }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, std::size_t stride, std::size_t pad) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 4 || wv.rank() != 4 || xv.dim(3) != wv.dim(2)) {
    throw ShapeError("conv2d", "input " + to_string(xv.shape()) + " weight " + to_string(wv.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d", "zero stride");
  const std::size_t n = xv.dim(0), h = xv.dim(1), wd = xv.dim(2), cin = xv.dim(3);
  const std::size_t kh = wv.dim(0), kw = wv.dim(1), cout = wv.dim(3);
  if (b.defined() && (b.value().rank() != 1 || b.value().dim(0) != cout)) {
    throw ShapeError("conv2d", "bias " + to_string(b.value().shape()) + " for " +
                                   std::to_string(cout) + " output channels");
  }
  if (h + 2 * pad < kh || wd + 2 * pad < kw) {
    throw ShapeError("conv2d", "kernel larger than padded input " + to_string(xv.shape()));
  }
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
  const std::size_t patch = kh * kw * cin;
  const std::size_t positions = oh * ow;
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && pad == 0;

  // Column matrix per sample: [positions, patch], patch ordered (ky, kx, c).
  auto im2col = [=](const double* img, double* cols) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double* row = cols + (oy * ow + ox) * patch;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            double* dst = row + (ky * kw + kx) * cin;
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                ix >= static_cast<std::ptrdiff_t>(wd)) {
              std::fill(dst, dst + cin, 0.0);
            } else {
              const double* src = img + (static_cast<std::size_t>(iy) * wd + static_cast<std::size_t>(ix)) * cin;
              std::copy(src, src + cin, dst);
            }
          }
        }
      }
    }
  };
  auto col2im = [=](const double* cols, double* img) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double* row = cols + (oy * ow + ox) * patch;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
            const double* src = row + (ky * kw + kx) * cin;
            double* dst = img + (static_cast<std::size_t>(iy) * wd + static_cast<std::size_t>(ix)) * cin;
            for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
          }
        }
      }
    }
  };

  Tensor out({n, oh, ow, cout});
  ConstMapMat wm(wv.data().data(), patch, cout);
  const bool keep_cols = grad_enabled() && w.requires_grad() && !pointwise;
  auto cols_all = std::make_shared<std::vector<double>>();
  std::vector<double> scratch;
  if (keep_cols) {
    cols_all->resize(n * positions * patch);
  } else if (!pointwise) {
    scratch.resize(positions * patch);
  }
  for (std::size_t s = 0; s < n; ++s) {
    const double* img = xv.data().data() + s * h * wd * cin;
    const double* cols = img;
    if (!pointwise) {
      double* buf = keep_cols ? cols_all->data() + s * positions * patch : scratch.data();
      im2col(img, buf);
      cols = buf;
    }
    MapMat o(out.data().data() + s * positions * cout, positions, cout);
    o.noalias() = ConstMapMat(cols, positions, patch) * wm;
    if (b.defined()) {
      o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data().data(), cout);
    }
  }

  return make_node(
      "conv2d", std::move(out), {x, w, b},
      [=](Node& self) {
        Node& px = *parent(self, 0);
        Node& pw = *parent(self, 1);
        Node& pb = *parent(self, 2);
        const std::size_t in_sz = h * wd * cin;
        ConstMapMat wmat(pw.value.data().data(), patch, cout);
        std::vector<double> local_cols;
        std::vector<double> dcols;
        if (!pointwise && px.requires_grad) dcols.resize(positions * patch);
        for (std::size_t s = 0; s < n; ++s) {
          ConstMapMat g(self.grad.data().data() + s * positions * cout, positions, cout);
          if (pb.requires_grad) {
            Eigen::Map<Eigen::RowVectorXd>(pb.grad_buffer().data().data(), cout) += g.colwise().sum();
          }
          if (pw.requires_grad) {
            const double* cols = px.value.data().data() + s * in_sz;
            if (!pointwise) {
              if (keep_cols) {
                cols = cols_all->data() + s * positions * patch;
              } else {
                local_cols.resize(positions * patch);
                im2col(px.value.data().data() + s * in_sz, local_cols.data());
                cols = local_cols.data();
              }
            }
            MapMat(pw.grad_buffer().data().data(), patch, cout).noalias() +=
                ConstMapMat(cols, positions, patch).transpose() * g;
          }
          if (px.requires_grad) {
            double* gx = px.grad_buffer().data().data() + s * in_sz;
            if (pointwise) {
              MapMat(gx, positions, patch).noalias() += g * wmat.transpose();
            } else {
              MapMat(dcols.data(), positions, patch).noalias() = g * wmat.transpose();
              col2im(dcols.data(), gx);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Shape ops

Var reshape(const Var& x, Shape shape) {
  const Shape old = x.shape();
  if (numel(shape) != x.value().size()) {
    throw ShapeError("reshape", to_string(old) + " -> " + to_string(shape));
  }
  return make_node("reshape", x.value().reshaped(std::move(shape)), {x}, [](Node& self) {
    Node& px = *parent(self, 0);
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Var permute(const Var& x, const std::vector<std::size_t>& axes) {
  const Shape& in = x.shape();
  if (axes.size() != in.size()) throw ShapeError("permute", "axes rank mismatch for " + to_string(in));
  std::vector<bool> used(in.size(), false);
  Shape out_shape(in.size());
  const auto in_strides = strides_of(in);
  std::vector<std::size_t> src(in.size());
  for (std::size_t k = 0; k < axes.size(); ++k) {
    if (axes[k] >= in.size() || used[axes[k]]) throw ShapeError("permute", "invalid axis order");
    used[axes[k]] = true;
    out_shape[k] = in[axes[k]];
    src[k] = in_strides[axes[k]];
  }
  const auto out_strides = strides_of(out_shape);
  Tensor out(out_shape);
  const Tensor& xv = x.value();
  for_each_strided(out_shape, out_strides, src,
                   [&](std::size_t o, std::size_t, std::size_t i) { out[o] = xv[i]; });
  return make_node("permute", std::move(out), {x}, [out_shape, out_strides, src](Node& self) {
    Node& px = *parent(self, 0);
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    for_each_strided(out_shape, out_strides, src,
                     [&](std::size_t o, std::size_t, std::size_t i) { gx[i] += self.grad[o]; });
  });
}

Var broadcast_to(const Var& x, const Shape& shape) {
  const Shape target = broadcast_shape("broadcast_to", x.shape(), shape);
  if (target != shape) {
    throw ShapeError("broadcast_to", to_string(x.shape()) + " -> " + to_string(shape));
  }
  const auto sx = broadcast_strides(x.shape(), shape);
  const auto so = strides_of(shape);
  Tensor out(shape);
  const Tensor& xv = x.value();
  for_each_strided(shape, so, sx, [&](std::size_t o, std::size_t, std::size_t i) { out[o] = xv[i]; });
  return make_node("broadcast_to", std::move(out), {x}, [shape, so, sx](Node& self) {
    Node& px = *parent(self, 0);
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    for_each_strided(shape, so, sx, [&](std::size_t o, std::size_t, std::size_t i) { gx[i] += self.grad[o]; });
  });
}

Var select_last(const Var& x, std::size_t index) {
  const Shape& in = x.shape();
  if (in.empty() || index >= in.back()) {
    throw ShapeError("select_last", "index " + std::to_string(index) + " for " + to_string(in));
  }
  const std::size_t width = in.back();
  Shape out_shape(in.begin(), in.end() - 1);
  Tensor out(out_shape);
  const Tensor& xv = x.value();
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = xv[r * width + index];
  return make_node("select_last", std::move(out), {x}, [width, index](Node& self) {
    Node& px = *parent(self, 0);
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    for (std::size_t r = 0; r < self.grad.size(); ++r) gx[r * width + index] += self.grad[r];
  });
}

Var concat_last(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_last", "no inputs");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw ShapeError("concat_last", "scalar input");
  Shape lead(first.begin(), first.end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      throw ShapeError("concat_last", to_string(first) + " vs " + to_string(s));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  const std::size_t rows = numel(lead);
  Tensor out(out_shape);
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data().data() + r * widths[p], widths[p], out.data().data() + r * total + off);
    }
    off += widths[p];
  }
  return make_node("concat_last", std::move(out), parts, [widths, total, rows](Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      Node& pp = *parent(self, p);
      if (pp.requires_grad) {
        Tensor& g = pp.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[p]; ++c) g[r * widths[p] + c] += self.grad[r * total + off + c];
        }
      }
      off += widths[p];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

Var reduce(const char* op, const Var& x, std::vector<std::size_t> axes, bool mean) {
  const Shape& in = x.shape();
  axes = normalize_axes(op, std::move(axes), in.size());
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (std::binary_search(axes.begin(), axes.end(), i)) {
      count *= in[i];
    } else {
      out_shape.push_back(in[i]);
    }
  }
  const auto out_strides_compact = strides_of(out_shape);
  std::vector<std::size_t> so(in.size(), 0);
  for (std::size_t i = 0, k = 0; i < in.size(); ++i) {
    if (!std::binary_search(axes.begin(), axes.end(), i)) so[i] = out_strides_compact[k++];
  }
  const auto si = strides_of(in);
  const double factor = mean ? 1.0 / static_cast<double>(count == 0 ? 1 : count) : 1.0;
  Tensor out(out_shape, 0.0);
  const Tensor& xv = x.value();
  for_each_strided(in, si, so, [&](std::size_t i, std::size_t, std::size_t o) { out[o] += xv[i]; });
  if (mean) {
    for (auto& v : out.values()) v *= factor;
  }
  return make_node(op, std::move(out), {x}, [in, si, so, factor](Node& self) {
    Node& px = *parent(self, 0);
    if (!px.requires_grad) return;
    Tensor& gx = px.grad_buffer();
    for_each_strided(in, si, so,
                     [&](std::size_t i, std::size_t, std::size_t o) { gx[i] += self.grad[o] * factor; });
  });
}

}  // namespace

Var reduce_sum(const Var& x, std::vector<std::size_t> axes) {
  return reduce("reduce_sum", x, std::move(axes), false);
}

Var reduce_mean(const Var& x, std::vector<std::size_t> axes) {
  return reduce("reduce_mean", x, std::move(axes), true);
}

// ---------------------------------------------------------------------------
// Fused losses

Var binary_cross_entropy_sum(const Var& pred, const Tensor& target, double eps) {
  const Tensor& p = pred.value();
  if (p.shape() != target.shape()) {
    throw ShapeError("binary_cross_entropy", to_string(p.shape()) + " vs " + to_string(target.shape()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], eps, 1.0 - eps);
    sum -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
  }
  return make_node("binary_cross_entropy", Tensor::scalar(sum), {pred}, [target, eps](Node& self) {
    Node& pp = *parent(self, 0);
    if (!pp.requires_grad) return;
    Tensor& g = pp.grad_buffer();
    const double up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double q = pp.value[i];
      if (q < eps || q > 1.0 - eps) continue;  // clamped: flat
      g[i] += up * (-target[i] / q + (1.0 - target[i]) / (1.0 - q));
    }
  });
}

Var smooth_l1_sum(const Var& diff, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("smooth_l1: beta must be positive");
  const Tensor& d = diff.value();
  double sum = 0.0;
  for (double v : d.values()) {
    const double a = std::abs(v);
    sum += a < beta ? 0.5 * v * v / beta : a - 0.5 * beta;
  }
  return make_node("smooth_l1", Tensor::scalar(sum), {diff}, [beta](Node& self) {
    Node& pd = *parent(self, 0);
    if (!pd.requires_grad) return;
    Tensor& g = pd.grad_buffer();
    const double up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = pd.value[i];
      const double slope = std::abs(v) < beta ? v / beta : (v > 0.0 ? 1.0 : -1.0);
      g[i] += up * slope;
    }
  });
}

}  // namespace dor::nn
