#include "capaa/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_set>

#include "capaa/error.hpp"

namespace capaa::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same(const Var& a, const Var& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw Error("shape_mismatch", std::string(op) + ": " + a.shape().str() + " vs " + b.shape().str());
  }
}

Node& in(Node& n, std::size_t i) { return *n.inputs[i]; }

// One output sample = weighted sum of up to four input pixels of the same channel.
struct Tap {
  int index[4];
  double weight[4];
};

struct ResamplePlan {
  Shape in;
  Shape out;
  std::vector<Tap> taps;  // one per output pixel (per plane)
};

Tap bilinear_tap(double fy, double fx, int h, int w) {
  fy = std::clamp(fy, 0.0, h - 1.0);
  fx = std::clamp(fx, 0.0, w - 1.0);
  const int y0 = static_cast<int>(fy);
  const int x0 = static_cast<int>(fx);
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double wy = fy - y0;
  const double wx = fx - x0;
  return Tap{{y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1},
             {(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx}};
}

Var apply_plan(const Var& x, std::shared_ptr<const ResamplePlan> plan) {
  const Shape& in_shape = x.shape();
  Tensor out(plan->out);
  const std::size_t in_plane = static_cast<std::size_t>(in_shape.h) * in_shape.w;
  const std::size_t out_plane = static_cast<std::size_t>(plan->out.h) * plan->out.w;
  for (int c = 0; c < in_shape.c; ++c) {
    const double* src = x.value().data() + c * in_plane;
    double* dst = out.data() + c * out_plane;
    for (std::size_t p = 0; p < out_plane; ++p) {
      const Tap& t = plan->taps[p];
      dst[p] = t.weight[0] * src[t.index[0]] + t.weight[1] * src[t.index[1]] + t.weight[2] * src[t.index[2]] +
               t.weight[3] * src[t.index[3]];
    }
  }
  return make_op(std::move(out), {x}, [plan, in_plane, out_plane](Node& n) {
    Tensor& gx = in(n, 0).grad_buffer();
    for (int c = 0; c < n.value.channels(); ++c) {
      const double* g = n.grad.data() + c * out_plane;
      double* dst = gx.data() + c * in_plane;
      for (std::size_t p = 0; p < out_plane; ++p) {
        const Tap& t = plan->taps[p];
        for (int k = 0; k < 4; ++k) dst[t.index[k]] += t.weight[k] * g[p];
      }
    }
  });
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size()) grad = Tensor(value.shape());
  return grad;
}

Tensor Var::grad() const {
  if (node_->grad.size() == node_->value.size()) return node_->grad;
  return Tensor(node_->value.shape());
}

void Var::zero_grad() const {
  if (node_->grad.size() == node_->value.size()) node_->grad.fill(0.0);
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->is_leaf = true;
  return Var(std::move(n));
}

Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->is_leaf = true;
  n->requires_grad = true;
  return Var(std::move(n));
}

Var scalar(double v) { return constant(Tensor({1, 1, 1}, v)); }

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const Var& v : inputs) {
    n->requires_grad = n->requires_grad || v.requires_grad();
    n->inputs.push_back(v.node());
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (root.value().size() != 1) throw Error("not_scalar", "backward requires a scalar root");
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (!n->is_leaf) n->grad_buffer().fill(0.0);
  }
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& n) {
    for (int i = 0; i < 2; ++i)
      if (in(n, i).requires_grad) in(n, i).grad_buffer() += n.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& n) {
    if (in(n, 0).requires_grad) in(n, 0).grad_buffer() += n.grad;
    if (in(n, 1).requires_grad) in(n, 1).grad_buffer() -= n.grad;
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  return make_op(hadamard(a.value(), b.value()), {a, b}, [](Node& n) {
    if (in(n, 0).requires_grad) in(n, 0).grad_buffer() += hadamard(n.grad, in(n, 1).value);
    if (in(n, 1).requires_grad) in(n, 1).grad_buffer() += hadamard(n.grad, in(n, 0).value);
  });
}

Var div(const Var& a, const Var& b) {
  require_same(a, b, "div");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = in(n, 0).value;
    const Tensor& bv = in(n, 1).value;
    if (in(n, 0).requires_grad) {
      Tensor& g = in(n, 0).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / bv[i];
    }
    if (in(n, 1).requires_grad) {
      Tensor& g = in(n, 1).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& n) { in(n, 0).grad_buffer() += n.grad * s; });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v += s;
  return make_op(std::move(out), {a}, [](Node& n) { in(n, 0).grad_buffer() += n.grad; });
}

Var square(const Var& a) {
  return make_op(hadamard(a.value(), a.value()), {a}, [](Node& n) {
    Tensor& g = in(n, 0).grad_buffer();
    const Tensor& av = in(n, 0).value;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * av[i] * n.grad[i];
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::max(v, 0.0);
  return make_op(std::move(out), {a}, [](Node& n) {
    Tensor& g = in(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (n.value[i] > 0.0) g[i] += n.grad[i];
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return make_op(std::move(out), {a}, [](Node& n) {
    Tensor& g = in(n, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
  });
}

Var mul_map(const Var& a, const Tensor& map) {
  if (map.channels() != 1 || map.height() != a.shape().h || map.width() != a.shape().w) {
    throw Error("shape_mismatch", "mul_map: map " + map.shape().str() + " vs " + a.shape().str());
  }
  const std::size_t plane = map.size();
  Tensor out = a.value();
  for (int c = 0; c < out.channels(); ++c)
    for (std::size_t p = 0; p < plane; ++p) out[c * plane + p] *= map[p];
  return make_op(std::move(out), {a}, [map, plane](Node& n) {
    Tensor& g = in(n, 0).grad_buffer();
    for (int c = 0; c < n.value.channels(); ++c)
      for (std::size_t p = 0; p < plane; ++p) g[c * plane + p] += n.grad[c * plane + p] * map[p];
  });
}

Var sum(const Var& a) {
  return make_op(Tensor({1, 1, 1}, a.value().sum()), {a}, [](Node& n) {
    Tensor& g = in(n, 0).grad_buffer();
    for (double& v : g.values()) v += n.grad[0];
  });
}

Var mean(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a.value().size());
  return make_op(Tensor({1, 1, 1}, a.value().sum() * inv), {a}, [inv](Node& n) {
    Tensor& g = in(n, 0).grad_buffer();
    for (double& v : g.values()) v += n.grad[0] * inv;
  });
}

Var mean_abs_diff(const Var& a, const Tensor& target) {
  if (!(a.shape() == target.shape())) throw Error("shape_mismatch", "mean_abs_diff shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) total += std::abs(a.value()[i] - target[i]);
  const double inv = 1.0 / static_cast<double>(target.size());
  return make_op(Tensor({1, 1, 1}, total * inv), {a}, [target, inv](Node& n) {
    Tensor& g = in(n, 0).grad_buffer();
    const Tensor& av = in(n, 0).value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = av[i] - target[i];
      g[i] += n.grad[0] * inv * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
    }
  });
}

Var select(const Var& vec, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= vec.value().size()) {
    throw Error("index_out_of_range", "select index " + std::to_string(index));
  }
  return make_op(Tensor({1, 1, 1}, vec.value()[index]), {vec},
                 [index](Node& n) { in(n, 0).grad_buffer()[index] += n.grad[0]; });
}

Var log_softmax(const Var& logits) {
  const Tensor& z = logits.value();
  const double zmax = z.max();
  double total = 0.0;
  for (double v : z.values()) total += std::exp(v - zmax);
  const double lse = zmax + std::log(total);
  Tensor out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return make_op(std::move(out), {logits}, [](Node& n) {
    Tensor& g = in(n, 0).grad_buffer();
    const double gsum = n.grad.sum();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] - std::exp(n.value[i]) * gsum;
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int kernel, int stride, int pad) {
  const Shape xs = x.shape();
  const int cout = weight.shape().c;
  const int kdim = xs.c * kernel * kernel;
  if (weight.shape().h != kdim || bias.shape().c != cout) {
    throw Error("shape_mismatch", "conv2d weight " + weight.shape().str() + " incompatible with input " + xs.str());
  }
  const int ho = (xs.h + 2 * pad - kernel) / stride + 1;
  const int wo = (xs.w + 2 * pad - kernel) / stride + 1;
  const int npix = ho * wo;
  const bool pointwise = kernel == 1 && stride == 1 && pad == 0;

  auto cols = std::make_shared<Storage>();
  if (!pointwise) {
    cols->assign(static_cast<std::size_t>(kdim) * npix, 0.0);
    for (int c = 0; c < xs.c; ++c)
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          double* row = cols->data() + static_cast<std::size_t>((c * kernel + ky) * kernel + kx) * npix;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= xs.h) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix >= 0 && ix < xs.w) row[oy * wo + ox] = x.value().at(c, iy, ix);
            }
          }
        }
  }
  const double* cols_ptr = pointwise ? x.value().data() : cols->data();

  Tensor out({cout, ho, wo});
  MapMat o(out.data(), cout, npix);
  o.noalias() = ConstMapMat(weight.value().data(), cout, kdim) * ConstMapMat(cols_ptr, kdim, npix);
  for (int c = 0; c < cout; ++c) o.row(c).array() += bias.value()[c];

  return make_op(std::move(out), {x, weight, bias},
                 [cols, pointwise, xs, kernel, stride, pad, ho, wo, cout, kdim, npix](Node& n) {
                   ConstMapMat g(n.grad.data(), cout, npix);
                   const double* cp = pointwise ? in(n, 0).value.data() : cols->data();
                   if (in(n, 1).requires_grad) {
                     MapMat gw(in(n, 1).grad_buffer().data(), cout, kdim);
                     gw.noalias() += g * ConstMapMat(cp, kdim, npix).transpose();
                   }
                   if (in(n, 2).requires_grad) {
                     Tensor& gb = in(n, 2).grad_buffer();
                     for (int c = 0; c < cout; ++c) gb[c] += g.row(c).sum();
                   }
                   if (!in(n, 0).requires_grad) return;
                   ConstMapMat w(in(n, 1).value.data(), cout, kdim);
                   Tensor& gx = in(n, 0).grad_buffer();
                   if (pointwise) {
                     MapMat(gx.data(), kdim, npix).noalias() += w.transpose() * g;
                     return;
                   }
                   RowMat gcols = w.transpose() * g;
                   for (int c = 0; c < xs.c; ++c)
                     for (int ky = 0; ky < kernel; ++ky)
                       for (int kx = 0; kx < kernel; ++kx) {
                         const double* row = gcols.data() + static_cast<std::size_t>((c * kernel + ky) * kernel + kx) * npix;
                         for (int oy = 0; oy < ho; ++oy) {
                           const int iy = oy * stride + ky - pad;
                           if (iy < 0 || iy >= xs.h) continue;
                           for (int ox = 0; ox < wo; ++ox) {
                             const int ix = ox * stride + kx - pad;
                             if (ix >= 0 && ix < xs.w) gx.at(c, iy, ix) += row[oy * wo + ox];
                           }
                         }
                       }
                 });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const int nout = weight.shape().c;
  const int nin = weight.shape().h;
  if (static_cast<std::size_t>(nin) != x.value().size() || bias.shape().c != nout) {
    throw Error("shape_mismatch", "linear weight " + weight.shape().str() + " vs input " + x.shape().str());
  }
  Tensor out({nout, 1, 1});
  Eigen::Map<Eigen::VectorXd>(out.data(), nout) =
      ConstMapMat(weight.value().data(), nout, nin) * Eigen::Map<const Eigen::VectorXd>(x.value().data(), nin) +
      Eigen::Map<const Eigen::VectorXd>(bias.value().data(), nout);
  return make_op(std::move(out), {x, weight, bias}, [nout, nin](Node& n) {
    Eigen::Map<const Eigen::VectorXd> g(n.grad.data(), nout);
    if (in(n, 0).requires_grad) {
      Eigen::Map<Eigen::VectorXd>(in(n, 0).grad_buffer().data(), nin) +=
          ConstMapMat(in(n, 1).value.data(), nout, nin).transpose() * g;
    }
    if (in(n, 1).requires_grad) {
      MapMat(in(n, 1).grad_buffer().data(), nout, nin) +=
          g * Eigen::Map<const Eigen::VectorXd>(in(n, 0).value.data(), nin).transpose();
    }
    if (in(n, 2).requires_grad) Eigen::Map<Eigen::VectorXd>(in(n, 2).grad_buffer().data(), nout) += g;
  });
}

Var max_pool2(const Var& x) {
  const Shape s = x.shape();
  const int ho = s.h / 2;
  const int wo = s.w / 2;
  Tensor out({s.c, ho, wo});
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx) {
        double best = -1e300;
        std::size_t best_i = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t i = (static_cast<std::size_t>(c) * s.h + 2 * y + dy) * s.w + 2 * xx + dx;
            if (x.value()[i] > best) {
              best = x.value()[i];
              best_i = i;
            }
          }
        const std::size_t o = (static_cast<std::size_t>(c) * ho + y) * wo + xx;
        out[o] = best;
        (*arg)[o] = best_i;
      }
  return make_op(std::move(out), {x}, [arg](Node& n) {
    Tensor& g = in(n, 0).grad_buffer();
    for (std::size_t o = 0; o < arg->size(); ++o) g[(*arg)[o]] += n.grad[o];
  });
}

Var avg_pool2(const Var& x) {
  const Shape s = x.shape();
  const int ho = s.h / 2;
  const int wo = s.w / 2;
  Tensor out({s.c, ho, wo});
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx)
        out.at(c, y, xx) = 0.25 * (x.value().at(c, 2 * y, 2 * xx) + x.value().at(c, 2 * y, 2 * xx + 1) +
                                   x.value().at(c, 2 * y + 1, 2 * xx) + x.value().at(c, 2 * y + 1, 2 * xx + 1));
  return make_op(std::move(out), {x}, [](Node& n) {
    Tensor& g = in(n, 0).grad_buffer();
    const Shape o = n.value.shape();
    for (int c = 0; c < o.c; ++c)
      for (int y = 0; y < o.h; ++y)
        for (int xx = 0; xx < o.w; ++xx) {
          const double v = 0.25 * n.grad.at(c, y, xx);
          g.at(c, 2 * y, 2 * xx) += v;
          g.at(c, 2 * y, 2 * xx + 1) += v;
          g.at(c, 2 * y + 1, 2 * xx) += v;
          g.at(c, 2 * y + 1, 2 * xx + 1) += v;
        }
  });
}

Var global_avg_pool(const Var& x) {
  const Shape s = x.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  Tensor out({s.c, 1, 1});
  for (int c = 0; c < s.c; ++c) {
    double acc = 0.0;
    for (double v : x.value().plane(c)) acc += v;
    out[c] = acc / static_cast<double>(plane);
  }
  return make_op(std::move(out), {x}, [plane](Node& n) {
    Tensor& g = in(n, 0).grad_buffer();
    for (int c = 0; c < n.value.channels(); ++c) {
      const double v = n.grad[c] / static_cast<double>(plane);
      for (double& gv : g.plane(c)) gv += v;
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  if (a.shape().h != b.shape().h || a.shape().w != b.shape().w) {
    throw Error("shape_mismatch", "concat " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor out({a.shape().c + b.shape().c, a.shape().h, a.shape().w});
  std::copy(a.value().values().begin(), a.value().values().end(), out.data());
  std::copy(b.value().values().begin(), b.value().values().end(), out.data() + a.value().size());
  const std::size_t na = a.value().size();
  return make_op(std::move(out), {a, b}, [na](Node& n) {
    if (in(n, 0).requires_grad) {
      Tensor& g = in(n, 0).grad_buffer();
      for (std::size_t i = 0; i < na; ++i) g[i] += n.grad[i];
    }
    if (in(n, 1).requires_grad) {
      Tensor& g = in(n, 1).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[na + i];
    }
  });
}

Var grid_sample(const Var& image, const Var& grid) {
  const Shape s = image.shape();
  const Shape gs = grid.shape();
  if (gs.c != 2) throw Error("shape_mismatch", "grid_sample grid must have 2 channels");
  const int ho = gs.h;
  const int wo = gs.w;
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  const std::size_t in_plane = static_cast<std::size_t>(s.h) * s.w;
  Tensor out({s.c, ho, wo});
  auto taps = std::make_shared<std::vector<Tap>>(out_plane);
  // Per-pixel derivative flags: zero where the coordinate was clamped.
  auto live = std::make_shared<std::vector<std::array<bool, 2>>>(out_plane);
  for (std::size_t p = 0; p < out_plane; ++p) {
    const double gx = grid.value()[p];
    const double gy = grid.value()[out_plane + p];
    (*live)[p] = {gx > 0.0 && gx < s.w - 1.0, gy > 0.0 && gy < s.h - 1.0};
    (*taps)[p] = bilinear_tap(gy, gx, s.h, s.w);
  }
  for (int c = 0; c < s.c; ++c) {
    const double* src = image.value().data() + c * in_plane;
    for (std::size_t p = 0; p < out_plane; ++p) {
      const Tap& t = (*taps)[p];
      out[c * out_plane + p] = t.weight[0] * src[t.index[0]] + t.weight[1] * src[t.index[1]] +
                               t.weight[2] * src[t.index[2]] + t.weight[3] * src[t.index[3]];
    }
  }
  return make_op(std::move(out), {image, grid}, [taps, live, in_plane, out_plane, s](Node& n) {
    if (in(n, 0).requires_grad) {
      Tensor& gi = in(n, 0).grad_buffer();
      for (int c = 0; c < s.c; ++c)
        for (std::size_t p = 0; p < out_plane; ++p) {
          const Tap& t = (*taps)[p];
          const double g = n.grad[c * out_plane + p];
          for (int k = 0; k < 4; ++k) gi[c * in_plane + t.index[k]] += t.weight[k] * g;
        }
    }
    if (in(n, 1).requires_grad) {
      Tensor& gg = in(n, 1).grad_buffer();
      const Tensor& img = in(n, 0).value;
      const Tensor& grid_v = in(n, 1).value;
      for (std::size_t p = 0; p < out_plane; ++p) {
        const Tap& t = (*taps)[p];
        const double fx = std::clamp(grid_v[p], 0.0, s.w - 1.0);
        const double fy = std::clamp(grid_v[out_plane + p], 0.0, s.h - 1.0);
        const double wx = fx - std::floor(fx);
        const double wy = fy - std::floor(fy);
        double dx = 0.0;
        double dy = 0.0;
        for (int c = 0; c < s.c; ++c) {
          const double* src = img.data() + c * in_plane;
          const double g = n.grad[c * out_plane + p];
          const double v00 = src[t.index[0]], v01 = src[t.index[1]], v10 = src[t.index[2]], v11 = src[t.index[3]];
          dx += g * ((1 - wy) * (v01 - v00) + wy * (v11 - v10));
          dy += g * ((1 - wx) * (v10 - v00) + wx * (v11 - v01));
        }
        if ((*live)[p][0]) gg[p] += dx;
        if ((*live)[p][1]) gg[out_plane + p] += dy;
      }
    }
  });
}

Var upsample_aligned(const Var& x, int height, int width) {
  auto plan = std::make_shared<ResamplePlan>();
  plan->in = x.shape();
  plan->out = {x.shape().c, height, width};
  plan->taps.reserve(static_cast<std::size_t>(height) * width);
  const double sy = height > 1 ? (x.shape().h - 1.0) / (height - 1.0) : 0.0;
  const double sx = width > 1 ? (x.shape().w - 1.0) / (width - 1.0) : 0.0;
  for (int y = 0; y < height; ++y)
    for (int xx = 0; xx < width; ++xx) plan->taps.push_back(bilinear_tap(y * sy, xx * sx, x.shape().h, x.shape().w));
  return apply_plan(x, plan);
}

Var resize(const Var& x, int height, int width) {
  if (x.shape().h == height && x.shape().w == width) return x;
  auto plan = std::make_shared<ResamplePlan>();
  plan->in = x.shape();
  plan->out = {x.shape().c, height, width};
  plan->taps.reserve(static_cast<std::size_t>(height) * width);
  const double sy = static_cast<double>(x.shape().h) / height;
  const double sx = static_cast<double>(x.shape().w) / width;
  for (int y = 0; y < height; ++y)
    for (int xx = 0; xx < width; ++xx)
      plan->taps.push_back(bilinear_tap((y + 0.5) * sy - 0.5, (xx + 0.5) * sx - 0.5, x.shape().h, x.shape().w));
  return apply_plan(x, plan);
}

Var filter_valid(const Var& x, std::span<const double> kernel) {
  const Shape s = x.shape();
  const int k = static_cast<int>(kernel.size());
  const int ho = s.h - k + 1;
  const int wo = s.w - k + 1;
  if (ho <= 0 || wo <= 0) throw Error("shape_mismatch", "filter_valid: kernel larger than image " + s.str());
  std::vector<double> kv(kernel.begin(), kernel.end());
  Tensor tmp({s.c, s.h, wo});
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int xx = 0; xx < wo; ++xx) {
        double acc = 0.0;
        for (int i = 0; i < k; ++i) acc += kv[i] * x.value().at(c, y, xx + i);
        tmp.at(c, y, xx) = acc;
      }
  Tensor out({s.c, ho, wo});
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx) {
        double acc = 0.0;
        for (int i = 0; i < k; ++i) acc += kv[i] * tmp.at(c, y + i, xx);
        out.at(c, y, xx) = acc;
      }
  return make_op(std::move(out), {x}, [kv, s, k, ho, wo](Node& n) {
    Tensor gtmp({s.c, s.h, wo});
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx) {
          const double g = n.grad.at(c, y, xx);
          for (int i = 0; i < k; ++i) gtmp.at(c, y + i, xx) += kv[i] * g;
        }
    Tensor& gx = in(n, 0).grad_buffer();
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < wo; ++xx) {
          const double g = gtmp.at(c, y, xx);
          for (int i = 0; i < k; ++i) gx.at(c, y, xx + i) += kv[i] * g;
        }
  });
}

}  // namespace capaa::ad
