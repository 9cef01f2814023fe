#include "osteoforge/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "osteoforge/error.hpp"
#include "random.hpp"

namespace osteoforge::ad {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

namespace {

thread_local bool g_recording = true;

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ShapeError(field, message);
}

template <class T>
void require_defined(const Tensor<T>& t, const char* what) {
  require(t.defined(), what, "undefined tensor");
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  require_defined(a, what);
  require_defined(b, what);
  require(a.shape() == b.shape(), what, "shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

/// True when the parent wants a gradient; used by backward closures.
template <class T>
bool wants(const Tensor<T>& t) {
  return t.defined() && t.requires_grad();
}

// Copies the (ci, ky, kx) shifted planes of one image into a
// (Cin*k*k) x (h*w) row-major matrix; out-of-image taps are zero.
template <class T>
void im2col(const T* x, int cin, int h, int w, int k, int dil, int pad, T* col) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < cin; ++ci) {
    const T* plane = x + static_cast<std::size_t>(ci) * hw;
    for (int ky = 0; ky < k; ++ky) {
      const int dy = ky * dil - pad;
      for (int kx = 0; kx < k; ++kx) {
        const int dx = kx * dil - pad;
        T* row = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
        const int x0 = std::clamp(-dx, 0, w);
        const int x1 = std::clamp(w - dx, x0, w);
        for (int y = 0; y < h; ++y) {
          T* dst = row + static_cast<std::size_t>(y) * w;
          const int sy = y + dy;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(sy) * w;
          std::fill(dst, dst + x0, T(0));
          std::copy(src + x0 + dx, src + x1 + dx, dst + x0);
          std::fill(dst + x1, dst + w, T(0));
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, int cin, int h, int w, int k, int dil, int pad, T* dx_img) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < cin; ++ci) {
    T* plane = dx_img + static_cast<std::size_t>(ci) * hw;
    for (int ky = 0; ky < k; ++ky) {
      const int dy = ky * dil - pad;
      for (int kx = 0; kx < k; ++kx) {
        const int dx = kx * dil - pad;
        const T* row = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
        const int x0 = std::clamp(-dx, 0, w);
        const int x1 = std::clamp(w - dx, x0, w);
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const T* src = row + static_cast<std::size_t>(y) * w;
          T* dst = plane + static_cast<std::size_t>(sy) * w + dx;
          for (int x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  return from_values(shape, std::vector<T>(shape.numel(), value), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::from_values(Shape shape, std::vector<T> values, bool requires_grad) {
  require(shape.n > 0 && shape.c > 0 && shape.h > 0 && shape.w > 0, "shape",
          "non-positive dimension in " + shape.str());
  require(values.size() == shape.numel(), "values",
          std::to_string(values.size()) + " values for shape " + shape.str());
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_values(Shape{1, 1, 1, 1}, {value}, requires_grad);
}

template <class T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <class T>
T Tensor<T>::item() const {
  require(numel() == 1, "item", "tensor has " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return from_values(shape(), node_->value, false);
}

template <class T>
Tensor<T> record_op(Shape shape, std::vector<T> values, std::vector<Tensor<T>> parents,
                    BackwardFn<T> backward_fn) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = shape;
  node->value = std::move(values);
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const Tensor<T>& p) { return wants(p); });
  if (g_recording && any) {
    node->requires_grad = true;
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }
bool grad_recording_enabled() { return g_recording; }

// ---------------------------------------------------------------------------
// Ops

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 ConvOptions options) {
  require_defined(input, "conv2d.input");
  require_defined(weight, "conv2d.weight");
  const Shape xs = input.shape();
  const Shape ws = weight.shape();
  const int k = ws.h;
  const int dil = options.dilation;
  require(ws.w == k && k % 2 == 1, "conv2d.weight", "kernel must be square with odd size");
  require(dil >= 1, "conv2d.dilation", "must be >= 1");
  require(ws.c == xs.c, "conv2d.input",
          "expected " + std::to_string(ws.c) + " channels, got " + std::to_string(xs.c));
  if (bias.defined()) {
    require(bias.numel() == static_cast<std::size_t>(ws.n), "conv2d.bias", "need one bias per output channel");
  }
  const int cout = ws.n;
  const int cin = xs.c;
  const int h = xs.h;
  const int w = xs.w;
  const int pad = dil * (k - 1) / 2;
  const std::size_t hw = xs.plane();
  const std::size_t kdim = static_cast<std::size_t>(cin) * k * k;
  const bool pointwise = k == 1;

  const Shape ys{xs.n, cout, h, w};
  std::vector<T> out(ys.numel());
  std::vector<T> col(pointwise ? 0 : kdim * hw);
  const ConstMatMap<T> wm(weight.values().data(), cout, static_cast<Eigen::Index>(kdim));
  for (int n = 0; n < xs.n; ++n) {
    const T* xn = input.values().data() + static_cast<std::size_t>(n) * cin * hw;
    const T* cn = xn;
    if (!pointwise) {
      im2col(xn, cin, h, w, k, dil, pad, col.data());
      cn = col.data();
    }
    MatMap<T> om(out.data() + static_cast<std::size_t>(n) * cout * hw, cout, static_cast<Eigen::Index>(hw));
    om.noalias() = wm * ConstMatMap<T>(cn, static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw));
    if (bias.defined()) om.colwise() += ConstVecMap<T>(bias.values().data(), cout);
  }

  return record_op<T>(
      ys, std::move(out), {input, weight, bias},
      [=](std::span<const T> gout, std::span<Tensor<T>> p) {
        Tensor<T>& x = p[0];
        Tensor<T>& wt = p[1];
        Tensor<T>& b = p[2];
        const ConstMatMap<T> wmat(wt.values().data(), cout, static_cast<Eigen::Index>(kdim));
        std::vector<T> colbuf(pointwise ? 0 : kdim * hw);
        std::vector<T> dcol(pointwise ? 0 : kdim * hw);
        T* dw = wants(wt) ? wt.mutable_grad().data() : nullptr;
        T* db = wants(b) ? b.mutable_grad().data() : nullptr;
        T* dx = wants(x) ? x.mutable_grad().data() : nullptr;
        for (int n = 0; n < xs.n; ++n) {
          const ConstMatMap<T> g(gout.data() + static_cast<std::size_t>(n) * cout * hw, cout,
                                 static_cast<Eigen::Index>(hw));
          const T* xn = x.values().data() + static_cast<std::size_t>(n) * cin * hw;
          if (dw != nullptr) {
            const T* cn = xn;
            if (!pointwise) {
              im2col(xn, cin, h, w, k, dil, pad, colbuf.data());
              cn = colbuf.data();
            }
            MatMap<T>(dw, cout, static_cast<Eigen::Index>(kdim)).noalias() +=
                g * ConstMatMap<T>(cn, static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw)).transpose();
          }
          if (db != nullptr) {
            // Fixed summation order; Eigen reductions peel by address.
            for (int c = 0; c < cout; ++c) {
              const T* row = g.data() + static_cast<std::size_t>(c) * hw;
              double acc = 0.0;
              for (std::size_t i = 0; i < hw; ++i) acc += row[i];
              db[c] += static_cast<T>(acc);
            }
          }
          if (dx != nullptr) {
            T* dxn = dx + static_cast<std::size_t>(n) * cin * hw;
            if (pointwise) {
              MatMap<T>(dxn, cin, static_cast<Eigen::Index>(hw)).noalias() += wmat.transpose() * g;
            } else {
              MatMap<T>(dcol.data(), static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw)).noalias() =
                  wmat.transpose() * g;
              col2im_add(dcol.data(), cin, h, w, k, dil, pad, dxn);
            }
          }
        }
      });
}

template <class T>
Tensor<T> maxpool2(const Tensor<T>& input) {
  require_defined(input, "maxpool2");
  const Shape s = input.shape();
  require(s.h % 2 == 0 && s.w % 2 == 0, "maxpool2", "spatial dims must be even, got " + s.str());
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  std::vector<T> out(os.numel());
  std::vector<std::uint32_t> arg(os.numel());
  const T* x = input.values().data();
  std::size_t o = 0;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * s.plane();
    for (int y = 0; y < os.h; ++y)
      for (int xx = 0; xx < os.w; ++xx, ++o) {
        const std::size_t i00 = base + static_cast<std::size_t>(2 * y) * s.w + 2 * xx;
        const std::size_t cand[4] = {i00, i00 + 1, i00 + s.w, i00 + s.w + 1};
        std::size_t best = cand[0];
        for (int c = 1; c < 4; ++c)
          if (x[cand[c]] > x[best]) best = cand[c];
        out[o] = x[best];
        arg[o] = static_cast<std::uint32_t>(best);
      }
  }
  return record_op<T>(os, std::move(out), {input},
                      [arg = std::move(arg)](std::span<const T> g, std::span<Tensor<T>> p) {
                        auto dx = p[0].mutable_grad();
                        for (std::size_t i = 0; i < g.size(); ++i) dx[arg[i]] += g[i];
                      });
}

template <class T>
Tensor<T> avgpool2(const Tensor<T>& input) {
  require_defined(input, "avgpool2");
  const Shape s = input.shape();
  require(s.h % 2 == 0 && s.w % 2 == 0, "avgpool2", "spatial dims must be even, got " + s.str());
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  std::vector<T> out(os.numel());
  const T* x = input.values().data();
  std::size_t o = 0;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * s.plane();
    for (int y = 0; y < os.h; ++y)
      for (int xx = 0; xx < os.w; ++xx, ++o) {
        const std::size_t i = base + static_cast<std::size_t>(2 * y) * s.w + 2 * xx;
        out[o] = (x[i] + x[i + 1] + x[i + s.w] + x[i + s.w + 1]) / T(4);
      }
  }
  return record_op<T>(os, std::move(out), {input}, [s, os](std::span<const T> g, std::span<Tensor<T>> p) {
    auto dx = p[0].mutable_grad();
    std::size_t o = 0;
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      const std::size_t base = static_cast<std::size_t>(nc) * s.plane();
      for (int y = 0; y < os.h; ++y)
        for (int xx = 0; xx < os.w; ++xx, ++o) {
          const std::size_t i = base + static_cast<std::size_t>(2 * y) * s.w + 2 * xx;
          const T q = g[o] / T(4);
          dx[i] += q;
          dx[i + 1] += q;
          dx[i + s.w] += q;
          dx[i + s.w + 1] += q;
        }
    }
  });
}

template <class T>
Tensor<T> upsample_nearest2(const Tensor<T>& input) {
  require_defined(input, "upsample_nearest2");
  const Shape s = input.shape();
  const Shape os{s.n, s.c, s.h * 2, s.w * 2};
  std::vector<T> out(os.numel());
  const T* x = input.values().data();
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const T* src = x + static_cast<std::size_t>(nc) * s.plane();
    T* dst = out.data() + static_cast<std::size_t>(nc) * os.plane();
    for (int y = 0; y < os.h; ++y)
      for (int xx = 0; xx < os.w; ++xx)
        dst[static_cast<std::size_t>(y) * os.w + xx] = src[static_cast<std::size_t>(y / 2) * s.w + xx / 2];
  }
  return record_op<T>(os, std::move(out), {input}, [s, os](std::span<const T> g, std::span<Tensor<T>> p) {
    auto dx = p[0].mutable_grad();
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      const T* src = g.data() + static_cast<std::size_t>(nc) * os.plane();
      T* dst = dx.data() + static_cast<std::size_t>(nc) * s.plane();
      for (int y = 0; y < os.h; ++y)
        for (int xx = 0; xx < os.w; ++xx)
          dst[static_cast<std::size_t>(y / 2) * s.w + xx / 2] += src[static_cast<std::size_t>(y) * os.w + xx];
    }
  });
}

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "concat_channels");
  require_defined(b, "concat_channels");
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w, "concat_channels",
          "spatial/batch mismatch " + sa.str() + " vs " + sb.str());
  const Shape os{sa.n, sa.c + sb.c, sa.h, sa.w};
  const std::size_t na = static_cast<std::size_t>(sa.c) * sa.plane();
  const std::size_t nb = static_cast<std::size_t>(sb.c) * sb.plane();
  std::vector<T> out(os.numel());
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.values().data() + n * na, na, out.data() + n * (na + nb));
    std::copy_n(b.values().data() + n * nb, nb, out.data() + n * (na + nb) + na);
  }
  return record_op<T>(os, std::move(out), {a, b}, [=](std::span<const T> g, std::span<Tensor<T>> p) {
    for (int n = 0; n < sa.n; ++n) {
      const T* gn = g.data() + n * (na + nb);
      if (wants(p[0])) {
        T* da = p[0].mutable_grad().data() + n * na;
        for (std::size_t i = 0; i < na; ++i) da[i] += gn[i];
      }
      if (wants(p[1])) {
        T* dbp = p[1].mutable_grad().data() + n * nb;
        for (std::size_t i = 0; i < nb; ++i) dbp[i] += gn[na + i];
      }
    }
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& input) {
  require_defined(input, "relu");
  std::vector<T> out(input.values().begin(), input.values().end());
  for (T& v : out) v = v > T(0) ? v : T(0);
  return record_op<T>(input.shape(), std::move(out), {input}, [](std::span<const T> g, std::span<Tensor<T>> p) {
    const auto x = p[0].values();
    auto dx = p[0].mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > T(0)) dx[i] += g[i];
  });
}

template <class T>
Tensor<T> tanh_act(const Tensor<T>& input) {
  require_defined(input, "tanh_act");
  std::vector<T> out(input.values().begin(), input.values().end());
  for (T& v : out) v = std::tanh(v);
  // 1 - tanh(x)^2 evaluated from x in double: in single precision tanh(x)
  // rounds to +-1 for |x| > 9 and would make the derivative exactly zero.
  return record_op<T>(input.shape(), std::move(out), {input}, [](std::span<const T> g, std::span<Tensor<T>> p) {
    const auto x = p[0].values();
    auto dx = p[0].mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double c = std::cosh(static_cast<double>(x[i]));
      dx[i] += static_cast<T>(static_cast<double>(g[i]) / (c * c));
    }
  });
}

template <class T>
Tensor<T> gaussian_noise(const Tensor<T>& input, double stddev, bool training, std::uint64_t seed) {
  require_defined(input, "gaussian_noise");
  if (!(stddev >= 0)) throw ConfigError("noise_std", "must be non-negative");
  std::vector<T> out(input.values().begin(), input.values().end());
  if (training && stddev > 0) {
    osteoforge::detail::Engine eng(seed);
    std::normal_distribution<double> noise(0.0, stddev);
    for (T& v : out) v += static_cast<T>(noise(eng));
  }
  return record_op<T>(input.shape(), std::move(out), {input}, [](std::span<const T> g, std::span<Tensor<T>> p) {
    auto dx = p[0].mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return record_op<T>(a.shape(), std::move(out), {a, b}, [](std::span<const T> g, std::span<Tensor<T>> p) {
    for (auto& t : p) {
      if (!wants(t)) continue;
      auto d = t.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& input, double factor) {
  require_defined(input, "scale");
  const T f = static_cast<T>(factor);
  std::vector<T> out(input.values().begin(), input.values().end());
  for (T& v : out) v *= f;
  return record_op<T>(input.shape(), std::move(out), {input}, [f](std::span<const T> g, std::span<Tensor<T>> p) {
    auto d = p[0].mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * f;
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& input) {
  require_defined(input, "sum");
  double acc = 0.0;
  for (T v : input.values()) acc += static_cast<double>(v);
  return record_op<T>(Shape{1, 1, 1, 1}, {static_cast<T>(acc)}, {input},
                      [](std::span<const T> g, std::span<Tensor<T>> p) {
                        for (T& d : p[0].mutable_grad()) d += g[0];
                      });
}

template <class T>
Tensor<T> mean(const Tensor<T>& input) {
  require_defined(input, "mean");
  double acc = 0.0;
  for (T v : input.values()) acc += static_cast<double>(v);
  const double n = static_cast<double>(input.numel());
  return record_op<T>(Shape{1, 1, 1, 1}, {static_cast<T>(acc / n)}, {input},
                      [n](std::span<const T> g, std::span<Tensor<T>> p) {
                        const T q = static_cast<T>(static_cast<double>(g[0]) / n);
                        for (T& d : p[0].mutable_grad()) d += q;
                      });
}

template <class T>
Tensor<T> reduce_l1(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& weight) {
  require_same_shape(a, b, "reduce_l1");
  if (weight.defined()) require_same_shape(a, weight, "reduce_l1.weight");
  const auto av = a.values();
  const auto bv = b.values();
  const T* wv = weight.defined() ? weight.values().data() : nullptr;
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(std::abs(av[i] - bv[i]));
    acc += wv != nullptr ? d * static_cast<double>(wv[i]) : d;
  }
  const double n = static_cast<double>(av.size());
  Tensor<T> wcopy = weight;
  return record_op<T>(Shape{1, 1, 1, 1}, {static_cast<T>(acc / n)}, {a, b},
                      [n, wcopy](std::span<const T> g, std::span<Tensor<T>> p) {
                        const auto x = p[0].values();
                        const auto y = p[1].values();
                        const T* wt = wcopy.defined() ? wcopy.values().data() : nullptr;
                        const double q = static_cast<double>(g[0]) / n;
                        T* da = wants(p[0]) ? p[0].mutable_grad().data() : nullptr;
                        T* db = wants(p[1]) ? p[1].mutable_grad().data() : nullptr;
                        for (std::size_t i = 0; i < x.size(); ++i) {
                          const T diff = x[i] - y[i];
                          const double sgn = diff > T(0) ? 1.0 : (diff < T(0) ? -1.0 : 0.0);
                          const T gi = static_cast<T>(sgn * q * (wt != nullptr ? static_cast<double>(wt[i]) : 1.0));
                          if (da != nullptr) da[i] += gi;
                          if (db != nullptr) db[i] -= gi;
                        }
                      });
}

template <class T>
Tensor<T> reduce_mse(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "reduce_mse");
  const auto av = a.values();
  const auto bv = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    acc += d * d;
  }
  const double n = static_cast<double>(av.size());
  return record_op<T>(Shape{1, 1, 1, 1}, {static_cast<T>(acc / n)}, {a, b},
                      [n](std::span<const T> g, std::span<Tensor<T>> p) {
                        const auto x = p[0].values();
                        const auto y = p[1].values();
                        const double q = 2.0 * static_cast<double>(g[0]) / n;
                        T* da = wants(p[0]) ? p[0].mutable_grad().data() : nullptr;
                        T* db = wants(p[1]) ? p[1].mutable_grad().data() : nullptr;
                        for (std::size_t i = 0; i < x.size(); ++i) {
                          const T gi = static_cast<T>(q * (static_cast<double>(x[i]) - static_cast<double>(y[i])));
                          if (da != nullptr) da[i] += gi;
                          if (db != nullptr) db[i] -= gi;
                        }
                      });
}

template <class T>
void backward(const Tensor<T>& loss) {
  require_defined(loss, "backward");
  require(loss.numel() == 1, "backward", "loss must be a scalar, got shape " + loss.shape().str());
  using NodePtr = std::shared_ptr<detail::Node<T>>;
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<NodePtr> order;
  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<std::pair<NodePtr, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const NodePtr parent = node->parents[next++];
      if (parent && parent->requires_grad && seen.insert(parent.get()).second) {
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (const auto& node : order) {
    if (!node->parents.empty()) node->grad.assign(node->value.size(), T(0));
  }
  loss.node()->grad_buffer()[0] += T(1);

  std::vector<Tensor<T>> parents;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>& node = **it;
    if (node.parents.empty() || !node.backward) continue;
    parents.clear();
    for (const auto& p : node.parents) parents.emplace_back(p);
    node.backward(node.grad, parents);
  }
}

#define OSTEOFORGE_INSTANTIATE(T)                                                              \
  template class Tensor<T>;                                                                    \
  template Tensor<T> record_op<T>(Shape, std::vector<T>, std::vector<Tensor<T>>, BackwardFn<T>); \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ConvOptions); \
  template Tensor<T> maxpool2<T>(const Tensor<T>&);                                            \
  template Tensor<T> avgpool2<T>(const Tensor<T>&);                                            \
  template Tensor<T> upsample_nearest2<T>(const Tensor<T>&);                                   \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                \
  template Tensor<T> tanh_act<T>(const Tensor<T>&);                                            \
  template Tensor<T> gaussian_noise<T>(const Tensor<T>&, double, bool, std::uint64_t);         \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale<T>(const Tensor<T>&, double);                                       \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                 \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                \
  template Tensor<T> reduce_l1<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> reduce_mse<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template void backward<T>(const Tensor<T>&);

OSTEOFORGE_INSTANTIATE(float)
OSTEOFORGE_INSTANTIATE(double)

#undef OSTEOFORGE_INSTANTIATE

}  // namespace osteoforge::ad
