#include "utged/numeric/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "gemm.hpp"
#include "utged/error.hpp"

namespace utged::num {

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

// Creates the output tensor and, when tracking, records `make_backward(out)`.
template <class MakeBackward>
Tensor emit(Shape shape, std::vector<double> values, std::initializer_list<const Tensor*> inputs,
            MakeBackward&& make_backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  if (tracking(inputs)) {
    out.set_requires_grad(true);
    std::vector<ImplPtr> in;
    in.reserve(inputs.size());
    for (const Tensor* t : inputs) in.push_back(t->shared_impl());
    active_tape()->record(std::move(in), out.shared_impl(), make_backward(out.impl()));
  }
  return out;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_to_string(a.shape()));
  }
}

void require_finite(const char* op, std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

std::size_t resolve_axis(const Tensor& x, int axis) {
  const int r = static_cast<int>(x.rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " invalid for shape " + shape_to_string(x.shape()));
  }
  return static_cast<std::size_t>(a);
}

// Splits a shape around `axis` into outer * n * inner.
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
  const auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return emit(x.shape(), std::move(y), {&x}, [px = x.impl(), df](TensorImpl* po) {
    return [px, po, df] {
      if (!px->requires_grad) return;
      auto& gx = ensure_grad(*px);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += po->grad[i] * df(px->value[i], po->value[i]);
    };
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return emit(a.shape(), std::move(y), {&a, &b}, [pa = a.impl(), pb = b.impl()](TensorImpl* po) {
    return [pa, pb, po] {
      for (TensorImpl* p : {pa, pb}) {
        if (!p->requires_grad) continue;
        auto& g = ensure_grad(*p);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += po->grad[i];
      }
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  return emit(a.shape(), std::move(y), {&a, &b}, [pa = a.impl(), pb = b.impl()](TensorImpl* po) {
    return [pa, pb, po] {
      if (pa->requires_grad) {
        auto& g = ensure_grad(*pa);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += po->grad[i];
      }
      if (pb->requires_grad) {
        auto& g = ensure_grad(*pb);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= po->grad[i];
      }
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return emit(a.shape(), std::move(y), {&a, &b}, [pa = a.impl(), pb = b.impl()](TensorImpl* po) {
    return [pa, pb, po] {
      if (pa->requires_grad) {
        auto& g = ensure_grad(*pa);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += po->grad[i] * pb->value[i];
      }
      if (pb->requires_grad) {
        auto& g = ensure_grad(*pb);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += po->grad[i] * pa->value[i];
      }
    };
  });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  if (x.rank() == 0 || row.numel() != x.shape().back()) {
    throw DimensionError("add_row: cannot broadcast " + shape_to_string(row.shape()) + " over " +
                         shape_to_string(x.shape()));
  }
  const std::size_t n = row.numel();
  const auto xv = x.values();
  const auto rv = row.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] + rv[i % n];
  return emit(x.shape(), std::move(y), {&x, &row}, [px = x.impl(), pr = row.impl(), n](TensorImpl* po) {
    return [px, pr, po, n] {
      if (px->requires_grad) {
        auto& g = ensure_grad(*px);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += po->grad[i];
      }
      if (pr->requires_grad) {
        auto& g = ensure_grad(*pr);
        for (std::size_t i = 0; i < po->grad.size(); ++i) g[i % n] += po->grad[i];
      }
    };
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double k = 0.044715;
  return unary(
      x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + k * v * v * v))); },
      [](double v, double) {
        const double u = c * (v + k * v * v * v);
        const double t = std::tanh(u);
        const double du = c * (1.0 + 3.0 * k * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      });
}

Tensor clamped_log(const Tensor& x, double floor, std::size_t* clamp_count) {
  const auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (xv[i] <= floor) {
      y[i] = std::log(floor);
      if (clamp_count != nullptr) ++*clamp_count;
    } else {
      y[i] = std::log(xv[i]);
    }
  }
  return emit(x.shape(), std::move(y), {&x}, [px = x.impl(), floor](TensorImpl* po) {
    return [px, po, floor] {
      if (!px->requires_grad) return;
      auto& g = ensure_grad(*px);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (px->value[i] > floor) g[i] += po->grad[i] / px->value[i];
      }
    };
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> y(m * n);
  detail::gemm(false, false, m, n, k, a.values().data(), b.values().data(), y.data(), false);
  return emit({m, n}, std::move(y), {&a, &b}, [pa = a.impl(), pb = b.impl(), m, n, k](TensorImpl* po) {
    return [pa, pb, po, m, n, k] {
      if (pa->requires_grad) {
        detail::gemm(false, true, m, k, n, po->grad.data(), pb->value.data(), ensure_grad(*pa).data(), true);
      }
      if (pb->requires_grad) {
        detail::gemm(true, false, k, n, m, pa->value.data(), po->grad.data(), ensure_grad(*pb).data(), true);
      }
    };
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix("matmul_nt", a);
  require_matrix("matmul_nt", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()) + "^T");
  }
  std::vector<double> y(m * n);
  detail::gemm(false, true, m, n, k, a.values().data(), b.values().data(), y.data(), false);
  return emit({m, n}, std::move(y), {&a, &b}, [pa = a.impl(), pb = b.impl(), m, n, k](TensorImpl* po) {
    return [pa, pb, po, m, n, k] {
      if (pa->requires_grad) {
        detail::gemm(false, false, m, k, n, po->grad.data(), pb->value.data(), ensure_grad(*pa).data(), true);
      }
      if (pb->requires_grad) {
        detail::gemm(true, false, n, k, m, po->grad.data(), pa->value.data(), ensure_grad(*pb).data(), true);
      }
    };
  });
}

Tensor transpose(const Tensor& x) {
  require_matrix("transpose", x);
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = xv[i * c + j];
  return emit({c, r}, std::move(y), {&x}, [px = x.impl(), r, c](TensorImpl* po) {
    return [px, po, r, c] {
      if (!px->requires_grad) return;
      auto& g = ensure_grad(*px);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += po->grad[j * r + i];
    };
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return emit({1}, {s}, {&x}, [px = x.impl()](TensorImpl* po) {
    return [px, po] {
      if (!px->requires_grad) return;
      auto& g = ensure_grad(*px);
      for (double& v : g) v += po->grad[0];
    };
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  return scale(sum(x), 1.0 / n);
}

Tensor norm(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  return emit({1}, {std::sqrt(s)}, {&x}, [px = x.impl()](TensorImpl* po) {
    return [px, po] {
      if (!px->requires_grad || po->value[0] == 0.0) return;
      auto& g = ensure_grad(*px);
      const double f = po->grad[0] / po->value[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += f * px->value[i];
    };
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const auto ax = resolve_axis(x, axis);
  const auto xv = x.values();
  require_finite("softmax", xv);
  const AxisView v = axis_view(x.shape(), ax);
  std::vector<double> y(xv.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.n * v.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < v.n; ++j) mx = std::max(mx, xv[base + j * v.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < v.n; ++j) {
        const double e = std::exp(xv[base + j * v.inner] - mx);
        y[base + j * v.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < v.n; ++j) y[base + j * v.inner] /= z;
    }
  }
  return emit(x.shape(), std::move(y), {&x}, [px = x.impl(), v](TensorImpl* po) {
    return [px, po, v] {
      if (!px->requires_grad) return;
      auto& g = ensure_grad(*px);
      for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t in = 0; in < v.inner; ++in) {
          const std::size_t base = o * v.n * v.inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < v.n; ++j) {
            const std::size_t i = base + j * v.inner;
            dot += po->grad[i] * po->value[i];
          }
          for (std::size_t j = 0; j < v.n; ++j) {
            const std::size_t i = base + j * v.inner;
            g[i] += po->value[i] * (po->grad[i] - dot);
          }
        }
      }
    };
  });
}

Tensor log_softmax(const Tensor& x) {
  const auto xv = x.values();
  require_finite("log_softmax", xv);
  const std::size_t n = x.shape().back();
  const std::size_t rows = xv.size() / n;
  std::vector<double> y(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(in[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = in[j] - lz;
  }
  return emit(x.shape(), std::move(y), {&x}, [px = x.impl(), n, rows](TensorImpl* po) {
    return [px, po, n, rows] {
      if (!px->requires_grad) return;
      auto& g = ensure_grad(*px);
      for (std::size_t r = 0; r < rows; ++r) {
        double gs = 0.0;
        for (std::size_t j = 0; j < n; ++j) gs += po->grad[r * n + j];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t i = r * n + j;
          g[i] += po->grad[i] - std::exp(po->value[i]) * gs;
        }
      }
    };
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t n = x.shape().back();
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_to_string(gain.shape()) + "/" +
                         shape_to_string(bias.shape()) + " do not match " + shape_to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  std::vector<double> y(xv.size());
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += in[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (in[j] - mu) * rs;
      (*xhat)[r * n + j] = h;
      y[r * n + j] = h * gv[j] + bv[j];
    }
  }
  return emit(x.shape(), std::move(y), {&x, &gain, &bias},
              [px = x.impl(), pg = gain.impl(), pb = bias.impl(), xhat, rstd, n, rows](TensorImpl* po) {
                return [px, pg, pb, po, xhat, rstd, n, rows] {
                  const auto& go = po->grad;
                  if (pg->requires_grad) {
                    auto& g = ensure_grad(*pg);
                    for (std::size_t i = 0; i < go.size(); ++i) g[i % n] += go[i] * (*xhat)[i];
                  }
                  if (pb->requires_grad) {
                    auto& g = ensure_grad(*pb);
                    for (std::size_t i = 0; i < go.size(); ++i) g[i % n] += go[i];
                  }
                  if (px->requires_grad) {
                    auto& g = ensure_grad(*px);
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double s1 = 0.0, s2 = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double dh = go[r * n + j] * pg->value[j];
                        s1 += dh;
                        s2 += dh * (*xhat)[r * n + j];
                      }
                      for (std::size_t j = 0; j < n; ++j) {
                        const std::size_t i = r * n + j;
                        const double dh = go[i] * pg->value[j];
                        g[i] += (*rstd)[r] * (dh - inv_n * s1 - (*xhat)[i] * inv_n * s2);
                      }
                    }
                  }
                };
              });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  std::vector<double> y(x.values().begin(), x.values().end());
  return emit(std::move(shape), std::move(y), {&x}, [px = x.impl()](TensorImpl* po) {
    return [px, po] {
      if (!px->requires_grad) return;
      auto& g = ensure_grad(*px);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += po->grad[i];
    };
  });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const auto ax = resolve_axis(parts[0], axis);
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw DimensionError("concat: rank mismatch " + shape_to_string(s));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != ax && s[i] != out_shape[i]) {
        throw DimensionError("concat: shape mismatch " + shape_to_string(parts[0].shape()) + " vs " +
                             shape_to_string(s));
      }
    }
    widths.push_back(s[ax]);
    out_shape[ax] += s[ax];
  }
  const AxisView ov = axis_view(out_shape, ax);
  std::vector<double> y(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto pv = parts[p].values();
    const std::size_t chunk = widths[p] * ov.inner;
    for (std::size_t o = 0; o < ov.outer; ++o) {
      std::copy_n(pv.data() + o * chunk, chunk, y.data() + o * ov.n * ov.inner + offset * ov.inner);
    }
    offset += widths[p];
  }

  Tensor out = Tensor::from(out_shape, std::move(y));
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (active_tape() != nullptr && any) {
    out.set_requires_grad(true);
    std::vector<ImplPtr> in;
    std::vector<TensorImpl*> raw;
    for (const Tensor& p : parts) {
      in.push_back(p.shared_impl());
      raw.push_back(p.impl());
    }
    active_tape()->record(std::move(in), out.shared_impl(), [raw, widths, ov, po = out.impl()] {
      std::size_t off = 0;
      for (std::size_t p = 0; p < raw.size(); ++p) {
        const std::size_t chunk = widths[p] * ov.inner;
        if (raw[p]->requires_grad) {
          auto& g = ensure_grad(*raw[p]);
          for (std::size_t o = 0; o < ov.outer; ++o) {
            const double* src = po->grad.data() + o * ov.n * ov.inner + off * ov.inner;
            for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += src[i];
          }
        }
        off += widths[p];
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  const auto ax = resolve_axis(x, axis);
  if (begin > end || end > x.dim(ax)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for shape " + shape_to_string(x.shape()));
  }
  const AxisView v = axis_view(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = end - begin;
  const std::size_t chunk = (end - begin) * v.inner;
  const auto xv = x.values();
  std::vector<double> y(v.outer * chunk);
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy_n(xv.data() + o * v.n * v.inner + begin * v.inner, chunk, y.data() + o * chunk);
  }
  return emit(std::move(out_shape), std::move(y), {&x}, [px = x.impl(), v, chunk, begin](TensorImpl* po) {
    return [px, po, v, chunk, begin] {
      if (!px->requires_grad) return;
      auto& g = ensure_grad(*px);
      for (std::size_t o = 0; o < v.outer; ++o) {
        double* dst = g.data() + o * v.n * v.inner + begin * v.inner;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += po->grad[o * chunk + i];
      }
    };
  });
}

Tensor gather(const Tensor& x, std::span<const std::uint32_t> ids) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  for (auto id : ids) {
    if (id >= n) throw DimensionError("gather: index " + std::to_string(id) + " out of range " + std::to_string(n));
  }
  Shape out_shape = x.shape();
  out_shape.back() = ids.size();
  const auto xv = x.values();
  std::vector<double> y(rows * ids.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < ids.size(); ++k) y[r * ids.size() + k] = xv[r * n + ids[k]];
  std::vector<std::uint32_t> idv(ids.begin(), ids.end());
  return emit(std::move(out_shape), std::move(y), {&x}, [px = x.impl(), idv, n, rows](TensorImpl* po) {
    return [px, po, idv, n, rows] {
      if (!px->requires_grad) return;
      auto& g = ensure_grad(*px);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < idv.size(); ++k) g[r * n + idv[k]] += po->grad[r * idv.size() + k];
    };
  });
}

Tensor embedding(const Tensor& table, std::span<const std::uint32_t> ids) {
  require_matrix("embedding", table);
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  const auto tv = table.values();
  std::vector<double> y(ids.size() * d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] >= vocab) {
      throw DimensionError("embedding: id " + std::to_string(ids[t]) + " out of range for table " +
                           shape_to_string(table.shape()));
    }
    std::copy_n(tv.data() + ids[t] * d, d, y.data() + t * d);
  }
  std::vector<std::uint32_t> idv(ids.begin(), ids.end());
  return emit({ids.size(), d}, std::move(y), {&table}, [pt = table.impl(), idv, d](TensorImpl* po) {
    return [pt, po, idv, d] {
      if (!pt->requires_grad) return;
      auto& g = ensure_grad(*pt);
      for (std::size_t t = 0; t < idv.size(); ++t) {
        double* dst = g.data() + idv[t] * d;
        const double* src = po->grad.data() + t * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    };
  });
}

Tensor nll_loss(const Tensor& logits, std::span<const std::uint32_t> targets) {
  require_matrix("nll_loss", logits);
  const std::size_t rows = logits.dim(0), n = logits.dim(1);
  if (targets.size() != rows) {
    throw DimensionError("nll_loss: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_to_string(logits.shape()));
  }
  const auto xv = logits.values();
  require_finite("nll_loss", xv);
  auto probs = std::make_shared<std::vector<double>>(xv.size());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= n) throw DimensionError("nll_loss: target id out of range");
    const double* in = xv.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(in[j] - mx);
      (*probs)[r * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) (*probs)[r * n + j] /= z;
    total -= in[targets[r]] - mx - std::log(z);
  }
  std::vector<std::uint32_t> tv(targets.begin(), targets.end());
  return emit({1}, {total}, {&logits}, [px = logits.impl(), probs, tv, n](TensorImpl* po) {
    return [px, po, probs, tv, n] {
      if (!px->requires_grad) return;
      auto& g = ensure_grad(*px);
      const double go = po->grad[0];
      for (std::size_t r = 0; r < tv.size(); ++r) {
        for (std::size_t j = 0; j < n; ++j) g[r * n + j] += go * (*probs)[r * n + j];
        g[r * n + tv[r]] -= go;
      }
    };
  });
}

}  // namespace utged::num
