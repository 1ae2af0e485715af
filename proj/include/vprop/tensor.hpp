#pragma once

// Minimal reverse-mode differentiable arrays.
//
// Arrays are shared handles to a value buffer plus an optional gradient
// buffer. Operations executed while a Tape is active record a backward
// closure on it; Tape::backward replays those closures in reverse order of
// recording. With no active tape nothing is recorded, which is how
// evaluation runs.
//
// The engine is templated on the scalar type. Training uses float
// (vprop::Array); the gradient-check suite instantiates it with double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vprop {

using Shape = std::vector<int>;

std::string shape_str(const Shape& shape);
std::int64_t numel(const Shape& shape);

class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Innermost live tape on this thread, or nullptr when recording is off.
  static Tape* active();

  void record(std::function<void()> backward_fn);
  std::size_t size() const { return ops_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure once, newest
  /// first. A tape can be replayed only once.
  template <typename Loss>
  void backward(const Loss& loss);

  /// Number of closures executed by backward(); equals size() afterwards.
  std::size_t visited() const { return visited_; }

 private:
  void replay();

  std::vector<std::function<void()>> ops_;
  Tape* previous_ = nullptr;
  std::size_t visited_ = 0;
  bool replayed_ = false;
};

/// Disables recording for its lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* saved_;
};

namespace detail {
void set_active_tape(Tape* tape);
}

template <typename T>
class BasicArray {
 public:
  using value_type = T;

  BasicArray() = default;

  static BasicArray zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static BasicArray full(Shape shape, T value, bool requires_grad = false) {
    const auto n = checked_numel(shape);
    return BasicArray(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), value),
                      requires_grad);
  }

  static BasicArray from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    const auto n = checked_numel(shape);
    if (n != static_cast<std::int64_t>(values.size())) {
      throw std::invalid_argument("array: shape " + shape_str(shape) + " needs " +
                                  std::to_string(n) + " values, got " +
                                  std::to_string(values.size()));
    }
    return BasicArray(std::move(shape), std::move(values), requires_grad);
  }

  static BasicArray scalar(T value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  bool valid() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  int ndim() const { return static_cast<int>(s_->shape.size()); }
  int dim(int axis) const {
    return s_->shape.at(static_cast<std::size_t>(axis < 0 ? ndim() + axis : axis));
  }
  std::size_t size() const { return s_->values.size(); }

  std::span<const T> values() const { return s_->values; }
  /// Direct write access; only legal on leaves (parameters, inputs).
  std::span<T> mutable_values() { return s_->values; }
  T operator[](std::size_t i) const { return s_->values[i]; }
  T item() const {
    if (size() != 1) throw std::logic_error("item() on array of shape " + shape_str(shape()));
    return s_->values[0];
  }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on) { s_->requires_grad = on; }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const T> grad() const { return s_->grad; }
  std::span<T> mutable_grad() {
    ensure_grad();
    return s_->grad;
  }
  void ensure_grad() const {
    if (s_->grad.empty()) s_->grad.assign(s_->values.size(), T(0));
  }
  void zero_grad() {
    if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
  }
  void clear_grad() { s_->grad.clear(); }

  /// Deep copy of values; the copy has no gradient and no history.
  BasicArray clone(bool requires_grad = false) const {
    return BasicArray(s_->shape, s_->values, requires_grad);
  }

  template <typename U>
  BasicArray<U> cast(bool requires_grad = false) const {
    std::vector<U> out(s_->values.begin(), s_->values.end());
    return BasicArray<U>::from(s_->shape, std::move(out), requires_grad);
  }

  bool same_storage(const BasicArray& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> values;
    mutable std::vector<T> grad;
    bool requires_grad = false;
  };

  BasicArray(Shape shape, std::vector<T> values, bool requires_grad)
      : s_(std::make_shared<Storage>(Storage{std::move(shape), std::move(values), {}, requires_grad})) {}

  static std::int64_t checked_numel(const Shape& shape) {
    if (shape.empty()) throw std::invalid_argument("array: empty shape");
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("array: non-positive dimension in " + shape_str(shape));
    }
    return numel(shape);
  }

  std::shared_ptr<Storage> s_;

  template <typename U>
  friend class BasicArray;
  friend struct ArrayAccess;
};

using Array = BasicArray<float>;
using Array64 = BasicArray<double>;

struct ArrayAccess {
  template <typename T>
  static std::vector<T>& values(const BasicArray<T>& a) { return a.s_->values; }
  template <typename T>
  static std::vector<T>& grad(const BasicArray<T>& a) {
    a.ensure_grad();
    return a.s_->grad;
  }
};

template <typename Loss>
void Tape::backward(const Loss& loss) {
  if (replayed_) throw std::logic_error("tape: backward() called twice");
  if (loss.size() != 1) {
    throw std::invalid_argument("tape: loss must have one element, got shape " +
                                shape_str(loss.shape()));
  }
  ArrayAccess::grad(loss)[0] += 1;
  replay();
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel_h = 3;
  int kernel_w = 3;
  int padding = 1;
};

enum class Elementwise { Add, Sub, Mul, Max };

namespace detail {

template <typename T, typename... Inputs>
bool wants_grad(const Inputs&... inputs) {
  return Tape::active() != nullptr && (inputs.requires_grad() || ...);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

template <typename T>
void require_same_shape(const char* op, const BasicArray<T>& a, const BasicArray<T>& b) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

}  // namespace detail

template <typename T>
BasicArray<T> elementwise(Elementwise op, const BasicArray<T>& a, const BasicArray<T>& b) {
  detail::require_same_shape("elementwise", a, b);
  const auto& x = ArrayAccess::values(a);
  const auto& y = ArrayAccess::values(b);
  std::vector<T> out(x.size());
  switch (op) {
    case Elementwise::Add:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
      break;
    case Elementwise::Sub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
      break;
    case Elementwise::Mul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
      break;
    case Elementwise::Max:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] >= y[i] ? x[i] : y[i];
      break;
  }
  const bool grad = detail::wants_grad<T>(a, b);
  auto result = BasicArray<T>::from(a.shape(), std::move(out), grad);
  if (grad) {
    Tape::active()->record([op, a, b, result] {
      const auto& g = ArrayAccess::grad(result);
      const auto& x = ArrayAccess::values(a);
      const auto& y = ArrayAccess::values(b);
      if (a.requires_grad()) {
        auto& ga = ArrayAccess::grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (op) {
            case Elementwise::Add:
            case Elementwise::Sub: ga[i] += g[i]; break;
            case Elementwise::Mul: ga[i] += g[i] * y[i]; break;
            case Elementwise::Max: if (x[i] >= y[i]) ga[i] += g[i]; break;
          }
        }
      }
      if (b.requires_grad()) {
        auto& gb = ArrayAccess::grad(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (op) {
            case Elementwise::Add: gb[i] += g[i]; break;
            case Elementwise::Sub: gb[i] -= g[i]; break;
            case Elementwise::Mul: gb[i] += g[i] * x[i]; break;
            case Elementwise::Max: if (!(x[i] >= y[i])) gb[i] += g[i]; break;
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
BasicArray<T> add(const BasicArray<T>& a, const BasicArray<T>& b) { return elementwise(Elementwise::Add, a, b); }
template <typename T>
BasicArray<T> sub(const BasicArray<T>& a, const BasicArray<T>& b) { return elementwise(Elementwise::Sub, a, b); }
template <typename T>
BasicArray<T> mul(const BasicArray<T>& a, const BasicArray<T>& b) { return elementwise(Elementwise::Mul, a, b); }
template <typename T>
BasicArray<T> maximum(const BasicArray<T>& a, const BasicArray<T>& b) { return elementwise(Elementwise::Max, a, b); }

namespace detail {

// y = f(x) pointwise; dy/dx expressed through (x, y).
template <typename T, typename Fwd, typename Deriv>
BasicArray<T> unary(const BasicArray<T>& a, Fwd fwd, Deriv deriv) {
  const auto& x = ArrayAccess::values(a);
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  const bool grad = wants_grad<T>(a);
  auto result = BasicArray<T>::from(a.shape(), std::move(out), grad);
  if (grad) {
    Tape::active()->record([a, result, deriv] {
      const auto& g = ArrayAccess::grad(result);
      const auto& x = ArrayAccess::values(a);
      const auto& y = ArrayAccess::values(result);
      auto& ga = ArrayAccess::grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
    });
  }
  return result;
}

}  // namespace detail

template <typename T>
BasicArray<T> sigmoid(const BasicArray<T>& a) {
  return detail::unary(
      a,
      [](T x) {
        // Split by sign so exp never overflows.
        if (x >= 0) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

/// Natural logarithm; inputs must be positive.
template <typename T>
BasicArray<T> log(const BasicArray<T>& a) {
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
BasicArray<T> exp(const BasicArray<T>& a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
BasicArray<T> relu(const BasicArray<T>& a) {
  return detail::unary(a, [](T x) { return x > 0 ? x : T(0); },
                       [](T x, T) { return x > 0 ? T(1) : T(0); });
}

/// y = scale * a + offset with constant scale and offset.
template <typename T>
BasicArray<T> affine(const BasicArray<T>& a, T scale, T offset) {
  return detail::unary(a, [scale, offset](T x) { return scale * x + offset; },
                       [scale](T, T) { return scale; });
}

/// Multiplies every element by the single element of `s`.
template <typename T>
BasicArray<T> scale_by(const BasicArray<T>& a, const BasicArray<T>& s) {
  detail::require(s.size() == 1, "scale_by: scale must have one element, got " + shape_str(s.shape()));
  const auto& x = ArrayAccess::values(a);
  const T k = s[0];
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * x[i];
  const bool grad = detail::wants_grad<T>(a, s);
  auto result = BasicArray<T>::from(a.shape(), std::move(out), grad);
  if (grad) {
    Tape::active()->record([a, s, result] {
      const auto& g = ArrayAccess::grad(result);
      const auto& x = ArrayAccess::values(a);
      if (a.requires_grad()) {
        auto& ga = ArrayAccess::grad(a);
        const T k = s[0];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * k;
      }
      if (s.requires_grad()) {
        T acc = 0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
        ArrayAccess::grad(s)[0] += acc;
      }
    });
  }
  return result;
}

/// Adds the single element of `s` to every element.
template <typename T>
BasicArray<T> shift_by(const BasicArray<T>& a, const BasicArray<T>& s) {
  detail::require(s.size() == 1, "shift_by: offset must have one element, got " + shape_str(s.shape()));
  const auto& x = ArrayAccess::values(a);
  const T k = s[0];
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + k;
  const bool grad = detail::wants_grad<T>(a, s);
  auto result = BasicArray<T>::from(a.shape(), std::move(out), grad);
  if (grad) {
    Tape::active()->record([a, s, result] {
      const auto& g = ArrayAccess::grad(result);
      if (a.requires_grad()) {
        auto& ga = ArrayAccess::grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (s.requires_grad()) {
        T acc = 0;
        for (T gi : g) acc += gi;
        ArrayAccess::grad(s)[0] += acc;
      }
    });
  }
  return result;
}

template <typename T>
BasicArray<T> reshape(const BasicArray<T>& a, Shape shape) {
  detail::require(numel(shape) == static_cast<std::int64_t>(a.size()),
                  "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  const bool grad = detail::wants_grad<T>(a);
  auto result = BasicArray<T>::from(std::move(shape), ArrayAccess::values(a), grad);
  if (grad) {
    Tape::active()->record([a, result] {
      const auto& g = ArrayAccess::grad(result);
      auto& ga = ArrayAccess::grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return result;
}

/// Cross-correlation with zero padding and stride 1.
/// input: [C_in, H, W] or [N, C_in, H, W]; weight: [C_out, C_in, kh, kw];
/// bias: [C_out] or an invalid (default-constructed) array for no bias.
template <typename T>
BasicArray<T> conv2d(const BasicArray<T>& input, const ConvSpec& spec, const BasicArray<T>& weight,
                     const BasicArray<T>& bias) {
  using detail::require;
  require(input.ndim() == 3 || input.ndim() == 4,
          "conv2d: input must be [C,H,W] or [N,C,H,W], got " + shape_str(input.shape()));
  const bool batched = input.ndim() == 4;
  const int n = batched ? input.dim(0) : 1;
  const int cin = input.dim(-3), h = input.dim(-2), w = input.dim(-1);
  require(cin == spec.in_channels, "conv2d: input channels " + std::to_string(cin) +
                                       " != spec.in_channels " + std::to_string(spec.in_channels));
  require(weight.shape() == Shape{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w},
          "conv2d: weight shape " + shape_str(weight.shape()) + " != [out_channels=" +
              std::to_string(spec.out_channels) + ", in_channels=" + std::to_string(spec.in_channels) +
              ", kh=" + std::to_string(spec.kernel_h) + ", kw=" + std::to_string(spec.kernel_w) + "]");
  const bool has_bias = bias.valid();
  if (has_bias) {
    require(bias.shape() == Shape{spec.out_channels},
            "conv2d: bias shape " + shape_str(bias.shape()) + " != [out_channels=" +
                std::to_string(spec.out_channels) + "]");
  }
  const int kh = spec.kernel_h, kw = spec.kernel_w, pad = spec.padding;
  const int oh = h + 2 * pad - kh + 1, ow = w + 2 * pad - kw + 1;
  require(oh > 0 && ow > 0, "conv2d: kernel larger than padded input");
  const int cout = spec.out_channels;

  const auto& x = ArrayAccess::values(input);
  const auto& wt = ArrayAccess::values(weight);
  std::vector<T> out(static_cast<std::size_t>(n) * cout * oh * ow);
  for (int b = 0; b < n; ++b) {
    for (int co = 0; co < cout; ++co) {
      T* y = out.data() + (static_cast<std::size_t>(b) * cout + co) * oh * ow;
      const T bval = has_bias ? bias[co] : T(0);
      std::fill(y, y + oh * ow, bval);
      for (int ci = 0; ci < cin; ++ci) {
        const T* xin = x.data() + (static_cast<std::size_t>(b) * cin + ci) * h * w;
        for (int ki = 0; ki < kh; ++ki) {
          for (int kj = 0; kj < kw; ++kj) {
            const T k = wt[((static_cast<std::size_t>(co) * cin + ci) * kh + ki) * kw + kj];
            if (k == T(0)) continue;
            for (int i = 0; i < oh; ++i) {
              const int si = i + ki - pad;
              if (si < 0 || si >= h) continue;
              const int j0 = std::max(0, pad - kj), j1 = std::min(ow, w + pad - kj);
              const T* row = xin + static_cast<std::size_t>(si) * w + (kj - pad);
              T* yrow = y + static_cast<std::size_t>(i) * ow;
              for (int j = j0; j < j1; ++j) yrow[j] += k * row[j];
            }
          }
        }
      }
    }
  }
  Shape oshape = batched ? Shape{n, cout, oh, ow} : Shape{cout, oh, ow};
  const bool grad = has_bias ? detail::wants_grad<T>(input, weight, bias)
                             : detail::wants_grad<T>(input, weight);
  auto result = BasicArray<T>::from(std::move(oshape), std::move(out), grad);
  if (grad) {
    Tape::active()->record([=] {
      const auto& g = ArrayAccess::grad(result);
      const auto& x = ArrayAccess::values(input);
      const auto& wt = ArrayAccess::values(weight);
      std::vector<T>* gx = input.requires_grad() ? &ArrayAccess::grad(input) : nullptr;
      std::vector<T>* gw = weight.requires_grad() ? &ArrayAccess::grad(weight) : nullptr;
      std::vector<T>* gbias = has_bias && bias.requires_grad() ? &ArrayAccess::grad(bias) : nullptr;
      for (int b = 0; b < n; ++b) {
        for (int co = 0; co < cout; ++co) {
          const T* gy = g.data() + (static_cast<std::size_t>(b) * cout + co) * oh * ow;
          if (gbias) {
            T acc = 0;
            for (int i = 0; i < oh * ow; ++i) acc += gy[i];
            (*gbias)[co] += acc;
          }
          for (int ci = 0; ci < cin; ++ci) {
            const std::size_t in_off = (static_cast<std::size_t>(b) * cin + ci) * h * w;
            for (int ki = 0; ki < kh; ++ki) {
              for (int kj = 0; kj < kw; ++kj) {
                const std::size_t widx = ((static_cast<std::size_t>(co) * cin + ci) * kh + ki) * kw + kj;
                const T k = wt[widx];
                T wacc = 0;
                for (int i = 0; i < oh; ++i) {
                  const int si = i + ki - pad;
                  if (si < 0 || si >= h) continue;
                  const int j0 = std::max(0, pad - kj), j1 = std::min(ow, w + pad - kj);
                  const std::size_t row = in_off + static_cast<std::size_t>(si) * w + (kj - pad);
                  const T* gyrow = gy + static_cast<std::size_t>(i) * ow;
                  const T* xrow = x.data() + row;
                  for (int j = j0; j < j1; ++j) wacc += gyrow[j] * xrow[j];
                  if (gx) {
                    T* gxrow = gx->data() + row;
                    for (int j = j0; j < j1; ++j) gxrow[j] += gyrow[j] * k;
                  }
                }
                if (gw) (*gw)[widx] += wacc;
              }
            }
          }
        }
      }
    });
  }
  return result;
}

/// Max over the channel axis: [A,H,W] -> [H,W] or [N,A,H,W] -> [N,H,W].
/// The subgradient goes to the first maximal channel.
template <typename T>
BasicArray<T> channel_max(const BasicArray<T>& q) {
  detail::require(q.ndim() == 3 || q.ndim() == 4,
                  "channel_max: expected [A,H,W] or [N,A,H,W], got " + shape_str(q.shape()));
  const bool batched = q.ndim() == 4;
  const int n = batched ? q.dim(0) : 1;
  const int a = q.dim(-3);
  const std::size_t plane = static_cast<std::size_t>(q.dim(-2)) * q.dim(-1);
  const auto& x = ArrayAccess::values(q);
  std::vector<T> out(static_cast<std::size_t>(n) * plane);
  std::vector<int> arg(out.size(), 0);
  for (int b = 0; b < n; ++b) {
    const T* base = x.data() + static_cast<std::size_t>(b) * a * plane;
    for (std::size_t c = 0; c < plane; ++c) {
      T best = base[c];
      int best_a = 0;
      for (int k = 1; k < a; ++k) {
        const T v = base[static_cast<std::size_t>(k) * plane + c];
        if (v > best) {
          best = v;
          best_a = k;
        }
      }
      out[static_cast<std::size_t>(b) * plane + c] = best;
      arg[static_cast<std::size_t>(b) * plane + c] = best_a;
    }
  }
  Shape oshape = batched ? Shape{n, q.dim(-2), q.dim(-1)} : Shape{q.dim(-2), q.dim(-1)};
  const bool grad = detail::wants_grad<T>(q);
  auto result = BasicArray<T>::from(std::move(oshape), std::move(out), grad);
  if (grad) {
    Tape::active()->record([q, result, arg = std::move(arg), a, plane] {
      const auto& g = ArrayAccess::grad(result);
      auto& gq = ArrayAccess::grad(q);
      for (std::size_t idx = 0; idx < g.size(); ++idx) {
        const std::size_t b = idx / plane, c = idx % plane;
        gq[(b * a + static_cast<std::size_t>(arg[idx])) * plane + c] += g[idx];
      }
    });
  }
  return result;
}

/// out[..., i, j] = a[..., i + di, j + dj], zero where the source is outside
/// the grid. Acts on the last two axes.
template <typename T>
BasicArray<T> shift2d(const BasicArray<T>& a, int di, int dj) {
  detail::require(a.ndim() >= 2, "shift2d: need at least 2 dims, got " + shape_str(a.shape()));
  const int h = a.dim(-2), w = a.dim(-1);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t planes = a.size() / plane;
  const auto& x = ArrayAccess::values(a);
  std::vector<T> out(x.size(), T(0));
  const int i0 = std::max(0, -di), i1 = std::min(h, h - di);
  const int j0 = std::max(0, -dj), j1 = std::min(w, w - dj);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data() + p * plane;
    T* dst = out.data() + p * plane;
    for (int i = i0; i < i1; ++i) {
      for (int j = j0; j < j1; ++j) dst[i * w + j] = src[(i + di) * w + (j + dj)];
    }
  }
  const bool grad = detail::wants_grad<T>(a);
  auto result = BasicArray<T>::from(a.shape(), std::move(out), grad);
  if (grad) {
    Tape::active()->record([a, result, di, dj, h, w, plane, planes, i0, i1, j0, j1] {
      const auto& g = ArrayAccess::grad(result);
      auto& ga = ArrayAccess::grad(a);
      for (std::size_t p = 0; p < planes; ++p) {
        for (int i = i0; i < i1; ++i) {
          for (int j = j0; j < j1; ++j) ga[p * plane + (i + di) * w + (j + dj)] += g[p * plane + i * w + j];
        }
      }
    });
  }
  return result;
}

/// One max-propagation step over the 8-neighbourhood on the last two axes:
///   out[c] = max(v[c], max_d p[c]·v[c+d] + self_term[c] + neighbour_term[c+d])
/// `neighbour_term` may be an invalid array (treated as zero). Off-grid
/// neighbours count with value 0 when `include_off_grid`, otherwise they are
/// skipped. Ties keep v, then the lowest direction index.
template <typename T>
BasicArray<T> propagate_step(const BasicArray<T>& v, const BasicArray<T>& p, const BasicArray<T>& self_term,
                             const BasicArray<T>& neighbour_term, bool include_off_grid) {
  static constexpr int kDi[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
  static constexpr int kDj[8] = {0, 1, 1, 1, 0, -1, -1, -1};
  detail::require_same_shape("propagate_step", v, p);
  detail::require_same_shape("propagate_step", v, self_term);
  const bool has_nb = neighbour_term.valid();
  if (has_nb) detail::require_same_shape("propagate_step", v, neighbour_term);
  detail::require(v.ndim() >= 2, "propagate_step: need at least 2 dims, got " + shape_str(v.shape()));
  const int h = v.dim(-2), w = v.dim(-1);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t planes = v.size() / plane;
  const auto& xv = ArrayAccess::values(v);
  const auto& xp = ArrayAccess::values(p);
  const auto& xs = ArrayAccess::values(self_term);
  const T* xn = has_nb ? ArrayAccess::values(neighbour_term).data() : nullptr;
  std::vector<T> out(xv.size());
  // Winning candidate per cell: -1 keeps v, otherwise the direction.
  std::vector<std::int8_t> choice(xv.size(), -1);
  std::ptrdiff_t offset[8];
  for (int d = 0; d < 8; ++d) offset[d] = static_cast<std::ptrdiff_t>(kDi[d]) * w + kDj[d];
  auto border_cell = [&](std::size_t base, int i, int j) {
    const std::size_t c = base + static_cast<std::size_t>(i) * w + j;
    T best = xv[c];
    std::int8_t arg = -1;
    for (int d = 0; d < 8; ++d) {
      const int ni = i + kDi[d], nj = j + kDj[d];
      T cand;
      if (ni < 0 || ni >= h || nj < 0 || nj >= w) {
        if (!include_off_grid) continue;
        cand = xs[c];
      } else {
        const std::size_t n = base + static_cast<std::size_t>(ni) * w + nj;
        cand = xp[c] * xv[n] + xs[c] + (has_nb ? xn[n] : T(0));
      }
      if (cand > best) {
        best = cand;
        arg = static_cast<std::int8_t>(d);
      }
    }
    out[c] = best;
    choice[c] = arg;
  };
  for (std::size_t q = 0; q < planes; ++q) {
    const std::size_t base = q * plane;
    for (int i = 0; i < h; ++i) {
      if (i == 0 || i == h - 1) {
        for (int j = 0; j < w; ++j) border_cell(base, i, j);
        continue;
      }
      border_cell(base, i, 0);
      for (int j = 1; j < w - 1; ++j) {
        const std::size_t c = base + static_cast<std::size_t>(i) * w + j;
        const T pc = xp[c], sc = xs[c];
        T best = xv[c];
        std::int8_t arg = -1;
        for (int d = 0; d < 8; ++d) {
          const std::size_t n = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(c) + offset[d]);
          const T cand = pc * xv[n] + sc + (has_nb ? xn[n] : T(0));
          if (cand > best) {
            best = cand;
            arg = static_cast<std::int8_t>(d);
          }
        }
        out[c] = best;
        choice[c] = arg;
      }
      if (w > 1) border_cell(base, i, w - 1);
    }
  }
  const bool grad = has_nb ? detail::wants_grad<T>(v, p, self_term, neighbour_term)
                           : detail::wants_grad<T>(v, p, self_term);
  auto result = BasicArray<T>::from(v.shape(), std::move(out), grad);
  if (grad) {
    Tape::active()->record([v, p, self_term, neighbour_term, result, choice = std::move(choice), h, w, plane,
                            planes, has_nb] {
      const auto& g = ArrayAccess::grad(result);
      const auto& xv = ArrayAccess::values(v);
      const auto& xp = ArrayAccess::values(p);
      auto& gv = ArrayAccess::grad(v);
      auto& gp = ArrayAccess::grad(p);
      auto& gs = ArrayAccess::grad(self_term);
      T* gn = has_nb ? ArrayAccess::grad(neighbour_term).data() : nullptr;
      for (std::size_t q = 0; q < planes; ++q) {
        const std::size_t base = q * plane;
        for (int i = 0; i < h; ++i) {
          for (int j = 0; j < w; ++j) {
            const std::size_t c = base + static_cast<std::size_t>(i) * w + j;
            const int d = choice[c];
            if (d < 0) {
              gv[c] += g[c];
              continue;
            }
            gs[c] += g[c];
            const int ni = i + kDi[d], nj = j + kDj[d];
            if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
            const std::size_t n = base + static_cast<std::size_t>(ni) * w + nj;
            gp[c] += g[c] * xv[n];
            gv[n] += g[c] * xp[c];
            if (gn) gn[n] += g[c];
          }
        }
      }
    });
  }
  return result;
}

/// out[k] = a.flat[index[k]], or 0 where index[k] < 0.
template <typename T>
BasicArray<T> gather(const BasicArray<T>& a, std::vector<std::int64_t> index, Shape shape) {
  detail::require(numel(shape) == static_cast<std::int64_t>(index.size()),
                  "gather: " + std::to_string(index.size()) + " indices for shape " + shape_str(shape));
  const auto& x = ArrayAccess::values(a);
  std::vector<T> out(index.size(), T(0));
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0) continue;
    detail::require(index[k] < static_cast<std::int64_t>(x.size()), "gather: index out of range");
    out[k] = x[static_cast<std::size_t>(index[k])];
  }
  const bool grad = detail::wants_grad<T>(a);
  auto result = BasicArray<T>::from(std::move(shape), std::move(out), grad);
  if (grad) {
    Tape::active()->record([a, result, index = std::move(index)] {
      const auto& g = ArrayAccess::grad(result);
      auto& ga = ArrayAccess::grad(a);
      for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] >= 0) ga[static_cast<std::size_t>(index[k])] += g[k];
      }
    });
  }
  return result;
}

/// Row-wise log-softmax over the last axis ([n] or [B,n]).
template <typename T>
BasicArray<T> softmax_logp(const BasicArray<T>& logits) {
  const int n = logits.dim(-1);
  const std::size_t rows = logits.size() / static_cast<std::size_t>(n);
  const auto& x = ArrayAccess::values(logits);
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * n;
    T m = xr[0];
    for (int k = 1; k < n; ++k) m = std::max(m, xr[k]);
    double z = 0;
    for (int k = 0; k < n; ++k) z += std::exp(static_cast<double>(xr[k] - m));
    const T lz = static_cast<T>(std::log(z));
    for (int k = 0; k < n; ++k) out[r * n + k] = xr[k] - m - lz;
  }
  const bool grad = detail::wants_grad<T>(logits);
  auto result = BasicArray<T>::from(logits.shape(), std::move(out), grad);
  if (grad) {
    Tape::active()->record([logits, result, n, rows] {
      const auto& g = ArrayAccess::grad(result);
      const auto& y = ArrayAccess::values(result);
      auto& gx = ArrayAccess::grad(logits);
      for (std::size_t r = 0; r < rows; ++r) {
        T gsum = 0;
        for (int k = 0; k < n; ++k) gsum += g[r * n + k];
        for (int k = 0; k < n; ++k) gx[r * n + k] += g[r * n + k] - std::exp(y[r * n + k]) * gsum;
      }
    });
  }
  return result;
}

/// x: [n] or [B,n]; weight: [m,n]; bias: [m]. Returns [m] or [B,m].
template <typename T>
BasicArray<T> linear(const BasicArray<T>& x, const BasicArray<T>& weight, const BasicArray<T>& bias) {
  using detail::require;
  require(weight.ndim() == 2, "linear: weight must be 2-D, got " + shape_str(weight.shape()));
  const int m = weight.dim(0), n = weight.dim(1);
  require(x.dim(-1) == n, "linear: input width " + std::to_string(x.dim(-1)) +
                              " != weight columns " + std::to_string(n));
  require(bias.shape() == Shape{m}, "linear: bias shape " + shape_str(bias.shape()) +
                                        " != [" + std::to_string(m) + "]");
  require(x.ndim() <= 2, "linear: input must be [n] or [B,n]");
  const std::size_t rows = x.size() / static_cast<std::size_t>(n);
  const auto& xv = ArrayAccess::values(x);
  const auto& wv = ArrayAccess::values(weight);
  std::vector<T> out(rows * m);
  for (std::size_t r = 0; r < rows; ++r) {
    for (int o = 0; o < m; ++o) {
      T acc = bias[o];
      for (int k = 0; k < n; ++k) acc += wv[static_cast<std::size_t>(o) * n + k] * xv[r * n + k];
      out[r * m + o] = acc;
    }
  }
  Shape oshape = x.ndim() == 2 ? Shape{x.dim(0), m} : Shape{m};
  const bool grad = detail::wants_grad<T>(x, weight, bias);
  auto result = BasicArray<T>::from(std::move(oshape), std::move(out), grad);
  if (grad) {
    Tape::active()->record([x, weight, bias, result, rows, m, n] {
      const auto& g = ArrayAccess::grad(result);
      const auto& xv = ArrayAccess::values(x);
      const auto& wv = ArrayAccess::values(weight);
      for (std::size_t r = 0; r < rows; ++r) {
        for (int o = 0; o < m; ++o) {
          const T go = g[r * m + o];
          if (bias.requires_grad()) ArrayAccess::grad(bias)[o] += go;
          if (weight.requires_grad()) {
            auto& gw = ArrayAccess::grad(weight);
            for (int k = 0; k < n; ++k) gw[static_cast<std::size_t>(o) * n + k] += go * xv[r * n + k];
          }
          if (x.requires_grad()) {
            auto& gx = ArrayAccess::grad(x);
            for (int k = 0; k < n; ++k) gx[r * n + k] += go * wv[static_cast<std::size_t>(o) * n + k];
          }
        }
      }
    });
  }
  return result;
}

/// Concatenation along the last axis of two [B,n1] / [B,n2] (or 1-D) arrays.
template <typename T>
BasicArray<T> concat_last(const BasicArray<T>& a, const BasicArray<T>& b) {
  using detail::require;
  require(a.ndim() == b.ndim() && a.ndim() <= 2, "concat_last: rank mismatch " + shape_str(a.shape()) +
                                                     " vs " + shape_str(b.shape()));
  require(a.ndim() == 1 || a.dim(0) == b.dim(0), "concat_last: leading dim mismatch " +
                                                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int na = a.dim(-1), nb = b.dim(-1);
  const std::size_t rows = a.size() / static_cast<std::size_t>(na);
  const auto& x = ArrayAccess::values(a);
  const auto& y = ArrayAccess::values(b);
  std::vector<T> out(rows * (na + nb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.data() + r * na, na, out.data() + r * (na + nb));
    std::copy_n(y.data() + r * nb, nb, out.data() + r * (na + nb) + na);
  }
  Shape oshape = a.ndim() == 2 ? Shape{a.dim(0), na + nb} : Shape{na + nb};
  const bool grad = detail::wants_grad<T>(a, b);
  auto result = BasicArray<T>::from(std::move(oshape), std::move(out), grad);
  if (grad) {
    Tape::active()->record([a, b, result, rows, na, nb] {
      const auto& g = ArrayAccess::grad(result);
      for (std::size_t r = 0; r < rows; ++r) {
        if (a.requires_grad()) {
          auto& ga = ArrayAccess::grad(a);
          for (int k = 0; k < na; ++k) ga[r * na + k] += g[r * (na + nb) + k];
        }
        if (b.requires_grad()) {
          auto& gb = ArrayAccess::grad(b);
          for (int k = 0; k < nb; ++k) gb[r * nb + k] += g[r * (na + nb) + na + k];
        }
      }
    });
  }
  return result;
}

/// Σ coeff[i]·a[i] with constant coefficients; returns a one-element array.
template <typename T>
BasicArray<T> dot_const(const BasicArray<T>& a, std::vector<T> coeff) {
  detail::require(coeff.size() == a.size(), "dot_const: " + std::to_string(coeff.size()) +
                                                " coefficients for shape " + shape_str(a.shape()));
  const auto& x = ArrayAccess::values(a);
  T acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += coeff[i] * x[i];
  const bool grad = detail::wants_grad<T>(a);
  auto result = BasicArray<T>::scalar(acc, grad);
  if (grad) {
    Tape::active()->record([a, result, coeff = std::move(coeff)] {
      const T g = ArrayAccess::grad(result)[0];
      auto& ga = ArrayAccess::grad(a);
      for (std::size_t i = 0; i < coeff.size(); ++i) ga[i] += g * coeff[i];
    });
  }
  return result;
}

template <typename T>
BasicArray<T> sum(const BasicArray<T>& a) {
  return dot_const(a, std::vector<T>(a.size(), T(1)));
}

// ---------------------------------------------------------------------------
// Optimizer and gradient checking
// ---------------------------------------------------------------------------

/// RMSProp: ms <- decay*ms + (1-decay)*g^2; p <- p - lr*g/(sqrt(ms)+eps).
template <typename T>
class RmsProp {
 public:
  RmsProp(T lr, T decay, T eps) : lr_(lr), decay_(decay), eps_(eps) {}

  void step(std::span<BasicArray<T>> params) {
    if (ms_.empty()) {
      for (const auto& p : params) ms_.emplace_back(p.size(), T(0));
    }
    if (ms_.size() != params.size()) {
      throw std::logic_error("rmsprop: parameter set changed between steps");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k];
      if (!p.has_grad()) {
        throw std::logic_error("rmsprop: parameter " + std::to_string(k) + " has no gradient");
      }
      auto& ms = ms_[k];
      auto v = p.mutable_values();
      auto g = p.mutable_grad();
      for (std::size_t i = 0; i < v.size(); ++i) {
        ms[i] = decay_ * ms[i] + (T(1) - decay_) * g[i] * g[i];
        v[i] -= lr_ * g[i] / (std::sqrt(ms[i]) + eps_);
      }
      p.zero_grad();
    }
  }

  const std::vector<std::vector<T>>& mean_squares() const { return ms_; }
  T learning_rate() const { return lr_; }

 private:
  T lr_, decay_, eps_;
  std::vector<std::vector<T>> ms_;
};

/// Floor applied to the denominator of the relative error so that
/// coordinates with vanishing gradient are compared absolutely.
inline constexpr double kGradCheckFloor = 1e-6;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
}

/// Compares the analytic gradient of scalar-valued `f` w.r.t. `param`
/// against central finite differences, coordinate by coordinate. Returns the
/// largest relative error. `param` must be a leaf with requires_grad set.
template <typename T>
double grad_check(const std::function<BasicArray<T>()>& f, BasicArray<T> param, T step) {
  param.clear_grad();
  {
    Tape tape;
    auto out = f();
    tape.backward(out);
  }
  param.ensure_grad();
  const std::vector<T> analytic(param.grad().begin(), param.grad().end());
  param.clear_grad();

  NoGradScope no_grad;
  auto values = param.mutable_values();
  double worst = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T saved = values[i];
    values[i] = saved + step;
    const double up = f().item();
    values[i] = saved - step;
    const double down = f().item();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * static_cast<double>(step));
    worst = std::max(worst, relative_error(static_cast<double>(analytic[i]), numeric));
  }
  return worst;
}

}  // namespace vprop
