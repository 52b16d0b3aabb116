#include "haanet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "haanet/rng.hpp"

namespace haanet {
namespace {

int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int ceil_div(int a, int b) { return -floor_div(-a, b); }

// Output columns [lo, hi] whose tap at offset `off` lands inside [0, extent).
struct Span {
  int lo;
  int hi;
};

Span valid_outputs(int off, int stride, int extent, int out_extent) {
  return {std::max(0, ceil_div(-off, stride)),
          std::min(out_extent - 1, floor_div(extent - 1 - off, stride))};
}

// Fixed-order dot product with eight interleaved partial sums.
template <typename S>
S dot(const S* a, const S* b, int len) {
  S acc[8] = {};
  int i = 0;
  for (; i + 8 <= len; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  S total = ((acc[0] + acc[4]) + (acc[1] + acc[5])) +
            ((acc[2] + acc[6]) + (acc[3] + acc[7]));
  for (; i < len; ++i) total += a[i] * b[i];
  return total;
}

template <typename S>
S strided_dot(const S* a, const S* b, int len, int stride) {
  S total = 0;
  for (int i = 0; i < len; ++i) total += a[i] * b[i * stride];
  return total;
}

}  // namespace

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0) {
    throw std::invalid_argument("conv channel counts must be positive");
  }
  if (kernel <= 0 || kernel % 2 == 0) {
    throw std::invalid_argument("conv kernel size must be odd, got " +
                                std::to_string(kernel));
  }
  if (stride != 1 && stride != 2) {
    throw std::invalid_argument("conv stride must be 1 or 2, got " +
                                std::to_string(stride));
  }
}

template <typename S>
Conv2d<S> Conv2d<S>::init(const ConvSpec& spec, std::uint64_t seed) {
  spec.validate();
  Conv2d<S> layer = zeros(spec);
  const double bound =
      std::sqrt(6.0 / (spec.in_channels * spec.kernel * spec.kernel));
  Rng rng(seed);
  for (S& v : layer.weight.data()) v = static_cast<S>(rng.uniform(-bound, bound));
  return layer;
}

template <typename S>
Conv2d<S> Conv2d<S>::zeros(const ConvSpec& spec) {
  spec.validate();
  Conv2d<S> layer;
  layer.spec = spec;
  layer.weight = Tensor<S>(spec.weight_shape());
  layer.bias = Tensor<S>(spec.bias_shape());
  layer.weight.set_requires_grad(true);
  layer.bias.set_requires_grad(true);
  return layer;
}

template <typename S>
Var<S> elementwise(Elementwise op, const Var<S>& a, const Var<S>& b) {
  Tape<S>& tape = a.tape();
  tape.check_owned(b);
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  const bool broadcast = sb != sa;
  if (broadcast && sb != Shape{sa.n, sa.c, 1, 1}) {
    throw ShapeError("elementwise shape mismatch: " + sa.str() + " vs " +
                     sb.str());
  }
  const std::size_t planes = static_cast<std::size_t>(sa.n) * sa.c;
  const std::size_t plane = sa.plane();
  const S* pa = a.value().raw();
  const S* pb = b.value().raw();
  Tensor<S> out(sa);
  S* po = out.raw();
  for (std::size_t q = 0; q < planes; ++q) {
    const std::size_t base = q * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const S x = pa[base + i];
      const S y = broadcast ? pb[q] : pb[base + i];
      switch (op) {
        case Elementwise::add: po[base + i] = x + y; break;
        case Elementwise::sub: po[base + i] = x - y; break;
        case Elementwise::mul: po[base + i] = x * y; break;
        case Elementwise::div: po[base + i] = x / y; break;
      }
    }
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape.record(
      std::move(out), {a, b},
      [op, ia, ib, broadcast, planes, plane](Tape<S>& t, std::span<const S> g) {
        const S* va = t.value(ia).raw();
        const S* vb = t.value(ib).raw();
        if (t.requires_grad(ia)) {
          std::span<S> ga = t.grad(ia);
          for (std::size_t q = 0; q < planes; ++q) {
            const std::size_t base = q * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const S y = broadcast ? vb[q] : vb[base + i];
              switch (op) {
                case Elementwise::add:
                case Elementwise::sub: ga[base + i] += g[base + i]; break;
                case Elementwise::mul: ga[base + i] += g[base + i] * y; break;
                case Elementwise::div: ga[base + i] += g[base + i] / y; break;
              }
            }
          }
        }
        if (t.requires_grad(ib)) {
          std::span<S> gb = t.grad(ib);
          for (std::size_t q = 0; q < planes; ++q) {
            const std::size_t base = q * plane;
            S acc = 0;
            for (std::size_t i = 0; i < plane; ++i) {
              const S x = va[base + i];
              const S y = broadcast ? vb[q] : vb[base + i];
              S d = 0;
              switch (op) {
                case Elementwise::add: d = g[base + i]; break;
                case Elementwise::sub: d = -g[base + i]; break;
                case Elementwise::mul: d = g[base + i] * x; break;
                case Elementwise::div: d = -g[base + i] * x / (y * y); break;
              }
              if (broadcast) {
                acc += d;
              } else {
                gb[base + i] += d;
              }
            }
            if (broadcast) gb[q] += acc;
          }
        }
      });
}

template <typename S>
Var<S> affine(const Var<S>& x, S scale, S shift) {
  Tensor<S> out(x.shape());
  const S* px = x.value().raw();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * px[i] + shift;
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x},
                         [ix, scale](Tape<S>& t, std::span<const S> g) {
                           std::span<S> gx = t.grad(ix);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             gx[i] += scale * g[i];
                           }
                         });
}

template <typename S>
Var<S> sum(const Var<S>& x) {
  const auto data = x.value().data();
  S total = 0;
  for (S v : data) total += v;
  const std::size_t ix = x.id();
  return x.tape().record(Tensor<S>({1, 1, 1, 1}, total), {x},
                         [ix](Tape<S>& t, std::span<const S> g) {
                           std::span<S> gx = t.grad(ix);
                           for (S& v : gx) v += g[0];
                         });
}

template <typename S>
Var<S> mean(const Var<S>& x) {
  const auto data = x.value().data();
  if (data.empty()) throw ShapeError("mean of an empty tensor");
  S total = 0;
  for (S v : data) total += v;
  const S inv = S(1) / static_cast<S>(data.size());
  const std::size_t ix = x.id();
  return x.tape().record(Tensor<S>({1, 1, 1, 1}, total * inv), {x},
                         [ix, inv](Tape<S>& t, std::span<const S> g) {
                           std::span<S> gx = t.grad(ix);
                           const S d = g[0] * inv;
                           for (S& v : gx) v += d;
                         });
}

template <typename S>
Var<S> reduce_mean_spatial(const Var<S>& x) {
  const Shape s = x.shape();
  if (s.h < 1 || s.w < 1) {
    throw ShapeError("spatial mean over empty extent " + s.str());
  }
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  const std::size_t plane = s.plane();
  const S inv = S(1) / static_cast<S>(plane);
  Tensor<S> out({s.n, s.c, 1, 1});
  const S* px = x.value().raw();
  for (std::size_t q = 0; q < planes; ++q) {
    S acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += px[q * plane + i];
    out[q] = acc * inv;
  }
  const std::size_t ix = x.id();
  return x.tape().record(
      std::move(out), {x},
      [ix, planes, plane, inv](Tape<S>& t, std::span<const S> g) {
        std::span<S> gx = t.grad(ix);
        for (std::size_t q = 0; q < planes; ++q) {
          const S d = g[q] * inv;
          for (std::size_t i = 0; i < plane; ++i) gx[q * plane + i] += d;
        }
      });
}

template <typename S>
Var<S> broadcast_spatial(const Var<S>& x, int h, int w) {
  const Shape s = x.shape();
  if (s.h != 1 || s.w != 1) {
    throw ShapeError("broadcast_spatial expects (n,c,1,1), got " + s.str());
  }
  Tensor<S> out({s.n, s.c, h, w});
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  const std::size_t plane = out.shape().plane();
  const S* px = x.value().raw();
  for (std::size_t q = 0; q < planes; ++q) {
    std::fill_n(out.raw() + q * plane, plane, px[q]);
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x},
                         [ix, planes, plane](Tape<S>& t, std::span<const S> g) {
                           std::span<S> gx = t.grad(ix);
                           for (std::size_t q = 0; q < planes; ++q) {
                             S acc = 0;
                             for (std::size_t i = 0; i < plane; ++i) {
                               acc += g[q * plane + i];
                             }
                             gx[q] += acc;
                           }
                         });
}

template <typename S>
Var<S> abs(const Var<S>& x) {
  Tensor<S> out(x.shape());
  const S* px = x.value().raw();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(px[i]);
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x},
                         [ix](Tape<S>& t, std::span<const S> g) {
                           const S* v = t.value(ix).raw();
                           std::span<S> gx = t.grad(ix);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             if (v[i] > 0) {
                               gx[i] += g[i];
                             } else if (v[i] < 0) {
                               gx[i] -= g[i];
                             }
                           }
                         });
}

template <typename S>
Var<S> clamp(const Var<S>& x, S lo, S hi) {
  Tensor<S> out(x.shape());
  const S* px = x.value().raw();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::min(hi, std::max(lo, px[i]));
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x},
                         [ix, lo, hi](Tape<S>& t, std::span<const S> g) {
                           const S* v = t.value(ix).raw();
                           std::span<S> gx = t.grad(ix);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             if (v[i] >= lo && v[i] <= hi) gx[i] += g[i];
                           }
                         });
}

template <typename S>
Var<S> channel_scale(const Var<S>& x, const Var<S>& v) {
  Tape<S>& tape = x.tape();
  tape.check_owned(v);
  const Shape s = x.shape();
  if (v.shape() != Shape{1, s.c, 1, 1}) {
    throw ShapeError("channel_scale expects a (1," + std::to_string(s.c) +
                     ",1,1) vector, got " + v.shape().str());
  }
  const std::size_t plane = s.plane();
  Tensor<S> out(s);
  const S* px = x.value().raw();
  const S* pv = v.value().raw();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        out[base + i] = px[base + i] * pv[c];
      }
    }
  }
  const std::size_t ix = x.id();
  const std::size_t iv = v.id();
  return tape.record(std::move(out), {x, v},
                     [ix, iv, s, plane](Tape<S>& t, std::span<const S> g) {
                       const S* px = t.value(ix).raw();
                       const S* pv = t.value(iv).raw();
                       const bool dx = t.requires_grad(ix);
                       const bool dv = t.requires_grad(iv);
                       for (int n = 0; n < s.n; ++n) {
                         for (int c = 0; c < s.c; ++c) {
                           const std::size_t base =
                               (static_cast<std::size_t>(n) * s.c + c) * plane;
                           if (dx) {
                             std::span<S> gx = t.grad(ix);
                             for (std::size_t i = 0; i < plane; ++i) {
                               gx[base + i] += g[base + i] * pv[c];
                             }
                           }
                           if (dv) {
                             S acc = 0;
                             for (std::size_t i = 0; i < plane; ++i) {
                               acc += g[base + i] * px[base + i];
                             }
                             t.grad(iv)[c] += acc;
                           }
                         }
                       }
                     });
}

template <typename S>
Var<S> activation(Activation kind, const Var<S>& x) {
  Tensor<S> out(x.shape());
  const S* px = x.value().raw();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const S v = px[i];
    switch (kind) {
      case Activation::relu: out[i] = v > 0 ? v : S(0); break;
      case Activation::sigmoid:
        if (v >= 0) {
          out[i] = S(1) / (S(1) + std::exp(-v));
        } else {
          const S e = std::exp(v);
          out[i] = e / (S(1) + e);
        }
        break;
      case Activation::tanh: out[i] = std::tanh(v); break;
    }
  }
  const std::size_t ix = x.id();
  const std::size_t iy = x.tape().next_id();
  return x.tape().record(
      std::move(out), {x}, [kind, ix, iy](Tape<S>& t, std::span<const S> g) {
        const S* px = t.value(ix).raw();
        const S* py = t.value(iy).raw();
        std::span<S> gx = t.grad(ix);
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (kind) {
            case Activation::relu:
              if (px[i] > 0) gx[i] += g[i];
              break;
            case Activation::sigmoid:
              gx[i] += g[i] * py[i] * (S(1) - py[i]);
              break;
            case Activation::tanh:
              gx[i] += g[i] * (S(1) - py[i] * py[i]);
              break;
          }
        }
      });
}

template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& weight, const Var<S>& bias,
              int stride) {
  Tape<S>& tape = x.tape();
  tape.check_owned(weight);
  tape.check_owned(bias);
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.h != ws.w || ws.h % 2 == 0) {
    throw ShapeError("conv kernel must be square and odd, got " + ws.str());
  }
  if (stride != 1 && stride != 2) {
    throw std::invalid_argument("conv stride must be 1 or 2, got " +
                                std::to_string(stride));
  }
  if (xs.c != ws.c) {
    throw ShapeError("conv2d expects " + std::to_string(ws.c) +
                     " input channels, got input " + xs.str());
  }
  if (bias.shape() != Shape{1, ws.n, 1, 1}) {
    throw ShapeError("conv2d bias shape " + bias.shape().str() +
                     " does not match weight " + ws.str());
  }
  const int k = ws.h;
  const int pad = (k - 1) / 2;
  const int cin = xs.c;
  const int cout = ws.n;
  const int ih = xs.h;
  const int iw = xs.w;
  const int oh = (ih + stride - 1) / stride;
  const int ow = (iw + stride - 1) / stride;
  const std::size_t in_plane = xs.plane();
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;

  Tensor<S> out({xs.n, cout, oh, ow});
  const S* px = x.value().raw();
  const S* pw = weight.value().raw();
  const S* pb = bias.value().raw();
  for (int n = 0; n < xs.n; ++n) {
    for (int oc = 0; oc < cout; ++oc) {
      S* po = out.raw() + (static_cast<std::size_t>(n) * cout + oc) * out_plane;
      std::fill_n(po, out_plane, pb[oc]);
      for (int ic = 0; ic < cin; ++ic) {
        const S* xin = px + (static_cast<std::size_t>(n) * cin + ic) * in_plane;
        const S* wk = pw + (static_cast<std::size_t>(oc) * cin + ic) * k * k;
        for (int ky = 0; ky < k; ++ky) {
          const Span rows = valid_outputs(ky - pad, stride, ih, oh);
          for (int kx = 0; kx < k; ++kx) {
            const S wv = wk[ky * k + kx];
            const int off = kx - pad;
            const Span cols = valid_outputs(off, stride, iw, ow);
            for (int oy = rows.lo; oy <= rows.hi; ++oy) {
              const S* xr = xin + static_cast<std::size_t>(oy * stride + ky - pad) * iw;
              S* orow = po + static_cast<std::size_t>(oy) * ow;
              if (stride == 1) {
                for (int ox = cols.lo; ox <= cols.hi; ++ox) {
                  orow[ox] += wv * xr[ox + off];
                }
              } else {
                for (int ox = cols.lo; ox <= cols.hi; ++ox) {
                  orow[ox] += wv * xr[ox * stride + off];
                }
              }
            }
          }
        }
      }
    }
  }

  const std::size_t ixv = x.id();
  const std::size_t iwv = weight.id();
  const std::size_t ibv = bias.id();
  const int batch = xs.n;
  return tape.record(
      std::move(out), {x, weight, bias},
      [=](Tape<S>& t, std::span<const S> g) {
        const S* vx = t.value(ixv).raw();
        const S* vw = t.value(iwv).raw();
        if (t.requires_grad(ixv)) {
          S* gx = t.grad(ixv).data();
          for (int n = 0; n < batch; ++n) {
            for (int oc = 0; oc < cout; ++oc) {
              const S* go = g.data() + (static_cast<std::size_t>(n) * cout + oc) * out_plane;
              for (int ic = 0; ic < cin; ++ic) {
                S* gxin = gx + (static_cast<std::size_t>(n) * cin + ic) * in_plane;
                const S* wk = vw + (static_cast<std::size_t>(oc) * cin + ic) * k * k;
                for (int ky = 0; ky < k; ++ky) {
                  const Span rows = valid_outputs(ky - pad, stride, ih, oh);
                  for (int kx = 0; kx < k; ++kx) {
                    const S wv = wk[ky * k + kx];
                    const int off = kx - pad;
                    const Span cols = valid_outputs(off, stride, iw, ow);
                    for (int oy = rows.lo; oy <= rows.hi; ++oy) {
                      S* gxr = gxin + static_cast<std::size_t>(oy * stride + ky - pad) * iw;
                      const S* gor = go + static_cast<std::size_t>(oy) * ow;
                      if (stride == 1) {
                        for (int ox = cols.lo; ox <= cols.hi; ++ox) {
                          gxr[ox + off] += wv * gor[ox];
                        }
                      } else {
                        for (int ox = cols.lo; ox <= cols.hi; ++ox) {
                          gxr[ox * stride + off] += wv * gor[ox];
                        }
                      }
                    }
                  }
                }
              }
            }
          }
        }
        if (t.requires_grad(iwv)) {
          S* gw = t.grad(iwv).data();
          for (int n = 0; n < batch; ++n) {
            for (int oc = 0; oc < cout; ++oc) {
              const S* go = g.data() + (static_cast<std::size_t>(n) * cout + oc) * out_plane;
              for (int ic = 0; ic < cin; ++ic) {
                const S* xin = vx + (static_cast<std::size_t>(n) * cin + ic) * in_plane;
                S* gwk = gw + (static_cast<std::size_t>(oc) * cin + ic) * k * k;
                for (int ky = 0; ky < k; ++ky) {
                  const Span rows = valid_outputs(ky - pad, stride, ih, oh);
                  for (int kx = 0; kx < k; ++kx) {
                    const int off = kx - pad;
                    const Span cols = valid_outputs(off, stride, iw, ow);
                    const int len = cols.hi - cols.lo + 1;
                    if (len <= 0) continue;
                    S acc = 0;
                    for (int oy = rows.lo; oy <= rows.hi; ++oy) {
                      const S* xr = xin + static_cast<std::size_t>(oy * stride + ky - pad) * iw;
                      const S* gor = go + static_cast<std::size_t>(oy) * ow;
                      acc += stride == 1
                                 ? dot(gor + cols.lo, xr + cols.lo + off, len)
                                 : strided_dot(gor + cols.lo,
                                               xr + cols.lo * stride + off, len,
                                               stride);
                    }
                    gwk[ky * k + kx] += acc;
                  }
                }
              }
            }
          }
        }
        if (t.requires_grad(ibv)) {
          std::span<S> gb = t.grad(ibv);
          for (int n = 0; n < batch; ++n) {
            for (int oc = 0; oc < cout; ++oc) {
              const S* go = g.data() + (static_cast<std::size_t>(n) * cout + oc) * out_plane;
              S acc = 0;
              for (std::size_t i = 0; i < out_plane; ++i) acc += go[i];
              gb[oc] += acc;
            }
          }
        }
      });
}

template <typename S>
Var<S> conv2d(const Var<S>& x, Conv2d<S>& layer) {
  Tape<S>& tape = x.tape();
  return conv2d(x, tape.leaf(layer.weight), tape.leaf(layer.bias),
                layer.spec.stride);
}

namespace {

// Valid-tap box sum along one axis of each row-major plane, divided by the
// in-bounds tap count. `step` is the element stride along the axis, `count`
// its length, `lines`/`line_step` enumerate the perpendicular lines.
template <typename S>
void box_pass(const S* in, S* out, int count, std::size_t step, int lines,
              std::size_t line_step, int radius) {
  for (int l = 0; l < lines; ++l) {
    const S* src = in + l * line_step;
    S* dst = out + l * line_step;
    for (int i = 0; i < count; ++i) {
      const int lo = std::max(0, i - radius);
      const int hi = std::min(count - 1, i + radius);
      S acc = 0;
      for (int j = lo; j <= hi; ++j) acc += src[j * step];
      dst[i * step] = acc / static_cast<S>(hi - lo + 1);
    }
  }
}

// Adjoint of box_pass: scale by 1/count at the output, then box-sum back.
template <typename S>
void box_pass_adjoint(const S* g, S* out, int count, std::size_t step,
                      int lines, std::size_t line_step, int radius,
                      bool accumulate) {
  std::vector<S> scaled(count);
  for (int l = 0; l < lines; ++l) {
    const S* src = g + l * line_step;
    S* dst = out + l * line_step;
    for (int i = 0; i < count; ++i) {
      const int lo = std::max(0, i - radius);
      const int hi = std::min(count - 1, i + radius);
      scaled[i] = src[i * step] / static_cast<S>(hi - lo + 1);
    }
    for (int j = 0; j < count; ++j) {
      const int lo = std::max(0, j - radius);
      const int hi = std::min(count - 1, j + radius);
      S acc = 0;
      for (int i = lo; i <= hi; ++i) acc += scaled[i];
      if (accumulate) {
        dst[j * step] += acc;
      } else {
        dst[j * step] = acc;
      }
    }
  }
}

}  // namespace

template <typename S>
Var<S> avg_pool(const Var<S>& x, const PoolSpec& spec) {
  const Shape s = x.shape();
  if (spec.global) return broadcast_spatial(reduce_mean_spatial(x), s.h, s.w);
  if (spec.kernel <= 0 || spec.kernel % 2 == 0) {
    throw std::invalid_argument("avg_pool kernel must be odd, got " +
                                std::to_string(spec.kernel));
  }
  const int radius = spec.kernel / 2;
  const int planes = s.n * s.c;
  const std::size_t plane = s.plane();
  Tensor<S> tmp(s);
  Tensor<S> out(s);
  for (int q = 0; q < planes; ++q) {
    const S* src = x.value().raw() + q * plane;
    // rows: horizontal pass
    box_pass(src, tmp.raw() + q * plane, s.w, 1, s.h, s.w, radius);
    // columns: vertical pass
    box_pass(tmp.raw() + q * plane, out.raw() + q * plane, s.h, s.w, s.w, 1,
             radius);
  }
  const std::size_t ix = x.id();
  return x.tape().record(
      std::move(out), {x},
      [ix, s, radius, planes, plane](Tape<S>& t, std::span<const S> g) {
        std::span<S> gx = t.grad(ix);
        std::vector<S> col(plane);
        for (int q = 0; q < planes; ++q) {
          box_pass_adjoint(g.data() + q * plane, col.data(), s.h, s.w, s.w, 1,
                           radius, false);
          box_pass_adjoint(col.data(), gx.data() + q * plane, s.w, 1, s.h, s.w,
                           radius, true);
        }
      });
}

template <typename S>
Var<S> upsample_nearest(const Var<S>& x) {
  const Shape s = x.shape();
  if (s.h < 1 || s.w < 1) throw ShapeError("upsample of empty extent " + s.str());
  const Shape os{s.n, s.c, 2 * s.h, 2 * s.w};
  Tensor<S> out(os);
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  const S* px = x.value().raw();
  for (std::size_t q = 0; q < planes; ++q) {
    const S* src = px + q * s.plane();
    S* dst = out.raw() + q * os.plane();
    for (int y = 0; y < os.h; ++y) {
      for (int xo = 0; xo < os.w; ++xo) {
        dst[y * os.w + xo] = src[(y / 2) * s.w + xo / 2];
      }
    }
  }
  const std::size_t ix = x.id();
  return x.tape().record(
      std::move(out), {x}, [ix, s, os, planes](Tape<S>& t, std::span<const S> g) {
        std::span<S> gx = t.grad(ix);
        for (std::size_t q = 0; q < planes; ++q) {
          const S* src = g.data() + q * os.plane();
          S* dst = gx.data() + q * s.plane();
          for (int y = 0; y < s.h; ++y) {
            for (int xi = 0; xi < s.w; ++xi) {
              const S* r0 = src + (2 * y) * os.w + 2 * xi;
              const S* r1 = r0 + os.w;
              dst[y * s.w + xi] += (r0[0] + r0[1]) + (r1[0] + r1[1]);
            }
          }
        }
      });
}

template <typename S>
Var<S> downsample(const Var<S>& x, Conv2d<S>& layer) {
  if (layer.spec.stride != 2) {
    throw std::invalid_argument("downsample requires a stride-2 convolution");
  }
  return conv2d(x, layer);
}

template <typename S>
Var<S> upsample(const Var<S>& x, Conv2d<S>& projection) {
  if (projection.spec.kernel != 1 || projection.spec.stride != 1) {
    throw std::invalid_argument("upsample projection must be a 1x1 stride-1 conv");
  }
  return conv2d(upsample_nearest(x), projection);
}

template <typename S>
Var<S> channel_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                    S eps) {
  Tape<S>& tape = x.tape();
  tape.check_owned(gamma);
  tape.check_owned(beta);
  const Shape s = x.shape();
  const Shape vs{1, s.c, 1, 1};
  if (gamma.shape() != vs || beta.shape() != vs) {
    throw ShapeError("channel_norm affine parameters must be " + vs.str() +
                     ", got " + gamma.shape().str() + " and " +
                     beta.shape().str());
  }
  const std::size_t plane = s.plane();
  const std::size_t count = static_cast<std::size_t>(s.c) * plane;
  if (count == 0) throw ShapeError("channel_norm of empty tensor " + s.str());
  std::vector<S> mu(s.n);
  std::vector<S> inv_std(s.n);
  const S* px = x.value().raw();
  const S* pg = gamma.value().raw();
  const S* pbeta = beta.value().raw();
  Tensor<S> out(s);
  for (int n = 0; n < s.n; ++n) {
    const S* xs = px + n * count;
    S acc = 0;
    for (std::size_t i = 0; i < count; ++i) acc += xs[i];
    const S m = acc / static_cast<S>(count);
    S var = 0;
    for (std::size_t i = 0; i < count; ++i) var += (xs[i] - m) * (xs[i] - m);
    var /= static_cast<S>(count);
    mu[n] = m;
    inv_std[n] = S(1) / std::sqrt(var + eps);
    S* ys = out.raw() + n * count;
    for (int c = 0; c < s.c; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t j = c * plane + i;
        ys[j] = pg[c] * ((xs[j] - m) * inv_std[n]) + pbeta[c];
      }
    }
  }
  const std::size_t ix = x.id();
  const std::size_t ig = gamma.id();
  const std::size_t ib = beta.id();
  return tape.record(
      std::move(out), {x, gamma, beta},
      [=](Tape<S>& t, std::span<const S> g) {
        const S* vx = t.value(ix).raw();
        const S* vg = t.value(ig).raw();
        std::vector<S> xhat(count);
        std::vector<S> gxhat(count);
        for (int n = 0; n < s.n; ++n) {
          const S* xs = vx + n * count;
          const S* gs = g.data() + n * count;
          for (std::size_t j = 0; j < count; ++j) {
            xhat[j] = (xs[j] - mu[n]) * inv_std[n];
          }
          if (t.requires_grad(ig)) {
            std::span<S> gg = t.grad(ig);
            for (int c = 0; c < s.c; ++c) {
              S acc = 0;
              for (std::size_t i = 0; i < plane; ++i) {
                acc += gs[c * plane + i] * xhat[c * plane + i];
              }
              gg[c] += acc;
            }
          }
          if (t.requires_grad(ib)) {
            std::span<S> gb = t.grad(ib);
            for (int c = 0; c < s.c; ++c) {
              S acc = 0;
              for (std::size_t i = 0; i < plane; ++i) acc += gs[c * plane + i];
              gb[c] += acc;
            }
          }
          if (t.requires_grad(ix)) {
            S mean_g = 0;
            S mean_gx = 0;
            for (int c = 0; c < s.c; ++c) {
              for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t j = c * plane + i;
                gxhat[j] = gs[j] * vg[c];
                mean_g += gxhat[j];
                mean_gx += gxhat[j] * xhat[j];
              }
            }
            mean_g /= static_cast<S>(count);
            mean_gx /= static_cast<S>(count);
            S* gx = t.grad(ix).data() + n * count;
            for (std::size_t j = 0; j < count; ++j) {
              gx[j] += inv_std[n] * (gxhat[j] - mean_g - xhat[j] * mean_gx);
            }
          }
        }
      });
}

#define HAANET_INSTANTIATE_OPS(S)                                              \
  template struct Conv2d<S>;                                                   \
  template Var<S> elementwise(Elementwise, const Var<S>&, const Var<S>&);      \
  template Var<S> affine(const Var<S>&, S, S);                                 \
  template Var<S> mean(const Var<S>&);                                         \
  template Var<S> sum(const Var<S>&);                                          \
  template Var<S> reduce_mean_spatial(const Var<S>&);                          \
  template Var<S> broadcast_spatial(const Var<S>&, int, int);                  \
  template Var<S> abs(const Var<S>&);                                          \
  template Var<S> clamp(const Var<S>&, S, S);                                  \
  template Var<S> channel_scale(const Var<S>&, const Var<S>&);                 \
  template Var<S> activation(Activation, const Var<S>&);                       \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, int);    \
  template Var<S> conv2d(const Var<S>&, Conv2d<S>&);                           \
  template Var<S> avg_pool(const Var<S>&, const PoolSpec&);                    \
  template Var<S> upsample_nearest(const Var<S>&);                             \
  template Var<S> downsample(const Var<S>&, Conv2d<S>&);                       \
  template Var<S> upsample(const Var<S>&, Conv2d<S>&);                         \
  template Var<S> channel_norm(const Var<S>&, const Var<S>&, const Var<S>&, S);

HAANET_INSTANTIATE_OPS(float)
HAANET_INSTANTIATE_OPS(double)

#undef HAANET_INSTANTIATE_OPS

}  // namespace haanet
