#pragma once

// Direct 3D convolution kernels over NCDHW buffers. Every loop nest keeps a
// fixed traversal order so results are bitwise reproducible.

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace latentwave::detail {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t cin = 1, cout = 1;
  std::size_t din = 1, hin = 1, win = 1;
  std::size_t dout = 1, hout = 1, wout = 1;
  std::size_t k = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;

  std::size_t in_plane() const { return din * hin * win; }
  std::size_t out_plane() const { return dout * hout * wout; }
};

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

/// Valid output index range [lo, hi) along one axis for kernel tap `tap`.
inline void tap_range(std::size_t tap, std::size_t stride, std::size_t pad, std::size_t in,
                      std::size_t out, std::size_t& lo, std::size_t& hi) {
  // index_in = o * stride + tap - pad must lie in [0, in)
  long l = 0;
  if (static_cast<long>(pad) > static_cast<long>(tap)) {
    long need = static_cast<long>(pad) - static_cast<long>(tap);
    l = (need + static_cast<long>(stride) - 1) / static_cast<long>(stride);
  }
  long h_num = static_cast<long>(in) - 1 + static_cast<long>(pad) - static_cast<long>(tap);
  long h = h_num < 0 ? -1 : h_num / static_cast<long>(stride);
  h = std::min<long>(h, static_cast<long>(out) - 1);
  lo = static_cast<std::size_t>(l);
  hi = h < l ? lo : static_cast<std::size_t>(h + 1);
}

// ---------------------------------------------------------------------------
// Fast path for the 3x3x3, stride 1, pad 1 case that dominates the
// autoencoder. Each channel is copied into a zero-bordered buffer so every
// tap becomes a constant offset into one flat array; outputs are then
// produced in SIMD-width chunks with the accumulators held in registers.

template <class T>
struct SimdWidth {
  static constexpr std::size_t value = 64 / sizeof(T);
};

struct PaddedLayout {
  std::size_t d, h, w;
  std::size_t wp, hp, plane, vol, margin, cstride;

  PaddedLayout(std::size_t d_, std::size_t h_, std::size_t w_, std::size_t lanes)
      : d(d_), h(h_), w(w_) {
    wp = w + 2;
    hp = h + 2;
    plane = hp * wp;
    vol = (d + 2) * plane;
    margin = ((plane + wp + 1 + lanes - 1) / lanes + 1) * lanes;
    cstride = ((vol + 2 * margin + lanes - 1) / lanes) * lanes;
  }
  std::size_t at(std::size_t z, std::size_t y, std::size_t x) const {
    return margin + ((z + 1) * hp + (y + 1)) * wp + (x + 1);
  }
  std::size_t first() const { return at(0, 0, 0); }
  std::size_t last() const { return at(d - 1, h - 1, w - 1) + 1; }
  void offsets(long* off) const {
    int t = 0;
    for (int kd = -1; kd <= 1; ++kd)
      for (int kh = -1; kh <= 1; ++kh)
        for (int kw = -1; kw <= 1; ++kw)
          off[t++] = kd * static_cast<long>(plane) + kh * static_cast<long>(wp) + kw;
  }
};

template <class T>
void pad_channels(const T* x, T* xp, std::size_t channels, const PaddedLayout& L) {
  std::fill(xp, xp + channels * L.cstride, T{0});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t z = 0; z < L.d; ++z)
      for (std::size_t y = 0; y < L.h; ++y) {
        const T* src = x + ((c * L.d + z) * L.h + y) * L.w;
        std::copy(src, src + L.w, xp + c * L.cstride + L.at(z, y, 0));
      }
}

template <class T, std::size_t CB>
void conv3_same_forward_block(const T* xp, const T* w, const T* bias, T* y, std::size_t cin,
                              std::size_t cout, const PaddedLayout& L, bool accumulate) {
  constexpr std::size_t V = SimdWidth<T>::value;
  typedef T vec __attribute__((vector_size(64)));
  long off[27];
  L.offsets(off);
  std::vector<T> wr(cin * 27 * CB);
  std::vector<T> yp(CB * L.cstride);
  const std::size_t o0 = (L.first() / V) * V, o1 = L.last();
  for (std::size_t c0 = 0; c0 < cout; c0 += CB) {
    const std::size_t nc = std::min(CB, cout - c0);
    std::fill(wr.begin(), wr.end(), T{0});
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t t = 0; t < 27; ++t) wr[(ci * 27 + t) * CB + c] = w[((c0 + c) * cin + ci) * 27 + t];
    for (std::size_t o = o0; o < o1; o += V) {
      vec acc[CB];
      for (std::size_t c = 0; c < CB; ++c) acc[c] = vec{};
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* base = xp + ci * L.cstride + o;
        const T* wc = wr.data() + ci * 27 * CB;
        for (std::size_t t = 0; t < 27; ++t) {
          vec xv;
          std::memcpy(&xv, base + off[t], sizeof(vec));
#pragma GCC unroll 8
          for (std::size_t c = 0; c < CB; ++c) acc[c] += wc[t * CB + c] * xv;
        }
      }
      for (std::size_t c = 0; c < CB; ++c) std::memcpy(yp.data() + c * L.cstride + o, &acc[c], sizeof(vec));
    }
    for (std::size_t c = 0; c < nc; ++c) {
      const T b = (!accumulate && bias) ? bias[c0 + c] : T{0};
      for (std::size_t z = 0; z < L.d; ++z)
        for (std::size_t yy = 0; yy < L.h; ++yy) {
          T* dst = y + (((c0 + c) * L.d + z) * L.h + yy) * L.w;
          const T* src = yp.data() + c * L.cstride + L.at(z, yy, 0);
          if (accumulate) {
            for (std::size_t x = 0; x < L.w; ++x) dst[x] += src[x];
          } else {
            for (std::size_t x = 0; x < L.w; ++x) dst[x] = src[x] + b;
          }
        }
    }
  }
}

template <class T>
void conv3_same_forward(const T* x, const T* w, const T* bias, T* y, const ConvGeometry& g,
                        bool accumulate) {
  const PaddedLayout L(g.din, g.hin, g.win, SimdWidth<T>::value);
  std::vector<T> xp(g.cin * L.cstride);
  for (std::size_t b = 0; b < g.batch; ++b) {
    pad_channels(x + b * g.cin * g.in_plane(), xp.data(), g.cin, L);
    T* yb = y + b * g.cout * g.out_plane();
    if (g.cout >= 8) {
      conv3_same_forward_block<T, 8>(xp.data(), w, bias, yb, g.cin, g.cout, L, accumulate);
    } else {
      conv3_same_forward_block<T, 4>(xp.data(), w, bias, yb, g.cin, g.cout, L, accumulate);
    }
  }
}

template <class T>
void conv3_same_weight_grad(const T* x, const T* gy, T* gw, const ConvGeometry& g) {
  constexpr std::size_t V = SimdWidth<T>::value;
  constexpr std::size_t CB = 4;
  typedef T vec __attribute__((vector_size(64)));
  const PaddedLayout L(g.din, g.hin, g.win, V);
  long off[27];
  L.offsets(off);
  const std::size_t o0 = (L.first() / V) * V, o1 = L.last();
  std::vector<T> xp(g.cin * L.cstride), gyp(g.cout * L.cstride);
  // Per-(co, ci, tap) partial sums, reduced in a fixed order at the end.
  std::vector<T> partial(g.cout * g.cin * 27 * V, T{0});
  for (std::size_t b = 0; b < g.batch; ++b) {
    pad_channels(x + b * g.cin * g.in_plane(), xp.data(), g.cin, L);
    pad_channels(gy + b * g.cout * g.out_plane(), gyp.data(), g.cout, L);
    for (std::size_t c0 = 0; c0 < g.cout; c0 += CB) {
      const std::size_t nc = std::min(CB, g.cout - c0);
      for (std::size_t ci = 0; ci < g.cin; ++ci) {
        vec acc[CB * 27];
        for (auto& a : acc) a = vec{};
        const T* xb = xp.data() + ci * L.cstride;
        for (std::size_t o = o0; o < o1; o += V) {
          vec gv[CB];
          for (std::size_t c = 0; c < CB; ++c) {
            if (c < nc) {
              std::memcpy(&gv[c], gyp.data() + (c0 + c) * L.cstride + o, sizeof(vec));
            } else {
              gv[c] = vec{};
            }
          }
          for (std::size_t t = 0; t < 27; ++t) {
            vec xv;
            std::memcpy(&xv, xb + o + off[t], sizeof(vec));
#pragma GCC unroll 8
            for (std::size_t c = 0; c < CB; ++c) acc[c * 27 + t] += gv[c] * xv;
          }
        }
        for (std::size_t c = 0; c < nc; ++c)
          for (std::size_t t = 0; t < 27; ++t) {
            T* dst = partial.data() + (((c0 + c) * g.cin + ci) * 27 + t) * V;
            T lanes[V];
            std::memcpy(lanes, &acc[c * 27 + t], sizeof(vec));
            for (std::size_t l = 0; l < V; ++l) dst[l] += lanes[l];
          }
      }
    }
  }
  for (std::size_t i = 0; i < g.cout * g.cin * 27; ++i) {
    T sum{0};
    for (std::size_t l = 0; l < V; ++l) sum += partial[i * V + l];
    gw[i] += sum;
  }
}

inline bool is_conv3_same(const ConvGeometry& g) { return g.k == 3 && g.stride == 1 && g.pad == 1; }

/// y = conv(x, w) + bias. When `accumulate` is set the result is added to y
/// and bias is ignored.
template <class T>
void conv_forward(const T* x, const T* w, const T* bias, T* y, const ConvGeometry& g,
                  bool accumulate = false) {
  if (is_conv3_same(g)) {
    conv3_same_forward(x, w, bias, y, g, accumulate);
    return;
  }
  const std::size_t k = g.k, s = g.stride, p = g.pad;
  constexpr std::size_t kBlock = 4;
  std::vector<T> acc(kBlock * g.wout);
  std::vector<std::size_t> kw_lo(k), kw_hi(k);
  for (std::size_t kw = 0; kw < k; ++kw) tap_range(kw, s, p, g.win, g.wout, kw_lo[kw], kw_hi[kw]);

  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t co0 = 0; co0 < g.cout; co0 += kBlock) {
      const std::size_t nco = std::min(kBlock, g.cout - co0);
      for (std::size_t od = 0; od < g.dout; ++od) {
        for (std::size_t oh = 0; oh < g.hout; ++oh) {
          for (std::size_t c = 0; c < nco; ++c) {
            T* yrow = y + ((b * g.cout + co0 + c) * g.dout + od) * g.hout * g.wout + oh * g.wout;
            T init = (!accumulate && bias) ? bias[co0 + c] : T{0};
            T* a = acc.data() + c * g.wout;
            if (accumulate) {
              std::copy(yrow, yrow + g.wout, a);
            } else {
              std::fill(a, a + g.wout, init);
            }
          }
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            for (std::size_t kd = 0; kd < k; ++kd) {
              const long id = static_cast<long>(od * s + kd) - static_cast<long>(p);
              if (id < 0 || id >= static_cast<long>(g.din)) continue;
              for (std::size_t kh = 0; kh < k; ++kh) {
                const long ih = static_cast<long>(oh * s + kh) - static_cast<long>(p);
                if (ih < 0 || ih >= static_cast<long>(g.hin)) continue;
                const T* xrow = x + ((b * g.cin + ci) * g.din + static_cast<std::size_t>(id)) * g.hin * g.win +
                                static_cast<std::size_t>(ih) * g.win;
                for (std::size_t kw = 0; kw < k; ++kw) {
                  const std::size_t lo = kw_lo[kw], hi = kw_hi[kw];
                  if (s == 1) {
                    for (std::size_t c = 0; c < nco; ++c) {
                      const T wv = w[((((co0 + c) * g.cin + ci) * k + kd) * k + kh) * k + kw];
                      T* a = acc.data() + c * g.wout;
                      for (std::size_t ox = lo; ox < hi; ++ox) a[ox] += wv * xrow[ox + kw - p];
                    }
                  } else {
                    for (std::size_t c = 0; c < nco; ++c) {
                      const T wv = w[((((co0 + c) * g.cin + ci) * k + kd) * k + kh) * k + kw];
                      T* a = acc.data() + c * g.wout;
                      for (std::size_t ox = lo; ox < hi; ++ox) a[ox] += wv * xrow[ox * s + kw - p];
                    }
                  }
                }
              }
            }
          }
          for (std::size_t c = 0; c < nco; ++c) {
            T* yrow = y + ((b * g.cout + co0 + c) * g.dout + od) * g.hout * g.wout + oh * g.wout;
            std::copy(acc.data() + c * g.wout, acc.data() + (c + 1) * g.wout, yrow);
          }
        }
      }
    }
  }
}

/// gx += dL/dx given gy = dL/dy.
template <class T>
void conv_backward_input(const T* gy, const T* w, T* gx, const ConvGeometry& g) {
  const std::size_t k = g.k, s = g.stride, p = g.pad;
  if (s == 1 && p <= k - 1) {
    // Stride-1 transpose is a forward correlation with the flipped,
    // channel-transposed kernel and complementary padding.
    std::vector<T> wt(g.cin * g.cout * k * k * k);
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t ci = 0; ci < g.cin; ++ci)
        for (std::size_t kd = 0; kd < k; ++kd)
          for (std::size_t kh = 0; kh < k; ++kh)
            for (std::size_t kw = 0; kw < k; ++kw)
              wt[(((ci * g.cout + co) * k + (k - 1 - kd)) * k + (k - 1 - kh)) * k + (k - 1 - kw)] =
                  w[(((co * g.cin + ci) * k + kd) * k + kh) * k + kw];
    ConvGeometry t;
    t.batch = g.batch;
    t.cin = g.cout;
    t.cout = g.cin;
    t.din = g.dout;
    t.hin = g.hout;
    t.win = g.wout;
    t.dout = g.din;
    t.hout = g.hin;
    t.wout = g.win;
    t.k = k;
    t.stride = 1;
    t.pad = k - 1 - p;
    conv_forward<T>(gy, wt.data(), nullptr, gx, t, true);
    return;
  }
  std::vector<std::size_t> kw_lo(k), kw_hi(k);
  for (std::size_t kw = 0; kw < k; ++kw) tap_range(kw, s, p, g.win, g.wout, kw_lo[kw], kw_hi[kw]);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      T* gxp = gx + (b * g.cin + ci) * g.in_plane();
      for (std::size_t co = 0; co < g.cout; ++co) {
        const T* gyp = gy + (b * g.cout + co) * g.out_plane();
        for (std::size_t kd = 0; kd < k; ++kd) {
          for (std::size_t kh = 0; kh < k; ++kh) {
            for (std::size_t kw = 0; kw < k; ++kw) {
              const T wv = w[(((co * g.cin + ci) * k + kd) * k + kh) * k + kw];
              for (std::size_t od = 0; od < g.dout; ++od) {
                const long id = static_cast<long>(od * s + kd) - static_cast<long>(p);
                if (id < 0 || id >= static_cast<long>(g.din)) continue;
                for (std::size_t oh = 0; oh < g.hout; ++oh) {
                  const long ih = static_cast<long>(oh * s + kh) - static_cast<long>(p);
                  if (ih < 0 || ih >= static_cast<long>(g.hin)) continue;
                  const T* gyrow = gyp + (od * g.hout + oh) * g.wout;
                  T* gxrow = gxp + (static_cast<std::size_t>(id) * g.hin + static_cast<std::size_t>(ih)) * g.win;
                  for (std::size_t ox = kw_lo[kw]; ox < kw_hi[kw]; ++ox) gxrow[ox * s + kw - p] += wv * gyrow[ox];
                }
              }
            }
          }
        }
      }
    }
  }
}

/// gw += dL/dw and gb += dL/db (gb may be null).
template <class T>
void conv_backward_weight(const T* x, const T* gy, T* gw, T* gb, const ConvGeometry& g) {
  if (gb) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      T sum{0};
      for (std::size_t b = 0; b < g.batch; ++b) {
        const T* gyp = gy + (b * g.cout + co) * g.out_plane();
        for (std::size_t i = 0; i < g.out_plane(); ++i) sum += gyp[i];
      }
      gb[co] += sum;
    }
  }
  if (is_conv3_same(g)) {
    conv3_same_weight_grad(x, gy, gw, g);
    return;
  }
  const std::size_t k = g.k, s = g.stride, p = g.pad, taps = k * k * k;
  std::vector<std::size_t> kw_lo(k), kw_hi(k);
  for (std::size_t kw = 0; kw < k; ++kw) tap_range(kw, s, p, g.win, g.wout, kw_lo[kw], kw_hi[kw]);
  std::vector<T> acc(taps * g.wout);
  for (std::size_t co = 0; co < g.cout; ++co) {
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      std::fill(acc.begin(), acc.end(), T{0});
      for (std::size_t b = 0; b < g.batch; ++b) {
        const T* gyp = gy + (b * g.cout + co) * g.out_plane();
        const T* xp = x + (b * g.cin + ci) * g.in_plane();
        for (std::size_t od = 0; od < g.dout; ++od) {
          for (std::size_t oh = 0; oh < g.hout; ++oh) {
            const T* gyrow = gyp + (od * g.hout + oh) * g.wout;
            for (std::size_t kd = 0; kd < k; ++kd) {
              const long id = static_cast<long>(od * s + kd) - static_cast<long>(p);
              if (id < 0 || id >= static_cast<long>(g.din)) continue;
              for (std::size_t kh = 0; kh < k; ++kh) {
                const long ih = static_cast<long>(oh * s + kh) - static_cast<long>(p);
                if (ih < 0 || ih >= static_cast<long>(g.hin)) continue;
                const T* xrow = xp + (static_cast<std::size_t>(id) * g.hin + static_cast<std::size_t>(ih)) * g.win;
                for (std::size_t kw = 0; kw < k; ++kw) {
                  T* a = acc.data() + ((kd * k + kh) * k + kw) * g.wout;
                  if (s == 1) {
                    for (std::size_t ox = kw_lo[kw]; ox < kw_hi[kw]; ++ox) a[ox] += gyrow[ox] * xrow[ox + kw - p];
                  } else {
                    for (std::size_t ox = kw_lo[kw]; ox < kw_hi[kw]; ++ox) a[ox] += gyrow[ox] * xrow[ox * s + kw - p];
                  }
                }
              }
            }
          }
        }
      }
      T* gwp = gw + (co * g.cin + ci) * taps;
      for (std::size_t t = 0; t < taps; ++t) {
        T sum{0};
        const T* a = acc.data() + t * g.wout;
        for (std::size_t ox = 0; ox < g.wout; ++ox) sum += a[ox];
        gwp[t] += sum;
      }
    }
  }
}

}  // namespace latentwave::detail
