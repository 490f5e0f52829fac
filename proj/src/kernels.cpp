#include "kernels.hpp"

#include <algorithm>
#include <vector>

namespace bfa::kernels {

namespace {

// cols[r * P + p] with r = (c * KH + kh) * KW + kw.
void im2col(const ConvGeometry& g, const double* x, double* cols) {
  const std::size_t P = g.positions();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
        double* row = cols + ((c * g.kernel_h + kh) * g.kernel_w + kw) * P;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(g.height) &&
                                iw < static_cast<std::ptrdiff_t>(g.width);
            row[oh * g.out_w + ow] =
                inside ? x[(c * g.height + static_cast<std::size_t>(ih)) * g.width +
                           static_cast<std::size_t>(iw)]
                       : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* dx) {
  const std::size_t P = g.positions();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
        const double* row = cols + ((c * g.kernel_h + kh) * g.kernel_w + kw) * P;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) continue;
            dx[(c * g.height + static_cast<std::size_t>(ih)) * g.width + static_cast<std::size_t>(iw)] +=
                row[oh * g.out_w + ow];
          }
        }
      }
    }
  }
}

}  // namespace

ConvGeometry conv_geometry(const LayerSpec& spec, const Shape& input) {
  ConvGeometry g{};
  g.in_channels = input.at(0);
  g.height = input.at(1);
  g.width = input.at(2);
  g.out_channels = spec.weight_shape.at(0);
  g.kernel_h = spec.weight_shape.at(2);
  g.kernel_w = spec.weight_shape.at(3);
  g.stride = spec.stride;
  g.padding = spec.padding;
  g.out_h = (g.height + 2 * g.padding - g.kernel_h) / g.stride + 1;
  g.out_w = (g.width + 2 * g.padding - g.kernel_w) / g.stride + 1;
  return g;
}

void dense_forward(const Tensor& in, const Tensor& weight, const Tensor& bias, Tensor& out) {
  const std::size_t N = in.dim(0);
  const std::size_t I = weight.dim(1);
  const std::size_t O = weight.dim(0);
  // Work transposed so the inner loop runs over the batch.
  std::vector<double> in_t(I * N);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < I; ++i) in_t[i * N + n] = in[n * I + i];
  }
  std::vector<double> out_t(O * N);
  const double* w = weight.data();
  for (std::size_t o = 0; o < O; ++o) {
    double* acc = out_t.data() + o * N;
    const double b = bias.empty() ? 0.0 : bias[o];
    std::fill(acc, acc + N, b);
    for (std::size_t i = 0; i < I; ++i) {
      const double wi = w[o * I + i];
      const double* xi = in_t.data() + i * N;
      for (std::size_t n = 0; n < N; ++n) acc[n] += wi * xi[n];
    }
  }
  out = Tensor({N, O});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) out[n * O + o] = out_t[o * N + n];
  }
}

void dense_backward(const Tensor& in, const Tensor& weight, const Tensor& dout, Tensor& dweight,
                    Tensor* dbias, Tensor* dinput) {
  const std::size_t N = in.dim(0);
  const std::size_t I = weight.dim(1);
  const std::size_t O = weight.dim(0);
  double* dw = dweight.data();
  const double* w = weight.data();
  if (dinput) *dinput = Tensor({N, I});
  for (std::size_t n = 0; n < N; ++n) {
    const double* x = in.data() + n * I;
    for (std::size_t o = 0; o < O; ++o) {
      const double g = dout[n * O + o];
      double* row = dw + o * I;
      for (std::size_t i = 0; i < I; ++i) row[i] += g * x[i];
      if (dbias) (*dbias)[o] += g;
      if (dinput) {
        double* dx = dinput->data() + n * I;
        const double* wrow = w + o * I;
        for (std::size_t i = 0; i < I; ++i) dx[i] += g * wrow[i];
      }
    }
  }
}

void conv_forward(const ConvGeometry& g, const Tensor& in, const Tensor& weight, const Tensor& bias,
                  Tensor& out) {
  const std::size_t N = in.dim(0);
  const std::size_t R = g.patch();
  const std::size_t P = g.positions();
  const std::size_t in_size = g.in_channels * g.height * g.width;
  out = Tensor({N, g.out_channels, g.out_h, g.out_w});
  std::vector<double> cols(R * P);
  const double* w = weight.data();
  for (std::size_t n = 0; n < N; ++n) {
    im2col(g, in.data() + n * in_size, cols.data());
    double* y = out.data() + n * g.out_channels * P;
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      double* acc = y + o * P;
      std::fill(acc, acc + P, bias.empty() ? 0.0 : bias[o]);
      for (std::size_t r = 0; r < R; ++r) {
        const double wr = w[o * R + r];
        const double* c = cols.data() + r * P;
        for (std::size_t p = 0; p < P; ++p) acc[p] += wr * c[p];
      }
    }
  }
}

void conv_backward(const ConvGeometry& g, const Tensor& in, const Tensor& weight, const Tensor& dout,
                   Tensor& dweight, Tensor* dbias, Tensor* dinput) {
  const std::size_t N = in.dim(0);
  const std::size_t R = g.patch();
  const std::size_t P = g.positions();
  const std::size_t O = g.out_channels;
  const std::size_t in_size = g.in_channels * g.height * g.width;
  std::vector<double> cols(R * P);
  std::vector<double> rows(P * R);
  std::vector<double> dcols;
  if (dinput) {
    *dinput = Tensor({N, g.in_channels, g.height, g.width});
    dcols.resize(R * P);
  }
  const double* w = weight.data();
  double* dw = dweight.data();
  for (std::size_t n = 0; n < N; ++n) {
    im2col(g, in.data() + n * in_size, cols.data());
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t p = 0; p < P; ++p) rows[p * R + r] = cols[r * P + p];
    }
    const double* dy = dout.data() + n * O * P;
    for (std::size_t o = 0; o < O; ++o) {
      double* dwo = dw + o * R;
      for (std::size_t p = 0; p < P; ++p) {
        const double gp = dy[o * P + p];
        const double* xr = rows.data() + p * R;
        for (std::size_t r = 0; r < R; ++r) dwo[r] += gp * xr[r];
      }
      if (dbias) {
        double s = 0.0;
        for (std::size_t p = 0; p < P; ++p) s += dy[o * P + p];
        (*dbias)[o] += s;
      }
    }
    if (dinput) {
      std::fill(dcols.begin(), dcols.end(), 0.0);
      for (std::size_t o = 0; o < O; ++o) {
        const double* dyo = dy + o * P;
        for (std::size_t r = 0; r < R; ++r) {
          const double wr = w[o * R + r];
          double* dc = dcols.data() + r * P;
          for (std::size_t p = 0; p < P; ++p) dc[p] += wr * dyo[p];
        }
      }
      col2im_add(g, dcols.data(), dinput->data() + n * in_size);
    }
  }
}

void relu_forward(const Tensor& in, Tensor& out) {
  out = Tensor(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] < 0.0 ? 0.0 : in[i];
}

void relu_backward(const Tensor& in, const Tensor& dout, Tensor& dinput) {
  dinput = Tensor(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) dinput[i] = in[i] > 0.0 ? dout[i] : 0.0;
}

PoolGeometry pool_geometry(const LayerSpec& spec, const Shape& input) {
  PoolGeometry g{};
  g.channels = input.at(0);
  g.height = input.at(1);
  g.width = input.at(2);
  g.window = spec.window;
  g.stride = spec.stride;
  g.out_h = (g.height - g.window) / g.stride + 1;
  g.out_w = (g.width - g.window) / g.stride + 1;
  return g;
}

namespace {

// Index (within one channel plane) of the first maximum in a window.
std::size_t window_argmax(const PoolGeometry& g, const double* plane, std::size_t oh, std::size_t ow) {
  std::size_t best = (oh * g.stride) * g.width + ow * g.stride;
  for (std::size_t kh = 0; kh < g.window; ++kh) {
    for (std::size_t kw = 0; kw < g.window; ++kw) {
      const std::size_t idx = (oh * g.stride + kh) * g.width + ow * g.stride + kw;
      if (plane[idx] > plane[best]) best = idx;
    }
  }
  return best;
}

}  // namespace

void max_pool_forward(const PoolGeometry& g, const Tensor& in, Tensor& out) {
  const std::size_t N = in.dim(0);
  out = Tensor({N, g.channels, g.out_h, g.out_w});
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_h * g.out_w;
  for (std::size_t nc = 0; nc < N * g.channels; ++nc) {
    const double* plane = in.data() + nc * in_plane;
    double* y = out.data() + nc * out_plane;
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        y[oh * g.out_w + ow] = plane[window_argmax(g, plane, oh, ow)];
      }
    }
  }
}

void max_pool_backward(const PoolGeometry& g, const Tensor& in, const Tensor& dout, Tensor& dinput) {
  const std::size_t N = in.dim(0);
  dinput = Tensor(in.shape());
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_h * g.out_w;
  for (std::size_t nc = 0; nc < N * g.channels; ++nc) {
    const double* plane = in.data() + nc * in_plane;
    const double* dy = dout.data() + nc * out_plane;
    double* dx = dinput.data() + nc * in_plane;
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        dx[window_argmax(g, plane, oh, ow)] += dy[oh * g.out_w + ow];
      }
    }
  }
}

}  // namespace bfa::kernels
