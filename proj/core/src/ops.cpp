#include "segsr/ops.hpp"

#include <cmath>
#include <string>

#include "kernels.hpp"

namespace segsr {

namespace {

template <typename T>
Graph<T>& same_graph(const Var<T>& a, const Var<T>& b) {
  if (&a.graph() != &b.graph()) throw Error("operands belong to different graphs");
  return a.graph();
}

template <typename T>
void axpy(std::span<const T> src, std::span<T> dst, T alpha = T{1}) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += alpha * src[i];
}

std::size_t last_axis(const Shape& s) { return s[s.rank() - 1]; }

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  const std::size_t padded = in + 2 * padding;
  if (padded < kernel) {
    throw ShapeError("conv2d: kernel extent " + std::to_string(kernel) + " exceeds padded input " +
                     std::to_string(padded));
  }
  if ((padded - kernel) % stride != 0) {
    throw ShapeError("conv2d: output extent (" + std::to_string(padded) + " - " + std::to_string(kernel) + ") / " +
                     std::to_string(stride) + " + 1 is not an integer");
  }
  return (padded - kernel) / stride + 1;
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, Conv2dOptions opts) {
  Graph<T>& g = same_graph(input, kernel);
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  if (xs.rank() != 4 || ks.rank() != 4) {
    throw ShapeError("conv2d: expected rank-4 input and kernel, got " + xs.str() + " and " + ks.str());
  }
  if (xs[1] != ks[1]) {
    throw ShapeError("conv2d: input has " + std::to_string(xs[1]) + " channels but kernel " + ks.str() + " expects " +
                     std::to_string(ks[1]));
  }
  detail::ConvGeometry geo{xs[1],       xs[2], xs[3], ks[2], ks[3], opts.stride, opts.padding,
                           conv_output_extent(xs[2], ks[2], opts.stride, opts.padding),
                           conv_output_extent(xs[3], ks[3], opts.stride, opts.padding)};
  const std::size_t batch = xs[0];
  const std::size_t out_ch = ks[0];
  const bool direct = geo.kh == 1 && geo.kw == 1 && geo.stride == 1 && geo.padding == 0;
  const std::size_t in_stride = geo.channels * geo.height * geo.width;
  const std::size_t out_stride = out_ch * geo.pixels();

  Tensor<T> out(Shape{batch, out_ch, geo.out_h, geo.out_w});
  std::vector<T> col(direct ? 0 : geo.patch() * geo.pixels());
  const T* x = input.value().ptr();
  const T* k = kernel.value().ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* src = x + b * in_stride;
    if (!direct) {
      detail::im2col(geo, src, col.data());
      src = col.data();
    }
    detail::gemm_acc(out_ch, geo.pixels(), geo.patch(), k, src, out.ptr() + b * out_stride);
  }
  g.add_macs(static_cast<std::uint64_t>(batch) * out_ch * geo.pixels() * geo.patch());

  const NodeId in_id = input.id(), k_id = kernel.id();
  return g.record(OpKind::conv2d, {in_id, k_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const T* dy = gr.grad(self).ptr();
    const T* xv = gr.value(in_id).ptr();
    const T* kv = gr.value(k_id).ptr();
    std::vector<T> buf(direct ? 0 : geo.patch() * geo.pixels());
    if (gr.requires_grad(k_id)) {
      T* dk = gr.grad_accumulator(k_id).ptr();
      std::vector<T> col_t(geo.patch() * geo.pixels());
      for (std::size_t b = 0; b < batch; ++b) {
        const T* src = xv + b * in_stride;
        if (!direct) {
          detail::im2col(geo, src, buf.data());
          src = buf.data();
        }
        detail::transpose(geo.patch(), geo.pixels(), src, col_t.data());
        detail::gemm_acc(out_ch, geo.patch(), geo.pixels(), dy + b * out_stride, col_t.data(), dk);
      }
    }
    if (gr.requires_grad(in_id)) {
      T* dx = gr.grad_accumulator(in_id).ptr();
      std::vector<T> k_t(geo.patch() * out_ch);
      detail::transpose(out_ch, geo.patch(), kv, k_t.data());
      std::vector<T> dcol(geo.patch() * geo.pixels());
      for (std::size_t b = 0; b < batch; ++b) {
        std::fill(dcol.begin(), dcol.end(), T{});
        detail::gemm_acc(geo.patch(), geo.pixels(), out_ch, k_t.data(), dy + b * out_stride, dcol.data());
        T* dst = dx + b * in_stride;
        if (direct) {
          for (std::size_t i = 0; i < dcol.size(); ++i) dst[i] += dcol[i];
        } else {
          detail::col2im_acc(geo, dcol.data(), dst);
        }
      }
    }
  });
}

template <typename T>
Var<T> bias_add(const Var<T>& x, const Var<T>& bias) {
  Graph<T>& g = same_graph(x, bias);
  const Shape& s = x.shape();
  if (s.rank() != 2 && s.rank() != 4) throw ShapeError("bias_add: expected rank 2 or 4, got " + s.str());
  const std::size_t channels = s[1];
  if (bias.value().size() != channels) {
    throw ShapeError("bias_add: bias of " + std::to_string(bias.value().size()) + " entries for " +
                     std::to_string(channels) + " channels");
  }
  const std::size_t batch = s[0];
  const std::size_t inner = s.numel() / (batch * channels);
  Tensor<T> out = x.value();
  const T* bv = bias.value().ptr();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      T* p = out.ptr() + (b * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) p[i] += bv[c];
    }
  const NodeId x_id = x.id(), b_id = bias.id();
  return g.record(OpKind::bias_add, {x_id, b_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    if (gr.requires_grad(x_id)) axpy<T>(dy.data(), gr.grad_accumulator(x_id).data());
    if (gr.requires_grad(b_id)) {
      T* db = gr.grad_accumulator(b_id).ptr();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c) {
          const T* p = dy.ptr() + (b * channels + c) * inner;
          T acc{};
          for (std::size_t i = 0; i < inner; ++i) acc += p[i];
          db[c] += acc;
        }
    }
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = v > T{} ? v : slope * v;
  const NodeId x_id = x.id();
  return x.graph().record(OpKind::leaky_relu, {x_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    const Tensor<T>& xv = gr.value(x_id);
    Tensor<T>& dx = gr.grad_accumulator(x_id);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += xv[i] > T{} ? dy[i] : slope * dy[i];
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Graph<T>& g = same_graph(a, b);
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  axpy<T>(b.value().data(), out.data());
  const NodeId a_id = a.id(), b_id = b.id();
  return g.record(OpKind::add, {a_id, b_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    if (gr.requires_grad(a_id)) axpy<T>(dy.data(), gr.grad_accumulator(a_id).data());
    if (gr.requires_grad(b_id)) axpy<T>(dy.data(), gr.grad_accumulator(b_id).data());
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Graph<T>& g = same_graph(a, b);
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  axpy<T>(b.value().data(), out.data(), T{-1});
  const NodeId a_id = a.id(), b_id = b.id();
  return g.record(OpKind::sub, {a_id, b_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    if (gr.requires_grad(a_id)) axpy<T>(dy.data(), gr.grad_accumulator(a_id).data());
    if (gr.requires_grad(b_id)) axpy<T>(dy.data(), gr.grad_accumulator(b_id).data(), T{-1});
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Graph<T>& g = same_graph(a, b);
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const NodeId a_id = a.id(), b_id = b.id();
  return g.record(OpKind::mul, {a_id, b_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    if (gr.requires_grad(a_id)) {
      const Tensor<T>& bv = gr.value(b_id);
      Tensor<T>& da = gr.grad_accumulator(a_id);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
    }
    if (gr.requires_grad(b_id)) {
      const Tensor<T>& av = gr.value(a_id);
      Tensor<T>& db = gr.grad_accumulator(b_id);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T c) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v *= c;
  const NodeId x_id = x.id();
  return x.graph().record(OpKind::scale, {x_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    axpy<T>(gr.grad(self).data(), gr.grad_accumulator(x_id).data(), c);
  });
}

template <typename T>
Var<T> scale_by(const Var<T>& x, const Var<T>& s) {
  Graph<T>& g = same_graph(x, s);
  if (s.value().size() != 1) throw ShapeError("scale_by: scale must have one element, got " + s.shape().str());
  const T c = s.value()[0];
  Tensor<T> out = x.value();
  for (T& v : out.data()) v *= c;
  const NodeId x_id = x.id(), s_id = s.id();
  return g.record(OpKind::scale_by, {x_id, s_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    if (gr.requires_grad(x_id)) axpy<T>(dy.data(), gr.grad_accumulator(x_id).data(), gr.value(s_id)[0]);
    if (gr.requires_grad(s_id)) {
      const Tensor<T>& xv = gr.value(x_id);
      T acc{};
      for (std::size_t i = 0; i < dy.size(); ++i) acc += dy[i] * xv[i];
      gr.grad_accumulator(s_id)[0] += acc;
    }
  });
}

template <typename T>
Var<T> shift_by(const Var<T>& x, const Var<T>& s) {
  Graph<T>& g = same_graph(x, s);
  if (s.value().size() != 1) throw ShapeError("shift_by: shift must have one element, got " + s.shape().str());
  Tensor<T> out = x.value();
  for (T& v : out.data()) v += s.value()[0];
  const NodeId x_id = x.id(), s_id = s.id();
  return g.record(OpKind::shift_by, {x_id, s_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    if (gr.requires_grad(x_id)) axpy<T>(dy.data(), gr.grad_accumulator(x_id).data());
    if (gr.requires_grad(s_id)) {
      T acc{};
      for (T v : dy.data()) acc += v;
      gr.grad_accumulator(s_id)[0] += acc;
    }
  });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Graph<T>& g = parts[0].graph();
  const Shape& s0 = parts[0].shape();
  if (s0.rank() != 4) throw ShapeError("concat_channels: expected rank 4, got " + s0.str());
  std::size_t channels = 0;
  std::vector<NodeId> ids;
  std::vector<std::size_t> widths;
  for (const Var<T>& p : parts) {
    same_graph(parts[0], p);
    const Shape& s = p.shape();
    if (s.rank() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw ShapeError("concat_channels: incompatible shapes " + s0.str() + " and " + s.str());
    }
    channels += s[1];
    ids.push_back(p.id());
    widths.push_back(s[1]);
  }
  const std::size_t batch = s0[0], plane = s0[2] * s0[3];
  Tensor<T> out(Shape{batch, channels, s0[2], s0[3]});
  for (std::size_t b = 0; b < batch; ++b) {
    T* dst = out.ptr() + b * channels * plane;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const std::size_t n = widths[k] * plane;
      const T* src = parts[k].value().ptr() + b * n;
      std::copy(src, src + n, dst);
      dst += n;
    }
  }
  return g.record(OpKind::concat_channels, ids, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const T* dy = gr.grad(self).ptr();
    for (std::size_t b = 0; b < batch; ++b) {
      const T* src = dy + b * channels * plane;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const std::size_t n = widths[k] * plane;
        if (gr.requires_grad(ids[k])) {
          T* dst = gr.grad_accumulator(ids[k]).ptr() + b * n;
          for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
        }
        src += n;
      }
    }
  });
}

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, std::size_t factor) {
  const Shape& s = x.shape();
  if (s.rank() != 4) throw ShapeError("upsample_nearest: expected rank 4, got " + s.str());
  if (factor == 0) throw ConfigError("upsample_nearest: factor must be positive");
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  const std::size_t oh = h * factor, ow = w * factor;
  Tensor<T> out(Shape{s[0], s[1], oh, ow});
  const T* src = x.value().ptr();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oh; ++y) {
      const T* srow = src + (p * h + y / factor) * w;
      T* drow = out.ptr() + (p * oh + y) * ow;
      for (std::size_t xo = 0; xo < ow; ++xo) drow[xo] = srow[xo / factor];
    }
  const NodeId x_id = x.id();
  return x.graph().record(OpKind::upsample_nearest, {x_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const T* dy = gr.grad(self).ptr();
    T* dx = gr.grad_accumulator(x_id).ptr();
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t y = 0; y < oh; ++y) {
        const T* drow = dy + (p * oh + y) * ow;
        T* srow = dx + (p * h + y / factor) * w;
        for (std::size_t xo = 0; xo < ow; ++xo) srow[xo / factor] += drow[xo];
      }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(shape);
  const NodeId x_id = x.id();
  return x.graph().record(OpKind::reshape, {x_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    axpy<T>(gr.grad(self).data(), gr.grad_accumulator(x_id).data());
  });
}

namespace {

struct MatmulDims {
  std::size_t batch, m, n, k;
};

// Contiguous op(X) for one batch item; `rows x cols` is the stored layout.
template <typename T>
const T* oriented(const T* stored, std::size_t rows, std::size_t cols, bool transposed, std::vector<T>& scratch) {
  if (!transposed) return stored;
  scratch.resize(rows * cols);
  detail::transpose(rows, cols, stored, scratch.data());
  return scratch.data();
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_a, bool transpose_b) {
  Graph<T>& g = same_graph(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.rank() != bs.rank() || (as.rank() != 2 && as.rank() != 3)) {
    throw ShapeError("matmul: expected two rank-2 or two rank-3 operands, got " + as.str() + " and " + bs.str());
  }
  const bool batched = as.rank() == 3;
  const std::size_t off = batched ? 1 : 0;
  if (batched && as[0] != bs[0]) throw ShapeError("matmul: batch mismatch " + as.str() + " vs " + bs.str());
  const std::size_t a_rows = as[off], a_cols = as[off + 1];
  const std::size_t b_rows = bs[off], b_cols = bs[off + 1];
  MatmulDims d{batched ? as[0] : 1, transpose_a ? a_cols : a_rows, transpose_b ? b_rows : b_cols,
               transpose_a ? a_rows : a_cols};
  const std::size_t kb = transpose_b ? b_cols : b_rows;
  if (d.k != kb) {
    throw ShapeError("matmul: inner extents disagree, " + as.str() + (transpose_a ? "^T" : "") + " x " + bs.str() +
                     (transpose_b ? "^T" : ""));
  }
  Tensor<T> out(batched ? Shape{d.batch, d.m, d.n} : Shape{d.m, d.n});
  std::vector<T> sa, sb;
  for (std::size_t t = 0; t < d.batch; ++t) {
    const T* pa = oriented(a.value().ptr() + t * a_rows * a_cols, a_rows, a_cols, transpose_a, sa);
    const T* pb = oriented(b.value().ptr() + t * b_rows * b_cols, b_rows, b_cols, transpose_b, sb);
    detail::gemm_acc(d.m, d.n, d.k, pa, pb, out.ptr() + t * d.m * d.n);
  }
  g.add_macs(static_cast<std::uint64_t>(d.batch) * d.m * d.n * d.k);

  const NodeId a_id = a.id(), b_id = b.id();
  return g.record(OpKind::matmul, {a_id, b_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const T* dy = gr.grad(self).ptr();
    const T* av = gr.value(a_id).ptr();
    const T* bv = gr.value(b_id).ptr();
    std::vector<T> s1, s2, tmp;
    for (std::size_t t = 0; t < d.batch; ++t) {
      const T* dyt = dy + t * d.m * d.n;
      if (gr.requires_grad(a_id)) {
        // d op(A) = dY * op(B)^T, op(B)^T is (n x k).
        const T* bt = bv + t * b_rows * b_cols;
        const T* opb_t = oriented(bt, b_rows, b_cols, !transpose_b, s1);
        T* da = gr.grad_accumulator(a_id).ptr() + t * a_rows * a_cols;
        if (!transpose_a) {
          detail::gemm_acc(d.m, d.k, d.n, dyt, opb_t, da);
        } else {
          tmp.assign(d.m * d.k, T{});
          detail::gemm_acc(d.m, d.k, d.n, dyt, opb_t, tmp.data());
          for (std::size_t i = 0; i < d.m; ++i)
            for (std::size_t j = 0; j < d.k; ++j) da[j * d.m + i] += tmp[i * d.k + j];
        }
      }
      if (gr.requires_grad(b_id)) {
        // d op(B) = op(A)^T * dY, op(A)^T is (k x m).
        const T* at = av + t * a_rows * a_cols;
        const T* opa_t = oriented(at, a_rows, a_cols, !transpose_a, s2);
        T* db = gr.grad_accumulator(b_id).ptr() + t * b_rows * b_cols;
        if (!transpose_b) {
          detail::gemm_acc(d.k, d.n, d.m, opa_t, dyt, db);
        } else {
          tmp.assign(d.k * d.n, T{});
          detail::gemm_acc(d.k, d.n, d.m, opa_t, dyt, tmp.data());
          for (std::size_t i = 0; i < d.k; ++i)
            for (std::size_t j = 0; j < d.n; ++j) db[j * d.k + i] += tmp[i * d.n + j];
        }
      }
    }
  });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& logits) {
  const Tensor<T>& x = logits.value();
  const std::size_t width = last_axis(x.shape());
  const std::size_t rows = x.size() / width;
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = x.ptr() + r * width;
    T* dst = out.ptr() + r * width;
    T mx = src[0];
    for (std::size_t i = 0; i < width; ++i) {
      if (!std::isfinite(src[i])) throw NumericalError("softmax_rows: non-finite logit in row " + std::to_string(r));
      mx = src[i] > mx ? src[i] : mx;
    }
    // Row totals accumulate in double so float rows of a few thousand
    // entries still sum to one within single-precision rounding.
    double total = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
      dst[i] = std::exp(src[i] - mx);
      total += static_cast<double>(dst[i]);
    }
    for (std::size_t i = 0; i < width; ++i) dst[i] = static_cast<T>(static_cast<double>(dst[i]) / total);
  }
  const NodeId x_id = logits.id();
  return logits.graph().record(OpKind::softmax_rows, {x_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const T* dy = gr.grad(self).ptr();
    const T* y = gr.value(self).ptr();
    T* dx = gr.grad_accumulator(x_id).ptr();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * width;
      T dot{};
      for (std::size_t i = 0; i < width; ++i) dot += dy[o + i] * y[o + i];
      for (std::size_t i = 0; i < width; ++i) dx[o + i] += y[o + i] * (dy[o + i] - dot);
    }
  });
}

template <typename T>
Var<T> fuse_attention(const Var<T>& seg, const Var<T>& fea) {
  Graph<T>& g = same_graph(seg, fea);
  require_same_shape(seg.shape(), fea.shape(), "fuse_attention");
  // out = fea + w d with d = seg - fea, w = |d| / (seg + fea); this equals
  // w*seg + (1-w)*fea and returns seg exactly when w rounds to 1.
  Tensor<T> out(seg.shape());
  const T* a = seg.value().ptr();
  const T* b = fea.value().ptr();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T s = a[i] + b[i];
    const T d = a[i] - b[i];
    out[i] = s == T{} ? b[i] : b[i] + (std::abs(d) / s) * d;
  }
  const NodeId a_id = seg.id(), b_id = fea.id();
  return g.record(OpKind::fuse_attention, {a_id, b_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const T* dy = gr.grad(self).ptr();
    const T* av = gr.value(a_id).ptr();
    const T* bv = gr.value(b_id).ptr();
    const std::size_t n = gr.value(self).size();
    T* da = gr.requires_grad(a_id) ? gr.grad_accumulator(a_id).ptr() : nullptr;
    T* db = gr.requires_grad(b_id) ? gr.grad_accumulator(b_id).ptr() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const T s = av[i] + bv[i];
      if (s == T{}) {
        if (db) db[i] += dy[i];
        continue;
      }
      const T d = av[i] - bv[i];
      const T ad = std::abs(d);
      const T q = ad * d / (s * s);
      if (da) da[i] += dy[i] * (T{2} * ad / s - q);
      if (db) db[i] += dy[i] * (T{1} - T{2} * ad / s - q);
    }
  });
}

template <typename T>
Var<T> normalize_rows(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  const std::size_t width = last_axis(xv.shape());
  const std::size_t rows = xv.size() / width;
  Tensor<T> out(xv.shape());
  std::vector<T> sums(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t i = 0; i < width; ++i) total += static_cast<double>(xv[r * width + i]);
    if (total == 0.0 || !std::isfinite(total)) {
      throw NumericalError("normalize_rows: row " + std::to_string(r) + " has degenerate sum");
    }
    sums[r] = static_cast<T>(total);
    for (std::size_t i = 0; i < width; ++i) out[r * width + i] = static_cast<T>(xv[r * width + i] / total);
  }
  const NodeId x_id = x.id();
  return x.graph().record(OpKind::normalize_rows, {x_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const T* dy = gr.grad(self).ptr();
    const T* y = gr.value(self).ptr();
    T* dx = gr.grad_accumulator(x_id).ptr();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * width;
      T dot{};
      for (std::size_t i = 0; i < width; ++i) dot += dy[o + i] * y[o + i];
      for (std::size_t i = 0; i < width; ++i) dx[o + i] += (dy[o + i] - dot) / sums[r];
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T total{};
  for (T v : x.value().data()) total += v;
  const NodeId x_id = x.id();
  return x.graph().record(OpKind::sum, {x_id}, Tensor<T>::scalar(total), [=](Graph<T>& gr, NodeId self) {
    const T dy = gr.grad(self)[0];
    for (T& v : gr.grad_accumulator(x_id).data()) v += dy;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  T total{};
  for (T v : x.value().data()) total += v;
  const std::size_t n = x.value().size();
  const NodeId x_id = x.id();
  return x.graph().record(OpKind::mean, {x_id}, Tensor<T>::scalar(total / static_cast<T>(n)),
                          [=](Graph<T>& gr, NodeId self) {
                            const T dy = gr.grad(self)[0] / static_cast<T>(n);
                            for (T& v : gr.grad_accumulator(x_id).data()) v += dy;
                          });
}

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  Graph<T>& g = same_graph(a, b);
  require_same_shape(a.shape(), b.shape(), "mean_abs_diff");
  const std::size_t n = a.value().size();
  T total{};
  for (std::size_t i = 0; i < n; ++i) total += std::abs(a.value()[i] - b.value()[i]);
  const NodeId a_id = a.id(), b_id = b.id();
  return g.record(OpKind::mean_abs_diff, {a_id, b_id}, Tensor<T>::scalar(total / static_cast<T>(n)),
                  [=](Graph<T>& gr, NodeId self) {
                    const T dy = gr.grad(self)[0] / static_cast<T>(n);
                    const Tensor<T>& av = gr.value(a_id);
                    const Tensor<T>& bv = gr.value(b_id);
                    T* da = gr.requires_grad(a_id) ? gr.grad_accumulator(a_id).ptr() : nullptr;
                    T* db = gr.requires_grad(b_id) ? gr.grad_accumulator(b_id).ptr() : nullptr;
                    for (std::size_t i = 0; i < n; ++i) {
                      const T d = av[i] - bv[i];
                      const T sgn = d > T{} ? T{1} : (d < T{} ? T{-1} : T{});
                      if (da) da[i] += dy * sgn;
                      if (db) db[i] -= dy * sgn;
                    }
                  });
}

template <typename T>
Var<T> softplus(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = std::max(v, T{}) + std::log1p(std::exp(-std::abs(v)));
  const NodeId x_id = x.id();
  return x.graph().record(OpKind::softplus, {x_id}, std::move(out), [=](Graph<T>& gr, NodeId self) {
    const Tensor<T>& dy = gr.grad(self);
    const Tensor<T>& xv = gr.value(x_id);
    Tensor<T>& dx = gr.grad_accumulator(x_id);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] / (T{1} + std::exp(-xv[i]));
  });
}

#define SEGSR_INSTANTIATE_OPS(T)                                                     \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, Conv2dOptions);               \
  template Var<T> bias_add(const Var<T>&, const Var<T>&);                            \
  template Var<T> leaky_relu(const Var<T>&, T);                                      \
  template Var<T> add(const Var<T>&, const Var<T>&);                                 \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                 \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                 \
  template Var<T> scale(const Var<T>&, T);                                           \
  template Var<T> scale_by(const Var<T>&, const Var<T>&);                            \
  template Var<T> shift_by(const Var<T>&, const Var<T>&);                            \
  template Var<T> concat_channels(std::span<const Var<T>>);                          \
  template Var<T> upsample_nearest(const Var<T>&, std::size_t);                      \
  template Var<T> reshape(const Var<T>&, Shape);                                     \
  template Var<T> matmul(const Var<T>&, const Var<T>&, bool, bool);                  \
  template Var<T> softmax_rows(const Var<T>&);                                       \
  template Var<T> fuse_attention(const Var<T>&, const Var<T>&);                      \
  template Var<T> normalize_rows(const Var<T>&);                                     \
  template Var<T> sum(const Var<T>&);                                                \
  template Var<T> mean(const Var<T>&);                                               \
  template Var<T> mean_abs_diff(const Var<T>&, const Var<T>&);                       \
  template Var<T> softplus(const Var<T>&);

SEGSR_INSTANTIATE_OPS(float)
SEGSR_INSTANTIATE_OPS(double)

#undef SEGSR_INSTANTIATE_OPS

}  // namespace segsr
