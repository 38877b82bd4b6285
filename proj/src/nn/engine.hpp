#pragma once

// Convolution kernels shared by the forward, backward and training paths.
// Activations are C x P row-major matrices (P = H*W); convolutions go
// through im2col and a GEMM, processed in row chunks to bound memory.

#include <algorithm>
#include <cstring>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "agfuse/nn/srcnn.hpp"

namespace agfuse::nn::detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct LayerShape {
    int cin = 0;
    int cout = 0;
    int k = 0;
    std::size_t w_off = 0;
    std::size_t b_off = 0;
};

inline std::vector<LayerShape> layer_shapes(const ArchConfig& arch) {
    std::vector<LayerShape> out;
    int cin = arch.in_channels;
    std::size_t off = 0;
    for (const auto& l : arch.layers) {
        LayerShape s{cin, l.filters, l.kernel, off, 0};
        off += static_cast<std::size_t>(l.kernel) * l.kernel * cin * l.filters;
        s.b_off = off;
        off += static_cast<std::size_t>(l.filters);
        out.push_back(s);
        cin = l.filters;
    }
    return out;
}

/// Rows per chunk so one im2col buffer stays near 4M elements.
inline int chunk_rows(int w, int h, std::size_t col_rows) {
    const std::size_t budget = std::size_t{1} << 22;
    const std::size_t per_row = std::max<std::size_t>(1, col_rows * static_cast<std::size_t>(w));
    return static_cast<int>(std::clamp<std::size_t>(budget / per_row, 1, static_cast<std::size_t>(h)));
}

/// cols[(ci*k + ky)*k + kx][(y - y0)*w + x] = in[ci][clamp(y+ky-r)][clamp(x+kx-r)]
template <class T>
void im2col(const T* in, int cin, int h, int w, int k, int y0, int y1, T* cols) {
    const int r = k / 2;
    const std::size_t p = static_cast<std::size_t>(y1 - y0) * w;
    for (int ci = 0; ci < cin; ++ci) {
        const T* plane = in + static_cast<std::size_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* dst = cols + (static_cast<std::size_t>(ci * k + ky) * k + kx) * p;
                const int dx = kx - r;
                const int x_lo = std::clamp(-dx, 0, w);      // first x with x+dx >= 0
                const int x_hi = std::clamp(w - dx, 0, w);   // first x with x+dx >= w
                for (int y = y0; y < y1; ++y) {
                    const T* src = plane + static_cast<std::size_t>(std::clamp(y + ky - r, 0, h - 1)) * w;
                    T* d = dst + static_cast<std::size_t>(y - y0) * w;
                    for (int x = 0; x < x_lo; ++x) d[x] = src[0];
                    if (x_hi > x_lo) std::memcpy(d + x_lo, src + x_lo + dx, sizeof(T) * static_cast<std::size_t>(x_hi - x_lo));
                    for (int x = std::max(x_hi, x_lo); x < w; ++x) d[x] = src[w - 1];
                }
            }
        }
    }
}

/// Adjoint of im2col: scatter-add cols back into grad_in.
template <class T>
void col2im_add(const T* cols, int cin, int h, int w, int k, int y0, int y1, T* grad_in) {
    const int r = k / 2;
    const std::size_t p = static_cast<std::size_t>(y1 - y0) * w;
    for (int ci = 0; ci < cin; ++ci) {
        T* plane = grad_in + static_cast<std::size_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* src = cols + (static_cast<std::size_t>(ci * k + ky) * k + kx) * p;
                const int dx = kx - r;
                const int x_lo = std::clamp(-dx, 0, w);
                const int x_hi = std::clamp(w - dx, 0, w);
                for (int y = y0; y < y1; ++y) {
                    T* d = plane + static_cast<std::size_t>(std::clamp(y + ky - r, 0, h - 1)) * w;
                    const T* s = src + static_cast<std::size_t>(y - y0) * w;
                    for (int x = 0; x < x_lo; ++x) d[0] += s[x];
                    for (int x = x_lo; x < x_hi; ++x) d[x + dx] += s[x];
                    for (int x = std::max(x_hi, x_lo); x < w; ++x) d[w - 1] += s[x];
                }
            }
        }
    }
}

/// out = W * im2col(in) + b, followed by LeakyReLU when `activate`.
template <class T>
void conv_forward(const LayerShape& s, const T* params, const T* in, int h, int w, bool activate, T slope, T* out,
                  std::vector<T>& scratch) {
    const std::size_t rows = static_cast<std::size_t>(s.cin) * s.k * s.k;
    const int step = chunk_rows(w, h, rows);
    CMapMat<T> W(params + s.w_off, s.cout, static_cast<Eigen::Index>(rows));
    const T* b = params + s.b_off;
    const std::size_t P = static_cast<std::size_t>(h) * w;
    for (int y0 = 0; y0 < h; y0 += step) {
        const int y1 = std::min(h, y0 + step);
        const std::size_t p = static_cast<std::size_t>(y1 - y0) * w;
        scratch.resize(rows * p);
        im2col(in, s.cin, h, w, s.k, y0, y1, scratch.data());
        CMapMat<T> cols(scratch.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
        Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>> o(out + static_cast<std::size_t>(y0) * w, s.cout,
                                                          static_cast<Eigen::Index>(p), Eigen::OuterStride<>(P));
        o.noalias() = W * cols;
        for (int co = 0; co < s.cout; ++co) {
            T* row = out + static_cast<std::size_t>(co) * P + static_cast<std::size_t>(y0) * w;
            for (std::size_t i = 0; i < p; ++i) {
                T v = row[i] + b[co];
                if (activate && v < T(0)) v *= slope;
                row[i] = v;
            }
        }
    }
}

/// Forward pass keeping every layer output (acts[l] is the output of layer l).
template <class T>
void forward_all(const std::vector<LayerShape>& shapes, const T* params, T slope, const T* input, int h, int w,
                 std::vector<std::vector<T>>& acts) {
    std::vector<T> scratch;
    const std::size_t P = static_cast<std::size_t>(h) * w;
    acts.resize(shapes.size());
    const T* in = input;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        acts[l].resize(static_cast<std::size_t>(shapes[l].cout) * P);
        conv_forward(shapes[l], params, in, h, w, l + 1 < shapes.size(), slope, acts[l].data(), scratch);
        in = acts[l].data();
    }
}

/// Accumulates parameter gradients into grad_params; writes the input
/// gradient into grad_input when non-null. `grad_out` is consumed.
template <class T>
void backward_all(const std::vector<LayerShape>& shapes, const T* params, T slope, const T* input, int h, int w,
                  const std::vector<std::vector<T>>& acts, std::vector<T> grad_out, T* grad_params, T* grad_input) {
    const std::size_t P = static_cast<std::size_t>(h) * w;
    std::vector<T> scratch, dcols, dprev;
    std::vector<T>& dz = grad_out;
    for (std::size_t li = shapes.size(); li-- > 0;) {
        const LayerShape& s = shapes[li];
        const T* in = li == 0 ? input : acts[li - 1].data();
        const std::size_t rows = static_cast<std::size_t>(s.cin) * s.k * s.k;
        const bool need_input = li > 0 || grad_input != nullptr;
        T* dst_input = nullptr;
        if (need_input) {
            if (li > 0) {
                dprev.assign(static_cast<std::size_t>(s.cin) * P, T(0));
                dst_input = dprev.data();
            } else {
                std::fill(grad_input, grad_input + static_cast<std::size_t>(s.cin) * P, T(0));
                dst_input = grad_input;
            }
        }
        MapMat<T> dW(grad_params + s.w_off, s.cout, static_cast<Eigen::Index>(rows));
        CMapMat<T> W(params + s.w_off, s.cout, static_cast<Eigen::Index>(rows));
        T* db = grad_params + s.b_off;
        for (int co = 0; co < s.cout; ++co) {
            const T* row = dz.data() + static_cast<std::size_t>(co) * P;
            T acc = T(0);
            for (std::size_t i = 0; i < P; ++i) acc += row[i];
            db[co] += acc;
        }
        const int step = chunk_rows(w, h, rows);
        for (int y0 = 0; y0 < h; y0 += step) {
            const int y1 = std::min(h, y0 + step);
            const std::size_t p = static_cast<std::size_t>(y1 - y0) * w;
            scratch.resize(rows * p);
            im2col(in, s.cin, h, w, s.k, y0, y1, scratch.data());
            CMapMat<T> cols(scratch.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
            Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>> g(dz.data() + static_cast<std::size_t>(y0) * w, s.cout,
                                                                    static_cast<Eigen::Index>(p), Eigen::OuterStride<>(P));
            dW.noalias() += g * cols.transpose();
            if (dst_input) {
                dcols.resize(rows * p);
                MapMat<T> dc(dcols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
                dc.noalias() = W.transpose() * g;
                col2im_add(dcols.data(), s.cin, h, w, s.k, y0, y1, dst_input);
            }
        }
        if (li > 0) {
            // Through the LeakyReLU of the previous layer: its output is
            // positive exactly where its pre-activation is.
            const std::vector<T>& a = acts[li - 1];
            for (std::size_t i = 0; i < dprev.size(); ++i) {
                if (!(a[i] > T(0))) dprev[i] *= slope;
            }
            dz.swap(dprev);
        }
    }
}

}  // namespace agfuse::nn::detail
