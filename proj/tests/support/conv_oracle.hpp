#pragma once

#include <algorithm>
#include <vector>

#include "agfuse/nn/srcnn.hpp"

namespace agfuse::testing {

/// Direct six-loop convolution stack with replicate padding.
inline nn::Tensor naive_forward(const nn::SrcnnModel& m, const nn::Tensor& input) {
    nn::Tensor cur = input;
    std::size_t off = 0;
    for (std::size_t l = 0; l < m.arch.layers.size(); ++l) {
        const int k = m.arch.layers[l].kernel;
        const int cout = m.arch.layers[l].filters;
        const int cin = cur.c;
        const int r = k / 2;
        const double* W = m.parameters.data() + off;
        const double* b = W + static_cast<std::size_t>(cout) * cin * k * k;
        nn::Tensor next(cout, cur.h, cur.w);
        for (int co = 0; co < cout; ++co) {
            for (int y = 0; y < cur.h; ++y) {
                for (int x = 0; x < cur.w; ++x) {
                    double s = b[co];
                    for (int ci = 0; ci < cin; ++ci)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int yy = std::clamp(y + ky - r, 0, cur.h - 1);
                                const int xx = std::clamp(x + kx - r, 0, cur.w - 1);
                                s += W[((co * cin + ci) * k + ky) * k + kx] * cur.at(ci, yy, xx);
                            }
                    if (l + 1 < m.arch.layers.size() && s < 0) s *= m.arch.slope;
                    next.at(co, y, x) = s;
                }
            }
        }
        off += static_cast<std::size_t>(cout) * cin * k * k + static_cast<std::size_t>(cout);
        cur = std::move(next);
    }
    return cur;
}

inline nn::ArchConfig tiny_arch(int cin, int hidden, int cout, int k1, int k2) {
    nn::ArchConfig a;
    a.in_channels = cin;
    a.out_channels = cout;
    a.layers = {{k1, hidden}, {k2, cout}};
    return a;
}

/// Central-difference check of backward() for L = sum(g * forward(x)).
/// Returns the largest relative error over parameters and input entries.
inline double gradient_check(nn::SrcnnModel m, const nn::Tensor& x, const nn::Tensor& g, double eps = 1e-6) {
    auto loss = [&](const nn::SrcnnModel& mm, const nn::Tensor& xx) {
        const auto y = naive_forward(mm, xx);
        double s = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i) s += g.data[i] * y.data[i];
        return s;
    };
    const auto grads = nn::backward(m, x, g, true);
    auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); };
    double worst = 0.0;
    for (std::size_t i = 0; i < m.parameters.size(); ++i) {
        const double saved = m.parameters[i];
        m.parameters[i] = saved + eps;
        const double up = loss(m, x);
        m.parameters[i] = saved - eps;
        const double down = loss(m, x);
        m.parameters[i] = saved;
        worst = std::max(worst, rel(grads.parameters[i], (up - down) / (2 * eps)));
    }
    nn::Tensor xx = x;
    for (std::size_t i = 0; i < xx.data.size(); ++i) {
        const double saved = xx.data[i];
        xx.data[i] = saved + eps;
        const double up = loss(m, xx);
        xx.data[i] = saved - eps;
        const double down = loss(m, xx);
        xx.data[i] = saved;
        worst = std::max(worst, rel(grads.input.data[i], (up - down) / (2 * eps)));
    }
    return worst;
}

}  // namespace agfuse::testing
