#pragma once

// Scalar-loop reference implementations used by the unit and acceptance tests.
// Everything here works on CPU float64 tensors through accessors; no library kernels.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <torch/torch.h>

namespace oracle {

inline torch::Tensor f64(const torch::Tensor& t) { return t.detach().to(torch::kCPU, torch::kFloat64).contiguous(); }

/// Bilinear read of channel c of a C x H x W image at (x, y); out-of-bounds corners read fill.
inline double bilinear(const torch::TensorAccessor<double, 3>& img, int64_t c, double x, double y, double fill) {
    const int64_t h = img.size(1);
    const int64_t w = img.size(2);
    const double x0 = std::floor(x);
    const double y0 = std::floor(y);
    const double ax = x - x0;
    const double ay = y - y0;
    auto at = [&](double yy, double xx) {
        if (xx < 0 || yy < 0 || xx > static_cast<double>(w - 1) || yy > static_cast<double>(h - 1)) return fill;
        return img[c][static_cast<int64_t>(yy)][static_cast<int64_t>(xx)];
    };
    return (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
           ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
}

/// out(i, j) = img(i + fy, j + fx) for a C x H x W image and 2 x H x W flow.
inline torch::Tensor flow_warp(const torch::Tensor& image, const torch::Tensor& flow, double fill) {
    const auto img = f64(image);
    const auto f = f64(flow);
    auto out = torch::zeros_like(img);
    auto ia = img.accessor<double, 3>();
    auto fa = f.accessor<double, 3>();
    auto oa = out.accessor<double, 3>();
    for (int64_t c = 0; c < img.size(0); ++c)
        for (int64_t i = 0; i < img.size(1); ++i)
            for (int64_t j = 0; j < img.size(2); ++j)
                oa[c][i][j] = bilinear(ia, c, j + fa[0][i][j], i + fa[1][i][j], fill);
    return out;
}

/// Affine gather with [a1, a2, b1, b2] on pixel-centre normalized coordinates.
inline torch::Tensor affine_apply(const torch::Tensor& image, double a1, double a2, double b1, double b2,
                                  double fill) {
    const auto img = f64(image);
    const int64_t h = img.size(1);
    const int64_t w = img.size(2);
    auto out = torch::zeros_like(img);
    auto ia = img.accessor<double, 3>();
    auto oa = out.accessor<double, 3>();
    for (int64_t c = 0; c < img.size(0); ++c)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                const double xn = (2.0 * j + 1.0) / w - 1.0;
                const double yn = (2.0 * i + 1.0) / h - 1.0;
                const double xs = ((a1 * xn + b1 + 1.0) * w - 1.0) / 2.0;
                const double ys = ((a2 * yn + b2 + 1.0) * h - 1.0) / 2.0;
                oa[c][i][j] = bilinear(ia, c, xs, ys, fill);
            }
    return out;
}

/// 'same' 2-D convolution (zero padding, odd kernel) of a Cin x H x W input with Cout x Cin x k x k weights.
inline torch::Tensor conv_same(const torch::Tensor& input, const torch::Tensor& weight,
                               const torch::Tensor& bias = {}) {
    const auto x = f64(input);
    const auto wt = f64(weight);
    const int64_t cin = x.size(0), h = x.size(1), w = x.size(2);
    const int64_t cout = wt.size(0), k = wt.size(2), r = k / 2;
    auto out = torch::zeros({cout, h, w}, torch::kFloat64);
    auto xa = x.accessor<double, 3>();
    auto wa = wt.accessor<double, 4>();
    auto oa = out.accessor<double, 3>();
    std::vector<double> b(static_cast<size_t>(cout), 0.0);
    if (bias.defined()) {
        const auto bb = f64(bias);
        for (int64_t o = 0; o < cout; ++o) b[static_cast<size_t>(o)] = bb[o].item<double>();
    }
    for (int64_t o = 0; o < cout; ++o)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                double acc = b[static_cast<size_t>(o)];
                for (int64_t c = 0; c < cin; ++c)
                    for (int64_t u = 0; u < k; ++u)
                        for (int64_t v = 0; v < k; ++v) {
                            const int64_t y = i + u - r, xx = j + v - r;
                            if (y < 0 || y >= h || xx < 0 || xx >= w) continue;
                            acc += wa[o][c][u][v] * xa[c][y][xx];
                        }
                oa[o][i][j] = acc;
            }
    return out;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct GruWeights {
    torch::Tensor w_fr, b_fr, w_hr, w_fz, b_fz, w_hz, w_fh, b_fh, w_hh;
};

/// r = s(W_fr f + W_hr h), z = s(W_fz f + W_hz h), h~ = tanh(W_fh f + W_hh (r h)), h' = (1-z) h + z h~
inline torch::Tensor gru_step(const GruWeights& g, const torch::Tensor& f, const torch::Tensor& h) {
    const auto hp = f64(h);
    const auto ar = conv_same(f, g.w_fr, g.b_fr) + conv_same(hp, g.w_hr);
    const auto az = conv_same(f, g.w_fz, g.b_fz) + conv_same(hp, g.w_hz);
    auto r = torch::zeros_like(ar);
    auto z = torch::zeros_like(az);
    auto ra = r.accessor<double, 3>();
    auto za = z.accessor<double, 3>();
    auto ara = ar.accessor<double, 3>();
    auto aza = az.accessor<double, 3>();
    for (int64_t c = 0; c < r.size(0); ++c)
        for (int64_t i = 0; i < r.size(1); ++i)
            for (int64_t j = 0; j < r.size(2); ++j) {
                ra[c][i][j] = sigmoid(ara[c][i][j]);
                za[c][i][j] = sigmoid(aza[c][i][j]);
            }
    auto rh = torch::zeros_like(hp);
    auto rha = rh.accessor<double, 3>();
    auto ha = hp.accessor<double, 3>();
    for (int64_t c = 0; c < rh.size(0); ++c)
        for (int64_t i = 0; i < rh.size(1); ++i)
            for (int64_t j = 0; j < rh.size(2); ++j) rha[c][i][j] = ra[c][i][j] * ha[c][i][j];
    const auto ah = conv_same(f, g.w_fh, g.b_fh) + conv_same(rh, g.w_hh);
    auto aha = ah.accessor<double, 3>();
    auto out = torch::zeros_like(hp);
    auto oa = out.accessor<double, 3>();
    for (int64_t c = 0; c < out.size(0); ++c)
        for (int64_t i = 0; i < out.size(1); ++i)
            for (int64_t j = 0; j < out.size(2); ++j)
                oa[c][i][j] = (1 - za[c][i][j]) * ha[c][i][j] + za[c][i][j] * std::tanh(aha[c][i][j]);
    return out;
}

/// Column-wise linear decay from 1 at the top mask row to `floor` at the bottom one (H x W).
inline torch::Tensor gravity_mask(const torch::Tensor& mask, double floor) {
    const auto m = f64(mask);
    const int64_t h = m.size(0), w = m.size(1);
    auto out = torch::zeros({h, w}, torch::kFloat64);
    auto ma = m.accessor<double, 2>();
    auto oa = out.accessor<double, 2>();
    for (int64_t j = 0; j < w; ++j) {
        int64_t top = -1, bottom = -1;
        for (int64_t i = 0; i < h; ++i)
            if (ma[i][j] > 0.5) {
                if (top < 0) top = i;
                bottom = i;
            }
        if (top < 0) continue;
        for (int64_t i = top; i <= bottom; ++i)
            oa[i][j] = bottom == top ? 1.0 : 1.0 - (1.0 - floor) * static_cast<double>(i - top) / (bottom - top);
    }
    return out;
}

inline double mean_abs_weighted(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& weight) {
    const auto x = f64(a).flatten(), y = f64(b).flatten(), g = f64(weight).flatten();
    auto xa = x.accessor<double, 1>();
    auto ya = y.accessor<double, 1>();
    auto ga = g.accessor<double, 1>();
    double s = 0.0;
    for (int64_t k = 0; k < x.size(0); ++k) s += std::abs((xa[k] - ya[k]) * ga[k]);
    return s / static_cast<double>(x.size(0));
}

/// Mean over N x H x W sites of sqrt(dx^2 + dy^2 + eps), forward differences, zero at the far border.
inline double tv(const torch::Tensor& flow, double eps) {
    const auto f = f64(flow);
    auto fa = f.accessor<double, 4>();
    const int64_t n = f.size(0), h = f.size(2), w = f.size(3);
    double s = 0.0;
    for (int64_t b = 0; b < n; ++b)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                double q = eps;
                for (int64_t c = 0; c < 2; ++c) {
                    const double dx = j + 1 < w ? fa[b][c][i][j + 1] - fa[b][c][i][j] : 0.0;
                    const double dy = i + 1 < h ? fa[b][c][i + 1][j] - fa[b][c][i][j] : 0.0;
                    q += dx * dx + dy * dy;
                }
                s += std::sqrt(q);
            }
    return s / static_cast<double>(n * h * w);
}

/// -(1/n) sum w_j t_ij log max(p_ij, floor) over N x 7 x H x W maps.
inline double weighted_ce(const torch::Tensor& p, const torch::Tensor& t, const std::vector<double>& w, double floor) {
    const auto pp = f64(p), tt = f64(t);
    auto pa = pp.accessor<double, 4>();
    auto ta = tt.accessor<double, 4>();
    double s = 0.0;
    for (int64_t b = 0; b < pp.size(0); ++b)
        for (int64_t c = 0; c < pp.size(1); ++c)
            for (int64_t i = 0; i < pp.size(2); ++i)
                for (int64_t j = 0; j < pp.size(3); ++j)
                    s += w[static_cast<size_t>(c)] * ta[b][c][i][j] * std::log(std::max(pa[b][c][i][j], floor));
    return -s / static_cast<double>(pp.size(0) * pp.size(2) * pp.size(3));
}

/// 3x3 Sobel with replicate padding; returns 2C x H x W ordered (dx c0, dy c0, dx c1, ...).
inline torch::Tensor sobel(const torch::Tensor& image) {
    const auto x = f64(image);
    const int64_t c = x.size(0), h = x.size(1), w = x.size(2);
    auto out = torch::zeros({2 * c, h, w}, torch::kFloat64);
    auto xa = x.accessor<double, 3>();
    auto oa = out.accessor<double, 3>();
    const double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                double gx = 0.0, gy = 0.0;
                for (int u = -1; u <= 1; ++u)
                    for (int v = -1; v <= 1; ++v) {
                        const int64_t y = std::clamp<int64_t>(i + u, 0, h - 1);
                        const int64_t xx = std::clamp<int64_t>(j + v, 0, w - 1);
                        gx += kx[u + 1][v + 1] * xa[ch][y][xx];
                        gy += kx[v + 1][u + 1] * xa[ch][y][xx];
                    }
                oa[2 * ch][i][j] = gx;
                oa[2 * ch + 1][i][j] = gy;
            }
    return out;
}

inline double mean_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
    return mean_abs_weighted(a, b, torch::ones_like(f64(a)));
}

/// Brute-force SSIM: channel-mean gray, 11x11 Gaussian (sigma 1.5), valid windows only.
inline double ssim(const torch::Tensor& x, const torch::Tensor& y) {
    auto gx = f64(x), gy = f64(y);
    if (gx.dim() == 3) {
        gx = gx.mean(0);
        gy = gy.mean(0);
    }
    auto xa = gx.accessor<double, 2>();
    auto ya = gy.accessor<double, 2>();
    const int k = 11;
    double g[11];
    double gs = 0.0;
    for (int i = 0; i < k; ++i) gs += g[i] = std::exp(-((i - 5.0) * (i - 5.0)) / (2 * 1.5 * 1.5));
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    int64_t count = 0;
    for (int64_t i = 0; i + k <= gx.size(0); ++i)
        for (int64_t j = 0; j + k <= gx.size(1); ++j) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int u = 0; u < k; ++u)
                for (int v = 0; v < k; ++v) {
                    const double wt = g[u] * g[v] / (gs * gs);
                    const double a = xa[i + u][j + v], b = ya[i + u][j + v];
                    mx += wt * a;
                    my += wt * b;
                    sxx += wt * a * a;
                    syy += wt * b * b;
                    sxy += wt * a * b;
                }
            sxx -= mx * mx;
            syy -= my * my;
            sxy -= mx * my;
            total += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

/// Largest relative error between central differences and autograd at `samples` random coordinates.
/// The relative error uses max(|fd|, |ad|, floor) as denominator.
inline double gradient_check(const std::function<torch::Tensor(const torch::Tensor&)>& fn, const torch::Tensor& input,
                             int samples, uint64_t seed, double step = 1e-6, double floor = 1e-6) {
    auto x = input.detach().to(torch::kFloat64).clone().requires_grad_(true);
    auto loss = fn(x);
    loss.backward();
    const auto grad = x.grad().detach().flatten().clone();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int64_t> pick(0, x.numel() - 1);
    double worst = 0.0;
    torch::NoGradGuard no_grad;
    for (int s = 0; s < samples; ++s) {
        const int64_t k = pick(rng);
        auto xp = x.detach().clone();
        auto flat = xp.view({-1});
        const double v = flat[k].item<double>();
        flat[k] = v + step;
        const double up = fn(xp).item<double>();
        flat[k] = v - step;
        const double down = fn(xp).item<double>();
        const double fd = (up - down) / (2 * step);
        const double ad = grad[k].item<double>();
        worst = std::max(worst, std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), floor}));
    }
    return worst;
}

}  // namespace oracle
