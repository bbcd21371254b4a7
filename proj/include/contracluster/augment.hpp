#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "contracluster/array.hpp"
#include "contracluster/rng.hpp"

namespace contracluster {

// Stochastic positive-pair generation. Each of the five transforms fires
// independently with apply_probability; order is crop -> rotate -> flip ->
// blur -> noise so additive noise is never smoothed away.
struct AugmentConfig {
    double apply_probability = 0.5;
    double max_rotation_deg = 30.0;
    std::pair<double, double> blur_sigma_range = {0.1, 2.0};
    double noise_std = 0.05;
    std::pair<double, double> crop_scale_range = {0.6, 1.0};
    std::uint64_t seed = 0;

    bool enable_crop = true;
    bool enable_rotate = true;
    bool enable_flip = true;
    bool enable_blur = true;
    bool enable_noise = true;
};

namespace detail {
inline float bilinear_at(const Array<float>& img, double y, double x) {
    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(img.dim(0));
    const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(img.dim(1));
    const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(std::floor(y));
    const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(std::floor(x));
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    auto pixel = [&](std::ptrdiff_t yy, std::ptrdiff_t xx) -> double {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
        return img.at2(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
    };
    const double v = (1.0 - fy) * ((1.0 - fx) * pixel(y0, x0) + fx * pixel(y0, x0 + 1)) +
                     fy * ((1.0 - fx) * pixel(y0 + 1, x0) + fx * pixel(y0 + 1, x0 + 1));
    return static_cast<float>(v);
}
} // namespace detail

// Rotation about the image center, bilinear interpolation, zero padding.
// Positive angles rotate a pixel at (r, c) toward (c, W-1-r) at 90 degrees.
inline Array<float> rotate_bilinear(const Array<float>& img, double degrees) {
    if (degrees == 0.0) return img;
    const std::size_t h = img.dim(0), w = img.dim(1);
    const double theta = degrees * 3.14159265358979323846 / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    Array<float> out({h, w});
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t col = 0; col < w; ++col) {
            const double dy = static_cast<double>(r) - cy;
            const double dx = static_cast<double>(col) - cx;
            const double sy = cy + dy * c - dx * s;
            const double sx = cx + dy * s + dx * c;
            out.at2(r, col) = detail::bilinear_at(img, sy, sx);
        }
    }
    return out;
}

inline Array<float> hflip(const Array<float>& img) {
    const std::size_t h = img.dim(0), w = img.dim(1);
    Array<float> out({h, w});
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) out.at2(r, c) = img.at2(r, w - 1 - c);
    return out;
}

// Separable Gaussian blur; border taps are renormalized so constant images
// stay constant and values remain in [0,1].
inline Array<float> gaussian_blur(const Array<float>& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i)
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));

    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(img.dim(0));
    const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(img.dim(1));
    Array<float> tmp({img.dim(0), img.dim(1)});
    Array<float> out({img.dim(0), img.dim(1)});
    for (std::ptrdiff_t r = 0; r < h; ++r)
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            double acc = 0.0, wsum = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const std::ptrdiff_t cc = c + i;
                if (cc < 0 || cc >= w) continue;
                acc += kernel[i + radius] * img.at2(r, cc);
                wsum += kernel[i + radius];
            }
            tmp.at2(r, c) = static_cast<float>(acc / wsum);
        }
    for (std::ptrdiff_t r = 0; r < h; ++r)
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            double acc = 0.0, wsum = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const std::ptrdiff_t rr = r + i;
                if (rr < 0 || rr >= h) continue;
                acc += kernel[i + radius] * tmp.at2(rr, c);
                wsum += kernel[i + radius];
            }
            out.at2(r, c) = static_cast<float>(acc / wsum);
        }
    return out;
}

// Bilinear resize (half-pixel centers, clamped sampling).
inline Array<float> resize_bilinear(const Array<float>& img, std::size_t out_h,
                                    std::size_t out_w) {
    const std::size_t h = img.dim(0), w = img.dim(1);
    if (out_h == h && out_w == w) return img;
    Array<float> out({out_h, out_w});
    const double sy = static_cast<double>(h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (std::size_t r = 0; r < out_h; ++r)
        for (std::size_t c = 0; c < out_w; ++c) {
            double y = (static_cast<double>(r) + 0.5) * sy - 0.5;
            double x = (static_cast<double>(c) + 0.5) * sx - 0.5;
            y = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
            x = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
            out.at2(r, c) = detail::bilinear_at(img, y, x);
        }
    return out;
}

inline Array<float> crop_region(const Array<float>& img, std::size_t top, std::size_t left,
                                std::size_t ch, std::size_t cw) {
    Array<float> out({ch, cw});
    for (std::size_t r = 0; r < ch; ++r)
        for (std::size_t c = 0; c < cw; ++c) out.at2(r, c) = img.at2(top + r, left + c);
    return out;
}

// One stochastic view of a single H x W image in [0,1].
inline Array<float> augment_once(const Array<float>& img, const AugmentConfig& cfg, Rng& rng) {
    const std::size_t h = img.dim(0), w = img.dim(1);
    Array<float> out = img;

    if (cfg.enable_crop && rng.uniform() < cfg.apply_probability) {
        const double scale = rng.uniform(cfg.crop_scale_range.first, cfg.crop_scale_range.second);
        const std::size_t ch =
            std::max<std::size_t>(1, static_cast<std::size_t>(h * scale + 0.5));
        const std::size_t cw =
            std::max<std::size_t>(1, static_cast<std::size_t>(w * scale + 0.5));
        const std::size_t top = rng.index(h - ch + 1);
        const std::size_t left = rng.index(w - cw + 1);
        if (ch != h || cw != w)
            out = resize_bilinear(crop_region(out, top, left, ch, cw), h, w);
    }
    if (cfg.enable_rotate && rng.uniform() < cfg.apply_probability) {
        const double angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
        out = rotate_bilinear(out, angle);
    }
    if (cfg.enable_flip && rng.uniform() < cfg.apply_probability) {
        out = hflip(out);
    }
    if (cfg.enable_blur && rng.uniform() < cfg.apply_probability) {
        const double sigma = rng.uniform(cfg.blur_sigma_range.first, cfg.blur_sigma_range.second);
        out = gaussian_blur(out, sigma);
    }
    if (cfg.enable_noise && rng.uniform() < cfg.apply_probability) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double v = out[i] + rng.normal(0.0, cfg.noise_std);
            out[i] = static_cast<float>(std::min(1.0, std::max(0.0, v)));
        }
    }
    // interpolation can overshoot marginally; clamp the final view
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::min(1.0f, std::max(0.0f, out[i]));
    return out;
}

// Two independently augmented views of a batch (B,1,H,W). Every sample in
// every view gets its own pre-split stream, so the result is deterministic
// under any parallel schedule.
inline std::pair<Array<float>, Array<float>> augment_pair(const Array<float>& batch,
                                                          const AugmentConfig& cfg,
                                                          const Rng& base) {
    if (batch.ndim() != 4 || batch.dim(0) == 0)
        throw argument_error("augment_pair: want a nonempty (B,1,H,W) batch");
    const std::size_t b = batch.dim(0), h = batch.dim(2), w = batch.dim(3);
    Array<float> v1(batch.shape());
    Array<float> v2(batch.shape());
    const Rng view1 = base.split(1);
    const Rng view2 = base.split(2);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(b); ++i) {
        Array<float> img({h, w});
        std::copy(batch.data() + i * h * w, batch.data() + (i + 1) * h * w, img.data());
        Rng r1 = view1.split(static_cast<std::uint64_t>(i));
        Rng r2 = view2.split(static_cast<std::uint64_t>(i));
        Array<float> a1 = augment_once(img, cfg, r1);
        Array<float> a2 = augment_once(img, cfg, r2);
        std::copy(a1.data(), a1.data() + h * w, v1.data() + i * h * w);
        std::copy(a2.data(), a2.data() + h * w, v2.data() + i * h * w);
    }
    return {std::move(v1), std::move(v2)};
}

} // namespace contracluster
