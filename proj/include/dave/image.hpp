#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dave/common.hpp"
#include "dave/tensor.hpp"

namespace dave {

/// 8-bit interleaved RGB image (HWC).
struct Image8 {
    int w = 0, h = 0;
    std::vector<std::uint8_t> pix;  // h*w*3

    Image8() = default;
    Image8(int w_, int h_) : w(w_), h(h_), pix(static_cast<std::size_t>(w_) * h_ * 3, 0) {}

    std::uint8_t* px(int x, int y) { return pix.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
    const std::uint8_t* px(int x, int y) const {
        return pix.data() + (static_cast<std::size_t>(y) * w + x) * 3;
    }
};

/// Float RGB image in [0,1], interleaved (HWC); the working format for
/// geometry and intensity transforms.
struct ImageF {
    int w = 0, h = 0;
    std::vector<float> pix;  // h*w*3

    ImageF() = default;
    ImageF(int w_, int h_, float fill = 0.f)
        : w(w_), h(h_), pix(static_cast<std::size_t>(w_) * h_ * 3, fill) {}

    float* px(int x, int y) { return pix.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
    const float* px(int x, int y) const {
        return pix.data() + (static_cast<std::size_t>(y) * w + x) * 3;
    }
};

struct RectF {
    float x = 0, y = 0, w = 0, h = 0;
};

inline ImageF to_imagef(const Image8& src) {
    ImageF out(src.w, src.h);
    for (std::size_t i = 0; i < src.pix.size(); ++i) out.pix[i] = src.pix[i] / 255.f;
    return out;
}

inline Image8 to_image8(const ImageF& src) {
    Image8 out(src.w, src.h);
    for (std::size_t i = 0; i < src.pix.size(); ++i) {
        const float v = std::clamp(src.pix[i], 0.f, 1.f);
        out.pix[i] = static_cast<std::uint8_t>(std::lround(v * 255.f));
    }
    return out;
}

namespace detail {

// bilinear fetch with edge clamping, channel-interleaved source
inline void sample_bilinear(const ImageF& img, float x, float y, float* rgb) {
    x = std::clamp(x, 0.f, static_cast<float>(img.w - 1));
    y = std::clamp(y, 0.f, static_cast<float>(img.h - 1));
    const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, img.w - 1), y1 = std::min(y0 + 1, img.h - 1);
    const float fx = x - x0, fy = y - y0;
    const float* p00 = img.px(x0, y0);
    const float* p10 = img.px(x1, y0);
    const float* p01 = img.px(x0, y1);
    const float* p11 = img.px(x1, y1);
    for (int c = 0; c < 3; ++c) {
        const float top = p00[c] + (p10[c] - p00[c]) * fx;
        const float bot = p01[c] + (p11[c] - p01[c]) * fx;
        rgb[c] = top + (bot - top) * fy;
    }
}

}  // namespace detail

/// Bilinear resize with half-pixel-center sampling.
inline ImageF resize_bilinear(const ImageF& src, int out_w, int out_h) {
    check_arg(out_w >= 1 && out_h >= 1, "resize_bilinear: output extents must be >= 1");
    ImageF out(out_w, out_h);
    const float sx = static_cast<float>(src.w) / out_w;
    const float sy = static_cast<float>(src.h) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const float srcy = (y + 0.5f) * sy - 0.5f;
        for (int x = 0; x < out_w; ++x) {
            const float srcx = (x + 0.5f) * sx - 0.5f;
            detail::sample_bilinear(src, srcx, srcy, out.px(x, y));
        }
    }
    return out;
}

/// Separable Gaussian blur with edge clamping; sigma <= 0 is a copy.
inline ImageF gaussian_blur(const ImageF& src, float sigma) {
    if (sigma <= 0.f) return src;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.f * sigma)));
    std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
    float sum = 0.f;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5f * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& v : k) v /= sum;

    ImageF tmp(src.w, src.h), out(src.w, src.h);
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x) {
            float acc[3] = {0, 0, 0};
            for (int i = -radius; i <= radius; ++i) {
                const int xi = std::clamp(x + i, 0, src.w - 1);
                const float* p = src.px(xi, y);
                for (int c = 0; c < 3; ++c) acc[c] += k[i + radius] * p[c];
            }
            float* q = tmp.px(x, y);
            for (int c = 0; c < 3; ++c) q[c] = acc[c];
        }
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x) {
            float acc[3] = {0, 0, 0};
            for (int i = -radius; i <= radius; ++i) {
                const int yi = std::clamp(y + i, 0, src.h - 1);
                const float* p = tmp.px(x, yi);
                for (int c = 0; c < 3; ++c) acc[c] += k[i + radius] * p[c];
            }
            float* q = out.px(x, y);
            for (int c = 0; c < 3; ++c) q[c] = acc[c];
        }
    return out;
}

/// Crops an arbitrary float-coordinate rect (bilinear, edge-clamped) and
/// resizes it to out_w x out_h in one sampling pass.
inline ImageF crop_resize(const ImageF& src, const RectF& rect, int out_w, int out_h) {
    check_arg(rect.w > 0 && rect.h > 0, "crop_resize: rect extents must be positive");
    ImageF out(out_w, out_h);
    const float sx = rect.w / out_w;
    const float sy = rect.h / out_h;
    for (int y = 0; y < out_h; ++y) {
        const float srcy = rect.y + (y + 0.5f) * sy - 0.5f;
        for (int x = 0; x < out_w; ++x) {
            const float srcx = rect.x + (x + 0.5f) * sx - 0.5f;
            detail::sample_bilinear(src, srcx, srcy, out.px(x, y));
        }
    }
    return out;
}

/// Multiplies intensity by `factor`, clamped back into [0,1].
inline ImageF scale_intensity(const ImageF& src, float factor) {
    ImageF out(src.w, src.h);
    for (std::size_t i = 0; i < src.pix.size(); ++i)
        out.pix[i] = std::clamp(src.pix[i] * factor, 0.f, 1.f);
    return out;
}

/// Packs images (all equal size) into a [B,3,H,W] tensor, CHW per sample.
template <typename T>
TensorPtr<T> images_to_tensor(const std::vector<ImageF>& imgs) {
    check_arg(!imgs.empty(), "images_to_tensor: empty batch");
    const int h = imgs[0].h, w = imgs[0].w;
    for (const auto& im : imgs) check_arg(im.h == h && im.w == w, "images_to_tensor: size mismatch");
    auto t = Tensor<T>::create({static_cast<int>(imgs.size()), 3, h, w});
    T* dst = t->data.data();
    for (const auto& im : imgs) {
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    *dst++ = static_cast<T>(im.pix[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
    }
    return t;
}

}  // namespace dave
