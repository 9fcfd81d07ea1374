#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dave/common.hpp"
#include "dave/dataset.hpp"
#include "dave/image.hpp"
#include "dave/png_io.hpp"

namespace dave {

struct SynthSpec {
    int count = 200;
    int scene_w = 224, scene_h = 224;
    int min_vehicles = 1, max_vehicles = 2;
    float min_side = 56.f, max_side = 150.f;  // vehicle longer side, pixels
    int types = 6;                            // 6 or 12
    float val_frac = 0.f, test_frac = 0.f;
    std::uint64_t seed = 7;
};

namespace synth_detail {

struct Rgb {
    float r, g, b;
};

inline Rgb jitter(Rgb c, std::mt19937_64& rng, float amount = 0.03f) {
    std::uniform_real_distribution<float> d(-amount, amount);
    return {std::clamp(c.r + d(rng), 0.f, 1.f), std::clamp(c.g + d(rng), 0.f, 1.f),
            std::clamp(c.b + d(rng), 0.f, 1.f)};
}

inline const std::array<Rgb, 5>& body_palette() {
    static const std::array<Rgb, 5> p = {{{0.10f, 0.10f, 0.11f},    // black
                                          {0.97f, 0.97f, 0.96f},    // white
                                          {0.63f, 0.65f, 0.68f},    // silver
                                          {0.82f, 0.16f, 0.18f},    // red
                                          {0.14f, 0.27f, 0.82f}}};  // blue
    return p;
}

inline const std::array<Rgb, 5>& catchall_palette() {
    static const std::array<Rgb, 5> p = {{{0.15f, 0.55f, 0.20f},
                                          {0.88f, 0.78f, 0.12f},
                                          {0.90f, 0.50f, 0.10f},
                                          {0.50f, 0.20f, 0.60f},
                                          {0.10f, 0.65f, 0.70f}}};
    return p;
}

inline constexpr Rgb kGlass{0.13f, 0.16f, 0.22f};
inline constexpr Rgb kTire{0.06f, 0.06f, 0.07f};
inline constexpr Rgb kHub{0.72f, 0.72f, 0.74f};
inline constexpr Rgb kHeadlight{0.99f, 0.96f, 0.72f};
inline constexpr Rgb kTaillight{0.52f, 0.05f, 0.06f};
inline constexpr Rgb kGrille{0.07f, 0.07f, 0.08f};
inline constexpr Rgb kBumper{0.22f, 0.22f, 0.24f};
inline constexpr Rgb kPlate{0.83f, 0.83f, 0.80f};

// silhouette proportions per vehicle type, all fractions of the glyph box
struct TypeShape {
    float side_aspect;              // w/h of the side view
    float cabin_x0, cabin_x1;       // cabin footprint along the length
    float cabin_top;                // roof height (0 = box top)
    float body_top;                 // beltline height
    bool bed;                       // pickup-style open bed behind the cabin
    float front_aspect;             // w/h of the front/rear view
    float ws_y0, ws_y1;             // windshield vertical span (front view)
    float grille_y0, grille_y1;     // grille band (front view)
};

inline const TypeShape& type_shape(int type_slot) {
    // index 0 = generic box truck used as the catch-all glyph in 12-type mode
    static const std::array<TypeShape, 13> shapes = {{
        {1.90f, 0.05f, 0.97f, 0.03f, 0.52f, false, 0.95f, 0.06f, 0.34f, 0.62f, 0.80f},  // box truck
        {2.40f, 0.28f, 0.70f, 0.10f, 0.45f, false, 1.15f, 0.10f, 0.40f, 0.62f, 0.74f},  // sedan
        {1.90f, 0.22f, 0.93f, 0.04f, 0.40f, false, 1.00f, 0.06f, 0.42f, 0.56f, 0.76f},  // suv
        {1.70f, 0.05f, 0.95f, 0.02f, 0.30f, false, 0.92f, 0.05f, 0.52f, 0.78f, 0.84f},  // minibus
        {2.30f, 0.16f, 0.47f, 0.08f, 0.45f, true, 1.05f, 0.10f, 0.40f, 0.52f, 0.78f},   // pickup
        {2.00f, 0.30f, 0.94f, 0.12f, 0.45f, false, 1.10f, 0.12f, 0.46f, 0.66f, 0.76f},  // hatchback
        {2.80f, 0.34f, 0.72f, 0.34f, 0.55f, false, 1.35f, 0.18f, 0.44f, 0.70f, 0.82f},  // sports
        {1.80f, 0.15f, 0.90f, 0.05f, 0.38f, false, 0.98f, 0.06f, 0.48f, 0.66f, 0.78f},  // mpv
        {2.50f, 0.30f, 0.86f, 0.12f, 0.47f, false, 1.18f, 0.12f, 0.42f, 0.64f, 0.74f},  // fastback
        {2.40f, 0.28f, 0.96f, 0.10f, 0.45f, false, 1.08f, 0.09f, 0.42f, 0.62f, 0.74f},  // estate
        {2.10f, 0.25f, 0.90f, 0.07f, 0.42f, false, 1.05f, 0.08f, 0.43f, 0.60f, 0.76f},  // crossover
        {2.50f, 0.35f, 0.60f, 0.32f, 0.50f, false, 1.22f, 0.20f, 0.42f, 0.66f, 0.78f},  // convertible
        {2.50f, 0.33f, 0.62f, 0.22f, 0.50f, false, 1.20f, 0.16f, 0.42f, 0.66f, 0.78f},  // hardtop-conv
    }};
    return shapes[static_cast<std::size_t>(type_slot)];
}

// Draw target with a coverage mask so finished glyphs can be blitted (and
// mirrored) onto the scene.
struct Sprite {
    int w, h;
    ImageF img;
    std::vector<std::uint8_t> mask;

    Sprite(int w_, int h_) : w(w_), h(h_), img(w_, h_), mask(static_cast<std::size_t>(w_) * h_, 0) {}

    void set(int x, int y, const Rgb& c) {
        if (x < 0 || y < 0 || x >= w || y >= h) return;
        float* p = img.px(x, y);
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
        mask[static_cast<std::size_t>(y) * w + x] = 1;
    }

    // rect in fractional glyph coordinates
    void rect(float fx0, float fy0, float fx1, float fy1, const Rgb& c) {
        const int x0 = static_cast<int>(std::lround(fx0 * w)), x1 = static_cast<int>(std::lround(fx1 * w));
        const int y0 = static_cast<int>(std::lround(fy0 * h)), y1 = static_cast<int>(std::lround(fy1 * h));
        for (int y = std::max(0, y0); y < std::min(h, y1); ++y)
            for (int x = std::max(0, x0); x < std::min(w, x1); ++x) set(x, y, c);
    }

    // convex or simple polygon, fractional coordinates, even-odd scanline
    void poly(const std::vector<std::pair<float, float>>& pts, const Rgb& c) {
        const std::size_t n = pts.size();
        if (n < 3) return;
        float fy0 = 1e9f, fy1 = -1e9f;
        for (auto& [px, py] : pts) {
            fy0 = std::min(fy0, py);
            fy1 = std::max(fy1, py);
        }
        const int y0 = std::max(0, static_cast<int>(std::floor(fy0 * h)));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(fy1 * h)));
        for (int y = y0; y <= y1; ++y) {
            const float fy = (y + 0.5f) / h;
            std::vector<float> xs;
            for (std::size_t i = 0; i < n; ++i) {
                const auto& a = pts[i];
                const auto& b = pts[(i + 1) % n];
                if ((a.second <= fy && b.second > fy) || (b.second <= fy && a.second > fy)) {
                    const float t = (fy - a.second) / (b.second - a.second);
                    xs.push_back(a.first + t * (b.first - a.first));
                }
            }
            std::sort(xs.begin(), xs.end());
            for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
                const int xa = std::max(0, static_cast<int>(std::lround(xs[i] * w)));
                const int xb = std::min(w, static_cast<int>(std::lround(xs[i + 1] * w)));
                for (int x = xa; x < xb; ++x) set(x, y, c);
            }
        }
    }

    void ellipse(float fcx, float fcy, float frx, float fry, const Rgb& c) {
        const float cx = fcx * w, cy = fcy * h, rx = std::max(1.f, frx * w), ry = std::max(1.f, fry * h);
        const int x0 = std::max(0, static_cast<int>(cx - rx - 1)), x1 = std::min(w - 1, static_cast<int>(cx + rx + 1));
        const int y0 = std::max(0, static_cast<int>(cy - ry - 1)), y1 = std::min(h - 1, static_cast<int>(cy + ry + 1));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const float dx = (x + 0.5f - cx) / rx, dy = (y + 0.5f - cy) / ry;
                if (dx * dx + dy * dy <= 1.f) set(x, y, c);
            }
    }
};

// --- pose-specific glyph painters ------------------------------------------

inline void paint_side(Sprite& s, const TypeShape& t, const Rgb& body) {
    const float beltline = t.body_top;
    // main body slab
    s.rect(0.02f, beltline, 0.98f, 0.90f, body);
    if (t.bed) {
        // cabin block plus a lower open bed behind it
        const float bed_top = beltline + 0.10f;
        s.rect(t.cabin_x1, bed_top, 0.97f, 0.90f, body);
        s.rect(t.cabin_x0 + 0.02f, t.cabin_top, t.cabin_x1, beltline + 0.02f, body);
        s.poly({{t.cabin_x0 + 0.10f, t.cabin_top + 0.02f},
                {t.cabin_x1 - 0.04f, t.cabin_top + 0.02f},
                {t.cabin_x1 - 0.04f, beltline - 0.02f},
                {t.cabin_x0 + 0.16f, beltline - 0.02f}},
               kGlass);
    } else {
        // cabin trapezoid with slanted windshield and rear pillar
        const float slant_f = 0.35f * (beltline - t.cabin_top);
        const float slant_r = 0.22f * (beltline - t.cabin_top);
        s.poly({{t.cabin_x0 + slant_f, t.cabin_top},
                {t.cabin_x1 - slant_r, t.cabin_top},
                {t.cabin_x1, beltline + 0.02f},
                {t.cabin_x0, beltline + 0.02f}},
               body);
        // glass inset
        s.poly({{t.cabin_x0 + slant_f + 0.035f, t.cabin_top + 0.045f},
                {t.cabin_x1 - slant_r - 0.03f, t.cabin_top + 0.045f},
                {t.cabin_x1 - 0.035f, beltline - 0.015f},
                {t.cabin_x0 + 0.045f, beltline - 0.015f}},
               kGlass);
        // B-pillar splits the glass
        const float mid = 0.5f * (t.cabin_x0 + t.cabin_x1);
        s.rect(mid - 0.012f, t.cabin_top + 0.03f, mid + 0.012f, beltline, body);
    }
    // rocker shading and door seam
    s.rect(0.02f, 0.86f, 0.98f, 0.90f, {body.r * 0.55f, body.g * 0.55f, body.b * 0.55f});
    // wheels
    const float wy = 0.88f, wr = 0.115f;
    for (float wx : {0.20f, 0.80f}) {
        s.ellipse(wx, wy, wr * 0.62f, wr, kTire);
        s.ellipse(wx, wy, wr * 0.27f, wr * 0.42f, kHub);
    }
    // front/rear marker lamps at the beltline ends
    s.rect(0.955f, beltline + 0.02f, 0.985f, beltline + 0.08f, kHeadlight);
    s.rect(0.015f, beltline + 0.02f, 0.045f, beltline + 0.08f, kTaillight);
}

inline void paint_frontal(Sprite& s, const TypeShape& t, const Rgb& body, bool rear) {
    s.rect(0.05f, 0.10f, 0.95f, 0.90f, body);
    // greenhouse
    const float wy0 = t.ws_y0 + 0.04f, wy1 = t.ws_y1;
    if (rear) {
        s.poly({{0.26f, wy0 + 0.03f}, {0.74f, wy0 + 0.03f}, {0.80f, wy1 - 0.02f}, {0.20f, wy1 - 0.02f}},
               kGlass);
    } else {
        s.poly({{0.22f, wy0}, {0.78f, wy0}, {0.85f, wy1}, {0.15f, wy1}}, kGlass);
    }
    // lamp cluster and grille stay in the central third so the fenders keep
    // a clean stripe of body paint on both sides
    const float ly0 = t.grille_y0 - 0.085f, ly1 = t.grille_y0 - 0.005f;
    if (rear) {
        s.rect(0.28f, ly0, 0.44f, ly1, kTaillight);
        s.rect(0.56f, ly0, 0.72f, ly1, kTaillight);
        s.rect(0.42f, t.grille_y0 + 0.01f, 0.58f, t.grille_y1, kPlate);
        s.rect(0.28f, ly0 - 0.015f, 0.72f, ly0, {body.r * 0.6f, body.g * 0.6f, body.b * 0.6f});
    } else {
        s.rect(0.28f, ly0, 0.44f, ly1, kHeadlight);
        s.rect(0.56f, ly0, 0.72f, ly1, kHeadlight);
        s.rect(0.30f, t.grille_y0, 0.70f, t.grille_y1, kGrille);
    }
    s.rect(0.05f, 0.84f, 0.95f, 0.92f, kBumper);
    for (float wx : {0.16f, 0.84f}) s.rect(wx - 0.07f, 0.90f, wx + 0.07f, 0.975f, kTire);
}

inline void paint_three_quarter(Sprite& s, const TypeShape& t, const Rgb& body, bool rear) {
    // compressed side profile with the leading face visible on the left
    const float face_w = 0.17f;
    const float beltline = t.body_top;
    s.rect(face_w, beltline, 0.98f, 0.90f, body);
    if (t.bed) {
        const float bx0 = face_w + (t.cabin_x0 + 0.02f) * (1.f - face_w);
        const float bx1 = face_w + t.cabin_x1 * (1.f - face_w);
        s.rect(bx1, beltline + 0.10f, 0.97f, 0.90f, body);
        s.rect(bx0, t.cabin_top, bx1, beltline + 0.02f, body);
        s.poly({{bx0 + 0.08f, t.cabin_top + 0.02f},
                {bx1 - 0.03f, t.cabin_top + 0.02f},
                {bx1 - 0.03f, beltline - 0.02f},
                {bx0 + 0.13f, beltline - 0.02f}},
               kGlass);
    } else {
        const float cx0 = face_w + t.cabin_x0 * (1.f - face_w);
        const float cx1 = face_w + t.cabin_x1 * (1.f - face_w);
        const float slant = 0.30f * (beltline - t.cabin_top);
        s.poly({{cx0 + slant, t.cabin_top}, {cx1 - slant * 0.6f, t.cabin_top}, {cx1, beltline + 0.02f}, {cx0, beltline + 0.02f}},
               body);
        s.poly({{cx0 + slant + 0.03f, t.cabin_top + 0.045f},
                {cx1 - slant * 0.6f - 0.025f, t.cabin_top + 0.045f},
                {cx1 - 0.03f, beltline - 0.015f},
                {cx0 + 0.04f, beltline - 0.015f}},
               kGlass);
    }
    // leading face band with the pose give-away lamp
    s.rect(0.015f, beltline - 0.02f, face_w + 0.01f, 0.90f, {body.r * 0.82f, body.g * 0.82f, body.b * 0.82f});
    const float ly = beltline + 0.10f;
    if (rear) {
        s.rect(0.03f, ly, face_w - 0.02f, ly + 0.09f, kTaillight);
    } else {
        s.rect(0.03f, ly, face_w - 0.02f, ly + 0.09f, kHeadlight);
        s.rect(0.035f, ly + 0.13f, face_w - 0.03f, ly + 0.20f, kGrille);
    }
    s.rect(0.015f, 0.85f, 0.98f, 0.90f, kBumper);
    const float wy = 0.88f, wr = 0.115f;
    for (float wx : {face_w + 0.16f, 0.82f}) {
        s.ellipse(wx, wy, wr * 0.52f, wr, kTire);
        s.ellipse(wx, wy, wr * 0.22f, wr * 0.40f, kHub);
    }
}

inline Sprite paint_vehicle(int pose, const TypeShape& shape, const Rgb& body, int bw, int bh) {
    Sprite s(bw, bh);
    switch (pose) {
        case 1: paint_frontal(s, shape, body, false); break;
        case 2: paint_frontal(s, shape, body, true); break;
        case 3: paint_side(s, shape, body); break;
        case 4: paint_three_quarter(s, shape, body, false); break;
        default: paint_three_quarter(s, shape, body, true); break;
    }
    return s;
}

inline float glyph_aspect(int pose, const TypeShape& t) {
    switch (pose) {
        case 1:
        case 2: return t.front_aspect;
        case 3: return t.side_aspect;
        default: return 0.80f * t.side_aspect;
    }
}

inline void blit(ImageF& canvas, const Sprite& s, int ox, int oy, bool mirror) {
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
            const int sx = mirror ? s.w - 1 - x : x;
            if (!s.mask[static_cast<std::size_t>(y) * s.w + sx]) continue;
            const int cx = ox + x, cy = oy + y;
            if (cx < 0 || cy < 0 || cx >= canvas.w || cy >= canvas.h) continue;
            const float* p = s.img.px(sx, y);
            float* q = canvas.px(cx, cy);
            q[0] = p[0];
            q[1] = p[1];
            q[2] = p[2];
        }
}

inline void paint_background(ImageF& img, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u01(0.f, 1.f);
    // low-frequency value noise in muted tones
    const int gw = 8, gh = 8;
    std::vector<Rgb> grid(static_cast<std::size_t>(gw) * gh);
    const float base_r = 0.32f + 0.22f * u01(rng);
    const float base_g = 0.32f + 0.22f * u01(rng);
    const float base_b = 0.30f + 0.22f * u01(rng);
    for (auto& c : grid) {
        const float v = -0.10f + 0.20f * u01(rng);
        c = {std::clamp(base_r + v, 0.05f, 0.9f), std::clamp(base_g + v, 0.05f, 0.9f),
             std::clamp(base_b + v * 0.8f, 0.05f, 0.9f)};
    }
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const float fx = static_cast<float>(x) / img.w * (gw - 1);
            const float fy = static_cast<float>(y) / img.h * (gh - 1);
            const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
            const int x1 = std::min(x0 + 1, gw - 1), y1 = std::min(y0 + 1, gh - 1);
            const float tx = fx - x0, ty = fy - y0;
            float* p = img.px(x, y);
            const Rgb& a = grid[y0 * gw + x0];
            const Rgb& b = grid[y0 * gw + x1];
            const Rgb& c = grid[y1 * gw + x0];
            const Rgb& d = grid[y1 * gw + x1];
            p[0] = (a.r * (1 - tx) + b.r * tx) * (1 - ty) + (c.r * (1 - tx) + d.r * tx) * ty;
            p[1] = (a.g * (1 - tx) + b.g * tx) * (1 - ty) + (c.g * (1 - tx) + d.g * tx) * ty;
            p[2] = (a.b * (1 - tx) + b.b * tx) * (1 - ty) + (c.b * (1 - tx) + d.b * tx) * ty;
        }
    // blocky clutter: muted rectangles and a couple of road-like bands
    std::uniform_int_distribution<int> nrects(5, 11);
    const int nr = nrects(rng);
    for (int i = 0; i < nr; ++i) {
        const float w = (0.06f + 0.22f * u01(rng)) * img.w;
        const float h = (0.04f + 0.20f * u01(rng)) * img.h;
        const float x0 = u01(rng) * (img.w - w);
        const float y0 = u01(rng) * (img.h - h);
        const float v = 0.25f + 0.4f * u01(rng);
        const Rgb c = {v * (0.8f + 0.3f * u01(rng)), v * (0.8f + 0.3f * u01(rng)), v * (0.8f + 0.3f * u01(rng))};
        for (int y = static_cast<int>(y0); y < static_cast<int>(y0 + h); ++y)
            for (int x = static_cast<int>(x0); x < static_cast<int>(x0 + w); ++x) {
                float* p = img.px(x, y);
                p[0] = c.r;
                p[1] = c.g;
                p[2] = c.b;
            }
    }
    // per-pixel speckle
    std::uniform_real_distribution<float> sp(-0.025f, 0.025f);
    for (auto& v : img.pix) v = std::clamp(v + sp(rng), 0.f, 1.f);
}

}  // namespace synth_detail

/// Renders one deterministic scene: textured background plus 1..max_vehicles
/// non-overlapping vehicle glyphs with pose / color / type ground truth.
inline SceneSample synth_scene(const SynthSpec& spec, std::uint64_t scene_seed) {
    using namespace synth_detail;
    std::mt19937_64 rng(scene_seed);
    SceneSample out;
    out.image = ImageF(spec.scene_w, spec.scene_h);
    paint_background(out.image, rng);

    std::uniform_int_distribution<int> nveh(spec.min_vehicles, spec.max_vehicles);
    std::uniform_int_distribution<int> pose_d(1, 5);
    std::uniform_int_distribution<int> color_d(0, 5);
    std::uniform_int_distribution<int> type_d(0, spec.types);
    std::uniform_int_distribution<int> extra_color(0, 4);
    std::uniform_int_distribution<int> extra_type6(7, 12);
    std::uniform_real_distribution<float> side_d(spec.min_side, std::min(spec.max_side, 0.72f * spec.scene_w));
    std::uniform_real_distribution<float> u01(0.f, 1.f);

    const int target = nveh(rng);
    for (int i = 0; i < target; ++i) {
        const int pose = pose_d(rng);
        const int color_label = color_d(rng);
        const int type_label = type_d(rng);
        // catch-all types are drawn as real silhouettes outside the trained
        // vocabulary: the unused profiles in 6-type mode, a box truck in 12
        int glyph_type;
        if (type_label > 0)
            glyph_type = type_label;
        else
            glyph_type = spec.types == 6 ? extra_type6(rng) : 0;
        const TypeShape& shape = type_shape(glyph_type);

        Rgb body = color_label > 0 ? jitter(body_palette()[color_label - 1], rng)
                                   : jitter(catchall_palette()[static_cast<std::size_t>(extra_color(rng))], rng);

        const float aspect = glyph_aspect(pose, shape);
        float side = side_d(rng);
        float bw = aspect >= 1.f ? side : side * aspect;
        float bh = aspect >= 1.f ? side / aspect : side;
        bw = std::min(bw, spec.scene_w - 8.f);
        bh = std::min(bh, spec.scene_h - 8.f);

        Box box;
        bool placed = false;
        for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
            box.w = bw;
            box.h = bh;
            box.x = 4.f + u01(rng) * (spec.scene_w - 8.f - bw);
            box.y = 4.f + u01(rng) * (spec.scene_h - 8.f - bh);
            placed = true;
            for (const auto& other : out.boxes) {
                const float pad = 0.16f;
                const Box a = {box.x - pad * box.w, box.y - pad * box.h, box.w * (1 + 2 * pad),
                               box.h * (1 + 2 * pad)};
                if (a.x < other.x2() && other.x < a.x2() && a.y < other.y2() && other.y < a.y2()) {
                    placed = false;
                    break;
                }
            }
        }
        if (!placed) {
            if (out.boxes.empty()) {
                box.x = 0.5f * (spec.scene_w - bw);
                box.y = 0.5f * (spec.scene_h - bh);
            } else {
                continue;
            }
        }

        Sprite sprite = paint_vehicle(pose, shape, body, static_cast<int>(std::lround(box.w)),
                                      static_cast<int>(std::lround(box.h)));
        const bool mirror = (pose >= 3) && (u01(rng) < 0.5f);
        blit(out.image, sprite, static_cast<int>(std::lround(box.x)), static_cast<int>(std::lround(box.y)),
             mirror);
        out.boxes.push_back(clip_box(box, static_cast<float>(spec.scene_w), static_cast<float>(spec.scene_h)));
        out.labels.push_back({1, pose, color_label, type_label});
    }

    // scene-wide illumination
    std::uniform_real_distribution<float> light(0.85f, 1.15f);
    const float b = light(rng);
    for (auto& v : out.image.pix) v = std::clamp(v * b, 0.f, 1.f);
    return out;
}

/// Generates `spec.count` scenes on disk (PNG images + JSONL records +
/// manifest) with deterministic content for a fixed seed.
inline DatasetManifest synth_generate(const std::string& out_dir, const SynthSpec& spec) {
    namespace fs = std::filesystem;
    check_arg(spec.count >= 1, "synth_generate: count must be >= 1");
    check_arg(spec.types == 6 || spec.types == 12, "synth_generate: types must be 6 or 12");
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "images", ec);
    check_state(!ec, "synth_generate: cannot create output directory " + out_dir);

    DatasetManifest m;
    m.root = out_dir;
    m.seed = spec.seed;
    m.vocab.type = type_names(spec.types);

    std::vector<AnnotationRecord> records;
    for (int i = 0; i < spec.count; ++i) {
        SceneSample scene = synth_scene(spec, mix_seed(spec.seed, static_cast<std::uint64_t>(i)));
        char name[64];
        std::snprintf(name, sizeof(name), "images/%06d.png", i);
        write_png((fs::path(out_dir) / name).string(), to_image8(scene.image));
        AnnotationRecord rec;
        rec.image = name;
        rec.boxes = scene.boxes;
        rec.labels = scene.labels;
        detail::validate_record(rec, m.vocab);
        records.push_back(rec);
        m.records.emplace(rec.image, rec);
    }

    // deterministic split assignment
    std::vector<int> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::mt19937_64 split_rng(mix_seed(spec.seed, 0x511f7));
    std::shuffle(order.begin(), order.end(), split_rng);
    const int n_test = static_cast<int>(std::lround(spec.test_frac * spec.count));
    const int n_val = static_cast<int>(std::lround(spec.val_frac * spec.count));
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& id = records[static_cast<std::size_t>(order[i])].image;
        if (static_cast<int>(i) < n_test)
            m.test.push_back(id);
        else if (static_cast<int>(i) < n_test + n_val)
            m.val.push_back(id);
        else
            m.train.push_back(id);
    }
    std::sort(m.train.begin(), m.train.end());
    std::sort(m.val.begin(), m.val.end());
    std::sort(m.test.begin(), m.test.end());

    save_manifest(out_dir, m, records);
    return m;
}

}  // namespace dave
