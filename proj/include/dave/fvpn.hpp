#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dave/checkpoint.hpp"
#include "dave/common.hpp"
#include "dave/ops.hpp"
#include "dave/tensor.hpp"

namespace dave {

/// Geometry and loss constants of the proposal network. The conv stack is
/// conv1 -> pool -> relu -> conv2 -> pool -> relu -> conv3 -> relu followed by
/// three sibling full-extent conv heads, giving an effective stride of 4 and
/// a receptive field equal to input_side.
struct FvpnConfig {
    int input_side = 60;
    int conv1_channels = 32, conv1_kernel = 5;
    int conv2_channels = 64, conv2_kernel = 5;
    int conv3_channels = 64, conv3_kernel = 3;
    int head_kernel = 10;
    int knowledge_dim = 128;
    float alpha = 0.5f;  // bbox-loss gate for positives; 0 for background
    float beta = 0.5f;   // knowledge-loss weight

    int stride() const { return 4; }  // two 2x2/2 pools

    // spatial side of the conv3 output for a square input
    int trunk_side(int in) const {
        const int c1 = in - conv1_kernel + 1;
        const int p1 = c1 / 2;
        const int c2 = p1 - conv2_kernel + 1;
        const int p2 = c2 / 2;
        return p2 - conv3_kernel + 1;
    }

    void validate() const {
        check_arg(input_side >= 16, "FvpnConfig: input_side too small");
        check_arg(trunk_side(input_side) == head_kernel,
                  "FvpnConfig: head_kernel must equal the trunk output side for input_side");
        check_arg(knowledge_dim >= 1, "FvpnConfig: knowledge_dim must be >= 1");
    }
};

/// Network outputs. class_logits stays in logit space (softmax over the
/// channel pair happens in the loss and in vehicle_prob); bbr and knowledge
/// maps are post-logistic, so their values live in [0,1].
template <typename T>
struct FvpnHeads {
    TensorPtr<T> class_logits;  // [B,2,h,w], channel 0 = vehicle
    TensorPtr<T> bbr;           // [B,4,h,w]
    TensorPtr<T> knowledge;     // [B,N,h,w]; null when skipped at inference
};

/// Per-sample training target for the proposal network.
struct FvpnTarget {
    bool is_vehicle = false;
    std::array<float, 4> loc_t = {0, 0, 0, 0};  // patch-normalized (x,y,w,h); zeros for background
    std::vector<float> t_know;                  // squashed teacher feature, values in [0,1]
};

template <typename T>
class Fvpn {
public:
    FvpnConfig cfg;

    Fvpn(const FvpnConfig& config, std::uint64_t seed) : cfg(config) {
        cfg.validate();
        std::mt19937_64 rng(mix_seed(seed, 0xf17e));
        conv1_w = init_conv(cfg.conv1_channels, 3, cfg.conv1_kernel, rng);
        conv1_b = Tensor<T>::zeros({cfg.conv1_channels}, true);
        conv2_w = init_conv(cfg.conv2_channels, cfg.conv1_channels, cfg.conv2_kernel, rng);
        conv2_b = Tensor<T>::zeros({cfg.conv2_channels}, true);
        conv3_w = init_conv(cfg.conv3_channels, cfg.conv2_channels, cfg.conv3_kernel, rng);
        conv3_b = Tensor<T>::zeros({cfg.conv3_channels}, true);
        head_class_w = init_conv(2, cfg.conv3_channels, cfg.head_kernel, rng);
        head_class_b = Tensor<T>::zeros({2}, true);
        head_bbr_w = init_conv(4, cfg.conv3_channels, cfg.head_kernel, rng);
        head_bbr_b = Tensor<T>::zeros({4}, true);
        head_know_w = init_conv(cfg.knowledge_dim, cfg.conv3_channels, cfg.head_kernel, rng);
        head_know_b = Tensor<T>::zeros({cfg.knowledge_dim}, true);
    }

    /// Dense forward over any input >= the receptive field. A 60x60 input
    /// yields 1x1 heads; larger inputs slide the same weights at stride 4.
    FvpnHeads<T> forward(const TensorPtr<T>& images, bool with_knowledge = true) const {
        check_arg(images && images->rank() == 4 && images->extent(1) == 3,
                  "fvpn_forward: input must be [B,3,H,W]");
        check_arg(images->extent(2) >= cfg.input_side && images->extent(3) >= cfg.input_side,
                  "fvpn_forward: input smaller than the receptive field (" +
                      std::to_string(cfg.input_side) + ")");
        auto t1 = relu(maxpool2d(conv2d(images, conv1_w, conv1_b, 1, 0), 2, 2));
        auto t2 = relu(maxpool2d(conv2d(t1, conv2_w, conv2_b, 1, 0), 2, 2));
        auto t3 = relu(conv2d(t2, conv3_w, conv3_b, 1, 0));
        FvpnHeads<T> heads;
        heads.class_logits = conv2d(t3, head_class_w, head_class_b, 1, 0);
        heads.bbr = sigmoid(conv2d(t3, head_bbr_w, head_bbr_b, 1, 0));
        if (with_knowledge) heads.knowledge = sigmoid(conv2d(t3, head_know_w, head_know_b, 1, 0));
        return heads;
    }

    std::vector<std::pair<std::string, TensorPtr<T>>> named_params() const {
        return {{"fvpn/conv1.w", conv1_w},           {"fvpn/conv1.b", conv1_b},
                {"fvpn/conv2.w", conv2_w},           {"fvpn/conv2.b", conv2_b},
                {"fvpn/conv3.w", conv3_w},           {"fvpn/conv3.b", conv3_b},
                {"fvpn/head_class.w", head_class_w}, {"fvpn/head_class.b", head_class_b},
                {"fvpn/head_bbr.w", head_bbr_w},     {"fvpn/head_bbr.b", head_bbr_b},
                {"fvpn/head_know.w", head_know_w},   {"fvpn/head_know.b", head_know_b}};
    }

    std::vector<TensorPtr<T>> params() const {
        std::vector<TensorPtr<T>> out;
        for (auto& [n, p] : named_params()) out.push_back(p);
        return out;
    }

    void append_checkpoint(std::vector<NamedTensor>& out) const {
        out.push_back({"fvpn/cfg",
                       {7},
                       {static_cast<float>(cfg.input_side), static_cast<float>(cfg.knowledge_dim),
                        static_cast<float>(cfg.head_kernel), cfg.alpha, cfg.beta,
                        static_cast<float>(cfg.conv1_channels), static_cast<float>(cfg.conv2_channels)}});
        for (auto& [n, p] : named_params()) out.push_back(to_named(n, *p));
    }

    static Fvpn<T> from_checkpoint(const std::vector<NamedTensor>& tensors, std::uint64_t seed = 0) {
        std::map<std::string, const NamedTensor*> by_name;
        for (auto& t : tensors) by_name[t.name] = &t;
        check_state(by_name.count("fvpn/cfg"), "checkpoint has no fvpn/cfg entry");
        const auto& c = by_name["fvpn/cfg"]->values;
        FvpnConfig cfg;
        cfg.input_side = static_cast<int>(c[0]);
        cfg.knowledge_dim = static_cast<int>(c[1]);
        cfg.head_kernel = static_cast<int>(c[2]);
        cfg.alpha = c[3];
        cfg.beta = c[4];
        Fvpn<T> net(cfg, seed);
        for (auto& [name, p] : net.named_params()) {
            check_state(by_name.count(name), "checkpoint missing tensor " + name);
            load_into(*by_name[name], *p);
        }
        return net;
    }

    TensorPtr<T> conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b;
    TensorPtr<T> head_class_w, head_class_b, head_bbr_w, head_bbr_b, head_know_w, head_know_b;

private:
    static TensorPtr<T> init_conv(int cout, int cin, int k, std::mt19937_64& rng) {
        const T bound = static_cast<T>(std::sqrt(6.0 / (static_cast<double>(cin) * k * k)));
        return Tensor<T>::uniform({cout, cin, k, k}, -bound, bound, rng, true);
    }
};

template <typename T>
struct FvpnLossReport {
    TensorPtr<T> total;
    T bic = T(0);            // softmax classification term
    T bbox_weighted = T(0);  // alpha-gated regression term
    T know_weighted = T(0);  // beta-scaled knowledge term (0 with guidance off)
};

/// Multi-task proposal loss over 1x1 training heads:
/// L = L_bic + alpha * L_bbox + beta * L_know, with alpha = 0 for background
/// rows and the knowledge term dropped entirely when guidance is off.
template <typename T>
FvpnLossReport<T> fvpn_loss(const FvpnHeads<T>& heads, std::span<const FvpnTarget> targets,
                            const FvpnConfig& cfg, bool knowledge_guidance = true) {
    check_arg(heads.class_logits && heads.bbr, "fvpn_loss: missing heads");
    const int b = heads.class_logits->extent(0);
    check_arg(heads.class_logits->extent(2) == 1 && heads.class_logits->extent(3) == 1,
              "fvpn_loss: heads must be spatially 1x1 (training mode)");
    check_arg(static_cast<int>(targets.size()) == b, "fvpn_loss: one target per sample");

    std::vector<int> labels(b);
    std::vector<T> ones(b, T(1)), alphas(b);
    auto loc_t = Tensor<T>::create({b, 4});
    for (int r = 0; r < b; ++r) {
        const auto& t = targets[r];
        labels[r] = t.is_vehicle ? 0 : 1;
        alphas[r] = t.is_vehicle ? static_cast<T>(cfg.alpha) : T(0);
        for (int c = 0; c < 4; ++c) {
            const float v = t.loc_t[c];
            if (t.is_vehicle)
                check_arg(v >= 0.f && v <= 1.f, "fvpn_loss: positive loc_t outside [0,1]");
            else
                check_arg(v == 0.f, "fvpn_loss: background loc_t must be zero");
            loc_t->data[static_cast<std::size_t>(r) * 4 + c] = static_cast<T>(v);
        }
    }

    FvpnLossReport<T> rep;
    auto l_bic = softmax_nll(reshape(heads.class_logits, {b, 2}), labels, ones);
    auto l_bbox = smooth_l1(reshape(heads.bbr, {b, 4}), loc_t, alphas);
    rep.bic = l_bic->item();
    rep.bbox_weighted = l_bbox->item();
    rep.total = add(l_bic, l_bbox);

    if (knowledge_guidance) {
        check_arg(static_cast<bool>(heads.knowledge), "fvpn_loss: knowledge head missing with guidance on");
        const int n = heads.knowledge->extent(1);
        auto t_know = Tensor<T>::create({b, n});
        for (int r = 0; r < b; ++r) {
            check_arg(static_cast<int>(targets[r].t_know.size()) == n,
                      "fvpn_loss: t_know dimension mismatch");
            for (int i = 0; i < n; ++i)
                t_know->data[static_cast<std::size_t>(r) * n + i] = static_cast<T>(targets[r].t_know[i]);
        }
        auto l_know = scale(binary_cross_entropy_vec(reshape(heads.knowledge, {b, n}), t_know),
                            static_cast<T>(cfg.beta));
        rep.know_weighted = l_know->item();
        rep.total = add(rep.total, l_know);
    }
    return rep;
}

/// Vehicle-probability heatmap for one sample: softmax over the channel pair
/// at each cell, computed in a numerically stable closed form.
template <typename T>
Grid vehicle_prob(const FvpnHeads<T>& heads, int sample = 0) {
    const auto& cl = heads.class_logits;
    const int h = cl->extent(2), w = cl->extent(3);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const T* base = cl->data.data() + static_cast<std::int64_t>(sample) * 2 * plane;
    Grid g(h, w);
    for (std::int64_t i = 0; i < plane; ++i) {
        const T d = base[i] - base[plane + i];  // z_vehicle - z_background
        double p;
        if (d >= 0)
            p = 1.0 / (1.0 + std::exp(-static_cast<double>(d)));
        else {
            const double e = std::exp(static_cast<double>(d));
            p = e / (1.0 + e);
        }
        g.v[static_cast<std::size_t>(i)] = static_cast<float>(p);
    }
    return g;
}

/// The four bbr channel planes of one sample as float grids.
template <typename T>
std::array<Grid, 4> bbr_grids(const FvpnHeads<T>& heads, int sample = 0) {
    const auto& m = heads.bbr;
    const int h = m->extent(2), w = m->extent(3);
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    std::array<Grid, 4> out;
    for (int c = 0; c < 4; ++c) {
        out[c] = Grid(h, w);
        const T* base = m->data.data() + (static_cast<std::int64_t>(sample) * 4 + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) out[c].v[static_cast<std::size_t>(i)] = static_cast<float>(base[i]);
    }
    return out;
}

/// Receptive window of a heatmap cell, in original-image pixels.
struct Window {
    float x = 0, y = 0, side = 0;
};

inline Window cell_to_window(int row, int col, float level_scale, const FvpnConfig& cfg) {
    check_arg(level_scale > 0.f, "cell_to_window: scale must be positive");
    Window w;
    w.x = cfg.stride() * static_cast<float>(col) / level_scale;
    w.y = cfg.stride() * static_cast<float>(row) / level_scale;
    w.side = static_cast<float>(cfg.input_side) / level_scale;
    return w;
}

}  // namespace dave
