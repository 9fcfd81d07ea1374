#pragma once

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

/// Backbone depth presets for the attribute net depth study.
enum class AlnDepth { shallow4 = 1, mid8 = 2, deep12 = 3 };  // convs per stage

inline AlnDepth aln_depth_from_string(const std::string& s) {
    if (s == "shallow-4" || s == "shallow4") return AlnDepth::shallow4;
    if (s == "mid-8" || s == "mid8") return AlnDepth::mid8;
    if (s == "deep" || s == "deep-12" || s == "deep12") return AlnDepth::deep12;
    throw std::invalid_argument("unknown ALN depth preset: " + s);
}

inline std::string to_string(AlnDepth d) {
    switch (d) {
        case AlnDepth::shallow4: return "shallow-4";
        case AlnDepth::mid8: return "mid-8";
        default: return "deep";
    }
}

/// Attribute-net configuration. The backbone is four stages of 3x3
/// convolutions with doubling channels and 2x2 pools between stages, ending
/// in a linear (un-rectified) projection conv and global average pooling to
/// feature_dim. Four parallel affine heads share that feature.
struct AlnConfig {
    int input_side = 64;
    AlnDepth depth = AlnDepth::shallow4;
    int base_channels = 16;
    int feature_dim = 128;
    int np = 5;  // poses (label 0 reserved for "unavailable")
    int nc = 5;  // colors (label 0 = catch-all / unavailable)
    int nt = 6;  // types, 6 or 12 (label 0 = catch-all / unavailable)
    float knowledge_gain = 4.0f;  // logistic squash scale for the teacher signal

    int convs_per_stage() const { return static_cast<int>(depth); }

    void validate() const {
        check_arg(input_side >= 16 && input_side % 8 == 0,
                  "AlnConfig: input_side must be a multiple of 8, >= 16");
        check_arg(np >= 2 && nc >= 2 && nt >= 2, "AlnConfig: vocabulary sizes must be >= 2");
        check_arg(feature_dim >= 8, "AlnConfig: feature_dim too small");
        check_arg(base_channels >= 4, "AlnConfig: base_channels too small");
    }
};

template <typename T>
struct AlnHeads {
    TensorPtr<T> verify_logits;  // [B,2], channel 0 = vehicle
    TensorPtr<T> pose_logits;    // [B,np]
    TensorPtr<T> color_logits;   // [B,nc]
    TensorPtr<T> type_logits;    // [B,nt]
    TensorPtr<T> feature;        // [B,feature_dim] pooled pre-head representation
};

/// Per-sample attribute labels. v: 1 = vehicle, 0 = background. p/c/t use
/// 0 for "unavailable" (background, or catch-all color/type); real classes
/// are 1-based indices into the vocabulary.
struct AttributeLabels {
    int v = 0, p = 0, c = 0, t = 0;
};

template <typename T>
class Aln {
public:
    AlnConfig cfg;

    Aln(const AlnConfig& config, std::uint64_t seed) : cfg(config) {
        cfg.validate();
        std::mt19937_64 rng(mix_seed(seed, 0xa1a1));
        const int reps = cfg.convs_per_stage();
        int cin = 3;
        for (int stage = 0; stage < 4; ++stage) {
            const int cout = stage == 3 ? cfg.feature_dim : cfg.base_channels << stage;
            for (int r = 0; r < reps; ++r) {
                conv_w.push_back(init_conv(cout, cin, 3, rng));
                conv_b.push_back(Tensor<T>::zeros({cout}, true));
                cin = cout;
            }
        }
        head_verify_w = init_linear(2, cfg.feature_dim, rng);
        head_verify_b = Tensor<T>::zeros({2}, true);
        head_pose_w = init_linear(cfg.np, cfg.feature_dim, rng);
        head_pose_b = Tensor<T>::zeros({cfg.np}, true);
        head_color_w = init_linear(cfg.nc, cfg.feature_dim, rng);
        head_color_b = Tensor<T>::zeros({cfg.nc}, true);
        head_type_w = init_linear(cfg.nt, cfg.feature_dim, rng);
        head_type_b = Tensor<T>::zeros({cfg.nt}, true);
    }

    AlnHeads<T> forward(const TensorPtr<T>& crops) const {
        check_arg(crops && crops->rank() == 4 && crops->extent(1) == 3,
                  "aln_forward: input must be [B,3,s,s]");
        check_arg(crops->extent(2) == cfg.input_side && crops->extent(3) == cfg.input_side,
                  "aln_forward: input must be exactly " + std::to_string(cfg.input_side) + "x" +
                      std::to_string(cfg.input_side));
        const int reps = cfg.convs_per_stage();
        TensorPtr<T> x = crops;
        std::size_t li = 0;
        for (int stage = 0; stage < 4; ++stage) {
            for (int r = 0; r < reps; ++r) {
                x = conv2d(x, conv_w[li], conv_b[li], 1, 1);
                ++li;
                // the very last conv stays linear so the pooled feature is
                // unconstrained in sign
                if (!(stage == 3 && r == reps - 1)) x = relu(x);
            }
            if (stage < 3) x = maxpool2d(x, 2, 2);
        }
        AlnHeads<T> heads;
        heads.feature = global_avg_pool(x);
        heads.verify_logits = linear(heads.feature, head_verify_w, head_verify_b);
        heads.pose_logits = linear(heads.feature, head_pose_w, head_pose_b);
        heads.color_logits = linear(heads.feature, head_color_w, head_color_b);
        heads.type_logits = linear(heads.feature, head_type_w, head_type_b);
        return heads;
    }

    std::vector<std::pair<std::string, TensorPtr<T>>> named_params() const {
        std::vector<std::pair<std::string, TensorPtr<T>>> out;
        for (std::size_t i = 0; i < conv_w.size(); ++i) {
            out.emplace_back("aln/conv" + std::to_string(i + 1) + ".w", conv_w[i]);
            out.emplace_back("aln/conv" + std::to_string(i + 1) + ".b", conv_b[i]);
        }
        out.emplace_back("aln/head_verify.w", head_verify_w);
        out.emplace_back("aln/head_verify.b", head_verify_b);
        out.emplace_back("aln/head_pose.w", head_pose_w);
        out.emplace_back("aln/head_pose.b", head_pose_b);
        out.emplace_back("aln/head_color.w", head_color_w);
        out.emplace_back("aln/head_color.b", head_color_b);
        out.emplace_back("aln/head_type.w", head_type_w);
        out.emplace_back("aln/head_type.b", head_type_b);
        return out;
    }

    std::vector<TensorPtr<T>> params() const {
        std::vector<TensorPtr<T>> out;
        for (auto& [n, p] : named_params()) out.push_back(p);
        return out;
    }

    void append_checkpoint(std::vector<NamedTensor>& out) const {
        out.push_back({"aln/cfg",
                       {8},
                       {static_cast<float>(cfg.input_side), static_cast<float>(static_cast<int>(cfg.depth)),
                        static_cast<float>(cfg.base_channels), static_cast<float>(cfg.feature_dim),
                        static_cast<float>(cfg.np), static_cast<float>(cfg.nc),
                        static_cast<float>(cfg.nt), cfg.knowledge_gain}});
        for (auto& [n, p] : named_params()) out.push_back(to_named(n, *p));
    }

    static Aln<T> from_checkpoint(const std::vector<NamedTensor>& tensors, std::uint64_t seed = 0) {
        std::map<std::string, const NamedTensor*> by_name;
        for (auto& t : tensors) by_name[t.name] = &t;
        check_state(by_name.count("aln/cfg"), "checkpoint has no aln/cfg entry");
        const auto& c = by_name["aln/cfg"]->values;
        AlnConfig cfg;
        cfg.input_side = static_cast<int>(c[0]);
        cfg.depth = static_cast<AlnDepth>(static_cast<int>(c[1]));
        cfg.base_channels = static_cast<int>(c[2]);
        cfg.feature_dim = static_cast<int>(c[3]);
        cfg.np = static_cast<int>(c[4]);
        cfg.nc = static_cast<int>(c[5]);
        cfg.nt = static_cast<int>(c[6]);
        cfg.knowledge_gain = c[7];
        Aln<T> net(cfg, seed);
        for (auto& [name, p] : net.named_params()) {
            check_state(by_name.count(name), "checkpoint missing tensor " + name);
            load_into(*by_name[name], *p);
        }
        return net;
    }

    std::vector<TensorPtr<T>> conv_w, conv_b;
    TensorPtr<T> head_verify_w, head_verify_b, head_pose_w, head_pose_b;
    TensorPtr<T> head_color_w, head_color_b, head_type_w, head_type_b;

private:
    static TensorPtr<T> init_conv(int cout, int cin, int k, std::mt19937_64& rng) {
        const T bound = static_cast<T>(std::sqrt(6.0 / (static_cast<double>(cin) * k * k)));
        return Tensor<T>::uniform({cout, cin, k, k}, -bound, bound, rng, true);
    }
    static TensorPtr<T> init_linear(int cout, int cin, std::mt19937_64& rng) {
        const T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(cin)));
        return Tensor<T>::uniform({cout, cin}, -bound, bound, rng, true);
    }
};

template <typename T>
struct AlnLossReport {
    TensorPtr<T> total;
    T verify = T(0), pose_weighted = T(0), color_weighted = T(0), type_weighted = T(0);
};

/// Gating multipliers for the three attribute terms. They apply only to
/// positive samples; background rows always carry zero attribute weight.
struct AlnLossGates {
    float lambda_pose = 1.f, lambda_color = 1.f, lambda_type = 1.f;
};

/// Four-way attribute loss: verification plus gated pose/color/type terms.
/// Rows whose label is 0 for a task (background, or catch-all color/type)
/// are masked out of that task entirely.
template <typename T>
AlnLossReport<T> aln_loss(const AlnHeads<T>& heads, std::span<const AttributeLabels> labels,
                          const AlnConfig& cfg, const AlnLossGates& gates = {}) {
    check_arg(heads.verify_logits && heads.pose_logits && heads.color_logits && heads.type_logits,
              "aln_loss: incomplete heads");
    const int b = heads.verify_logits->extent(0);
    check_arg(static_cast<int>(labels.size()) == b, "aln_loss: one label set per sample");

    std::vector<int> lv(b), lp(b), lc(b), lt(b);
    std::vector<T> wv(b, T(1)), wp(b), wc(b), wt(b);
    const bool any_gate = gates.lambda_pose > 0 || gates.lambda_color > 0 || gates.lambda_type > 0;
    for (int r = 0; r < b; ++r) {
        const auto& l = labels[r];
        check_arg(l.v == 0 || l.v == 1, "aln_loss: V label must be 0 or 1");
        check_arg(l.p >= 0 && l.p <= cfg.np, "aln_loss: pose label out of range");
        check_arg(l.c >= 0 && l.c <= cfg.nc, "aln_loss: color label out of range");
        check_arg(l.t >= 0 && l.t <= cfg.nt, "aln_loss: type label out of range");
        if (l.v == 0)
            check_arg(l.p == 0 && l.c == 0 && l.t == 0,
                      "aln_loss: background sample with nonzero attribute labels");
        else
            check_arg(!(l.p == 0 && l.c == 0 && l.t == 0 && any_gate),
                      "aln_loss: positive sample with all attributes unavailable");
        lv[r] = l.v == 1 ? 0 : 1;  // head channel 0 = vehicle
        const bool pos = l.v == 1;
        wp[r] = pos && l.p > 0 ? static_cast<T>(gates.lambda_pose) : T(0);
        wc[r] = pos && l.c > 0 ? static_cast<T>(gates.lambda_color) : T(0);
        wt[r] = pos && l.t > 0 ? static_cast<T>(gates.lambda_type) : T(0);
        lp[r] = l.p > 0 ? l.p - 1 : 0;
        lc[r] = l.c > 0 ? l.c - 1 : 0;
        lt[r] = l.t > 0 ? l.t - 1 : 0;
    }

    AlnLossReport<T> rep;
    auto l_verify = softmax_nll(heads.verify_logits, lv, wv);
    auto l_pose = softmax_nll(heads.pose_logits, lp, wp);
    auto l_color = softmax_nll(heads.color_logits, lc, wc);
    auto l_type = softmax_nll(heads.type_logits, lt, wt);
    rep.verify = l_verify->item();
    rep.pose_weighted = l_pose->item();
    rep.color_weighted = l_color->item();
    rep.type_weighted = l_type->item();
    rep.total = add(add(l_verify, l_pose), add(l_color, l_type));
    return rep;
}

/// Squashes the pooled feature into (0,1) as the teacher signal for the
/// proposal net. The result is a fresh untracked tensor, so no gradient can
/// flow back into the attribute net through it.
template <typename T>
TensorPtr<T> extract_knowledge(const AlnHeads<T>& heads, const AlnConfig& cfg) {
    check_arg(static_cast<bool>(heads.feature), "extract_knowledge: forward not completed");
    auto out = Tensor<T>::create(heads.feature->shape);
    const T g = static_cast<T>(cfg.knowledge_gain);
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        const T v = g * heads.feature->data[i];
        if (v >= T(0)) {
            out->data[i] = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            out->data[i] = e / (T(1) + e);
        }
    }
    return out;
}

}  // namespace dave
