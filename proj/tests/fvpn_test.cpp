#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "dave/fvpn.hpp"
#include "dave/optim.hpp"

using namespace dave;

namespace {

FvpnConfig desk_config() {
    FvpnConfig cfg;
    cfg.knowledge_dim = 16;  // keep unit tests quick
    return cfg;
}

std::vector<float> random_unit_vec(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> d(0.05f, 0.95f);
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

}  // namespace

TEST(FvpnForward, SixtyInputYieldsOneByOneHeads) {
    Fvpn<float> net(desk_config(), 1);
    std::mt19937_64 rng(2);
    auto x = Tensor<float>::uniform({2, 3, 60, 60}, 0.f, 1.f, rng);
    auto heads = net.forward(x);
    EXPECT_EQ(heads.class_logits->shape, (std::vector<int>{2, 2, 1, 1}));
    EXPECT_EQ(heads.bbr->shape, (std::vector<int>{2, 4, 1, 1}));
    EXPECT_EQ(heads.knowledge->shape, (std::vector<int>{2, 16, 1, 1}));
}

TEST(FvpnForward, StrideFourRuleOnRectangularInput) {
    Fvpn<float> net(desk_config(), 1);
    std::mt19937_64 rng(3);
    auto x = Tensor<float>::uniform({1, 3, 124, 60}, 0.f, 1.f, rng);
    auto heads = net.forward(x, false);
    EXPECT_EQ(heads.class_logits->extent(2), 17);  // (124-60)/4 + 1
    EXPECT_EQ(heads.class_logits->extent(3), 1);
    EXPECT_FALSE(static_cast<bool>(heads.knowledge));
}

TEST(FvpnForward, TooSmallInputRejected) {
    Fvpn<float> net(desk_config(), 1);
    auto x = Tensor<float>::zeros({1, 3, 59, 60});
    EXPECT_THROW(net.forward(x), std::invalid_argument);
}

TEST(FvpnForward, ClassChannelsSumToOneEverywhere) {
    Fvpn<float> net(desk_config(), 4);
    std::mt19937_64 rng(5);
    auto x = Tensor<float>::uniform({1, 3, 80, 72}, 0.f, 1.f, rng);
    auto heads = net.forward(x, false);
    auto p = vehicle_prob(heads);
    const int hw = heads.class_logits->extent(2) * heads.class_logits->extent(3);
    for (int i = 0; i < hw; ++i) {
        const float z0 = heads.class_logits->data[i];
        const float z1 = heads.class_logits->data[hw + i];
        auto sm = softmax_values<float>(std::vector<float>{z0, z1}.data(), 2);
        EXPECT_NEAR(sm[0] + sm[1], 1.f, 1e-6);
        EXPECT_NEAR(p.v[i], sm[0], 1e-5);
    }
}

TEST(FvpnForward, FullyConvolutionalEquivalence) {
    // heatmap cell (i,j) == dedicated forward of the 60x60 crop at (4j,4i)
    Fvpn<float> net(desk_config(), 6);
    std::mt19937_64 rng(7);
    const int side = 100;
    auto big = Tensor<float>::uniform({1, 3, side, side}, 0.f, 1.f, rng);
    NoGradGuard ng;
    auto dense = net.forward(big, false);
    auto pmap = vehicle_prob(dense);

    std::uniform_int_distribution<int> cell(0, pmap.h - 1);
    for (int trial = 0; trial < 10; ++trial) {
        const int i = cell(rng), j = cell(rng);
        auto crop = Tensor<float>::create({1, 3, 60, 60});
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 60; ++y)
                for (int x = 0; x < 60; ++x)
                    crop->data[(c * 60 + y) * 60 + x] =
                        big->data[(c * side + (4 * i + y)) * side + (4 * j + x)];
        auto one = net.forward(crop, false);
        auto pc = vehicle_prob(one);
        EXPECT_NEAR(pmap.at(i, j), pc.at(0, 0), 1e-5);
    }
}

TEST(FvpnLoss, BackgroundGatesBboxTermToExactZero) {
    FvpnConfig cfg = desk_config();
    Fvpn<float> net(cfg, 8);
    std::mt19937_64 rng(9);
    auto x = Tensor<float>::uniform({4, 3, 60, 60}, 0.f, 1.f, rng);
    auto heads = net.forward(x);
    std::vector<FvpnTarget> targets(4);
    for (auto& t : targets) {
        t.is_vehicle = false;
        t.t_know = random_unit_vec(cfg.knowledge_dim, rng);
    }
    auto rep = fvpn_loss(heads, targets, cfg);
    EXPECT_EQ(rep.bbox_weighted, 0.f);
    rep.total->backward();
    for (float g : net.head_bbr_w->grad) EXPECT_EQ(g, 0.f);
    for (float g : net.head_bbr_b->grad) EXPECT_EQ(g, 0.f);
    // classification head must still learn
    bool any = false;
    for (float g : net.head_class_w->grad) any = any || g != 0.f;
    EXPECT_TRUE(any);
}

TEST(FvpnLoss, PerfectRegressionGivesZeroBboxTerm) {
    FvpnConfig cfg = desk_config();
    FvpnHeads<float> heads;
    heads.class_logits = Tensor<float>::from({1, 2, 1, 1}, {5.f, -5.f});
    heads.bbr = Tensor<float>::from({1, 4, 1, 1}, {0.1f, 0.2f, 0.5f, 0.8f});
    heads.knowledge = Tensor<float>::full({1, 2, 1, 1}, 0.5f);
    FvpnTarget t;
    t.is_vehicle = true;
    t.loc_t = {0.1f, 0.2f, 0.5f, 0.8f};
    t.t_know = {0.5f, 0.5f};
    FvpnConfig small = cfg;
    small.knowledge_dim = 2;
    auto rep = fvpn_loss(heads, std::vector<FvpnTarget>{t}, small);
    EXPECT_EQ(rep.bbox_weighted, 0.f);
}

TEST(FvpnLoss, HalfPixelErrorGivesAlphaScaledPiecewiseValue) {
    FvpnConfig cfg = desk_config();
    cfg.knowledge_dim = 2;
    FvpnHeads<float> heads;
    heads.class_logits = Tensor<float>::from({1, 2, 1, 1}, {0.f, 0.f});
    heads.bbr = Tensor<float>::from({1, 4, 1, 1}, {0.6f, 0.2f, 0.5f, 0.8f});
    heads.knowledge = Tensor<float>::full({1, 2, 1, 1}, 0.5f);
    FvpnTarget t;
    t.is_vehicle = true;
    t.loc_t = {0.1f, 0.2f, 0.5f, 0.8f};  // one coordinate off by 0.5
    t.t_know = {0.5f, 0.5f};
    auto rep = fvpn_loss(heads, std::vector<FvpnTarget>{t}, cfg);
    EXPECT_NEAR(rep.bbox_weighted, 0.5f * 0.125f, 1e-7);  // alpha * f(0.5)
}

TEST(FvpnLoss, InvalidTargetsRejected) {
    FvpnConfig cfg = desk_config();
    cfg.knowledge_dim = 2;
    FvpnHeads<float> heads;
    heads.class_logits = Tensor<float>::zeros({1, 2, 1, 1});
    heads.bbr = Tensor<float>::full({1, 4, 1, 1}, 0.5f);
    heads.knowledge = Tensor<float>::full({1, 2, 1, 1}, 0.5f);
    FvpnTarget bg;
    bg.is_vehicle = false;
    bg.loc_t = {0.1f, 0.f, 0.f, 0.f};  // background must carry zero box
    bg.t_know = {0.5f, 0.5f};
    EXPECT_THROW(fvpn_loss(heads, std::vector<FvpnTarget>{bg}, cfg), std::invalid_argument);
    FvpnTarget pos;
    pos.is_vehicle = true;
    pos.loc_t = {0.1f, 0.2f, 1.5f, 0.8f};  // outside [0,1]
    pos.t_know = {0.5f, 0.5f};
    EXPECT_THROW(fvpn_loss(heads, std::vector<FvpnTarget>{pos}, cfg), std::invalid_argument);
}

TEST(FvpnLoss, ReportTermsSumToTotal) {
    FvpnConfig cfg = desk_config();
    Fvpn<float> net(cfg, 10);
    std::mt19937_64 rng(11);
    auto x = Tensor<float>::uniform({3, 3, 60, 60}, 0.f, 1.f, rng);
    auto heads = net.forward(x);
    std::vector<FvpnTarget> targets(3);
    std::uniform_real_distribution<float> u(0.1f, 0.4f);
    for (int i = 0; i < 3; ++i) {
        targets[i].is_vehicle = i != 1;
        if (targets[i].is_vehicle) targets[i].loc_t = {u(rng), u(rng), 0.5f, 0.5f};
        targets[i].t_know = random_unit_vec(cfg.knowledge_dim, rng);
    }
    auto rep = fvpn_loss(heads, targets, cfg);
    EXPECT_NEAR(rep.total->item(), rep.bic + rep.bbox_weighted + rep.know_weighted, 1e-6);
    auto no_guide = fvpn_loss(heads, targets, cfg, false);
    EXPECT_EQ(no_guide.know_weighted, 0.f);
    EXPECT_NEAR(no_guide.total->item(), no_guide.bic + no_guide.bbox_weighted, 1e-6);
}

TEST(FvpnLoss, OverfitsSinglePositiveSampleMonotonically) {
    FvpnConfig cfg = desk_config();
    cfg.knowledge_dim = 8;
    Fvpn<float> net(cfg, 12);
    std::mt19937_64 rng(13);
    auto x = Tensor<float>::uniform({1, 3, 60, 60}, 0.f, 1.f, rng);
    FvpnTarget t;
    t.is_vehicle = true;
    t.loc_t = {0.2f, 0.25f, 0.6f, 0.5f};
    t.t_know = random_unit_vec(8, rng);
    SgdOptimizer<float> opt(net.params(), 5e-3f, 0.f, 0.f);
    float prev = std::numeric_limits<float>::infinity();
    for (int step = 0; step < 50; ++step) {
        auto heads = net.forward(x);
        auto rep = fvpn_loss(heads, std::vector<FvpnTarget>{t}, cfg);
        const float cur = rep.total->item();
        EXPECT_LT(cur, prev + 1e-6f) << "step " << step;
        prev = cur;
        rep.total->backward();
        opt.step();
    }
}

TEST(CellToWindow, MatchesStrideArithmetic) {
    FvpnConfig cfg;
    auto w0 = cell_to_window(0, 0, 1.f, cfg);
    EXPECT_FLOAT_EQ(w0.x, 0.f);
    EXPECT_FLOAT_EQ(w0.y, 0.f);
    EXPECT_FLOAT_EQ(w0.side, 60.f);

    auto w1 = cell_to_window(3, 5, 1.f, cfg);
    EXPECT_FLOAT_EQ(w1.x, 20.f);
    EXPECT_FLOAT_EQ(w1.y, 12.f);
    EXPECT_FLOAT_EQ(w1.side, 60.f);

    auto w2 = cell_to_window(0, 0, 0.5f, cfg);
    EXPECT_FLOAT_EQ(w2.x, 0.f);
    EXPECT_FLOAT_EQ(w2.y, 0.f);
    EXPECT_FLOAT_EQ(w2.side, 120.f);
}

TEST(FvpnCheckpoint, RoundTripReproducesOutputs) {
    namespace fs = std::filesystem;
    FvpnConfig cfg = desk_config();
    Fvpn<float> net(cfg, 14);
    std::mt19937_64 rng(15);
    auto x = Tensor<float>::uniform({1, 3, 60, 60}, 0.f, 1.f, rng);
    NoGradGuard ng;
    auto before = net.forward(x);

    const auto path = (fs::temp_directory_path() / "fvpn_roundtrip.ckpt").string();
    std::vector<NamedTensor> tensors;
    net.append_checkpoint(tensors);
    write_checkpoint(path, tensors);
    auto loaded = Fvpn<float>::from_checkpoint(read_checkpoint(path));
    auto after = loaded.forward(x);
    for (std::size_t i = 0; i < before.class_logits->data.size(); ++i)
        EXPECT_EQ(before.class_logits->data[i], after.class_logits->data[i]);
    fs::remove(path);
}
