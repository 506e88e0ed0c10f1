
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>

#include "cpnav/checkpoint.hpp"
#include "cpnav/image.hpp"
#include "cpnav/rng.hpp"
#include "cpnav/visualizer.hpp"
#include "support/scratch.hpp"

using namespace cpnav;
namespace fs = std::filesystem;

namespace {

const Shape kImage{3, 64, 64};
constexpr int kPixels = 3 * 64 * 64;

// Flatten + one dense layer: score_k = w_k . x + b_k.
Network linear_stub(const std::function<float(int k, int i)>& weight) {
    std::vector<LayerSpec> layers = {simple_spec(LayerKind::Flatten), dense_spec(kPixels, kNumCommands)};
    LayerParams dense{Tensor({kNumCommands, kPixels}), Tensor({kNumCommands})};
    for (int k = 0; k < kNumCommands; ++k)
        for (int i = 0; i < kPixels; ++i) dense.weights[static_cast<std::size_t>(k) * kPixels + static_cast<std::size_t>(i)] = weight(k, i);
    return Network(kImage, command_class_names(), std::move(layers), {LayerParams{}, std::move(dense)});
}

Tensor random_image(std::uint64_t seed) {
    Tensor x(kImage);
    Rng rng(seed);
    for (float& v : x.values()) v = static_cast<float>(rng.uniform());
    return x;
}

fs::path fresh_dir(const std::string& name) { return cpnav::fixtures::scratch_path("cpnav_viz_", name); }

}  // namespace

TEST(ClassViz, ZeroStepsReturnsInitBitwise) {
    const Network n = build_micronet(kImage, 3);
    VizConfig c;
    c.steps = 0;
    c.seed = 17;
    const ClassVisualization v = class_model_visualization(n, 2, c);
    EXPECT_EQ(v.image, visualization_init(kImage, 17));
    ASSERT_EQ(v.score_trace.size(), 1u);
    for (float x : v.image.values()) {
        EXPECT_GE(x, 0.4f);
        EXPECT_LE(x, 0.6f);
    }
}

TEST(ClassViz, ZeroGradientDecaysGeometrically) {
    const Network n = linear_stub([](int, int) { return 0.0f; });
    VizConfig c;
    c.steps = 10;
    c.blur_every = 0;
    c.l2_decay = 0.01;
    c.seed = 4;
    const ClassVisualization v = class_model_visualization(n, 0, c);
    const Tensor init = visualization_init(kImage, 4);
    const double f = std::pow(0.99, 10);
    for (std::size_t i = 0; i < init.size(); ++i) ASSERT_NEAR(v.image[i], init[i] * f, 1e-6);
}

TEST(ClassViz, LinearNonNegativeHeadScoreRises) {
    const Network n = linear_stub([](int k, int i) { return static_cast<float>((i * 7 + k * 13) % 5) * 1e-3f; });
    for (int k = 0; k < kNumCommands; ++k) {
        VizConfig c;
        c.steps = 40;
        c.seed = static_cast<std::uint64_t>(k);
        const ClassVisualization v = class_model_visualization(n, k, c);
        EXPECT_GT(v.score_trace.back(), v.score_trace.front()) << "class " << k;
        EXPECT_TRUE(smoothed_score_increases(v.score_trace, 10)) << "class " << k;
    }
}

TEST(ClassViz, NeverTouchesNetworkAndRejectsBadInput) {
    const Network n = build_micronet(kImage, 5);
    const Network before = n;
    VizConfig c;
    c.steps = 6;
    const ClassVisualization v = class_model_visualization(n, 1, c);
    EXPECT_EQ(n, before);
    EXPECT_EQ(v.score_trace.size(), 7u);
    for (float x : v.image.values()) {
        EXPECT_GE(x, 0.0f);
        EXPECT_LE(x, 1.0f);
    }
    EXPECT_THROW(class_model_visualization(n, 6, c), DomainError);
    c.l2_decay = 1.0;
    EXPECT_THROW(class_model_visualization(n, 0, c), DomainError);
}

TEST(ClassViz, SmoothedIncreaseCriterion) {
    std::vector<double> rising, dip, flat(60, 1.0);
    for (int i = 0; i < 60; ++i) rising.push_back(i + ((i % 4 == 3) ? -2.5 : 0.0));  // transient blur dips
    for (int i = 0; i < 60; ++i) dip.push_back(i < 20 ? i : (i < 40 ? 0.0 : 50.0));
    EXPECT_TRUE(smoothed_score_increases(rising, 20));
    EXPECT_FALSE(smoothed_score_increases(dip, 20));
    EXPECT_FALSE(smoothed_score_increases(flat, 20));
}

TEST(Blur, PreservesConstantsAndMass) {
    const Tensor gray(kImage, 0.3f);
    const Tensor b = gaussian_blur(gray, 0.5);
    for (float v : b.values()) EXPECT_NEAR(v, 0.3f, 1e-6);
    Tensor dot(Shape{1, 9, 9});
    dot.at(0, 4, 4) = 1.0f;
    const Tensor s = gaussian_blur(dot, 0.5);
    double total = 0.0;
    for (float v : s.values()) total += v;
    EXPECT_NEAR(total, 1.0, 1e-6);
    EXPECT_LT(s.at(0, 4, 4), 1.0f);
    EXPECT_NEAR(s.at(0, 3, 4), s.at(0, 5, 4), 1e-7);
    EXPECT_THROW(gaussian_blur(dot, 0.0), DomainError);
}

TEST(Saliency, LinearHeadGivesChannelMaxOfWeights) {
    const Network n = linear_stub([](int k, int i) { return std::sin(0.37f * static_cast<float>(i) + static_cast<float>(k)); });
    const int k = 3;
    const Tensor s = saliency_map(n, random_image(1), k);
    ASSERT_EQ(s.shape(), (Shape{1, 64, 64}));
    const Tensor& w = n.params(1).weights;
    float peak = 0.0f;
    std::vector<float> expect(64 * 64);
    for (int p = 0; p < 64 * 64; ++p) {
        float m = 0.0f;
        for (int c = 0; c < 3; ++c) m = std::max(m, std::abs(w[static_cast<std::size_t>(k) * kPixels + static_cast<std::size_t>(c * 4096 + p)]));
        expect[static_cast<std::size_t>(p)] = m;
        peak = std::max(peak, m);
    }
    for (int p = 0; p < 64 * 64; ++p) ASSERT_NEAR(s[static_cast<std::size_t>(p)], expect[static_cast<std::size_t>(p)] / peak, 1e-6);
}

TEST(Saliency, ZeroWeightsGiveZeroMap) {
    const Network n = linear_stub([](int, int) { return 0.0f; });
    const Tensor s = saliency_map(n, random_image(2), 0);
    for (float v : s.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Saliency, RandomNetworkMapIsNonNegativeUnitPeak) {
    const Network n = build_micronet(kImage, 6);
    for (int k = 0; k < kNumCommands; ++k) {
        const Tensor s = saliency_map(n, random_image(static_cast<std::uint64_t>(k)), k);
        ASSERT_EQ(s.shape(), (Shape{1, 64, 64}));
        float peak = 0.0f;
        for (float v : s.values()) {
            EXPECT_GE(v, 0.0f);
            peak = std::max(peak, v);
        }
        EXPECT_FLOAT_EQ(peak, 1.0f);
    }
}

TEST(Saliency, OcclusionBeatsRandomOnLinearHead) {
    // weights concentrated on a patch: occluding salient pixels must matter more
    const Network n = linear_stub([](int, int i) {
        const int p = i % 4096, y = p / 64, x = p % 64;
        return (y >= 20 && y < 40 && x >= 10 && x < 30) ? 1.0f : 0.01f;
    });
    int passed = 0;
    for (int f = 0; f < 20; ++f) passed += occlusion_check(n, random_image(100 + static_cast<std::uint64_t>(f)), 0, 0.1, static_cast<std::uint64_t>(f)).passed();
    EXPECT_EQ(passed, 20);
    EXPECT_THROW(occlusion_check(n, random_image(1), 0, 0.0, 0), DomainError);
}

TEST(Saliency, OverlayIsFixedBlend) {
    const Tensor frame = random_image(3);
    Tensor s({1, 64, 64});
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<float>(i % 64) / 63.0f;
    const Tensor o = saliency_overlay(frame, s), heat = heat_color(s);
    for (std::size_t i = 0; i < o.size(); ++i) ASSERT_FLOAT_EQ(o[i], 0.5f * frame[i] + 0.5f * heat[i]);
    EXPECT_EQ(heat.at(0, 0, 0), 0.0f);
    EXPECT_EQ(heat.at(2, 0, 63), 1.0f);
}

TEST(TopScoring, BrightnessStubRanksByBrightness) {
    const Network n = linear_stub([](int, int) { return 1.0f / kPixels; });
    ImageStore store;
    const std::vector<float> levels = {0.2f, 0.9f, 0.5f, 0.7f, 0.1f};
    for (std::size_t i = 0; i < levels.size(); ++i) store.add(Tensor(kImage, levels[i]), FlightCommand::Stop, static_cast<std::int64_t>(10 + i));
    EXPECT_EQ(top_scoring_images(n, store, 0, 50), (std::vector<std::int64_t>{11, 13, 12, 10, 14}));
    EXPECT_EQ(top_scoring_images(n, store, 0, 2), (std::vector<std::int64_t>{11, 13}));
    EXPECT_EQ(top_scoring_images(n, store, 0, 50), top_scoring_images(n, store, 0, 50));
    // ties fall back to id order
    ImageStore ties;
    for (std::int64_t id : {5, 2, 9}) ties.add(Tensor(kImage, 0.5f), FlightCommand::Stop, id);
    EXPECT_EQ(top_scoring_images(n, ties, 4, 3), (std::vector<std::int64_t>{2, 5, 9}));
}

TEST(Report, FilesAreNamedAndDeterministic) {
    const Network n = build_micronet(kImage, 8);
    VizConfig c;
    c.steps = 2;
    std::vector<ClassVisualization> models;
    for (int k = 0; k < kNumCommands; ++k) models.push_back(class_model_visualization(n, k, c));
    std::vector<SaliencyPanel> panels;
    for (int i = 0; i < 3; ++i) {
        const Tensor f = quantize_rgb8(random_image(static_cast<std::uint64_t>(i)));
        panels.push_back({5, i, f, saliency_map(n, f, 5)});
    }
    const fs::path a = fresh_dir("a"), b = fresh_dir("b");
    const auto fa = emit_report(a, models, panels);
    emit_report(b, models, panels);
    EXPECT_EQ(fa.size(), 6u + 3u + 1u);
    for (int k = 0; k < kNumCommands; ++k)
        EXPECT_TRUE(fs::exists(a / ("classviz_" + std::string(command_name(command_from_index(k))) + ".ppm")));
    EXPECT_TRUE(fs::exists(a / "saliency_stop_2.ppm"));
    for (const auto& p : fa) EXPECT_EQ(read_file_bytes(p), read_file_bytes(b / p.filename())) << p;
}
