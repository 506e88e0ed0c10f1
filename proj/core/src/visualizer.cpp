#include "cpnav/visualizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "cpnav/checkpoint.hpp"
#include "cpnav/image.hpp"
#include "cpnav/rng.hpp"

namespace cpnav {

namespace fs = std::filesystem;

void validate(const VizConfig& c) {
    if (c.steps < 0) throw DomainError("visualization steps must be non-negative");
    if (!(c.step_size > 0)) throw DomainError("visualization step size must be positive");
    if (!(c.l2_decay >= 0 && c.l2_decay < 1)) throw DomainError("l2_decay must lie in [0, 1)");
    if (c.blur_every < 0) throw DomainError("blur_every must be non-negative");
    if (c.blur_every > 0 && !(c.blur_sigma > 0)) throw DomainError("blur sigma must be positive");
}

Tensor visualization_init(const Shape& shape, std::uint64_t seed) {
    Tensor x(shape);
    Rng rng(mix_seed(seed, 0x7215));
    for (float& v : x.values()) v = static_cast<float>(rng.uniform(0.4, 0.6));
    return x;
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
    if (image.rank() != 3) throw DimensionError("blur expects a (C,H,W) image, got " + shape_str(image.shape()));
    if (!(sigma > 0)) throw DomainError("blur sigma must be positive");
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) total += k[static_cast<std::size_t>(i + radius)] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    for (float& v : k) v = static_cast<float>(v / total);

    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    Tensor tmp(image.shape()), out(image.shape());
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                float acc = 0.0f;
                for (int i = -radius; i <= radius; ++i) acc += k[static_cast<std::size_t>(i + radius)] * image.at(c, y, std::clamp(x + i, 0, W - 1));
                tmp.at(c, y, x) = acc;
            }
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                float acc = 0.0f;
                for (int i = -radius; i <= radius; ++i) acc += k[static_cast<std::size_t>(i + radius)] * tmp.at(c, std::clamp(y + i, 0, H - 1), x);
                out.at(c, y, x) = acc;
            }
    return out;
}

ClassVisualization class_model_visualization(const Network& network, int class_id, const VizConfig& config) {
    validate(config);
    if (class_id < 0 || class_id >= network.num_classes()) throw DomainError("class id " + std::to_string(class_id) + " out of range");
    ClassVisualization out;
    out.class_id = class_id;
    out.image = visualization_init(network.input_shape(), config.seed);
    const auto decay = static_cast<float>(1.0 - config.l2_decay);
    const auto score_of = [&](const ScoreGradient& g) {
        out.score_trace.push_back(g.score);
        if (!std::isfinite(g.score)) throw VisualizationDiverged("class score became non-finite", out.score_trace);
    };
    for (int step = 0; step < config.steps; ++step) {
        ScoreGradient g;
        try {
            g = class_score_gradient(network, out.image, class_id);
        } catch (const NumericError& e) {
            throw VisualizationDiverged(e.what(), out.score_trace);
        }
        score_of(g);
        double norm = 0.0;
        for (float v : g.input_grad.values()) norm += static_cast<double>(v) * v;
        const auto scale = static_cast<float>(config.step_size / (std::sqrt(norm) + 1e-8));
        auto& x = out.image.values();
        const auto& grad = g.input_grad.values();
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] + scale * grad[i]) * decay;
        if (config.blur_every > 0 && (step + 1) % config.blur_every == 0) out.image = gaussian_blur(out.image, config.blur_sigma);
        for (float& v : out.image.values()) v = std::clamp(v, 0.0f, 1.0f);
    }
    try {
        score_of(class_score_gradient(network, out.image, class_id));
    } catch (const NumericError& e) {
        if (dynamic_cast<const VisualizationDiverged*>(&e)) throw;
        throw VisualizationDiverged(e.what(), out.score_trace);
    }
    return out;
}

ScoreTrend score_trend(const std::vector<double>& trace, int window) {
    if (window < 1) throw DomainError("smoothing window must be positive");
    ScoreTrend t;
    if (trace.size() < 2) return t;
    t.rise = trace.back() - trace.front();
    const auto w = static_cast<std::size_t>(window);
    if (trace.size() < 2 * w) {
        t.strict = t.within_noise = t.rise > 0;
        return t;
    }
    std::vector<double> means, spread;
    for (std::size_t i = 0; i + w <= trace.size(); i += w) {
        double m = 0.0, v = 0.0;
        for (std::size_t j = i; j < i + w; ++j) m += trace[j];
        m /= static_cast<double>(w);
        for (std::size_t j = i; j < i + w; ++j) v += (trace[j] - m) * (trace[j] - m);
        means.push_back(m);
        spread.push_back(std::sqrt(v / static_cast<double>(w)));
    }
    t.strict = t.within_noise = means.back() > means.front();
    double best = means.front();
    for (std::size_t i = 1; i < means.size(); ++i) {
        if (means[i] < means[i - 1]) t.strict = false;
        if (means[i] + spread[i] < best) t.within_noise = false;
        best = std::max(best, means[i]);
    }
    return t;
}

bool smoothed_score_increases(const std::vector<double>& trace, int window) { return score_trend(trace, window).within_noise; }

Tensor saliency_map(const Network& network, const Tensor& image, int class_id) {
    if (image.rank() != 3) throw DimensionError("saliency expects a (C,H,W) image");
    const ScoreGradient g = class_score_gradient(network, image, class_id);
    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    Tensor s({1, H, W});
    float peak = 0.0f;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            float m = 0.0f;
            for (int c = 0; c < C; ++c) m = std::max(m, std::abs(g.input_grad.at(c, y, x)));
            s.at(0, y, x) = m;
            peak = std::max(peak, m);
        }
    if (peak > 0.0f)
        for (float& v : s.values()) v /= peak;
    return s;
}

Tensor heat_color(const Tensor& saliency) {
    if (saliency.rank() != 3 || saliency.dim(0) != 1) throw DimensionError("heat colour expects a (1,H,W) map");
    const int H = saliency.dim(1), W = saliency.dim(2);
    Tensor out({3, H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const float v = std::clamp(saliency.at(0, y, x), 0.0f, 1.0f);
            out.at(0, y, x) = std::clamp(3.0f * v, 0.0f, 1.0f);
            out.at(1, y, x) = std::clamp(3.0f * v - 1.0f, 0.0f, 1.0f);
            out.at(2, y, x) = std::clamp(3.0f * v - 2.0f, 0.0f, 1.0f);
        }
    return out;
}

Tensor saliency_overlay(const Tensor& frame, const Tensor& saliency) {
    const Tensor heat = heat_color(saliency);
    if (frame.shape() != heat.shape()) throw DimensionError("overlay frame " + shape_str(frame.shape()) + " vs map " + shape_str(saliency.shape()));
    Tensor out(frame.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5f * frame[i] + 0.5f * heat[i];
    return out;
}

std::vector<std::int64_t> top_scoring_images(const Network& network, const ImageStore& images, int class_id, std::size_t k) {
    if (class_id < 0 || class_id >= network.num_classes()) throw DomainError("class id " + std::to_string(class_id) + " out of range");
    std::vector<std::pair<double, std::int64_t>> scored;
    scored.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i)
        scored.emplace_back(class_scores(network, images.image(i))[static_cast<std::size_t>(class_id)], images.id(i));
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::int64_t> ids;
    for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) ids.push_back(scored[i].second);
    return ids;
}

OcclusionResult occlusion_check(const Network& network, const Tensor& image, int class_id, double fraction,
                                std::uint64_t seed) {
    if (!(fraction > 0 && fraction < 1)) throw DomainError("occlusion fraction must lie in (0, 1)");
    const Tensor s = saliency_map(network, image, class_id);
    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    const auto n = static_cast<std::size_t>(H) * static_cast<std::size_t>(W);
    // The baseline is a random square region; both sets hold side^2 pixels.
    const int side = std::clamp(static_cast<int>(std::lround(std::sqrt(fraction * static_cast<double>(n)))), 1, std::min(H, W));
    const auto count = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    Rng rng(mix_seed(seed, 0x0CC1));
    const auto y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(H - side + 1)));
    const auto x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(W - side + 1)));
    std::vector<std::size_t> random;
    for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x) random.push_back(static_cast<std::size_t>(y) * static_cast<std::size_t>(W) + static_cast<std::size_t>(x));

    const double base = class_scores(network, image)[static_cast<std::size_t>(class_id)];
    const auto occluded_delta = [&](const std::vector<std::size_t>& pixels) {
        Tensor x = image;
        for (std::size_t i = 0; i < count; ++i)
            for (int c = 0; c < C; ++c) x[static_cast<std::size_t>(c) * n + pixels[i]] = 0.0f;
        return std::abs(class_scores(network, x)[static_cast<std::size_t>(class_id)] - base);
    };
    return {occluded_delta(order), occluded_delta(random)};
}

namespace {

std::string class_file_name(int class_id) {
    if (class_id >= 0 && class_id < kNumCommands) return std::string(command_name(command_from_index(class_id)));
    return "class_" + std::to_string(class_id);
}

}  // namespace

std::vector<fs::path> emit_report(const fs::path& dir, const std::vector<ClassVisualization>& models,
                                  const std::vector<SaliencyPanel>& panels) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());
    std::vector<fs::path> files;
    std::string index;
    for (const ClassVisualization& m : models) {
        const std::string name = "classviz_" + class_file_name(m.class_id) + ".ppm";
        write_ppm(dir / name, m.image);
        files.push_back(dir / name);
        char line[160];
        std::snprintf(line, sizeof line, "%s class=%d score_start=%.6g score_end=%.6g\n", name.c_str(), m.class_id,
                      m.score_trace.empty() ? 0.0 : m.score_trace.front(), m.score_trace.empty() ? 0.0 : m.score_trace.back());
        index += line;
    }
    std::vector<int> rank(static_cast<std::size_t>(std::max(kNumCommands, 1)), 0);
    for (const SaliencyPanel& p : panels) {
        if (p.class_id >= static_cast<int>(rank.size())) rank.resize(static_cast<std::size_t>(p.class_id) + 1, 0);
        const int r = p.class_id >= 0 ? rank[static_cast<std::size_t>(p.class_id)]++ : 0;
        const std::string name = "saliency_" + class_file_name(p.class_id) + "_" + std::to_string(r) + ".ppm";
        write_ppm(dir / name, saliency_overlay(p.frame, p.saliency));
        files.push_back(dir / name);
        index += name + " class=" + std::to_string(p.class_id) + " sample=" + std::to_string(p.sample_id) + "\n";
    }
    write_file_atomic(dir / "index.txt", index);
    files.push_back(dir / "index.txt");
    return files;
}

}  // namespace cpnav
