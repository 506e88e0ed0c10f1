// Runs every primary acceptance gate and prints one PASS/FAIL line each.
// Exit status is the number of failed gates.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <unistd.h>

#include "CLI11.hpp"

#include "cpnav/checkpoint.hpp"
#include "cpnav/controller.hpp"
#include "cpnav/dataset.hpp"
#include "cpnav/expert.hpp"
#include "cpnav/ops.hpp"
#include "cpnav/render.hpp"
#include "cpnav/rng.hpp"
#include "cpnav/trainer.hpp"
#include "cpnav/visualizer.hpp"
#include "cpnav/world_io.hpp"

#include "support/table1_fixture.hpp"

using namespace cpnav;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

double seconds_since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

std::string fmt(double v, int precision = 3) {
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(precision);
    o << v;
    return o.str();
}

struct Gate {
    bool pass = false;
    std::string detail;
};

// Collects failures as text; a gate passes when nothing was recorded.
struct Checks {
    std::vector<std::string> failures;
    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    Gate gate(std::string detail) const {
        if (!failures.empty()) detail += "; failed: " + failures.front() +
                                         (failures.size() > 1 ? " (+" + std::to_string(failures.size() - 1) + " more)" : "");
        return {failures.empty(), detail};
    }
};

// ------------------------------------------------------------------ numerical core

template <typename T>
BasicTensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    BasicTensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

Tensor64 conv_oracle(const Tensor64& in, const Tensor64& w, const Tensor64& b, int stride, int pad) {
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int oh = (H + 2 * pad - kh) / stride + 1, ow = (W + 2 * pad - kw) / stride + 1;
    Tensor64 out({Co, oh, ow});
    for (int co = 0; co < Co; ++co)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double s = b[static_cast<std::size_t>(co)];
                for (int c = 0; c < C; ++c)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = y * stride - pad + ky, ix = x * stride - pad + kx;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            s += in.at(c, iy, ix) * w[((static_cast<std::size_t>(co) * C + c) * kh + ky) * kw + kx];
                        }
                out.at(co, y, x) = s;
            }
    return out;
}

double fd_check(Tensor64& x, const Tensor64& analytic, const std::function<double()>& objective, double h = 1e-3) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double up = objective();
        x[i] = orig - h;
        const double down = objective();
        x[i] = orig;
        const double num = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(analytic[i] - num) / std::max({std::abs(analytic[i]), std::abs(num), 1e-6}));
    }
    return worst;
}

double weighted_sum(const Tensor64& out, const Tensor64& r) {
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
    return s;
}

Gate numerical_core() {
    const auto t0 = clk::now();
    double conv_worst = 0.0;
    int cases = 0;
    Rng grid(2024);
    for (int c = 1; c <= 4; ++c)
        for (int hw = 3; hw <= 9; hw += 2)
            for (int k = 1; k <= 3; ++k)
                for (int stride = 1; stride <= 2; ++stride)
                    for (int pad = 0; pad <= 1; ++pad) {
                        const int co = 1 + static_cast<int>(grid.below(4));
                        Tensor64 in = random_tensor<double>({c, hw, std::max(k, hw - 1)}, grid);
                        Tensor64 w = random_tensor<double>({co, c, k, k}, grid);
                        Tensor64 b = random_tensor<double>({co}, grid);
                        const Tensor64 expect = conv_oracle(in, w, b, stride, pad);
                        const Tensor64 got = ops::conv2d_forward(in, w, b, stride, pad);
                        for (std::size_t i = 0; i < got.size(); ++i)
                            conv_worst = std::max(conv_worst, std::abs(got[i] - expect[i]));
                        ++cases;
                    }

    std::map<std::string, double> worst;
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
        Rng rng(seed);
        {
            Tensor64 in = random_tensor<double>({2, 5, 5}, rng), w = random_tensor<double>({3, 2, 3, 3}, rng),
                     b = random_tensor<double>({3}, rng);
            ops::ConvCache<double> cache;
            const Tensor64 out = ops::conv2d_forward(in, w, b, 2, 1, &cache);
            const Tensor64 r = random_tensor<double>(out.shape(), rng);
            const auto g = ops::conv2d_backward(r, cache, w);
            auto obj = [&] { return weighted_sum(ops::conv2d_forward(in, w, b, 2, 1), r); };
            worst["conv2d"] = std::max({worst["conv2d"], fd_check(in, g.input, obj), fd_check(w, g.weights, obj),
                                        fd_check(b, g.bias, obj)});
        }
        {
            Tensor64 in = random_tensor<double>({2, 4, 4}, rng);
            for (double& v : in.data()) v += v < 0 ? -0.05 : 0.05;  // away from the kink
            const Tensor64 r = random_tensor<double>(in.shape(), rng);
            const Tensor64 g = ops::relu_backward(r, in);
            worst["relu"] = std::max(worst["relu"], fd_check(in, g, [&] { return weighted_sum(ops::relu_forward(in), r); }));
        }
        {
            Tensor64 in({2, 4, 6});
            std::vector<double> vals(in.size());
            std::iota(vals.begin(), vals.end(), 0.0);
            for (std::size_t i = vals.size(); i > 1; --i) std::swap(vals[i - 1], vals[rng.below(i)]);
            for (std::size_t i = 0; i < vals.size(); ++i) in[i] = 0.01 * vals[i];
            ops::PoolCache cache;
            const Tensor64 out = ops::maxpool2d_forward(in, 2, 2, &cache);
            const Tensor64 r = random_tensor<double>(out.shape(), rng);
            const Tensor64 g = ops::maxpool2d_backward(r, cache);
            worst["maxpool2d"] = std::max(
                worst["maxpool2d"], fd_check(in, g, [&] { return weighted_sum(ops::maxpool2d_forward(in, 2, 2), r); }));
        }
        {
            Tensor64 in = random_tensor<double>({2, 3, 3}, rng), w = random_tensor<double>({5, 18}, rng),
                     b = random_tensor<double>({5}, rng);
            const Tensor64 r = random_tensor<double>({5}, rng);
            const auto g = ops::dense_backward(r, in.reshaped({18}), w);
            const Tensor64 back = g.input.reshaped(in.shape());
            auto obj = [&] { return weighted_sum(ops::dense_forward(in.reshaped({18}), w, b), r); };
            Tensor64 flat = in.reshaped({18});
            auto obj_flat = [&] { return weighted_sum(ops::dense_forward(flat, w, b), r); };
            worst["flatten"] = std::max(worst["flatten"], fd_check(in, back, obj));
            worst["dense"] = std::max({worst["dense"], fd_check(flat, g.input, obj_flat), fd_check(w, g.weights, obj_flat),
                                       fd_check(b, g.bias, obj_flat)});
        }
        {
            Tensor64 z = random_tensor<double>({6}, rng, -3, 3);
            const Tensor64 r = random_tensor<double>({6}, rng);
            const Tensor64 g = ops::softmax_backward(r, ops::softmax(z));
            worst["softmax"] = std::max(worst["softmax"], fd_check(z, g, [&] { return weighted_sum(ops::softmax(z), r); }));
            const int label = static_cast<int>(rng.below(6));
            const auto lg = ops::softmax_cross_entropy(z, label);
            worst["cross_entropy"] =
                std::max(worst["cross_entropy"],
                         fd_check(z, lg.logit_grad, [&] { return ops::softmax_cross_entropy(z, label).loss; }));
        }
    }
    const double elapsed = seconds_since(t0);

    Checks c;
    c.expect(conv_worst <= 1e-6, "conv oracle error " + std::to_string(conv_worst));
    double grad_worst = 0.0;
    for (const auto& [kind, e] : worst) {
        c.expect(e < 1e-3, kind + " gradient error " + std::to_string(e));
        grad_worst = std::max(grad_worst, e);
    }
    c.expect(elapsed < 60.0, "runtime " + fmt(elapsed, 1) + " s");
    std::ostringstream d;
    d << "conv oracle max err " << conv_worst << " over " << cases << " shapes, max grad rel err " << grad_worst
      << " over " << worst.size() << " layer kinds x 10 seeds, " << fmt(elapsed, 1) << " s";
    return c.gate(d.str());
}

// ------------------------------------------------------------------ loss sanity

// Up to `per_class` frames of each command from perturbed rollouts.
ImageStore balanced_frames(int per_class, std::uint64_t seed) {
    ImageStore store;
    std::array<int, kNumCommands> have{};
    const auto full = [&] { return std::all_of(have.begin(), have.end(), [&](int h) { return h >= per_class; }); };
    for (int w = 0; !full(); ++w) {
        const FloorPlan plan = generate_world(seed + static_cast<std::uint64_t>(w), kAllLayouts[w % 4], w % kNumThemes);
        RolloutOptions o;
        o.seed = seed + static_cast<std::uint64_t>(w);
        o.perturb_prob = 0.3;
        o.stop_views = 4;
        const Trajectory t = rollout_expert(plan, {}, o);
        for (std::size_t i = 0; i < t.steps.size(); i += 2) {
            int& h = have[static_cast<std::size_t>(to_index(t.steps[i].command))];
            if (h >= per_class) continue;
            ++h;
            store.add(t.steps[i].frame, t.steps[i].command, static_cast<std::int64_t>(store.size()));
        }
    }
    return store;
}

Gate loss_sanity() {
    const double ce = ops::softmax_cross_entropy(Tensor64({6}), 0).loss;
    const double ce_err = std::abs(ce - std::log(6.0));

    const ImageStore pool = balanced_frames(11, 300);
    ImageStore data;
    for (std::size_t i = 0; i < 64; ++i) data.add(pool.image(i), pool.label(i), pool.id(i));
    TrainConfig cfg;
    cfg.iterations = 500;
    cfg.seed = 4;
    const TrainResult r = finetune(replace_head(build_micronet({3, 64, 64}, 10), kNumCommands, 10.0, 11), data, nullptr, cfg);
    const double acc = evaluate(r.network, data).accuracy;

    Checks c;
    c.expect(ce_err <= 1e-6, "uniform CE off by " + std::to_string(ce_err));
    c.expect(acc == 1.0, "overfit accuracy " + fmt(acc, 4));
    return c.gate("uniform 6-class CE " + fmt(ce, 9) + " (ln 6 = " + fmt(std::log(6.0), 9) + "), overfit 64 samples in 500 it: " +
                  fmt(100 * acc, 1) + "%");
}

// ------------------------------------------------------------------ fine-tuning semantics

Gate fine_tuning() {
    Checks c;
    const Network base = build_micronet({3, 64, 64}, 3);
    const Network fresh = replace_head(base, kNumCommands, 10.0, 77);
    const std::size_t head = head_layer_index(base);
    int preserved = 0;
    for (std::size_t i = 0; i < base.num_layers(); ++i) {
        if (i == head) continue;
        const bool same = base.params(i) == fresh.params(i) && base.layer(i) == fresh.layer(i);
        c.expect(same, "replace_head changed layer " + std::to_string(i));
        preserved += same;
    }
    c.expect(fresh.layer(head).lr_mult == 10.0, "head lr_mult not applied");

    Network n = replace_head(build_micronet({3, 64, 64}, 12), kNumCommands, 10.0, 13);
    for (std::size_t i = 0; i < n.num_layers(); ++i)
        if (i != head) n.set_lr_mult(i, 0.0);
    const ImageStore data = balanced_frames(3, 2);
    TrainConfig cfg;
    cfg.iterations = 60;
    cfg.batch_size = 8;
    const TrainResult r = finetune(n, data, nullptr, cfg);
    int frozen = 0;
    for (std::size_t i = 0; i < n.num_layers(); ++i) {
        if (i == head) continue;
        const bool same = r.network.params(i) == n.params(i);
        c.expect(same, "frozen layer " + std::to_string(i) + " moved");
        frozen += same;
    }
    c.expect(r.network.params(head) != n.params(head), "head did not train");

    int mirror = 0;
    for (const auto& a : augmentation_registry()) {
        std::string name(a.name);
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        const bool bad = a.geometric || name.find("mirror") != std::string::npos || name.find("flip") != std::string::npos;
        c.expect(!bad, "registry contains " + name);
        mirror += bad;
    }
    return c.gate("replace_head kept " + std::to_string(preserved) + " non-head layers bitwise, lr_mult=0 kept " +
                  std::to_string(frozen) + " layers bitwise over " + std::to_string(cfg.iterations) +
                  " iterations, mirror transforms in registry: " + std::to_string(mirror));
}

// ------------------------------------------------------------------ dataset protocol

Gate dataset_protocol(const fs::path& work) {
    Checks c;
    const fs::path dir = work / "augment";
    fs::remove_all(dir);
    std::size_t clean = 0, after = 0;
    {
        ManifestWriter w(dir);
        RecordConfig rc;
        rc.worlds = 7;
        rc.seed = 40;
        record_expert_dataset(w, rc);
        clean = w.snapshot().samples.size();
        const Manifest m = augment_gaussian(w, 0.0, 0.01, 9);
        after = m.samples.size();
        std::set<std::int64_t> parents;
        for (const auto& r : m.samples)
            if (r.source == SampleSource::Augmented) c.expect(r.parent_id && parents.insert(*r.parent_id).second, "parent noised twice");
        c.expect(parents.size() == clean, "augmented copies do not cover every clean sample");
    }
    c.expect(after == 2 * clean, "augment gave " + std::to_string(after) + " from " + std::to_string(clean));
    fs::remove_all(dir);

    const Tensor gray({3, kFrameSize, kFrameSize}, 0.5f);
    const Tensor noisy = add_gaussian_noise(gray, 0.0, 0.01, 0);
    double mean = 0.0, var = 0.0;
    for (float v : noisy.values()) mean += v;
    mean /= static_cast<double>(noisy.size());
    for (float v : noisy.values()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(noisy.size()) - 1.0;
    c.expect(var >= 0.008 && var <= 0.012, "noise variance " + fmt(var, 5));

    const ClassCountTable t = class_counts(fixtures::table1_manifest());
    const auto mf = t.totals[to_index(FlightCommand::MoveForward)], st = t.totals[to_index(FlightCommand::Stop)],
               sl = t.totals[to_index(FlightCommand::SpinLeft)];
    c.expect(mf == 91856 && st == 36632 && sl == 5138, "class totals differ from the fixture table");
    return c.gate("augment " + std::to_string(clean) + " -> " + std::to_string(after) + ", mid-gray noise variance " +
                  fmt(var, 5) + ", totals MF " + std::to_string(mf) + " Stop " + std::to_string(st) + " Spin Left " +
                  std::to_string(sl));
}

// ------------------------------------------------------------------ expert safety

Gate expert_safety() {
    const auto t0 = clk::now();
    int collided = 0, unfinished = 0;
    std::set<std::pair<int, int>> combos;
    for (int i = 0; i < 500; ++i) {
        const Layout layout = kAllLayouts[i % 4];
        const int th = (i / 4) % kNumThemes;
        combos.insert({static_cast<int>(layout), th});
        const FloorPlan p = generate_world(static_cast<std::uint64_t>(100000 + i), layout, th);
        RolloutOptions o;
        o.render = false;
        o.seed = static_cast<std::uint64_t>(i);
        o.start = static_cast<StartVariant>(i % 3);
        try {
            unfinished += !rollout_expert(p, {}, o).stopped;
        } catch (const StateError&) {
            ++collided;
        }
    }
    const double elapsed = seconds_since(t0);
    Checks c;
    c.expect(collided == 0, std::to_string(collided) + " collisions");
    c.expect(unfinished == 0, std::to_string(unfinished) + " rollouts without Stop");
    c.expect(combos.size() == 28, "only " + std::to_string(combos.size()) + " layout/theme pairs");
    c.expect(elapsed < 120.0, "runtime " + fmt(elapsed, 1) + " s");
    return c.gate("500 rollouts over " + std::to_string(combos.size()) + " layout/theme pairs: " + std::to_string(collided) +
                  " collisions, " + std::to_string(500 - collided - unfinished) + " ended in Stop, " + fmt(elapsed, 1) + " s");
}

// ------------------------------------------------------------------ end to end

struct PipelineConfig {
    int worlds = 500;
    double perturb = 0.3;
    int burst = 3;
    int stop_views = 8;
    int iterations = 20000;
    double lr = 0.005;
};

struct Pipeline {
    std::optional<Network> network;
    fs::path data;
    Manifest manifest;
    Split split;
    std::optional<BenchmarkReport> report;
    double seconds = 0.0;
    std::string error;
};

Pipeline run_pipeline(const fs::path& work, const PipelineConfig& pc) {
    Pipeline p;
    const auto t0 = clk::now();
    p.data = work / "e2e";
    fs::remove_all(p.data);
    {
        ManifestWriter w(p.data);
        RecordConfig rc;
        rc.worlds = pc.worlds;
        rc.seed = 1;
        rc.perturb_prob = pc.perturb;
        rc.perturb_burst = pc.burst;
        rc.stop_views = pc.stop_views;
        record_expert_dataset(w, rc);
        augment_gaussian(w, 0.0, 0.01, 2);
    }
    p.manifest = load_manifest(p.data);
    p.split = split_by_world(p.manifest, 0.1, 3);
    {
        const ImageStore train(p.data, p.manifest, p.split.train);
        TrainConfig tc;
        tc.iterations = pc.iterations;
        tc.base_lr = pc.lr;
        tc.seed = 5;
        tc.log_every = 1000;
        const auto t1 = clk::now();
        p.network = finetune(replace_head(build_micronet({3, 64, 64}, 11), kNumCommands, 10.0, 12), train, nullptr, tc,
                             [&](int it, double loss, double) {
                                 std::cerr << "  train it " << it << " loss " << fmt(loss, 4) << " ("
                                           << fmt(seconds_since(t1), 0) << " s)\n";
                             })
                        .network;
    }
    save_checkpoint(*p.network, work / "e2e_model.cpnv");
    p.report = run_benchmark(default_suites(), *p.network);
    p.seconds = seconds_since(t0);
    return p;
}

Gate end_to_end(const Pipeline& p, const PipelineConfig& pc) {
    if (!p.report) return {false, "pipeline did not finish: " + p.error};
    Checks c;
    std::set<int> themes;
    for (const auto& s : p.manifest.samples) themes.insert(s.theme);
    c.expect(pc.worlds >= 20, "fewer than 20 worlds");
    c.expect(static_cast<int>(themes.size()) == kNumThemes, "training covers " + std::to_string(themes.size()) + " themes");
    c.expect(p.manifest.augmented(), "dataset not augmented");
    std::ostringstream scores;
    for (const SuiteResult& s : p.report->suites) {
        const bool novel = s.spec.trials == 5;
        const int need = novel ? 3 : 7;
        scores << (scores.tellp() > 0 ? " " : "") << s.successes << "/" << s.spec.trials;
        c.expect(s.successes >= need, s.spec.name + " " + std::to_string(s.successes) + "/" + std::to_string(s.spec.trials));
    }
    c.expect(p.seconds < 1800.0, "pipeline took " + fmt(p.seconds / 60.0, 1) + " min");
    return c.gate("suites " + scores.str() + " (need 7/10 seen, 3/5 dim), " + std::to_string(pc.worlds) + " worlds, " +
                  std::to_string(p.manifest.samples.size()) + " samples, pipeline " + fmt(p.seconds / 60.0, 1) + " min");
}

// ------------------------------------------------------------------ controller

Gate controller() {
    Checks c;
    const ControllerState flying = take_off({});
    const ControlDecision hover = control_step(flying, one_hot_prediction(FlightCommand::MoveForward, 0.3), 0.5);
    c.expect(hover.action.kind == ActionKind::Hover && hover.state.phase == Phase::Hovering, "low confidence did not hover");
    const ControlDecision land = control_step(flying, one_hot_prediction(FlightCommand::Stop, 0.95), 0.5);
    c.expect(land.action.kind == ActionKind::Land && land.state.phase == Phase::Landed, "confident Stop did not land");
    for (FlightCommand k : kAllCommands) {
        if (k == FlightCommand::Stop) continue;
        const ControlDecision ex = control_step(flying, one_hot_prediction(k, 0.8), 0.5);
        c.expect(ex.action == Action{ActionKind::Execute, k} && ex.state.phase == Phase::Flying,
                 std::string(command_name(k)) + " was not executed");
    }

    // fly into a wall, then claim the target from wherever the drone sits
    int collisions = 0, successes = 0;
    for (Layout l : kAllLayouts) {
        const FloorPlan plan = generate_world(5, l, 1);
        int calls = 0;
        FunctionPolicy pol([&](const Observation&) {
            ++calls;
            return one_hot_prediction(calls < 400 ? FlightCommand::MoveForward : FlightCommand::Stop);
        });
        const TrialResult r = run_trial(plan, pol);
        collisions += r.collision.has_value();
        successes += r.collision && r.outcome == Outcome::Success;
        c.expect(!r.collision || r.outcome == Outcome::Collision, "collision trial ended " + std::string(outcome_name(r.outcome)));
    }
    c.expect(collisions == static_cast<int>(std::size(kAllLayouts)), "not every forward-only trial collided");
    return c.gate("hover/land/execute branches exact, " + std::to_string(collisions) + " collision trials, " +
                  std::to_string(successes) + " counted as success");
}

// ------------------------------------------------------------------ visualizer

Gate visualizer(const Pipeline& p) {
    if (!p.report) return {false, "no trained model: " + p.error};
    Checks c;
    int rising = 0, strict = 0;
    for (int k = 0; k < kNumCommands; ++k) {
        VizConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(k);
        const ClassVisualization v = class_model_visualization(*p.network, k, cfg);
        rising += smoothed_score_increases(v.score_trace);
        const ScoreTrend t = score_trend(v.score_trace);
        strict += t.strict;
    }
    c.expect(rising >= 5, "score rises in " + std::to_string(rising) + "/6 classes");

    // held-out frames: evenly spaced clean samples from the held-out worlds
    std::vector<std::size_t> clean;
    for (std::size_t i : p.split.holdout)
        if (p.manifest.samples[i].source != SampleSource::Augmented) clean.push_back(i);
    std::vector<std::size_t> pick;
    for (std::size_t j = 0; j < 50 && !clean.empty(); ++j) pick.push_back(clean[j * clean.size() / 50]);
    const ImageStore frames(p.data, p.manifest, pick);
    int occluded = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const Tensor img = frames.image(i);
        const int k = to_index(predict(*p.network, img).command);
        occluded += occlusion_check(*p.network, img, k, 0.1, i).passed();
    }
    c.expect(frames.size() == 50, "only " + std::to_string(frames.size()) + " held-out frames");
    c.expect(occluded >= 40, "occlusion " + std::to_string(occluded) + "/50");

    VizConfig zero;
    zero.steps = 0;
    zero.seed = 17;
    const ClassVisualization v0 = class_model_visualization(*p.network, 2, zero);
    const bool bitwise = v0.image == visualization_init({3, 64, 64}, 17);
    c.expect(bitwise, "zero-step image differs from init");
    return c.gate("smoothed score rises in " + std::to_string(rising) + "/6 classes (strictly monotone block means in " +
                  std::to_string(strict) + "/6), occlusion " + std::to_string(occluded) + "/" +
                  std::to_string(frames.size()) + ", zero-step init " + (bitwise ? "bitwise" : "differs"));
}

// ------------------------------------------------------------------ persistence

Gate persistence(const fs::path& work) {
    Checks c;
    const Network n = replace_head(build_micronet({3, 64, 64}, 5), kNumCommands, 10.0, 6);
    const auto bytes = serialize_checkpoint(n);
    c.expect(serialize_checkpoint(deserialize_checkpoint(bytes)) == bytes, "checkpoint bytes changed");
    save_checkpoint(n, work / "a.cpnv");
    save_checkpoint(load_checkpoint(work / "a.cpnv"), work / "b.cpnv");
    c.expect(read_file_bytes(work / "a.cpnv") == read_file_bytes(work / "b.cpnv"), "checkpoint file changed");

    int worlds = 0;
    for (Layout l : kAllLayouts)
        for (int th = 0; th < kNumThemes; ++th) {
            const FloorPlan plan = generate_world(8, l, th);
            save_world(plan, work / "a.cpworld");
            save_world(load_world(work / "a.cpworld"), work / "b.cpworld");
            const bool same = read_file_bytes(work / "a.cpworld") == read_file_bytes(work / "b.cpworld") &&
                              load_world(work / "b.cpworld") == plan;
            c.expect(same, "world file changed");
            worlds += same;
        }

    const fs::path dir = work / "manifest";
    fs::remove_all(dir);
    {
        ManifestWriter w(dir);
        RecordConfig rc;
        rc.worlds = 2;
        rc.seed = 9;
        record_expert_dataset(w, rc);
        augment_gaussian(w, 0.0, 0.01, 1);
    }
    const auto mbytes = read_file_bytes(dir / kManifestFile);
    const std::string text(mbytes.begin(), mbytes.end());
    c.expect(manifest_to_text(manifest_from_text(text)) == text, "manifest text changed");

    int rejected = 0;
    auto bad = bytes;
    bad[0] = 'X';
    try {
        deserialize_checkpoint(bad);
    } catch (const FormatError&) {
        ++rejected;
    }
    std::string bad_world = world_to_text(generate_world(8, Layout::Loop, 2));
    bad_world[0] = 'X';
    try {
        world_from_text(bad_world);
    } catch (const FormatError&) {
        ++rejected;
    }
    std::string bad_manifest = text;
    bad_manifest.replace(bad_manifest.find("CPDS1"), 5, "XPDS1");
    try {
        manifest_from_text(bad_manifest);
    } catch (const FormatError&) {
        ++rejected;
    }
    c.expect(rejected == 3, "corrupt magic accepted");
    fs::remove_all(dir);
    return c.gate("checkpoint and manifest byte-identical, " + std::to_string(worlds) +
                  "/28 world files byte-identical, corrupt magic rejected " + std::to_string(rejected) + "/3");
}

Gate guarded(const std::function<Gate()>& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        return {false, std::string("threw: ") + e.what()};
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Primary acceptance gates"};
    fs::path work = fs::temp_directory_path() / ("cpnav_acceptance_" + std::to_string(::getpid()));
    PipelineConfig pc;
    bool keep = false, skip_pipeline = false;
    app.add_option("--work", work, "scratch directory");
    app.add_option("--worlds", pc.worlds, "expert worlds recorded for the end-to-end run");
    app.add_option("--iterations", pc.iterations, "training iterations for the end-to-end run");
    app.add_flag("--keep", keep, "keep the scratch directory");
    app.add_flag("--skip-pipeline", skip_pipeline, "skip training; the end-to-end and visualizer gates then fail");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(work);

    int failed = 0;
    const auto report = [&](const std::string& name, const Gate& g) {
        std::cout << (g.pass ? "PASS " : "FAIL ") << name << ": " << g.detail << std::endl;
        failed += !g.pass;
    };

    report("numerical core", guarded(numerical_core));
    report("loss sanity", guarded(loss_sanity));
    report("fine-tuning semantics", guarded(fine_tuning));
    report("dataset protocol", guarded([&] { return dataset_protocol(work); }));
    report("expert safety", guarded(expert_safety));

    Pipeline p;
    if (skip_pipeline) {
        p.error = "skipped";
    } else {
        try {
            p = run_pipeline(work, pc);
        } catch (const std::exception& e) {
            p.error = e.what();
        }
    }
    report("end to end", end_to_end(p, pc));
    report("controller", guarded(controller));
    report("visualizer", guarded([&] { return visualizer(p); }));
    report("persistence", guarded([&] { return persistence(work); }));

    if (!keep) fs::remove_all(work);
    return failed;
}
