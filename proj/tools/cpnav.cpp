#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"

#include "cpnav/checkpoint.hpp"
#include "cpnav/controller.hpp"
#include "cpnav/dataset.hpp"
#include "cpnav/theme.hpp"
#include "cpnav/trainer.hpp"
#include "cpnav/visualizer.hpp"
#include "cpnav/world_io.hpp"

#ifdef CPNAV_WITH_GATEWAY
#include "cpnav/gateway/server.hpp"
#endif

using namespace cpnav;
namespace fs = std::filesystem;

namespace {

Layout layout_arg(const std::string& name) {
    const auto l = parse_layout(name);
    if (!l) throw DomainError("unknown layout \"" + name + "\" (corridor, corner_L, corner_T, loop)");
    return *l;
}

FlightCommand command_arg(const std::string& name) {
    const auto c = parse_command(name);
    if (!c) throw DomainError("unknown command \"" + name + "\"");
    return *c;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::size_t> all_indices(const Manifest& m) {
    std::vector<std::size_t> v(m.samples.size());
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

// ------------------------------------------------------------------ world

struct WorldGenArgs {
    std::uint64_t seed = 0;
    std::string layout = "corridor";
    int theme = 0;
    fs::path out;
};

void world_gen(const WorldGenArgs& a) {
    const FloorPlan p = generate_world(a.seed, layout_arg(a.layout), a.theme);
    save_world(p, a.out);
    std::cout << "wrote " << a.out.string() << " (" << p.width << "x" << p.height << ", " << p.targets.size()
              << " targets)\n";
}

// ------------------------------------------------------------------ dataset

struct RecordArgs {
    fs::path dir;
    int worlds = 20;
    std::uint64_t seed = 1;
    std::string layout;
    int theme = -1;
    double perturb = 0.3;
    int burst = 1;
    int stop_views = 8;
};

void dataset_record(const RecordArgs& a) {
    ManifestWriter w(a.dir);
    RecordConfig c;
    c.worlds = a.worlds;
    c.seed = a.seed;
    c.perturb_prob = a.perturb;
    c.perturb_burst = a.burst;
    c.stop_views = a.stop_views;
    if (!a.layout.empty()) c.layout = layout_arg(a.layout);
    if (a.theme >= 0) c.theme = a.theme;
    const RecordSummary s = record_expert_dataset(w, c);
    std::cout << "recorded " << s.samples << " samples from " << s.worlds << " worlds into " << a.dir.string() << "\n";
}

void dataset_augment(const fs::path& dir, double variance, std::uint64_t seed) {
    ManifestWriter w(dir);
    const Manifest m = augment_gaussian(w, 0.0, variance, seed);
    std::cout << "dataset now holds " << m.samples.size() << " samples\n";
}

void dataset_stats(const fs::path& dir) { std::cout << class_counts(load_manifest(dir)).format(); }

// ------------------------------------------------------------------ train / eval

struct TrainArgs {
    fs::path data;
    fs::path out;
    std::optional<fs::path> init;
    int iterations = 20000;
    double lr = 0.005;
    int batch = 32;
    double head_lr_mult = 10.0;
    double holdout = 0.1;
    std::uint64_t seed = 5;
    int log_every = 500;
    bool checkpoints = false;
};

void train(const TrainArgs& a) {
    const Manifest m = load_manifest(a.data);
    const Split sp = split_by_world(m, a.holdout, a.seed);
    const ImageStore tr(a.data, m, sp.train);
    const ImageStore ho(a.data, m, sp.holdout);
    std::cout << "train " << tr.size() << " holdout " << ho.size() << "\n";

    Network net = a.init ? load_checkpoint(*a.init) : build_micronet({3, 64, 64}, a.seed);
    if (!a.init || net.num_classes() != kNumCommands) net = replace_head(net, kNumCommands, a.head_lr_mult, a.seed + 1);

    TrainConfig c;
    c.iterations = a.iterations;
    c.base_lr = a.lr;
    c.batch_size = a.batch;
    c.head_lr_mult = a.head_lr_mult;
    c.seed = a.seed;
    c.log_every = a.log_every;
    if (a.checkpoints) c.checkpoint_path = a.out;
    const TrainResult r = finetune(net, tr, ho.size() ? &ho : nullptr, c, [](int it, double loss, double lr) {
        std::cout << "iter " << it << " loss " << loss << " lr " << lr << "\n" << std::flush;
    });
    save_checkpoint(r.network, a.out);
    if (r.report.holdout) std::cout << r.report.holdout->format();
    std::cout << "saved " << a.out.string() << "\n";
}

void eval(const fs::path& model, const fs::path& data, double holdout, std::uint64_t seed) {
    const Network net = load_checkpoint(model);
    const Manifest m = load_manifest(data);
    const std::vector<std::size_t> idx = holdout > 0 ? split_by_world(m, holdout, seed).holdout : all_indices(m);
    std::cout << evaluate_split(net, data, m, idx).format();
}

// ------------------------------------------------------------------ flight

struct FlyArgs {
    fs::path model, world;
    double threshold = 0.5;
    std::uint64_t seed = 0;
    int max_steps = 500;
    std::optional<fs::path> record;
};

int fly(const FlyArgs& a) {
    const Network net = load_checkpoint(a.model);
    const FloorPlan plan = load_world(a.world);
    TrialConfig c;
    c.threshold = a.threshold;
    c.sensor_noise_seed = a.seed;
    c.max_steps = a.max_steps;
    const TrialResult r = run_trial(plan, net, c);
    std::cout << "outcome " << outcome_name(r.outcome) << " after " << r.steps << " steps\n";
    if (a.record) write_file_atomic(*a.record, trajectory_log_jsonl(r.log));
    return r.outcome == Outcome::Success ? 0 : 2;
}

void bench(const fs::path& model, const std::optional<fs::path>& suite, std::optional<double> threshold) {
    const Network net = load_checkpoint(model);
    BenchmarkConfig c;
    std::vector<SuiteSpec> suites = default_suites();
    if (suite) {
        const SuiteFile f = parse_suite_json(read_text(*suite));
        suites = f.suites;
        c.trial = f.trial;
    }
    if (threshold) c.trial.threshold = *threshold;
    std::cout << run_benchmark(suites, net, c).format_table();
}

// ------------------------------------------------------------------ visualizer

void viz_class(const fs::path& model, const fs::path& out, const VizConfig& cfg) {
    const Network net = load_checkpoint(model);
    std::vector<ClassVisualization> models;
    for (int k = 0; k < net.num_classes(); ++k) {
        models.push_back(class_model_visualization(net, k, cfg));
        const ScoreTrend t = score_trend(models.back().score_trace);
        std::cout << command_name(command_from_index(k)) << ": score " << models.back().score_trace.front() << " -> "
                  << models.back().score_trace.back() << (t.within_noise ? " (rising)" : " (not rising)") << "\n";
    }
    for (const auto& p : emit_report(out, models, {})) std::cout << "wrote " << p.string() << "\n";
}

void viz_saliency(const fs::path& model, const fs::path& data, const std::string& cls, int top, const fs::path& out) {
    const Network net = load_checkpoint(model);
    const Manifest m = load_manifest(data);
    const FlightCommand k = command_arg(cls);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < m.samples.size(); ++i)
        if (m.samples[i].label == k) idx.push_back(i);
    const ImageStore store(data, m, idx);
    const auto ids = top_scoring_images(net, store, to_index(k), static_cast<std::size_t>(top));
    std::vector<SaliencyPanel> panels;
    for (std::int64_t id : ids)
        for (std::size_t i = 0; i < store.size(); ++i)
            if (store.id(i) == id) {
                const Tensor f = store.image(i);
                panels.push_back({to_index(k), id, f, saliency_map(net, f, to_index(k))});
            }
    for (const auto& p : emit_report(out, {}, panels)) std::cout << "wrote " << p.string() << "\n";
}

// ------------------------------------------------------------------ serve

#ifdef CPNAV_WITH_GATEWAY
struct ServeArgs {
    std::string address = "127.0.0.1";
    unsigned short port = 8088;
    fs::path worlds, models, dataset;
    std::size_t queue = 64;
    int step_interval_ms = 100;
};

void serve(const ServeArgs& a) {
    gateway::ServiceConfig sc;
    sc.worlds_dir = a.worlds;
    sc.models_dir = a.models;
    sc.dataset_dir = a.dataset;
    sc.queue_capacity = a.queue;
    sc.step_interval = std::chrono::milliseconds(a.step_interval_ms);
    gateway::Service service(sc);
    gateway::ServerConfig cfg;
    cfg.address = a.address;
    cfg.port = a.port;
    gateway::Server server(service, cfg);
    std::cout << "listening on " << a.address << ":" << server.port() << std::endl;
    server.run();
    std::cout << "stopped" << std::endl;
}
#endif

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cpnav: corridor-pilot navigation toolkit"};
    app.require_subcommand(1);

    // world
    auto* world = app.add_subcommand("world", "Procedural worlds")->require_subcommand(1);
    WorldGenArgs wg;
    auto* gen = world->add_subcommand("gen", "Generate and save a world");
    gen->add_option("--seed", wg.seed);
    gen->add_option("--layout", wg.layout, "corridor, corner_L, corner_T or loop");
    gen->add_option("--theme", wg.theme)->check(CLI::Range(0, kNumThemes - 1));
    gen->add_option("--out", wg.out)->required();
    gen->callback([&] { world_gen(wg); });

    // dataset
    auto* ds = app.add_subcommand("dataset", "Record, augment and inspect datasets")->require_subcommand(1);
    RecordArgs ra;
    auto* rec = ds->add_subcommand("record", "Record expert rollouts");
    rec->add_option("--dir", ra.dir)->required();
    rec->add_option("--worlds", ra.worlds);
    rec->add_option("--seed", ra.seed);
    rec->add_option("--layout", ra.layout, "fix one layout (default: cycle)");
    rec->add_option("--theme", ra.theme, "fix one theme (default: cycle)");
    rec->add_option("--perturb", ra.perturb, "probability of a recovery perturbation per step");
    rec->add_option("--burst", ra.burst, "longest run of one perturbing command")->check(CLI::PositiveNumber);
    rec->add_option("--stop-views", ra.stop_views);
    rec->callback([&] { dataset_record(ra); });
    fs::path aug_dir;
    double variance = 0.01;
    std::uint64_t aug_seed = 2;
    auto* aug = ds->add_subcommand("augment", "Add one Gaussian-noise copy of every sample");
    aug->add_option("--dir", aug_dir)->required();
    aug->add_option("--variance", variance);
    aug->add_option("--seed", aug_seed);
    aug->callback([&] { dataset_augment(aug_dir, variance, aug_seed); });
    fs::path stats_dir;
    auto* st = ds->add_subcommand("stats", "Per-class, per-theme sample counts");
    st->add_option("--dir", stats_dir)->required();
    st->callback([&] { dataset_stats(stats_dir); });

    // train / eval
    TrainArgs ta;
    std::string init;
    auto* tr = app.add_subcommand("train", "Fine-tune the navigation network");
    tr->add_option("--data", ta.data)->required();
    tr->add_option("--out", ta.out)->required();
    tr->add_option("--init", init, "start from this checkpoint instead of a fresh network");
    tr->add_option("--iterations", ta.iterations);
    tr->add_option("--lr", ta.lr);
    tr->add_option("--batch", ta.batch);
    tr->add_option("--head-lr-mult", ta.head_lr_mult);
    tr->add_option("--holdout", ta.holdout);
    tr->add_option("--seed", ta.seed);
    tr->add_option("--log-every", ta.log_every);
    tr->add_flag("--checkpoints", ta.checkpoints, "also save at each learning-rate drop");
    tr->callback([&] {
        if (!init.empty()) ta.init = init;
        train(ta);
    });
    fs::path ev_model, ev_data;
    double ev_holdout = 0.1;
    std::uint64_t ev_seed = 5;
    auto* ev = app.add_subcommand("eval", "Accuracy and confusion matrix");
    ev->add_option("--model", ev_model)->required();
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--holdout", ev_holdout, "0 evaluates every sample");
    ev->add_option("--seed", ev_seed);
    ev->callback([&] { eval(ev_model, ev_data, ev_holdout, ev_seed); });

    // flight
    FlyArgs fa;
    std::string fly_record;
    int fly_status = 0;
    auto* fl = app.add_subcommand("fly", "Run one trial");
    fl->add_option("--model", fa.model)->required();
    fl->add_option("--world", fa.world)->required();
    fl->add_option("--threshold", fa.threshold);
    fl->add_option("--seed", fa.seed);
    fl->add_option("--max-steps", fa.max_steps);
    fl->add_option("--record", fly_record, "write the trajectory log (JSON lines)");
    fl->callback([&] {
        if (!fly_record.empty()) fa.record = fly_record;
        fly_status = fly(fa);
    });
    fs::path bench_model;
    std::string bench_suite;
    double bench_threshold = -1.0;
    auto* be = app.add_subcommand("bench", "Run the benchmark suites");
    be->add_option("--model", bench_model)->required();
    be->add_option("--suite", bench_suite, "suite JSON (default: the built-in five suites)");
    be->add_option("--threshold", bench_threshold);
    be->callback([&] {
        bench(bench_model, bench_suite.empty() ? std::nullopt : std::optional<fs::path>(bench_suite),
              bench_threshold >= 0 ? std::optional<double>(bench_threshold) : std::nullopt);
    });

    // visualizer
    auto* viz = app.add_subcommand("viz", "Class models and saliency maps")->require_subcommand(1);
    fs::path vc_model, vc_out;
    VizConfig vcfg;
    auto* vc = viz->add_subcommand("class", "Gradient-ascent class model for every command");
    vc->add_option("--model", vc_model)->required();
    vc->add_option("--out", vc_out)->required();
    vc->add_option("--steps", vcfg.steps);
    vc->add_option("--l2", vcfg.l2_decay);
    vc->add_option("--seed", vcfg.seed);
    vc->callback([&] { viz_class(vc_model, vc_out, vcfg); });
    fs::path vs_model, vs_data, vs_out;
    std::string vs_class = "move_forward";
    int vs_top = 5;
    auto* vs = viz->add_subcommand("saliency", "Saliency panels for the top-scoring images of a class");
    vs->add_option("--model", vs_model)->required();
    vs->add_option("--data", vs_data)->required();
    vs->add_option("--class", vs_class);
    vs->add_option("--top", vs_top);
    vs->add_option("--out", vs_out)->required();
    vs->callback([&] { viz_saliency(vs_model, vs_data, vs_class, vs_top, vs_out); });

#ifdef CPNAV_WITH_GATEWAY
    ServeArgs sa;
    auto* sv = app.add_subcommand("serve", "Run the gateway service");
    sv->add_option("--address", sa.address);
    sv->add_option("--port", sa.port, "0 picks a free port");
    sv->add_option("--worlds", sa.worlds)->required();
    sv->add_option("--models", sa.models)->required();
    sv->add_option("--dataset", sa.dataset, "directory for teleop recordings");
    sv->add_option("--queue", sa.queue, "per-subscriber queue length");
    sv->add_option("--step-interval-ms", sa.step_interval_ms);
    sv->callback([&] { serve(sa); });
#endif

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return fly_status;
}
