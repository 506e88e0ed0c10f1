#include "cpnav/dataset.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "cpnav/checkpoint.hpp"
#include "cpnav/error.hpp"
#include "cpnav/image.hpp"
#include "cpnav/rng.hpp"
#include "cpnav/theme.hpp"

namespace cpnav {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string_view source_name(SampleSource source) noexcept {
    switch (source) {
        case SampleSource::Expert: return "expert";
        case SampleSource::Human: return "human";
        case SampleSource::Augmented: return "augmented";
    }
    return "?";
}

namespace {

SampleSource parse_source(const std::string& s) {
    for (SampleSource src : {SampleSource::Expert, SampleSource::Human, SampleSource::Augmented})
        if (source_name(src) == s) return src;
    throw FormatError("unknown sample source '" + s + "'");
}

std::string record_line(const SampleRecord& r) {
    ojson j;
    j["id"] = r.id;
    j["file"] = r.file;
    j["label"] = command_name(r.label);
    j["source"] = source_name(r.source);
    j["world_id"] = r.world_id;
    j["step_index"] = r.step_index;
    j["parent_id"] = r.parent_id ? ojson(*r.parent_id) : ojson(nullptr);
    j["theme"] = r.theme;
    return j.dump();
}

std::string header_line(const Manifest& m) {
    ojson j;
    j["version"] = m.version;
    j["pixel_scale"] = m.pixel_scale;
    return j.dump();
}

}  // namespace

std::array<std::int64_t, kNumCommands> Manifest::class_counts() const {
    std::array<std::int64_t, kNumCommands> c{};
    for (const SampleRecord& r : samples) ++c[static_cast<std::size_t>(to_index(r.label))];
    return c;
}

std::array<std::int64_t, kNumThemes> Manifest::theme_counts() const {
    std::array<std::int64_t, kNumThemes> c{};
    for (const SampleRecord& r : samples)
        if (r.theme >= 0 && r.theme < kNumThemes) ++c[static_cast<std::size_t>(r.theme)];
    return c;
}

bool Manifest::augmented() const {
    return std::any_of(samples.begin(), samples.end(), [](const SampleRecord& r) { return r.source == SampleSource::Augmented; });
}

std::int64_t Manifest::next_id() const {
    std::int64_t n = 0;
    for (const SampleRecord& r : samples) n = std::max(n, r.id + 1);
    return n;
}

std::int64_t Manifest::next_world_id() const {
    std::int64_t n = 0;
    for (const SampleRecord& r : samples) n = std::max(n, r.world_id + 1);
    return n;
}

std::string manifest_to_text(const Manifest& m) {
    std::string out = header_line(m) + "\n";
    for (const SampleRecord& r : m.samples) out += record_line(r) + "\n";
    return out;
}

Manifest manifest_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    Manifest m;
    bool header = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw FormatError("manifest line " + std::to_string(lineno) + " is not valid JSON");
        }
        try {
            if (!header) {
                m.version = j.at("version").get<std::string>();
                m.pixel_scale = j.at("pixel_scale").get<std::string>();
                if (m.version != kManifestVersion) throw FormatError("unsupported manifest version " + m.version);
                header = true;
                continue;
            }
            SampleRecord r;
            r.id = j.at("id").get<std::int64_t>();
            r.file = j.at("file").get<std::string>();
            auto label = parse_command(j.at("label").get<std::string>());
            if (!label) throw FormatError("unknown label on manifest line " + std::to_string(lineno));
            r.label = *label;
            r.source = parse_source(j.at("source").get<std::string>());
            r.world_id = j.at("world_id").get<std::int64_t>();
            r.step_index = j.at("step_index").get<int>();
            if (!j.at("parent_id").is_null()) r.parent_id = j.at("parent_id").get<std::int64_t>();
            r.theme = j.value("theme", 0);
            m.samples.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!header) throw FormatError("manifest has no header line");
    return m;
}

Manifest load_manifest(const fs::path& dir) {
    const auto bytes = read_file_bytes(dir / kManifestFile);
    return manifest_from_text(std::string(bytes.begin(), bytes.end()));
}

std::string image_file_name(std::int64_t world_id, int step, bool noisy) {
    return std::to_string(world_id) + "_" + std::to_string(step) + (noisy ? "_noisy.ppm" : "_clean.ppm");
}

// ------------------------------------------------------------------ writer

ManifestWriter::ManifestWriter(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_ / "images", ec);
    if (ec) throw IoError("cannot create dataset directory " + dir_.string() + ": " + ec.message());
    const fs::path lock = dir_ / ".writer.lock";
    lock_fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (lock_fd_ < 0) throw IoError("cannot open " + lock.string() + ": " + std::strerror(errno));
    if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(lock_fd_);
        throw StateError("dataset " + dir_.string() + " already has a writer");
    }
    if (fs::exists(dir_ / kManifestFile)) {
        manifest_ = load_manifest(dir_);
        text_ = manifest_to_text(manifest_);
    } else {
        text_ = manifest_to_text(manifest_);
        write_file_atomic(dir_ / kManifestFile, text_);
    }
    next_world_ = manifest_.next_world_id();
}

ManifestWriter::~ManifestWriter() {
    if (lock_fd_ >= 0) ::close(lock_fd_);
}

std::int64_t ManifestWriter::reserve_world_id() {
    std::lock_guard lock(mu_);
    return next_world_++;
}

void ManifestWriter::publish_locked() { write_file_atomic(dir_ / kManifestFile, text_); }

std::vector<SampleRecord> ManifestWriter::append(std::vector<PendingSample> samples) {
    std::lock_guard lock(mu_);
    std::vector<SampleRecord> out;
    std::int64_t id = manifest_.next_id();
    for (PendingSample& p : samples) {
        SampleRecord r = p.record;
        r.id = id++;
        r.file = "images/" + image_file_name(r.world_id, r.step_index, p.noisy);
        write_ppm(dir_ / r.file, p.image);
        out.push_back(std::move(r));
    }
    std::string text = text_;
    for (const SampleRecord& r : out) text += record_line(r) + "\n";
    write_file_atomic(dir_ / kManifestFile, text);
    text_ = std::move(text);
    manifest_.samples.insert(manifest_.samples.end(), out.begin(), out.end());
    next_world_ = std::max(next_world_, manifest_.next_world_id());
    return out;
}

std::vector<SampleRecord> ManifestWriter::commit_records(std::vector<SampleRecord> records) {
    std::lock_guard lock(mu_);
    std::int64_t id = manifest_.next_id();
    std::string text = text_;
    for (SampleRecord& r : records) {
        if (!fs::exists(dir_ / r.file)) throw IoError("image " + r.file + " missing; refusing to commit its record");
        r.id = id++;
        text += record_line(r) + "\n";
    }
    write_file_atomic(dir_ / kManifestFile, text);
    text_ = std::move(text);
    manifest_.samples.insert(manifest_.samples.end(), records.begin(), records.end());
    next_world_ = std::max(next_world_, manifest_.next_world_id());
    return records;
}

Manifest ManifestWriter::snapshot() const {
    std::lock_guard lock(mu_);
    return manifest_;
}

// ------------------------------------------------------------------ recording

std::vector<SampleRecord> record_trajectory(ManifestWriter& writer, const Trajectory& trajectory, int theme,
                                            SampleSource source) {
    if (trajectory.steps.empty()) throw DomainError("cannot record an empty trajectory");
    const std::int64_t world_id = writer.reserve_world_id();
    std::vector<ManifestWriter::PendingSample> pending;
    pending.reserve(trajectory.steps.size());
    for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
        const TrajectoryStep& s = trajectory.steps[i];
        if (s.frame.empty()) throw DomainError("trajectory step " + std::to_string(i) + " has no frame");
        SampleRecord r;
        r.label = s.command;
        r.source = source;
        r.world_id = world_id;
        r.step_index = static_cast<int>(i);
        r.theme = theme;
        pending.push_back({std::move(r), s.frame, false});
    }
    return writer.append(std::move(pending));
}

RecordSummary record_expert_dataset(ManifestWriter& writer, const RecordConfig& config) {
    if (config.worlds < 1) throw DomainError("need at least one world to record");
    RecordSummary summary;
    for (int w = 0; w < config.worlds; ++w) {
        const Layout layout = config.layout.value_or(kAllLayouts[w % 4]);
        const int theme_id = config.theme.value_or(w % kNumThemes);
        const FloorPlan plan = generate_world(mix_seed(config.seed, static_cast<std::uint64_t>(w)), layout, theme_id);
        RolloutOptions opt;
        opt.max_steps = config.max_steps;
        opt.start = static_cast<StartVariant>(w % 3);
        opt.seed = mix_seed(config.seed ^ 0x7E57ULL, static_cast<std::uint64_t>(w));
        opt.perturb_prob = config.perturb_prob;
        opt.perturb_burst = config.perturb_burst;
        opt.stop_views = config.stop_views;
        const Trajectory traj = rollout_expert(plan, config.oracle, opt);
        summary.samples += static_cast<std::int64_t>(record_trajectory(writer, traj, theme_id).size());
        ++summary.worlds;
    }
    return summary;
}

// ------------------------------------------------------------------ augmentation

const std::vector<AugmentationInfo>& augmentation_registry() {
    static const std::vector<AugmentationInfo> registry = {{"gaussian_noise", false}};
    return registry;
}

Tensor add_gaussian_noise(const Tensor& image, double mean, double variance, std::uint64_t seed) {
    if (variance < 0) throw DomainError("noise variance must be non-negative");
    Tensor out = image;
    const double sd = std::sqrt(variance);
    Rng rng(seed);
    for (float& v : out.values())
        v = static_cast<float>(std::clamp(static_cast<double>(v) + rng.normal(mean, sd), 0.0, 1.0));
    return out;
}

Manifest augment_gaussian(ManifestWriter& writer, double mean, double variance, std::uint64_t seed) {
    const Manifest before = writer.snapshot();
    if (before.augmented()) throw StateError("dataset is already augmented; refusing to double it again");
    std::vector<SampleRecord> records;
    records.reserve(before.samples.size());
    for (const SampleRecord& src : before.samples) {
        const Tensor clean = read_ppm(writer.dir() / src.file);
        const Tensor noisy = add_gaussian_noise(clean, mean, variance, mix_seed(seed, static_cast<std::uint64_t>(src.id)));
        SampleRecord r = src;
        r.source = SampleSource::Augmented;
        r.parent_id = src.id;
        r.file = "images/" + image_file_name(src.world_id, src.step_index, true);
        write_ppm(writer.dir() / r.file, noisy);
        records.push_back(std::move(r));
    }
    writer.commit_records(std::move(records));
    return writer.snapshot();
}

// ------------------------------------------------------------------ statistics

ClassCountTable class_counts(const Manifest& manifest) {
    ClassCountTable t;
    for (int i = 0; i < kNumThemes; ++i) t.columns.emplace_back(theme(i).name);
    for (auto& row : t.counts) row.assign(static_cast<std::size_t>(kNumThemes), 0);
    for (const SampleRecord& r : manifest.samples) {
        const auto c = static_cast<std::size_t>(to_index(r.label));
        if (r.theme >= 0 && r.theme < kNumThemes) ++t.counts[c][static_cast<std::size_t>(r.theme)];
        ++t.totals[c];
        ++t.grand_total;
    }
    return t;
}

std::string ClassCountTable::format() const {
    std::ostringstream os;
    char cell[64];
    std::snprintf(cell, sizeof cell, "%-14s", "Flight command");
    os << cell;
    for (const std::string& c : columns) {
        std::snprintf(cell, sizeof cell, " %16s", c.c_str());
        os << cell;
    }
    os << "        Total\n";
    for (int k = 0; k < kNumCommands; ++k) {
        std::snprintf(cell, sizeof cell, "%-14s", std::string(command_label(command_from_index(k))).c_str());
        os << cell;
        for (std::int64_t v : counts[static_cast<std::size_t>(k)]) {
            std::snprintf(cell, sizeof cell, " %16lld", static_cast<long long>(v));
            os << cell;
        }
        std::snprintf(cell, sizeof cell, " %12lld\n", static_cast<long long>(totals[static_cast<std::size_t>(k)]));
        os << cell;
    }
    std::snprintf(cell, sizeof cell, "%-14s", "All");
    os << cell << std::string(columns.size() * 17, ' ');
    std::snprintf(cell, sizeof cell, " %12lld\n", static_cast<long long>(grand_total));
    os << cell;
    return os.str();
}

// ------------------------------------------------------------------ batching

Split split_by_world(const Manifest& manifest, double holdout_fraction, std::uint64_t seed) {
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) throw DomainError("holdout fraction must be in [0, 1)");
    std::set<std::int64_t> world_set;
    for (const SampleRecord& r : manifest.samples) world_set.insert(r.world_id);
    std::vector<std::int64_t> worlds(world_set.begin(), world_set.end());
    Rng rng(mix_seed(seed, 0x5B11));
    for (std::size_t i = worlds.size(); i > 1; --i) std::swap(worlds[i - 1], worlds[rng.below(i)]);
    std::size_t n_hold = static_cast<std::size_t>(std::lround(holdout_fraction * static_cast<double>(worlds.size())));
    if (holdout_fraction > 0.0 && worlds.size() >= 2) n_hold = std::clamp<std::size_t>(n_hold, 1, worlds.size() - 1);
    Split s;
    s.holdout_worlds.assign(worlds.begin(), worlds.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::sort(s.holdout_worlds.begin(), s.holdout_worlds.end());
    const std::set<std::int64_t> hold(s.holdout_worlds.begin(), s.holdout_worlds.end());
    for (std::size_t i = 0; i < manifest.samples.size(); ++i)
        (hold.count(manifest.samples[i].world_id) ? s.holdout : s.train).push_back(i);
    return s;
}

BatchStream::BatchStream(std::vector<std::size_t> indices, int batch_size, std::uint64_t seed)
    : indices_(std::move(indices)), batch_size_(batch_size), seed_(seed) {
    if (indices_.empty()) throw DomainError("cannot batch an empty split");
    if (batch_size_ < 1) throw DomainError("batch size must be positive");
    reshuffle();
}

void BatchStream::reshuffle() {
    order_ = indices_;
    Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(epoch_)));
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
    cursor_ = 0;
}

std::vector<std::size_t> BatchStream::next() {
    if (cursor_ >= order_.size()) {
        ++epoch_;
        reshuffle();
    }
    const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
    std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                   order_.begin() + static_cast<std::ptrdiff_t>(end));
    cursor_ = end;
    return batch;
}

// ------------------------------------------------------------------ images

ImageStore::ImageStore(const fs::path& dir, const Manifest& manifest, const std::vector<std::size_t>& indices) {
    for (std::size_t i : indices) {
        const SampleRecord& r = manifest.samples.at(i);
        add(read_ppm(dir / r.file), r.label, r.id);
    }
}

void ImageStore::add(const Tensor& image, FlightCommand label, std::int64_t id) {
    if (shape_.empty()) shape_ = image.shape();
    if (image.shape() != shape_) throw DimensionError("image store holds " + shape_str(shape_) + " images, got " + shape_str(image.shape()));
    for (float v : image.values()) pixels_.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    labels_.push_back(label);
    ids_.push_back(id);
}

Tensor ImageStore::image(std::size_t i) const {
    const std::size_t n = shape_size(shape_);
    if (i >= labels_.size()) throw DomainError("image index out of range");
    Tensor t(shape_);
    for (std::size_t k = 0; k < n; ++k) t[k] = pixels_[i * n + k] / 255.0f;
    return t;
}

}  // namespace cpnav
