#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpnav/command.hpp"
#include "cpnav/expert.hpp"
#include "cpnav/tensor.hpp"

namespace cpnav {

inline constexpr std::string_view kManifestVersion = "CPDS1";
inline constexpr std::string_view kManifestFile = "manifest.jsonl";

enum class SampleSource { Expert, Human, Augmented };
std::string_view source_name(SampleSource source) noexcept;

struct SampleRecord {
    std::int64_t id = 0;
    std::string file;  // relative to the dataset directory
    FlightCommand label = FlightCommand::MoveForward;
    SampleSource source = SampleSource::Expert;
    std::int64_t world_id = 0;
    int step_index = 0;
    std::optional<std::int64_t> parent_id;
    int theme = 0;
    friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct Manifest {
    std::string version{kManifestVersion};
    std::string pixel_scale = "unit";
    std::vector<SampleRecord> samples;

    std::array<std::int64_t, kNumCommands> class_counts() const;
    std::array<std::int64_t, kNumThemes> theme_counts() const;
    bool augmented() const;  // any sample with source=augmented
    std::int64_t next_id() const;
    std::int64_t next_world_id() const;
    friend bool operator==(const Manifest&, const Manifest&) = default;
};

// JSON lines: header {"version","pixel_scale"} then one record per line
// with keys id, file, label, source, world_id, step_index, parent_id, theme.
std::string manifest_to_text(const Manifest& manifest);
Manifest manifest_from_text(const std::string& text);
Manifest load_manifest(const std::filesystem::path& dir);

std::string image_file_name(std::int64_t world_id, int step, bool noisy);

/// Single writer for one dataset directory. Each append writes the image
/// files first, then swaps in a complete new manifest via rename, so a crash
/// leaves either the old or the new manifest and never a partial record.
class ManifestWriter {
public:
    // Creates the directory (and an empty manifest) when missing. Holds an
    // exclusive lock on the directory until destroyed; a second writer on
    // the same directory gets StateError.
    explicit ManifestWriter(std::filesystem::path dir);
    ~ManifestWriter();
    ManifestWriter(const ManifestWriter&) = delete;
    ManifestWriter& operator=(const ManifestWriter&) = delete;

    struct PendingSample {
        SampleRecord record;  // id/file are assigned by append
        Tensor image;
        bool noisy = false;
    };

    // Returns the appended records with their assigned ids and file names.
    std::vector<SampleRecord> append(std::vector<PendingSample> samples);

    // For images already written under dir(): assigns ids and commits the
    // records in one manifest swap.
    std::vector<SampleRecord> commit_records(std::vector<SampleRecord> records);

    Manifest snapshot() const;
    const std::filesystem::path& dir() const noexcept { return dir_; }
    std::int64_t reserve_world_id();

private:
    void publish_locked();

    std::filesystem::path dir_;
    int lock_fd_ = -1;
    mutable std::mutex mu_;
    Manifest manifest_;
    std::string text_;
    std::int64_t next_world_ = 0;
};

// ------------------------------------------------------------------ recording

struct RecordConfig {
    int worlds = 1;
    std::optional<Layout> layout;  // nullopt = cycle through all layouts
    std::optional<int> theme;      // nullopt = cycle through all themes
    std::uint64_t seed = 0;
    double perturb_prob = 0.15;
    int perturb_burst = 1;
    int stop_views = 8;
    int max_steps = 500;
    OracleConfig oracle;
};

struct RecordSummary {
    int worlds = 0;
    std::int64_t samples = 0;
};

// One expert rollout per generated world; start variants cycle through
// nominal / jittered / near-wall.
RecordSummary record_expert_dataset(ManifestWriter& writer, const RecordConfig& config);

// Appends one trajectory as a world's worth of samples.
std::vector<SampleRecord> record_trajectory(ManifestWriter& writer, const Trajectory& trajectory, int theme,
                                            SampleSource source = SampleSource::Expert);

// ------------------------------------------------------------------ augmentation

struct AugmentationInfo {
    std::string_view name;
    bool geometric = false;  // true for transforms that move pixels
};
// Every augmentation the pipeline can apply. Horizontal mirroring is
// deliberately absent: it would swap left/right command semantics.
const std::vector<AugmentationInfo>& augmentation_registry();

// x + N(mean, variance) per value, clamped to [0, 1].
Tensor add_gaussian_noise(const Tensor& image, double mean, double variance, std::uint64_t seed);

// Emits one noisy copy per clean sample. Throws StateError if the dataset
// already contains augmented samples.
Manifest augment_gaussian(ManifestWriter& writer, double mean, double variance, std::uint64_t seed);

// ------------------------------------------------------------------ statistics

struct ClassCountTable {
    std::vector<std::string> columns;  // one per theme
    std::array<std::vector<std::int64_t>, kNumCommands> counts;
    std::array<std::int64_t, kNumCommands> totals{};
    std::int64_t grand_total = 0;

    std::string format() const;
};

ClassCountTable class_counts(const Manifest& manifest);

// ------------------------------------------------------------------ batching

struct Split {
    std::vector<std::size_t> train;    // indices into manifest.samples
    std::vector<std::size_t> holdout;
    std::vector<std::int64_t> holdout_worlds;
};

// Partition by world_id; holdout_fraction of the worlds (at least one when
// there are two or more) go to holdout.
Split split_by_world(const Manifest& manifest, double holdout_fraction = 0.1, std::uint64_t seed = 0);

/// Seeded epoch shuffling over a fixed index set; the last batch of an epoch
/// may be short.
class BatchStream {
public:
    BatchStream(std::vector<std::size_t> indices, int batch_size, std::uint64_t seed);

    std::vector<std::size_t> next();
    int epoch() const noexcept { return epoch_; }

private:
    void reshuffle();

    std::vector<std::size_t> indices_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    int batch_size_;
    std::uint64_t seed_;
    int epoch_ = 0;
};

/// Decoded images for a subset of samples, kept as 8-bit to bound memory.
class ImageStore {
public:
    ImageStore() = default;
    ImageStore(const std::filesystem::path& dir, const Manifest& manifest, const std::vector<std::size_t>& indices);

    void add(const Tensor& image, FlightCommand label, std::int64_t id);

    std::size_t size() const noexcept { return labels_.size(); }
    Tensor image(std::size_t i) const;
    FlightCommand label(std::size_t i) const { return labels_.at(i); }
    std::int64_t id(std::size_t i) const { return ids_.at(i); }
    const std::vector<FlightCommand>& labels() const noexcept { return labels_; }

private:
    std::vector<std::uint8_t> pixels_;
    std::vector<FlightCommand> labels_;
    std::vector<std::int64_t> ids_;
    Shape shape_;
};

}  // namespace cpnav
