#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cpnav/dataset.hpp"
#include "cpnav/error.hpp"
#include "cpnav/network.hpp"

namespace cpnav {

struct VizConfig {
    int steps = 200;
    double step_size = 1.0;  // applied to the L2-normalised gradient
    double l2_decay = 0.01;
    int blur_every = 4;      // 0 disables blurring
    double blur_sigma = 0.5;
    std::uint64_t seed = 0;
};

void validate(const VizConfig& config);

struct ClassVisualization {
    int class_id = 0;
    Tensor image;
    std::vector<double> score_trace;  // score before each step, then the final score
};

class VisualizationDiverged : public NumericError {
public:
    VisualizationDiverged(const std::string& what, std::vector<double> trace)
        : NumericError(what), trace_(std::move(trace)) {}
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

// Seeded uniform [0.4, 0.6] starting image for gradient ascent.
Tensor visualization_init(const Shape& shape, std::uint64_t seed);

// Separable Gaussian per channel, edge-clamped, radius ceil(3 sigma).
Tensor gaussian_blur(const Tensor& image, double sigma);

/// Regularised gradient ascent on one pre-softmax class score:
/// x += step * g/(|g|+eps); x *= 1 - l2_decay; blur every blur_every steps;
/// clamp to [0,1].
ClassVisualization class_model_visualization(const Network& network, int class_id, const VizConfig& config);

// Trend of a score trace over consecutive `window`-step block means. Both
// flags also require the last block to beat the first.
struct ScoreTrend {
    bool strict = false;        // every block mean >= the previous one
    bool within_noise = false;  // no block mean (plus its own spread) falls below an earlier one
    double rise = 0.0;          // final minus initial score
};
ScoreTrend score_trend(const std::vector<double>& trace, int window = 20);

// score_trend(...).within_noise: the L2 decay settles the raw score on a
// plateau whose block means jitter by a fraction of the blur sawtooth.
bool smoothed_score_increases(const std::vector<double>& trace, int window = 20);

// (1,H,W): channel-max |d score / d pixel|, scaled so the peak is 1.
Tensor saliency_map(const Network& network, const Tensor& image, int class_id);

// 0.5 * frame + 0.5 * heat colour of the saliency value.
Tensor saliency_overlay(const Tensor& frame, const Tensor& saliency);
Tensor heat_color(const Tensor& saliency);

// Sample ids sorted by class score (descending, ties by id), at most k.
std::vector<std::int64_t> top_scoring_images(const Network& network, const ImageStore& images, int class_id,
                                             std::size_t k = 50);

struct OcclusionResult {
    double saliency_delta = 0.0;  // |score change| zeroing the most salient pixels
    double random_delta = 0.0;    // zeroing a random square region of the same pixel count
    bool passed() const noexcept { return saliency_delta > random_delta; }
};

OcclusionResult occlusion_check(const Network& network, const Tensor& image, int class_id, double fraction,
                                std::uint64_t seed);

struct SaliencyPanel {
    int class_id = 0;
    std::int64_t sample_id = 0;
    Tensor frame;
    Tensor saliency;
};

// classviz_<command>.ppm per class model, saliency_<command>_<rank>.ppm per
// panel, and index.txt listing every file.
std::vector<std::filesystem::path> emit_report(const std::filesystem::path& dir,
                                               const std::vector<ClassVisualization>& models,
                                               const std::vector<SaliencyPanel>& panels);

}  // namespace cpnav
