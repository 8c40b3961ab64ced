#pragma once

#include "slic/core.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace slic {

struct ClipRef {
    int video_id = 0;
    int clip_index = 0;
    int view_index = 0;
};

// Videos x clips x views of raw feature vectors. Features are stored in f64;
// the on-disk format is f32 little-endian (SLICFEAT). Labels are optional and
// evaluation-only: training code never reads them.
class Dataset {
public:
    Dataset(int num_videos, int clips_per_video, std::vector<std::string> view_names, int raw_dim);

    int num_videos() const { return num_videos_; }
    int clips_per_video() const { return clips_per_video_; }
    int num_views() const { return static_cast<int>(view_names_.size()); }
    int raw_dim() const { return raw_dim_; }
    const std::vector<std::string>& view_names() const { return view_names_; }

    std::span<const double> clip(int video, int clip_index, int view) const;
    std::span<double> clip_mut(int video, int clip_index, int view);
    std::span<const double> clip(const ClipRef& ref) const {
        return clip(ref.video_id, ref.clip_index, ref.view_index);
    }

    bool has_labels() const { return labels_.has_value(); }
    const std::vector<int>& labels() const;
    void set_labels(std::vector<int> labels);
    void strip_labels() { labels_.reset(); }

    std::optional<std::uint64_t> seed; // generator seed, carried through the manifest

    // Checks indices and the per-vector norm floor (> 1e-9).
    void validate() const;

private:
    int num_videos_;
    int clips_per_video_;
    std::vector<std::string> view_names_;
    int raw_dim_;
    std::vector<double> features_; // [video][clip][view][dim]
    std::optional<std::vector<int>> labels_;
};

struct SynthConfig {
    int num_classes = 10;
    int videos_per_class = 20;
    int clips_per_video = 4;
    int raw_dim = 64;
    double class_separation = 3.0; // sigma of class prototypes
    double video_spread = 1.0;     // sigma of video centers around the prototype
    double clip_drift = 0.3;       // sigma of clips around the video center
    double view_noise = 0.1;       // sigma of the secondary view's additive noise
    int num_views = 2;             // 1 = primary only, 2 = primary + secondary
    std::uint64_t seed = 0;

    void validate() const;
};

struct AugConfig {
    double noise_sigma = 0.05;  // additive Gaussian sigma
    double scale_jitter = 0.1;  // per-dimension scale in [1 - rho, 1 + rho)

    void validate() const;
};

// Hierarchical Gaussian stand-in for a labeled video corpus: class prototypes,
// video centers around them, clips drifting around each center. The secondary
// view is a fixed seeded orthogonal transform of the primary clip plus noise,
// so it carries the same class structure under a different "modality".
Dataset generate_synthetic(const SynthConfig& cfg);

// Per-dimension scale jitter then additive Gaussian noise; resamples the noise
// once if the result collapses to zero norm, then throws std::domain_error.
Vec augment(std::span<const double> clip_features, const AugConfig& cfg, RngStream& rng);

// Writes manifest.json plus the SLICFEAT binary; returns the manifest path.
std::filesystem::path save_dataset(const Dataset& ds, const std::filesystem::path& dir);

Dataset load_dataset(const std::filesystem::path& manifest_path);

// Deterministic train/test split by video index: within each class (or
// globally when unlabeled), every round(1/test_fraction)-th video goes to the
// test side.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double test_fraction);

} // namespace slic
