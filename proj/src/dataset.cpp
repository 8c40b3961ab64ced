#include "slic/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace slic {

namespace {

constexpr char kMagic[8] = {'S', 'L', 'I', 'C', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatVersion = 1;
constexpr double kMinVectorNorm = 1e-9;

double norm_of(std::span<const double> v) {
    double ss = 0.0;
    for (double x : v) ss += x * x;
    return std::sqrt(ss);
}

} // namespace

Dataset::Dataset(int num_videos, int clips_per_video, std::vector<std::string> view_names, int raw_dim)
    : num_videos_(num_videos),
      clips_per_video_(clips_per_video),
      view_names_(std::move(view_names)),
      raw_dim_(raw_dim) {
    if (num_videos_ < 1) throw std::invalid_argument("Dataset: need at least one video");
    if (clips_per_video_ < 2) throw std::invalid_argument("Dataset: clips_per_video must be >= 2");
    if (view_names_.empty() || view_names_.size() > 2)
        throw std::invalid_argument("Dataset: expected one or two views");
    if (raw_dim_ < 1) throw std::invalid_argument("Dataset: raw_dim must be >= 1");
    features_.assign(static_cast<std::size_t>(num_videos_) * clips_per_video_ * num_views() * raw_dim_, 0.0);
}

std::span<const double> Dataset::clip(int video, int clip_index, int view) const {
    std::size_t off = ((static_cast<std::size_t>(video) * clips_per_video_ + clip_index) * num_views() + view) *
                      raw_dim_;
    return {features_.data() + off, static_cast<std::size_t>(raw_dim_)};
}

std::span<double> Dataset::clip_mut(int video, int clip_index, int view) {
    std::size_t off = ((static_cast<std::size_t>(video) * clips_per_video_ + clip_index) * num_views() + view) *
                      raw_dim_;
    return {features_.data() + off, static_cast<std::size_t>(raw_dim_)};
}

const std::vector<int>& Dataset::labels() const {
    if (!labels_) throw std::invalid_argument("Dataset: labels requested but absent");
    return *labels_;
}

void Dataset::set_labels(std::vector<int> labels) {
    if (static_cast<int>(labels.size()) != num_videos_)
        throw std::invalid_argument("Dataset: label count != num_videos");
    labels_ = std::move(labels);
}

void Dataset::validate() const {
    for (int v = 0; v < num_videos_; ++v)
        for (int t = 0; t < clips_per_video_; ++t)
            for (int w = 0; w < num_views(); ++w) {
                auto span = clip(v, t, w);
                for (double x : span)
                    if (!std::isfinite(x))
                        throw std::domain_error("Dataset: non-finite feature at video " + std::to_string(v));
                if (norm_of(span) <= kMinVectorNorm)
                    throw std::domain_error("Dataset: zero-norm clip at video " + std::to_string(v) +
                                            " clip " + std::to_string(t) + " view " + std::to_string(w));
            }
}

void SynthConfig::validate() const {
    if (num_classes < 2) throw std::invalid_argument("SynthConfig: num_classes must be >= 2");
    if (videos_per_class < 1) throw std::invalid_argument("SynthConfig: videos_per_class must be >= 1");
    if (clips_per_video < 2) throw std::invalid_argument("SynthConfig: clips_per_video must be >= 2");
    if (raw_dim < 1) throw std::invalid_argument("SynthConfig: raw_dim must be >= 1");
    if (class_separation < 0 || video_spread < 0 || clip_drift < 0 || view_noise < 0)
        throw std::invalid_argument("SynthConfig: sigmas must be >= 0");
    if (num_views != 1 && num_views != 2)
        throw std::invalid_argument("SynthConfig: num_views must be 1 or 2");
}

void AugConfig::validate() const {
    if (noise_sigma < 0) throw std::invalid_argument("AugConfig: noise_sigma must be >= 0");
    if (scale_jitter < 0 || scale_jitter >= 1)
        throw std::invalid_argument("AugConfig: scale_jitter must be in [0, 1)");
}

namespace {

// Random orthogonal matrix via modified Gram-Schmidt on a Gaussian matrix.
Matrix random_orthogonal(int dim, RngStream& rng) {
    Matrix m(dim, dim);
    for (double& x : m.data()) x = rng.normal();
    for (int i = 0; i < dim; ++i) {
        double* ri = m.row(i);
        for (int j = 0; j < i; ++j) {
            const double* rj = m.row(j);
            double dot = 0.0;
            for (int k = 0; k < dim; ++k) dot += ri[k] * rj[k];
            for (int k = 0; k < dim; ++k) ri[k] -= dot * rj[k];
        }
        double ss = 0.0;
        for (int k = 0; k < dim; ++k) ss += ri[k] * ri[k];
        double norm = std::sqrt(ss);
        if (norm <= kNormEps) throw std::domain_error("random_orthogonal: rank-deficient draw");
        for (int k = 0; k < dim; ++k) ri[k] /= norm;
    }
    return m;
}

} // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    RngStream rng = RngStream::named(cfg.seed, "data-gen");

    const int d = cfg.raw_dim;
    std::vector<std::string> views = {"primary"};
    if (cfg.num_views == 2) views.push_back("secondary");

    Matrix view_transform;
    if (cfg.num_views == 2) view_transform = random_orthogonal(d, rng);

    const int num_videos = cfg.num_classes * cfg.videos_per_class;
    Dataset ds(num_videos, cfg.clips_per_video, views, d);
    std::vector<int> labels(num_videos);
    ds.seed = cfg.seed;

    Vec prototype(d), center(d), primary(d), secondary(d);
    int video = 0;
    for (int c = 0; c < cfg.num_classes; ++c) {
        for (int k = 0; k < d; ++k) prototype[k] = cfg.class_separation * rng.normal();
        for (int v = 0; v < cfg.videos_per_class; ++v, ++video) {
            labels[video] = c;
            for (int k = 0; k < d; ++k) center[k] = prototype[k] + cfg.video_spread * rng.normal();
            for (int t = 0; t < cfg.clips_per_video; ++t) {
                for (int k = 0; k < d; ++k) primary[k] = center[k] + cfg.clip_drift * rng.normal();
                std::copy(primary.begin(), primary.end(), ds.clip_mut(video, t, 0).begin());
                if (cfg.num_views == 2) {
                    for (int r = 0; r < d; ++r) {
                        const double* row = view_transform.row(r);
                        double acc = 0.0;
                        for (int k = 0; k < d; ++k) acc += row[k] * primary[k];
                        secondary[r] = acc;
                    }
                    for (int k = 0; k < d; ++k) secondary[k] += cfg.view_noise * rng.normal();
                    std::copy(secondary.begin(), secondary.end(), ds.clip_mut(video, t, 1).begin());
                }
            }
        }
    }
    ds.set_labels(std::move(labels));
    ds.validate();
    return ds;
}

Vec augment(std::span<const double> clip_features, const AugConfig& cfg, RngStream& rng) {
    cfg.validate();
    const std::size_t d = clip_features.size();
    Vec scaled(d);
    for (std::size_t i = 0; i < d; ++i)
        scaled[i] = clip_features[i] * rng.uniform(1.0 - cfg.scale_jitter, 1.0 + cfg.scale_jitter);

    Vec out(d);
    for (int attempt = 0; attempt < 2; ++attempt) {
        for (std::size_t i = 0; i < d; ++i) out[i] = scaled[i] + cfg.noise_sigma * rng.normal();
        if (norm_of(out) > kMinVectorNorm) return out;
    }
    throw std::domain_error("augment: output collapsed to zero norm after resampling");
}

std::filesystem::path save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto features_path = dir / "features.bin";
    const auto manifest_path = dir / "manifest.json";

    {
        std::ofstream out(features_path, std::ios::binary);
        if (!out) throw DataError("save_dataset: cannot open " + features_path.string());
        out.write(kMagic, 8);
        std::uint32_t version = kFeatVersion, reserved = 0;
        out.write(reinterpret_cast<const char*>(&version), 4);
        out.write(reinterpret_cast<const char*>(&reserved), 4);
        std::vector<float> buffer(static_cast<std::size_t>(ds.raw_dim()));
        for (int v = 0; v < ds.num_videos(); ++v)
            for (int t = 0; t < ds.clips_per_video(); ++t)
                for (int w = 0; w < ds.num_views(); ++w) {
                    auto span = ds.clip(v, t, w);
                    for (int k = 0; k < ds.raw_dim(); ++k) buffer[k] = static_cast<float>(span[k]);
                    out.write(reinterpret_cast<const char*>(buffer.data()),
                              static_cast<std::streamsize>(buffer.size() * sizeof(float)));
                }
        if (!out) throw DataError("save_dataset: write failed for " + features_path.string());
    }

    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["num_videos"] = ds.num_videos();
    manifest["clips_per_video"] = ds.clips_per_video();
    manifest["views"] = ds.view_names();
    manifest["raw_dim"] = ds.raw_dim();
    manifest["dtype"] = "f32le";
    manifest["features_file"] = "features.bin";
    if (ds.has_labels()) manifest["labels"] = ds.labels();
    if (ds.seed) manifest["seed"] = *ds.seed;

    std::ofstream mout(manifest_path);
    if (!mout) throw DataError("save_dataset: cannot open " + manifest_path.string());
    mout << manifest.dump(2) << "\n";
    return manifest_path;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream min(manifest_path);
    if (!min) throw DataError("load_dataset: cannot open " + manifest_path.string());
    nlohmann::json manifest;
    try {
        min >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_dataset: bad manifest JSON: " + std::string(e.what()));
    }

    if (!manifest.contains("format_version") || manifest["format_version"].get<int>() != 1)
        throw DataError("load_dataset: unsupported manifest format_version");
    if (manifest.value("dtype", "") != "f32le")
        throw DataError("load_dataset: unsupported dtype (expected f32le)");

    const int num_videos = manifest.at("num_videos").get<int>();
    const int clips = manifest.at("clips_per_video").get<int>();
    const auto views = manifest.at("views").get<std::vector<std::string>>();
    const int raw_dim = manifest.at("raw_dim").get<int>();

    Dataset ds(num_videos, clips, views, raw_dim);
    if (manifest.contains("labels")) ds.set_labels(manifest["labels"].get<std::vector<int>>());
    if (manifest.contains("seed")) ds.seed = manifest["seed"].get<std::uint64_t>();

    const auto features_path = manifest_path.parent_path() / manifest.at("features_file").get<std::string>();
    std::ifstream in(features_path, std::ios::binary);
    if (!in) throw DataError("load_dataset: cannot open " + features_path.string());

    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("load_dataset: bad magic at byte offset 0 in " + features_path.string());
    std::uint32_t version = 0, reserved = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&reserved), 4);
    if (!in || version != kFeatVersion)
        throw DataError("load_dataset: unsupported feature file version at byte offset 8");

    const std::size_t vectors =
        static_cast<std::size_t>(num_videos) * clips * ds.num_views();
    std::vector<float> buffer(static_cast<std::size_t>(raw_dim));
    std::size_t offset = 16;
    std::size_t index = 0;
    for (int v = 0; v < num_videos; ++v)
        for (int t = 0; t < clips; ++t)
            for (int w = 0; w < ds.num_views(); ++w, ++index) {
                in.read(reinterpret_cast<char*>(buffer.data()),
                        static_cast<std::streamsize>(buffer.size() * sizeof(float)));
                if (!in)
                    throw DataError("load_dataset: truncated features at byte offset " +
                                    std::to_string(offset) + " (vector " + std::to_string(index) + " of " +
                                    std::to_string(vectors) + ")");
                auto span = ds.clip_mut(v, t, w);
                double ss = 0.0;
                for (int k = 0; k < raw_dim; ++k) {
                    if (!std::isfinite(buffer[k]))
                        throw DataError("load_dataset: non-finite value at byte offset " +
                                        std::to_string(offset + k * sizeof(float)));
                    span[k] = static_cast<double>(buffer[k]);
                    ss += span[k] * span[k];
                }
                if (std::sqrt(ss) <= kMinVectorNorm)
                    throw DataError("load_dataset: zero-norm vector at byte offset " +
                                    std::to_string(offset));
                offset += buffer.size() * sizeof(float);
            }
    // trailing bytes mean the file disagrees with the manifest
    in.peek();
    if (!in.eof())
        throw DataError("load_dataset: trailing bytes at offset " + std::to_string(offset) +
                        " (file larger than manifest shape)");
    return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double test_fraction) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("split_dataset: test_fraction must be in (0, 1)");
    const int stride = std::max(2, static_cast<int>(std::lround(1.0 / test_fraction)));

    std::vector<int> position_in_group(ds.num_videos(), 0);
    if (ds.has_labels()) {
        std::map<int, int> seen;
        for (int v = 0; v < ds.num_videos(); ++v) position_in_group[v] = seen[ds.labels()[v]]++;
    } else {
        for (int v = 0; v < ds.num_videos(); ++v) position_in_group[v] = v;
    }

    std::vector<int> train_ids, test_ids;
    for (int v = 0; v < ds.num_videos(); ++v) {
        if (position_in_group[v] % stride == stride - 1)
            test_ids.push_back(v);
        else
            train_ids.push_back(v);
    }
    if (train_ids.empty() || test_ids.empty())
        throw std::invalid_argument("split_dataset: split produced an empty side");

    auto subset = [&](const std::vector<int>& ids) {
        Dataset out(static_cast<int>(ids.size()), ds.clips_per_video(), ds.view_names(), ds.raw_dim());
        std::vector<int> labels;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            for (int t = 0; t < ds.clips_per_video(); ++t)
                for (int w = 0; w < ds.num_views(); ++w) {
                    auto src = ds.clip(ids[i], t, w);
                    std::copy(src.begin(), src.end(), out.clip_mut(static_cast<int>(i), t, w).begin());
                }
            if (ds.has_labels()) labels.push_back(ds.labels()[ids[i]]);
        }
        if (ds.has_labels()) out.set_labels(std::move(labels));
        out.seed = ds.seed;
        return out;
    };
    return {subset(train_ids), subset(test_ids)};
}

} // namespace slic
