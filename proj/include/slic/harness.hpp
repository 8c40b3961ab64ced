#pragma once

#include "slic/clustering.hpp"
#include "slic/core.hpp"
#include "slic/dataset.hpp"
#include "slic/metrics.hpp"
#include "slic/model.hpp"
#include "slic/sampling.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace slic {

enum class ClusteringMethod { finch_p1, finch_p2, kmeans, spherical_kmeans };
enum class LabelMode { pseudo, oracle };

// random_batch replaces semi-hard mining with a uniform different-video item;
// used by the instance-discrimination ablation.
enum class NegativeMode { semi_hard, random_batch };

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    int cluster_interval = 5;
    ClusteringMethod clustering_method = ClusteringMethod::finch_p1;
    int k_clusters = 20; // kmeans / spherical only
    SamplingConfig sampling;
    LossConfig loss;
    double lr = 0.1;
    double momentum = 0.5;
    AugConfig aug;
    std::vector<int> backbone_dims = {256, 128};
    int head_hidden = 64;
    int embed_dim = 32;
    LabelMode label_mode = LabelMode::pseudo;
    EmbeddingTap embedding_tap = EmbeddingTap::head;
    int eval_every = 0; // 0 = evaluate at clustering epochs only
    std::uint64_t master_seed = 0;
    NegativeMode negative_mode = NegativeMode::semi_hard;
    bool recluster = true; // false: keep the epoch-0 partition for the whole run
    bool keep_triplet_log = false;
    std::vector<int> ablation_kmeans_ks = {3, 20};
    double eval_fraction = 0.2;

    void validate(const Dataset& ds) const;
    EncoderArch encoder_arch(int input_dim) const;
};

struct MetricsLog {
    std::vector<EpochDiagnostics> epochs;
    std::vector<int> clustering_epochs;
    std::vector<TripletRecord> triplet_log; // populated when keep_triplet_log
    RetrievalReport final_retrieval;
};

struct TrainResult {
    Encoder encoder;
    MetricsLog log;
};

enum class ClipPolicy { center, uniform_avg, random };

struct EmbeddingPolicy {
    ClipPolicy policy = ClipPolicy::center;
    int num_clips = 10;       // uniform_avg: M uniformly spaced clips
    std::uint64_t seed = 0;   // random: seed for the per-video clip choice

    static EmbeddingPolicy center() { return {ClipPolicy::center, 0, 0}; }
    static EmbeddingPolicy uniform_avg(int m) { return {ClipPolicy::uniform_avg, m, 0}; }
    static EmbeddingPolicy random(std::uint64_t seed) { return {ClipPolicy::random, 0, seed}; }
};

// One embedding per video under the given clip policy and tap. uniform_avg
// clamps M to clips_per_video, recording a warning.
Matrix compute_all_embeddings(const Encoder& enc, const Dataset& ds, const EmbeddingPolicy& policy,
                              EmbeddingTap tap, std::vector<std::string>* warnings = nullptr);

TrainResult train(const Dataset& ds, const TrainConfig& cfg);

// Queries: test videos averaged over min(T, 10) uniformly spaced clips.
// Gallery: train videos at one seeded random clip each. Labels required.
RetrievalReport evaluate_retrieval(const Encoder& enc, const Dataset& train_ds,
                                   const Dataset& test_ds, EmbeddingTap tap);

struct AblationCell {
    std::string name;
    TrainConfig config;
};

std::vector<AblationCell> ablation_preset(const std::string& preset, const TrainConfig& base);

// Splits the dataset, trains every cell with the shared seed, evaluates each
// on the held-out side, and writes <out_dir>/comparison.csv plus per-cell run
// directories.
void run_ablation(const std::string& preset, const Dataset& ds, const TrainConfig& base,
                  const std::filesystem::path& out_dir);

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j);

// Header: epoch,mean_loss,nmi,num_clusters,fp_rate,fn_rate,recall1,recall5
void write_metrics_csv(const MetricsLog& log, const std::filesystem::path& path);

nlohmann::json retrieval_report_to_json(const RetrievalReport& report);

} // namespace slic
