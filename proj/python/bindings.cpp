#include "slic/harness.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>

namespace py = pybind11;
using namespace slic;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-d float array");
    Matrix m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + arr.size(), m.data().begin());
    return m;
}

py::array_t<double> from_matrix(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

py::array_t<int> from_partition(const Partition& p) {
    py::array_t<int> out(p.size());
    std::copy(p.assignment.begin(), p.assignment.end(), out.mutable_data());
    return out;
}

SynthConfig synth_from_args(int num_classes, int videos_per_class, int clips_per_video,
                            int raw_dim, double class_separation, double video_spread,
                            double clip_drift, double view_noise, int num_views,
                            std::uint64_t seed) {
    SynthConfig cfg;
    cfg.num_classes = num_classes;
    cfg.videos_per_class = videos_per_class;
    cfg.clips_per_video = clips_per_video;
    cfg.raw_dim = raw_dim;
    cfg.class_separation = class_separation;
    cfg.video_spread = video_spread;
    cfg.clip_drift = clip_drift;
    cfg.view_noise = view_noise;
    cfg.num_views = num_views;
    cfg.seed = seed;
    return cfg;
}

EmbeddingTap tap_from_name(const std::string& name) {
    if (name == "head") return EmbeddingTap::head;
    if (name == "backbone") return EmbeddingTap::backbone;
    throw std::invalid_argument("tap must be 'head' or 'backbone'");
}

} // namespace

PYBIND11_MODULE(_slic, m) {
    m.doc() = "clustering-driven self-supervised metric learning on feature-vector videos";

    m.def(
        "cosine_distance",
        [](const std::vector<double>& u, const std::vector<double>& v) {
            return cosine_distance(u, v);
        },
        py::arg("u"), py::arg("v"), "1 - cos(u, v), clamped to [0, 2]");

    m.def(
        "l2_normalize",
        [](const std::vector<double>& v) {
            Vec out = l2_normalize(v);
            py::array_t<double> arr(static_cast<py::ssize_t>(out.size()));
            std::copy(out.begin(), out.end(), arr.mutable_data());
            return arr;
        },
        py::arg("v"));

    m.def(
        "pairwise_cosine_distances",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
            return from_matrix(pairwise_cosine_distances(to_matrix(a), to_matrix(b)));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "finch",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& emb) {
            PartitionHierarchy h = finch(to_matrix(emb));
            py::list out;
            for (const auto& p : h.partitions) out.append(from_partition(p));
            return out;
        },
        py::arg("embeddings"),
        "first-neighbor partition hierarchy, finest (partition 1) first");

    m.def(
        "kmeans",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& emb, int k,
           std::uint64_t seed, int max_iter, double tol) {
            RngStream rng = RngStream::named(seed, "cluster");
            return from_partition(kmeans(to_matrix(emb), k, rng, {max_iter, tol}));
        },
        py::arg("embeddings"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iter") = 100,
        py::arg("tol") = 1e-6);

    m.def(
        "spherical_kmeans",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& emb, int k,
           std::uint64_t seed, int max_iter, double tol) {
            RngStream rng = RngStream::named(seed, "cluster");
            return from_partition(spherical_kmeans(to_matrix(emb), k, rng, {max_iter, tol}));
        },
        py::arg("embeddings"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iter") = 100,
        py::arg("tol") = 1e-6);

    m.def(
        "nmi",
        [](const std::vector<int>& a, const std::vector<int>& b) {
            return nmi(compact_partition(a), compact_partition(b));
        },
        py::arg("a"), py::arg("b"), "normalized mutual information between two labelings");

    m.def(
        "recall_at_k",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& queries,
           const std::vector<int>& query_labels,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& gallery,
           const std::vector<int>& gallery_labels, const std::vector<int>& ks) {
            RetrievalReport r = recall_at_k(to_matrix(queries), query_labels, to_matrix(gallery),
                                            gallery_labels, ks);
            py::dict out;
            for (const auto& [k, v] : r.recall) out[py::int_(k)] = v;
            return out;
        },
        py::arg("queries"), py::arg("query_labels"), py::arg("gallery"),
        py::arg("gallery_labels"), py::arg("ks") = std::vector<int>{1, 5, 10, 20});

    m.def(
        "generate_dataset",
        [](const std::string& out_dir, int num_classes, int videos_per_class, int clips_per_video,
           int raw_dim, double class_separation, double video_spread, double clip_drift,
           double view_noise, int num_views, std::uint64_t seed) {
            Dataset ds = generate_synthetic(
                synth_from_args(num_classes, videos_per_class, clips_per_video, raw_dim,
                                class_separation, video_spread, clip_drift, view_noise, num_views,
                                seed));
            return save_dataset(ds, out_dir).string();
        },
        py::arg("out_dir"), py::arg("num_classes") = 10, py::arg("videos_per_class") = 20,
        py::arg("clips_per_video") = 4, py::arg("raw_dim") = 64,
        py::arg("class_separation") = 3.0, py::arg("video_spread") = 1.0,
        py::arg("clip_drift") = 0.3, py::arg("view_noise") = 0.1, py::arg("num_views") = 2,
        py::arg("seed") = 0, "generate and save a synthetic dataset; returns the manifest path");

    m.def(
        "load_features",
        [](const std::string& manifest) {
            Dataset ds = load_dataset(manifest);
            py::array_t<double> features(
                {ds.num_videos(), ds.clips_per_video(), ds.num_views(), ds.raw_dim()});
            double* out = features.mutable_data();
            for (int v = 0; v < ds.num_videos(); ++v)
                for (int t = 0; t < ds.clips_per_video(); ++t)
                    for (int w = 0; w < ds.num_views(); ++w) {
                        auto span = ds.clip(v, t, w);
                        out = std::copy(span.begin(), span.end(), out);
                    }
            py::object labels = py::none();
            if (ds.has_labels()) labels = py::cast(ds.labels());
            return py::make_tuple(features, labels);
        },
        py::arg("manifest"), "features as [video][clip][view][dim], plus labels when present");

    m.def(
        "split_dataset",
        [](const std::string& manifest, double test_fraction, const std::string& train_dir,
           const std::string& test_dir) {
            Dataset ds = load_dataset(manifest);
            auto [train_ds, test_ds] = split_dataset(ds, test_fraction);
            return py::make_tuple(save_dataset(train_ds, train_dir).string(),
                                  save_dataset(test_ds, test_dir).string());
        },
        py::arg("manifest"), py::arg("test_fraction"), py::arg("train_dir"), py::arg("test_dir"),
        "deterministic stratified train/test split; returns the two manifest paths");

    m.def(
        "train",
        [](const std::string& manifest, const std::string& config_json,
           const std::string& out_dir) {
            Dataset ds = load_dataset(manifest);
            TrainConfig cfg = train_config_from_json(
                config_json.empty() ? nlohmann::json::object()
                                    : nlohmann::json::parse(config_json));
            TrainResult res = train(ds, cfg);

            const auto dir = std::filesystem::path(out_dir);
            std::filesystem::create_directories(dir);
            save_encoder(res.encoder, dir / "checkpoint.bin", cfg.master_seed, cfg.epochs);
            write_metrics_csv(res.log, dir / "metrics.csv");
            std::ofstream cfg_out(dir / "config.resolved.json");
            cfg_out << train_config_to_json(cfg).dump(2) << "\n";

            const auto& last = res.log.epochs.back();
            py::dict out;
            out["checkpoint"] = (dir / "checkpoint.bin").string();
            out["metrics_csv"] = (dir / "metrics.csv").string();
            out["final_mean_loss"] = last.mean_loss;
            out["final_nmi"] = last.nmi;
            out["final_num_clusters"] = last.num_clusters;
            out["clustering_epochs"] = res.log.clustering_epochs;
            return out;
        },
        py::arg("manifest"), py::arg("config_json"), py::arg("out_dir"),
        "run the training loop; writes checkpoint.bin, metrics.csv, config.resolved.json");

    m.def(
        "evaluate",
        [](const std::string& checkpoint, const std::string& train_manifest,
           const std::string& test_manifest, const std::string& tap) {
            LoadedEncoder loaded = load_encoder(checkpoint);
            Dataset train_ds = load_dataset(train_manifest);
            Dataset test_ds = load_dataset(test_manifest);
            RetrievalReport r =
                evaluate_retrieval(loaded.encoder, train_ds, test_ds, tap_from_name(tap));
            py::dict out;
            for (const auto& [k, v] : r.recall) out[py::int_(k)] = v;
            return out;
        },
        py::arg("checkpoint"), py::arg("train_manifest"), py::arg("test_manifest"),
        py::arg("tap") = "head", "retrieval recall@{1,5,10,20} of a trained encoder");

    m.def(
        "compute_embeddings",
        [](const std::string& checkpoint, const std::string& manifest, const std::string& policy,
           int num_clips, const std::string& tap) {
            LoadedEncoder loaded = load_encoder(checkpoint);
            Dataset ds = load_dataset(manifest);
            EmbeddingPolicy pol;
            if (policy == "center")
                pol = EmbeddingPolicy::center();
            else if (policy == "uniform_avg")
                pol = EmbeddingPolicy::uniform_avg(num_clips);
            else
                throw std::invalid_argument("policy must be 'center' or 'uniform_avg'");
            return from_matrix(compute_all_embeddings(loaded.encoder, ds, pol, tap_from_name(tap)));
        },
        py::arg("checkpoint"), py::arg("manifest"), py::arg("policy") = "center",
        py::arg("num_clips") = 10, py::arg("tap") = "head");
}
