#include "slic/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw slic::DataError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("bad JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

// center-clip feature matrix (primary view) for raw-feature clustering
slic::Matrix raw_center_features(const slic::Dataset& ds) {
    slic::Matrix out(ds.num_videos(), ds.raw_dim());
    const int center = ds.clips_per_video() / 2;
    for (int v = 0; v < ds.num_videos(); ++v) {
        auto span = ds.clip(v, center, 0);
        std::copy(span.begin(), span.end(), out.row(v));
    }
    return out;
}

int cmd_synth(const fs::path& config_path, const fs::path& out_dir) {
    slic::SynthConfig cfg = slic::synth_config_from_json(read_json_file(config_path));
    slic::Dataset ds = slic::generate_synthetic(cfg);
    const auto manifest = slic::save_dataset(ds, out_dir);
    std::cout << manifest.string() << "\n";
    return 0;
}

int cmd_cluster(const fs::path& data, const std::string& method, int k_clusters,
                const fs::path& out, const std::string& checkpoint, std::uint64_t seed) {
    slic::Dataset ds = slic::load_dataset(data);

    slic::Matrix features;
    if (checkpoint.empty()) {
        features = raw_center_features(ds);
    } else {
        slic::LoadedEncoder loaded = slic::load_encoder(checkpoint);
        features = slic::compute_all_embeddings(loaded.encoder, ds,
                                                slic::EmbeddingPolicy::center(),
                                                slic::EmbeddingTap::head);
    }

    std::vector<slic::Partition> partitions;
    if (method == "finch") {
        for (const auto& p : slic::finch(features).partitions) partitions.push_back(p);
    } else if (method == "kmeans" || method == "spherical") {
        if (k_clusters < 2) throw std::invalid_argument("--k-clusters must be >= 2 for " + method);
        slic::RngStream rng = slic::RngStream::named(seed, "cluster");
        partitions.push_back(method == "kmeans"
                                 ? slic::kmeans(features, k_clusters, rng)
                                 : slic::spherical_kmeans(features, k_clusters, rng));
    } else {
        throw std::invalid_argument("unknown clustering method '" + method + "'");
    }

    json result;
    result["method"] = method;
    json parts = json::array();
    for (const auto& p : partitions) parts.push_back(p.assignment);
    result["partitions"] = parts;
    if (ds.has_labels()) {
        const slic::Partition gt = slic::compact_partition(ds.labels());
        json nmis = json::array();
        for (const auto& p : partitions) nmis.push_back(slic::nmi(p, gt));
        result["nmi_vs_labels"] = nmis;
    }

    std::ofstream os(out);
    if (!os) throw slic::DataError("cannot open " + out.string());
    os << result.dump(2) << "\n";
    return 0;
}

int cmd_train(const fs::path& data, const fs::path& config_path, const fs::path& out_dir) {
    slic::Dataset ds = slic::load_dataset(data);
    slic::TrainConfig cfg = slic::train_config_from_json(read_json_file(config_path));
    slic::TrainResult result = slic::train(ds, cfg);

    fs::create_directories(out_dir);
    slic::save_encoder(result.encoder, out_dir / "checkpoint.bin", cfg.master_seed, cfg.epochs);
    slic::write_metrics_csv(result.log, out_dir / "metrics.csv");
    std::ofstream cfg_out(out_dir / "config.resolved.json");
    if (!cfg_out) throw slic::DataError("cannot open config.resolved.json");
    cfg_out << slic::train_config_to_json(cfg).dump(2) << "\n";

    const auto& last = result.log.epochs.back();
    std::printf("trained %d epochs; final mean loss %.6g\n", cfg.epochs, last.mean_loss);
    return 0;
}

int cmd_eval(const std::string& checkpoint, const fs::path& train_data, const fs::path& test_data,
             const std::string& tap_name, const fs::path& out) {
    slic::EmbeddingTap tap;
    if (tap_name == "head")
        tap = slic::EmbeddingTap::head;
    else if (tap_name == "backbone")
        tap = slic::EmbeddingTap::backbone;
    else
        throw std::invalid_argument("--tap must be head or backbone");

    slic::LoadedEncoder loaded = slic::load_encoder(checkpoint);
    slic::Dataset train_ds = slic::load_dataset(train_data);
    slic::Dataset test_ds = slic::load_dataset(test_data);
    slic::RetrievalReport report = slic::evaluate_retrieval(loaded.encoder, train_ds, test_ds, tap);

    json j = slic::retrieval_report_to_json(report);
    j["tap"] = tap_name;
    std::ofstream os(out);
    if (!os) throw slic::DataError("cannot open " + out.string());
    os << j.dump(2) << "\n";
    for (const auto& [k, v] : report.recall) std::printf("recall@%d %.4f\n", k, v);
    return 0;
}

int cmd_ablate(const std::string& preset, const fs::path& data, const fs::path& config_path,
               const fs::path& out_dir) {
    slic::Dataset ds = slic::load_dataset(data);
    slic::TrainConfig base = slic::train_config_from_json(read_json_file(config_path));
    slic::run_ablation(preset, ds, base, out_dir);
    std::cout << (out_dir / "comparison.csv").string() << "\n";
    return 0;
}

int cmd_export(const std::string& checkpoint, const fs::path& data, const std::string& policy_str,
               const fs::path& out) {
    slic::EmbeddingPolicy policy;
    if (policy_str == "center") {
        policy = slic::EmbeddingPolicy::center();
    } else if (policy_str.rfind("uniform_avg:", 0) == 0) {
        const int m = std::stoi(policy_str.substr(12));
        policy = slic::EmbeddingPolicy::uniform_avg(m);
    } else {
        throw std::invalid_argument("--policy must be center or uniform_avg:M");
    }

    slic::LoadedEncoder loaded = slic::load_encoder(checkpoint);
    slic::Dataset ds = slic::load_dataset(data);
    std::vector<std::string> warnings;
    slic::Matrix embs = slic::compute_all_embeddings(loaded.encoder, ds, policy,
                                                     slic::EmbeddingTap::head, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    std::ofstream os(out, std::ios::binary);
    if (!os) throw slic::DataError("cannot open " + out.string());
    os.write("SLICFEAT", 8);
    std::uint32_t version = 1, reserved = 0;
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.write(reinterpret_cast<const char*>(&reserved), 4);
    std::vector<float> buffer(embs.cols());
    for (int v = 0; v < embs.rows(); ++v) {
        const double* row = embs.row(v);
        for (int k = 0; k < embs.cols(); ++k) buffer[k] = static_cast<float>(row[k]);
        os.write(reinterpret_cast<const char*>(buffer.data()),
                 static_cast<std::streamsize>(buffer.size() * sizeof(float)));
    }
    if (!os) throw slic::DataError("write failed for " + out.string());
    std::printf("wrote %d x %d embeddings\n", embs.rows(), embs.cols());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"clustering-driven self-supervised metric learning on feature-vector videos"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, method = "finch", checkpoint, tap = "head";
    std::string train_data, test_data, preset, policy = "center";
    int k_clusters = 0;
    std::uint64_t seed = 0;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--config", config_path, "SynthConfig JSON")->required();
    synth->add_option("--out", out_path, "output directory")->required();

    auto* cluster = app.add_subcommand("cluster", "cluster raw features or encoder embeddings");
    cluster->add_option("--data", data_path, "dataset manifest")->required();
    cluster->add_option("--method", method, "finch|kmeans|spherical");
    cluster->add_option("--k-clusters", k_clusters, "K for kmeans/spherical");
    cluster->add_option("--out", out_path, "output partitions JSON")->required();
    cluster->add_option("--checkpoint", checkpoint, "cluster encoder embeddings instead of raw features");
    cluster->add_option("--seed", seed, "rng seed for kmeans seeding");

    auto* train = app.add_subcommand("train", "run the training loop");
    train->add_option("--data", data_path, "dataset manifest")->required();
    train->add_option("--config", config_path, "TrainConfig JSON")->required();
    train->add_option("--out", out_path, "run directory")->required();

    auto* eval = app.add_subcommand("eval", "retrieval evaluation");
    eval->add_option("--checkpoint", checkpoint, "encoder checkpoint")->required();
    eval->add_option("--train-data", train_data, "gallery dataset manifest")->required();
    eval->add_option("--test-data", test_data, "query dataset manifest")->required();
    eval->add_option("--tap", tap, "head|backbone");
    eval->add_option("--out", out_path, "output report JSON")->required();

    auto* ablate = app.add_subcommand("ablate", "run an ablation preset");
    ablate->add_option("--preset", preset, "components|clustering|positives")->required();
    ablate->add_option("--data", data_path, "dataset manifest")->required();
    ablate->add_option("--config", config_path, "base TrainConfig JSON")->required();
    ablate->add_option("--out", out_path, "output directory")->required();

    auto* exp = app.add_subcommand("export-embeddings", "export per-video embeddings");
    exp->add_option("--checkpoint", checkpoint, "encoder checkpoint")->required();
    exp->add_option("--data", data_path, "dataset manifest")->required();
    exp->add_option("--policy", policy, "center|uniform_avg:M");
    exp->add_option("--out", out_path, "output SLICFEAT binary")->required();

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(config_path, out_path);
        if (cluster->parsed()) return cmd_cluster(data_path, method, k_clusters, out_path, checkpoint, seed);
        if (train->parsed()) return cmd_train(data_path, config_path, out_path);
        if (eval->parsed()) return cmd_eval(checkpoint, train_data, test_data, tap, out_path);
        if (ablate->parsed()) return cmd_ablate(preset, data_path, config_path, out_path);
        if (exp->parsed()) return cmd_export(checkpoint, data_path, policy, out_path);
        return 2;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const slic::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::domain_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
