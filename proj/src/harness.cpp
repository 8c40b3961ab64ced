#include "slic/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace slic {

namespace {

constexpr std::uint64_t kEvalGallerySeed = 0xE7A1;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

} // namespace

void TrainConfig::validate(const Dataset& ds) const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1 || batch_size > ds.num_videos())
        throw std::invalid_argument("TrainConfig: batch_size must be in [1, num_videos]");
    if (cluster_interval < 1) throw std::invalid_argument("TrainConfig: cluster_interval must be >= 1");
    if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
    if (eval_every < 0) throw std::invalid_argument("TrainConfig: eval_every must be >= 0");
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0))
        throw std::invalid_argument("TrainConfig: eval_fraction must be in (0, 1)");
    sampling.validate(ds.num_views());
    loss.validate();
    aug.validate();
    encoder_arch(ds.raw_dim()).validate();
    if (label_mode == LabelMode::oracle && !ds.has_labels())
        throw std::invalid_argument("TrainConfig: oracle label mode requires a labeled dataset");
    if (clustering_method == ClusteringMethod::kmeans ||
        clustering_method == ClusteringMethod::spherical_kmeans) {
        if (k_clusters < 2 || k_clusters > ds.num_videos())
            throw std::invalid_argument("TrainConfig: k_clusters must be in [2, num_videos]");
    }
}

EncoderArch TrainConfig::encoder_arch(int input_dim) const {
    EncoderArch arch;
    arch.input_dim = input_dim;
    arch.backbone_dims = backbone_dims;
    arch.head_hidden = head_hidden;
    arch.embed_dim = embed_dim;
    return arch;
}

Matrix compute_all_embeddings(const Encoder& enc, const Dataset& ds, const EmbeddingPolicy& policy,
                              EmbeddingTap tap, std::vector<std::string>* warnings) {
    if (enc.arch.input_dim != ds.raw_dim())
        throw std::invalid_argument("compute_all_embeddings: encoder input dim != raw_dim");
    const int v_count = ds.num_videos();
    const int t_count = ds.clips_per_video();
    const int out_dim =
        tap == EmbeddingTap::head ? enc.arch.embed_dim : enc.arch.backbone_dims.back();
    Matrix out(v_count, out_dim);

    // sequential clip selection keeps the RNG stream independent of threading
    std::vector<std::vector<int>> clips_of(v_count);
    switch (policy.policy) {
    case ClipPolicy::center:
        for (auto& c : clips_of) c = {t_count / 2};
        break;
    case ClipPolicy::random: {
        RngStream rng = RngStream::named(policy.seed, "gallery-clips");
        for (auto& c : clips_of) c = {static_cast<int>(rng.below(t_count))};
        break;
    }
    case ClipPolicy::uniform_avg: {
        if (policy.num_clips < 1)
            throw std::invalid_argument("compute_all_embeddings: uniform_avg needs M >= 1");
        int m = policy.num_clips;
        if (m > t_count) {
            if (warnings)
                warnings->push_back("uniform_avg clamped from M=" + std::to_string(m) + " to " +
                                    std::to_string(t_count) + " clips");
            m = t_count;
        }
        std::vector<int> indices(m);
        for (int j = 0; j < m; ++j) indices[j] = static_cast<int>((static_cast<std::int64_t>(j) * t_count) / m);
        for (auto& c : clips_of) c = indices;
        break;
    }
    }

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int v = 0; v < v_count; ++v) {
        double* row = out.row(v);
        const double inv = 1.0 / static_cast<double>(clips_of[v].size());
        for (int t : clips_of[v]) {
            ForwardTape tape = forward(enc, ds.clip(v, t, 0));
            auto emb = tap == EmbeddingTap::head ? tape.output() : tape.backbone_output(enc);
            for (int k = 0; k < out_dim; ++k) row[k] += emb[k] * inv;
        }
    }
    return out;
}

namespace {

Partition cluster_embeddings(const Matrix& embs, const TrainConfig& cfg, RngStream& rng) {
    switch (cfg.clustering_method) {
    case ClusteringMethod::finch_p1:
        return pseudo_labels(finch(embs), 0);
    case ClusteringMethod::finch_p2: {
        PartitionHierarchy h = finch(embs);
        return pseudo_labels(h, 1);
    }
    case ClusteringMethod::kmeans:
        return kmeans(embs, cfg.k_clusters, rng);
    case ClusteringMethod::spherical_kmeans:
        return spherical_kmeans(embs, cfg.k_clusters, rng);
    }
    throw std::invalid_argument("cluster_embeddings: unknown method");
}

// recall@{1,5} with the query itself excluded from its gallery
std::pair<double, double> leave_one_out_recall(const Matrix& embs, const std::vector<int>& labels) {
    const int n = embs.rows();
    if (n < 2) return {kNaN, kNaN};
    const int top = std::min(5, n - 1);
    const Matrix nm = l2_normalize_rows(embs, "embeddings"); // throws before the parallel loop
    const int dim = nm.cols();
    int hit1 = 0, hit5 = 0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : hit1, hit5)
#endif
    for (int q = 0; q < n; ++q) {
        const double* qr = nm.row(q);
        std::vector<std::pair<double, int>> order;
        order.reserve(n - 1);
        for (int g = 0; g < n; ++g) {
            if (g == q) continue;
            const double* gr = nm.row(g);
            double dot = 0.0;
            for (int k = 0; k < dim; ++k) dot += qr[k] * gr[k];
            order.emplace_back(1.0 - dot, g);
        }
        std::partial_sort(order.begin(), order.begin() + top, order.end());
        bool f1 = labels[order[0].second] == labels[q];
        bool f5 = f1;
        for (int r = 1; r < top && !f5; ++r) f5 = labels[order[r].second] == labels[q];
        hit1 += f1 ? 1 : 0;
        hit5 += f5 ? 1 : 0;
    }
    return {static_cast<double>(hit1) / n, static_cast<double>(hit5) / n};
}

struct ItemTapes {
    ForwardTape anchor, positive, temp_pos, temp_neg;
    Vec g_anchor, g_positive, g_temp_pos, g_temp_neg;
};

bool any_nonzero(const Vec& v) {
    for (double x : v)
        if (x != 0.0) return true;
    return false;
}

} // namespace

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate(ds);
    const int v_count = ds.num_videos();
    const int embed_dim = cfg.embed_dim;

    RngStream rng_init = RngStream::named(cfg.master_seed, "init");
    RngStream rng_sampling = RngStream::named(cfg.master_seed, "sampling");
    RngStream rng_augment = RngStream::named(cfg.master_seed, "augment");
    RngStream rng_cluster = RngStream::named(cfg.master_seed, "cluster");

    TrainResult result;
    result.encoder = init_encoder(cfg.encoder_arch(ds.raw_dim()), rng_init);
    Encoder& enc = result.encoder;
    OptState opt = OptState::make(enc, cfg.lr, cfg.momentum);
    Gradients grads = Gradients::zeros_like(enc);

    std::optional<Partition> gt; // handed only to metrics computations
    if (ds.has_labels()) gt = compact_partition(ds.labels());

    Partition pseudo;
    double last_nmi = kNaN, last_r1 = kNaN, last_r5 = kNaN;
    int num_clusters = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const bool cluster_now =
            (epoch % cfg.cluster_interval == 0) && (epoch == 0 || cfg.recluster);
        const bool eval_now = cluster_now || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0);

        if (cluster_now || (eval_now && gt)) {
            Matrix embs = compute_all_embeddings(enc, ds, EmbeddingPolicy::center(), EmbeddingTap::head);
            if (cluster_now) {
                pseudo = cfg.label_mode == LabelMode::oracle
                             ? *gt
                             : cluster_embeddings(embs, cfg, rng_cluster);
                result.log.clustering_epochs.push_back(epoch);
                num_clusters = pseudo.num_clusters;
                if (gt) last_nmi = nmi(pseudo, *gt);
            }
            if (eval_now && gt) std::tie(last_r1, last_r5) = leave_one_out_recall(embs, ds.labels());
        }

        std::vector<int> order(v_count);
        std::iota(order.begin(), order.end(), 0);
        rng_sampling.shuffle(order);

        double loss_sum = 0.0;
        int batch_count = 0;
        std::vector<TripletRecord> epoch_records;

        for (int start = 0; start < v_count; start += cfg.batch_size) {
            const int n = std::min(cfg.batch_size, v_count - start);
            TripletBatch batch = build_batch(ds, pseudo, std::span(order).subspan(start, n),
                                             cfg.sampling, rng_sampling);

            std::vector<ItemTapes> items(n);
            std::vector<int> batch_labels(n);
            Matrix anchor_embs(n, embed_dim);
            for (int i = 0; i < n; ++i) {
                const TripletItem& it = batch.items[i];
                auto anchor_x = ds.clip(it.anchor);
                Vec pos_x = augment(ds.clip(it.positive), cfg.aug, rng_augment);
                Vec temp_pos_x = augment(anchor_x, cfg.aug, rng_augment);
                auto temp_neg_x = ds.clip(it.temporal_negative.ref);

                items[i].anchor = forward(enc, anchor_x);
                items[i].positive = forward(enc, pos_x);
                items[i].temp_pos = forward(enc, temp_pos_x);
                items[i].temp_neg = forward(enc, temp_neg_x);
                items[i].g_anchor.assign(embed_dim, 0.0);
                items[i].g_positive.assign(embed_dim, 0.0);
                items[i].g_temp_pos.assign(embed_dim, 0.0);
                items[i].g_temp_neg.assign(embed_dim, 0.0);

                batch_labels[i] = pseudo.assignment[it.anchor.video_id];
                auto z = items[i].anchor.output();
                std::copy(z.begin(), z.end(), anchor_embs.row(i));
            }

            // negative mining against the batch's fresh embeddings
            for (int i = 0; i < n; ++i) {
                TripletItem& it = batch.items[i];
                std::optional<NegativePick> pick;
                if (cfg.negative_mode == NegativeMode::semi_hard) {
                    pick = mine_semi_hard_negative(items[i].anchor.output(),
                                                   items[i].positive.output(), anchor_embs,
                                                   batch_labels, batch_labels[i],
                                                   cfg.sampling.m1, rng_sampling);
                } else if (n > 1) {
                    // instance-discrimination ablation: uniform different-video item
                    int j = static_cast<int>(rng_sampling.below(static_cast<std::uint64_t>(n - 1)));
                    if (j >= i) ++j;
                    NegativePick p;
                    p.batch_index = j;
                    p.fallback = false;
                    p.anchor_positive_dist =
                        cosine_distance(items[i].anchor.output(), items[i].positive.output());
                    p.anchor_negative_dist =
                        cosine_distance(items[i].anchor.output(), anchor_embs.row_span(j));
                    pick = p;
                }
                if (pick) {
                    it.negative_batch_index = pick->batch_index;
                    it.negative_fallback = pick->fallback;
                }

                TripletRecord rec;
                rec.anchor_video = it.anchor.video_id;
                rec.positive_video = it.positive.video_id;
                rec.same_instance = it.positive_flags.same_instance;
                rec.flow_view = it.positive_flags.flow_view;
                rec.negative_video =
                    pick ? batch.items[pick->batch_index].anchor.video_id : -1;
                rec.fallback = pick ? pick->fallback : false;
                rec.anchor_positive_dist = pick ? pick->anchor_positive_dist : 0.0;
                rec.anchor_negative_dist = pick ? pick->anchor_negative_dist : 0.0;
                rec.temporal_negative_video = it.temporal_negative.ref.video_id;
                rec.temporal_cross_instance = it.temporal_negative.cross_instance;
                epoch_records.push_back(rec);
            }

            // loss and embedding gradients
            int inst_n = 0;
            if (cfg.loss.kind == LossKind::triplet) {
                for (int i = 0; i < n; ++i)
                    if (batch.items[i].negative_batch_index) ++inst_n;
            } else {
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        if (batch_labels[j] != batch_labels[i]) {
                            ++inst_n;
                            break;
                        }
            }
            const int temp_n = n;
            std::vector<std::optional<double>> inst_losses(n), temp_losses(n);

            for (int i = 0; i < n; ++i) {
                const TripletItem& it = batch.items[i];
                if (cfg.loss.kind == LossKind::triplet) {
                    if (it.negative_batch_index) {
                        const int j = *it.negative_batch_index;
                        inst_losses[i] = triplet_loss_grad(
                            items[i].anchor.output(), items[i].positive.output(),
                            items[j].anchor.output(), cfg.loss.m1, 1.0 / inst_n,
                            items[i].g_anchor, items[i].g_positive, items[j].g_anchor);
                    }
                } else {
                    std::vector<int> neg_items;
                    for (int j = 0; j < n; ++j)
                        if (batch_labels[j] != batch_labels[i]) neg_items.push_back(j);
                    if (!neg_items.empty()) {
                        Matrix negs(static_cast<int>(neg_items.size()), embed_dim);
                        for (std::size_t r = 0; r < neg_items.size(); ++r) {
                            auto z = items[neg_items[r]].anchor.output();
                            std::copy(z.begin(), z.end(), negs.row(static_cast<int>(r)));
                        }
                        Matrix gnegs(negs.rows(), embed_dim);
                        inst_losses[i] = infonce_loss_grad(
                            items[i].anchor.output(), items[i].positive.output(), negs,
                            cfg.loss.infonce_temperature, 1.0 / inst_n, items[i].g_anchor,
                            items[i].g_positive, gnegs);
                        for (std::size_t r = 0; r < neg_items.size(); ++r) {
                            auto& dst = items[neg_items[r]].g_anchor;
                            const double* src = gnegs.row(static_cast<int>(r));
                            for (int k = 0; k < embed_dim; ++k) dst[k] += src[k];
                        }
                    }
                }
                temp_losses[i] = triplet_loss_grad(
                    items[i].anchor.output(), items[i].temp_pos.output(),
                    items[i].temp_neg.output(), cfg.loss.m2, cfg.loss.lambda / temp_n,
                    items[i].g_anchor, items[i].g_temp_pos, items[i].g_temp_neg);
            }

            const double batch_loss = total_loss(inst_losses, temp_losses, cfg.loss.lambda);
            if (!std::isfinite(batch_loss))
                throw std::domain_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                        " batch " + std::to_string(batch_count));

            grads.zero();
            for (int i = 0; i < n; ++i) {
                if (any_nonzero(items[i].g_anchor)) backward(enc, items[i].anchor, items[i].g_anchor, grads);
                if (any_nonzero(items[i].g_positive))
                    backward(enc, items[i].positive, items[i].g_positive, grads);
                if (any_nonzero(items[i].g_temp_pos))
                    backward(enc, items[i].temp_pos, items[i].g_temp_pos, grads);
                if (any_nonzero(items[i].g_temp_neg))
                    backward(enc, items[i].temp_neg, items[i].g_temp_neg, grads);
            }
            sgd_step(enc, grads, opt);

            loss_sum += batch_loss;
            ++batch_count;
        }

        EpochDiagnostics diag;
        diag.epoch = epoch;
        diag.mean_loss = loss_sum / batch_count;
        diag.nmi = last_nmi;
        diag.num_clusters = num_clusters;
        if (gt) {
            FalseSamplingRates rates = false_sampling_rates(epoch_records, ds.labels());
            diag.fp_rate = rates.fp_rate;
            diag.fn_rate = rates.fn_rate;
        } else {
            diag.fp_rate = kNaN;
            diag.fn_rate = kNaN;
        }
        diag.recall1 = last_r1;
        diag.recall5 = last_r5;
        result.log.epochs.push_back(diag);

        if (cfg.keep_triplet_log)
            result.log.triplet_log.insert(result.log.triplet_log.end(), epoch_records.begin(),
                                          epoch_records.end());
    }
    return result;
}

RetrievalReport evaluate_retrieval(const Encoder& enc, const Dataset& train_ds,
                                   const Dataset& test_ds, EmbeddingTap tap) {
    if (!train_ds.has_labels() || !test_ds.has_labels())
        throw std::invalid_argument("evaluate_retrieval: both datasets must be labeled");
    if (train_ds.raw_dim() != test_ds.raw_dim())
        throw std::invalid_argument("evaluate_retrieval: raw_dim mismatch");

    const int m = std::min(10, test_ds.clips_per_video());
    Matrix queries = compute_all_embeddings(enc, test_ds, EmbeddingPolicy::uniform_avg(m), tap);
    Matrix gallery =
        compute_all_embeddings(enc, train_ds, EmbeddingPolicy::random(kEvalGallerySeed), tap);
    return recall_at_k(queries, test_ds.labels(), gallery, train_ds.labels(), {1, 5, 10, 20});
}

std::vector<AblationCell> ablation_preset(const std::string& preset, const TrainConfig& base) {
    std::vector<AblationCell> cells;
    if (preset == "components") {
        cells.push_back({"all_on", base});
        TrainConfig ic = base;
        ic.sampling.p_alpha = 1.0;
        ic.negative_mode = NegativeMode::random_batch;
        ic.recluster = false;
        cells.push_back({"ic_off", ic});
        TrainConfig mv = base;
        mv.sampling.p_beta = 1.0;
        cells.push_back({"mv_off", mv});
        TrainConfig tl = base;
        tl.loss.lambda = 0.0;
        cells.push_back({"tl_off", tl});
    } else if (preset == "clustering") {
        for (int interval : {1, 2, 5, 10}) {
            const std::string suffix = "_k" + std::to_string(interval);
            TrainConfig p1 = base;
            p1.clustering_method = ClusteringMethod::finch_p1;
            p1.cluster_interval = interval;
            cells.push_back({"finch_p1" + suffix, p1});
            TrainConfig p2 = base;
            p2.clustering_method = ClusteringMethod::finch_p2;
            p2.cluster_interval = interval;
            cells.push_back({"finch_p2" + suffix, p2});
            for (int k : base.ablation_kmeans_ks) {
                TrainConfig km = base;
                km.clustering_method = ClusteringMethod::kmeans;
                km.k_clusters = k;
                km.cluster_interval = interval;
                cells.push_back({"kmeans" + std::to_string(k) + suffix, km});
                TrainConfig sk = base;
                sk.clustering_method = ClusteringMethod::spherical_kmeans;
                sk.k_clusters = k;
                sk.cluster_interval = interval;
                cells.push_back({"spherical" + std::to_string(k) + suffix, sk});
            }
        }
    } else if (preset == "positives") {
        const std::pair<double, const char*> alphas[] = {
            {0.0, "0"}, {0.2, "0.2"}, {0.5, "0.5"}, {0.7, "0.7"}};
        const std::pair<double, const char*> betas[] = {{0.25, "0.25"}, {0.5, "0.5"}, {0.75, "0.75"}};
        for (const auto& [pa, pa_name] : alphas)
            for (const auto& [pb, pb_name] : betas) {
                TrainConfig c = base;
                c.sampling.p_alpha = pa;
                c.sampling.p_beta = pb;
                cells.push_back({std::string("pa") + pa_name + "_pb" + pb_name, c});
            }
    } else {
        throw std::invalid_argument("ablation_preset: unknown preset '" + preset + "'");
    }
    return cells;
}

void run_ablation(const std::string& preset, const Dataset& ds, const TrainConfig& base,
                  const std::filesystem::path& out_dir) {
    if (!ds.has_labels()) throw std::invalid_argument("run_ablation: dataset must be labeled");
    const auto cells = ablation_preset(preset, base);
    auto [train_split, test_split] = split_dataset(ds, base.eval_fraction);

    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir / "comparison.csv");
    if (!csv) throw DataError("run_ablation: cannot open comparison.csv");
    csv << "cell,recall1,recall5,recall10,recall20,final_nmi,final_num_clusters,final_fp_rate,"
           "final_fn_rate,final_mean_loss\n";

    for (const auto& cell : cells) {
        TrainResult res = train(train_split, cell.config);
        res.log.final_retrieval =
            evaluate_retrieval(res.encoder, train_split, test_split, cell.config.embedding_tap);

        const auto run_dir = out_dir / cell.name;
        std::filesystem::create_directories(run_dir);
        save_encoder(res.encoder, run_dir / "checkpoint.bin", cell.config.master_seed,
                     cell.config.epochs);
        write_metrics_csv(res.log, run_dir / "metrics.csv");
        std::ofstream cfg_out(run_dir / "config.resolved.json");
        cfg_out << train_config_to_json(cell.config).dump(2) << "\n";

        const EpochDiagnostics& last = res.log.epochs.back();
        const auto& rec = res.log.final_retrieval.recall;
        csv << cell.name << "," << fmt_double(rec.at(1)) << "," << fmt_double(rec.at(5)) << ","
            << fmt_double(rec.at(10)) << "," << fmt_double(rec.at(20)) << ","
            << fmt_double(last.nmi) << "," << last.num_clusters << "," << fmt_double(last.fp_rate)
            << "," << fmt_double(last.fn_rate) << "," << fmt_double(last.mean_loss) << "\n";
    }
}

namespace {

ClusteringMethod parse_clustering_method(const std::string& s) {
    if (s == "finch_p1") return ClusteringMethod::finch_p1;
    if (s == "finch_p2") return ClusteringMethod::finch_p2;
    if (s == "kmeans") return ClusteringMethod::kmeans;
    if (s == "spherical_kmeans" || s == "spherical") return ClusteringMethod::spherical_kmeans;
    throw std::invalid_argument("unknown clustering method '" + s + "'");
}

std::string clustering_method_name(ClusteringMethod m) {
    switch (m) {
    case ClusteringMethod::finch_p1: return "finch_p1";
    case ClusteringMethod::finch_p2: return "finch_p2";
    case ClusteringMethod::kmeans: return "kmeans";
    case ClusteringMethod::spherical_kmeans: return "spherical_kmeans";
    }
    return "finch_p1";
}

} // namespace

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.cluster_interval = j.value("cluster_interval", cfg.cluster_interval);
    if (j.contains("clustering_method"))
        cfg.clustering_method = parse_clustering_method(j["clustering_method"].get<std::string>());
    cfg.k_clusters = j.value("k_clusters", cfg.k_clusters);
    if (j.contains("sampling")) {
        const auto& s = j["sampling"];
        cfg.sampling.p_alpha = s.value("p_alpha", cfg.sampling.p_alpha);
        cfg.sampling.p_beta = s.value("p_beta", cfg.sampling.p_beta);
    }
    if (j.contains("loss")) {
        const auto& l = j["loss"];
        cfg.loss.m1 = l.value("m1", cfg.loss.m1);
        cfg.loss.m2 = l.value("m2", cfg.loss.m2);
        cfg.loss.lambda = l.value("lambda", cfg.loss.lambda);
        if (l.contains("kind")) {
            const std::string kind = l["kind"].get<std::string>();
            if (kind == "triplet")
                cfg.loss.kind = LossKind::triplet;
            else if (kind == "infonce")
                cfg.loss.kind = LossKind::infonce;
            else
                throw std::invalid_argument("unknown loss kind '" + kind + "'");
        }
        cfg.loss.infonce_temperature = l.value("infonce_temperature", cfg.loss.infonce_temperature);
    }
    cfg.sampling.m1 = cfg.loss.m1;
    cfg.sampling.m2 = cfg.loss.m2;
    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        cfg.lr = o.value("lr", cfg.lr);
        cfg.momentum = o.value("momentum", cfg.momentum);
    }
    if (j.contains("augment")) {
        const auto& a = j["augment"];
        cfg.aug.noise_sigma = a.value("noise_sigma", cfg.aug.noise_sigma);
        cfg.aug.scale_jitter = a.value("scale_jitter", cfg.aug.scale_jitter);
    }
    if (j.contains("encoder")) {
        const auto& e = j["encoder"];
        if (e.contains("backbone_dims")) cfg.backbone_dims = e["backbone_dims"].get<std::vector<int>>();
        cfg.head_hidden = e.value("head_hidden", cfg.head_hidden);
        cfg.embed_dim = e.value("embed_dim", cfg.embed_dim);
    }
    if (j.contains("label_mode")) {
        const std::string mode = j["label_mode"].get<std::string>();
        if (mode == "pseudo")
            cfg.label_mode = LabelMode::pseudo;
        else if (mode == "oracle")
            cfg.label_mode = LabelMode::oracle;
        else
            throw std::invalid_argument("unknown label_mode '" + mode + "'");
    }
    if (j.contains("embedding_tap")) {
        const std::string tap = j["embedding_tap"].get<std::string>();
        if (tap == "head")
            cfg.embedding_tap = EmbeddingTap::head;
        else if (tap == "backbone")
            cfg.embedding_tap = EmbeddingTap::backbone;
        else
            throw std::invalid_argument("unknown embedding_tap '" + tap + "'");
    }
    cfg.eval_every = j.value("eval_every", cfg.eval_every);
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    if (j.contains("negative_mode")) {
        const std::string mode = j["negative_mode"].get<std::string>();
        if (mode == "semi_hard")
            cfg.negative_mode = NegativeMode::semi_hard;
        else if (mode == "random_batch")
            cfg.negative_mode = NegativeMode::random_batch;
        else
            throw std::invalid_argument("unknown negative_mode '" + mode + "'");
    }
    cfg.recluster = j.value("recluster", cfg.recluster);
    cfg.keep_triplet_log = j.value("keep_triplet_log", cfg.keep_triplet_log);
    if (j.contains("ablation_kmeans_ks"))
        cfg.ablation_kmeans_ks = j["ablation_kmeans_ks"].get<std::vector<int>>();
    cfg.eval_fraction = j.value("eval_fraction", cfg.eval_fraction);
    return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    nlohmann::json j;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["cluster_interval"] = cfg.cluster_interval;
    j["clustering_method"] = clustering_method_name(cfg.clustering_method);
    j["k_clusters"] = cfg.k_clusters;
    j["sampling"] = {{"p_alpha", cfg.sampling.p_alpha}, {"p_beta", cfg.sampling.p_beta}};
    j["loss"] = {{"m1", cfg.loss.m1},
                 {"m2", cfg.loss.m2},
                 {"lambda", cfg.loss.lambda},
                 {"kind", cfg.loss.kind == LossKind::triplet ? "triplet" : "infonce"},
                 {"infonce_temperature", cfg.loss.infonce_temperature}};
    j["optimizer"] = {{"lr", cfg.lr}, {"momentum", cfg.momentum}};
    j["augment"] = {{"noise_sigma", cfg.aug.noise_sigma}, {"scale_jitter", cfg.aug.scale_jitter}};
    j["encoder"] = {{"backbone_dims", cfg.backbone_dims},
                    {"head_hidden", cfg.head_hidden},
                    {"embed_dim", cfg.embed_dim}};
    j["label_mode"] = cfg.label_mode == LabelMode::pseudo ? "pseudo" : "oracle";
    j["embedding_tap"] = cfg.embedding_tap == EmbeddingTap::head ? "head" : "backbone";
    j["eval_every"] = cfg.eval_every;
    j["master_seed"] = cfg.master_seed;
    j["negative_mode"] =
        cfg.negative_mode == NegativeMode::semi_hard ? "semi_hard" : "random_batch";
    j["recluster"] = cfg.recluster;
    j["keep_triplet_log"] = cfg.keep_triplet_log;
    j["ablation_kmeans_ks"] = cfg.ablation_kmeans_ks;
    j["eval_fraction"] = cfg.eval_fraction;
    return j;
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
    SynthConfig cfg;
    cfg.num_classes = j.value("num_classes", cfg.num_classes);
    cfg.videos_per_class = j.value("videos_per_class", cfg.videos_per_class);
    cfg.clips_per_video = j.value("clips_per_video", cfg.clips_per_video);
    cfg.raw_dim = j.value("raw_dim", cfg.raw_dim);
    cfg.class_separation = j.value("class_separation", cfg.class_separation);
    cfg.video_spread = j.value("video_spread", cfg.video_spread);
    cfg.clip_drift = j.value("clip_drift", cfg.clip_drift);
    cfg.view_noise = j.value("view_noise", cfg.view_noise);
    cfg.num_views = j.value("num_views", cfg.num_views);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

void write_metrics_csv(const MetricsLog& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_metrics_csv: cannot open " + path.string());
    out << "epoch,mean_loss,nmi,num_clusters,fp_rate,fn_rate,recall1,recall5\n";
    for (const auto& d : log.epochs)
        out << d.epoch << "," << fmt_double(d.mean_loss) << "," << fmt_double(d.nmi) << ","
            << d.num_clusters << "," << fmt_double(d.fp_rate) << "," << fmt_double(d.fn_rate)
            << "," << fmt_double(d.recall1) << "," << fmt_double(d.recall5) << "\n";
}

nlohmann::json retrieval_report_to_json(const RetrievalReport& report) {
    nlohmann::json recall = nlohmann::json::object();
    for (const auto& [k, v] : report.recall) recall[std::to_string(k)] = v;
    return {{"recall", recall}};
}

} // namespace slic
