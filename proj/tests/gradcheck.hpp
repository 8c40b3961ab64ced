#pragma once

#include "slic/model.hpp"

#include <array>
#include <cmath>
#include <optional>

namespace slic_test {

// A frozen batch structure for finite-difference checks: raw inputs plus the
// mined-negative assignments, so the loss is a pure function of parameters.
struct GradCheckCase {
    slic::Encoder enc;
    slic::LossConfig loss;
    // per item: anchor, positive, temporal positive, temporal negative inputs
    std::vector<std::array<slic::Vec, 4>> items;
    std::vector<int> neg_index;                 // triplet: item whose anchor is the negative
    std::vector<std::vector<int>> infonce_negs; // infonce: negative item sets
};

inline double eval_batch_loss(const slic::Encoder& enc, const GradCheckCase& c) {
    using namespace slic;
    const int n = static_cast<int>(c.items.size());
    std::vector<std::array<Vec, 4>> embs(n);
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < 4; ++s) {
            ForwardTape tape = forward(enc, c.items[i][s]);
            embs[i][s].assign(tape.output().begin(), tape.output().end());
        }
    std::vector<std::optional<double>> inst(n), temp(n);
    for (int i = 0; i < n; ++i) {
        if (c.loss.kind == LossKind::triplet) {
            if (c.neg_index[i] >= 0)
                inst[i] = triplet_loss(embs[i][0], embs[i][1], embs[c.neg_index[i]][0], c.loss.m1);
        } else {
            const auto& negs = c.infonce_negs[i];
            if (!negs.empty()) {
                Matrix nm(static_cast<int>(negs.size()), enc.arch.embed_dim);
                for (std::size_t r = 0; r < negs.size(); ++r)
                    std::copy(embs[negs[r]][0].begin(), embs[negs[r]][0].end(),
                              nm.row(static_cast<int>(r)));
                inst[i] = infonce_loss(embs[i][0], embs[i][1], nm, c.loss.infonce_temperature);
            }
        }
        temp[i] = temporal_loss(embs[i][0], embs[i][2], embs[i][3], c.loss.m2);
    }
    return total_loss(inst, temp, c.loss.lambda);
}

inline slic::Gradients analytic_gradients(const slic::Encoder& enc, const GradCheckCase& c) {
    using namespace slic;
    const int n = static_cast<int>(c.items.size());
    const int embed_dim = enc.arch.embed_dim;
    std::vector<std::array<ForwardTape, 4>> tapes(n);
    std::vector<std::array<Vec, 4>> gvecs(n);
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < 4; ++s) {
            tapes[i][s] = forward(enc, c.items[i][s]);
            gvecs[i][s].assign(embed_dim, 0.0);
        }

    int inst_n = 0;
    if (c.loss.kind == LossKind::triplet) {
        for (int i = 0; i < n; ++i)
            if (c.neg_index[i] >= 0) ++inst_n;
    } else {
        for (int i = 0; i < n; ++i)
            if (!c.infonce_negs[i].empty()) ++inst_n;
    }
    const int temp_n = n;

    for (int i = 0; i < n; ++i) {
        if (c.loss.kind == LossKind::triplet) {
            if (c.neg_index[i] >= 0) {
                const int j = c.neg_index[i];
                triplet_loss_grad(tapes[i][0].output(), tapes[i][1].output(), tapes[j][0].output(),
                                  c.loss.m1, 1.0 / inst_n, gvecs[i][0], gvecs[i][1], gvecs[j][0]);
            }
        } else {
            const auto& negs = c.infonce_negs[i];
            if (!negs.empty()) {
                Matrix nm(static_cast<int>(negs.size()), embed_dim);
                for (std::size_t r = 0; r < negs.size(); ++r) {
                    auto z = tapes[negs[r]][0].output();
                    std::copy(z.begin(), z.end(), nm.row(static_cast<int>(r)));
                }
                Matrix gnegs(nm.rows(), embed_dim);
                infonce_loss_grad(tapes[i][0].output(), tapes[i][1].output(), nm,
                                  c.loss.infonce_temperature, 1.0 / inst_n, gvecs[i][0],
                                  gvecs[i][1], gnegs);
                for (std::size_t r = 0; r < negs.size(); ++r)
                    for (int k = 0; k < embed_dim; ++k)
                        gvecs[negs[r]][0][k] += gnegs.at(static_cast<int>(r), k);
            }
        }
        triplet_loss_grad(tapes[i][0].output(), tapes[i][2].output(), tapes[i][3].output(),
                          c.loss.m2, c.loss.lambda / temp_n, gvecs[i][0], gvecs[i][2],
                          gvecs[i][3]);
    }

    Gradients grads = Gradients::zeros_like(enc);
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < 4; ++s) backward(enc, tapes[i][s], gvecs[i][s], grads);
    return grads;
}

inline GradCheckCase random_grad_case(std::uint64_t seed, slic::LossKind kind) {
    using namespace slic;
    RngStream rng(seed, 17);
    GradCheckCase c;
    EncoderArch arch;
    arch.input_dim = 4 + static_cast<int>(rng.below(5));
    arch.backbone_dims = {5 + static_cast<int>(rng.below(4)), 4 + static_cast<int>(rng.below(3))};
    arch.head_hidden = 4 + static_cast<int>(rng.below(3));
    arch.embed_dim = 3 + static_cast<int>(rng.below(3));
    c.enc = init_encoder(arch, rng);
    c.loss.kind = kind;
    c.loss.m1 = 0.3;
    c.loss.m2 = 0.1;
    c.loss.lambda = 0.7;
    c.loss.infonce_temperature = 0.25;

    const int n = 3;
    c.items.resize(n);
    c.neg_index = {1, 2, 0};
    c.infonce_negs = {{1, 2}, {0}, {0, 1}};

    // small heads can zero an embedding through dead ReLUs; redraw inputs
    // until every embedding has a comfortable norm so the cosine terms are
    // well-conditioned for finite differences
    for (auto& item : c.items)
        for (auto& vec : item) {
            vec.resize(arch.input_dim);
            for (int attempt = 0; attempt < 1000; ++attempt) {
                for (double& x : vec) x = rng.uniform(-1.5, 1.5);
                ForwardTape tape = forward(c.enc, vec);
                double ss = 0.0;
                for (double v : tape.output()) ss += v * v;
                if (std::sqrt(ss) > 1e-2) break;
            }
        }
    return c;
}

// |a - f| / max(1, |a|, |f|): relative for O(1)-scale gradients, absolute for
// near-zero ones where the central-difference noise floor dominates
inline double grad_check_error(const GradCheckCase& c, double h = 1e-5) {
    using namespace slic;
    GradCheckCase work = c;
    Gradients analytic = analytic_gradients(work.enc, work);
    double worst = 0.0;
    auto probe = [&](double& param, double a) {
        const double saved = param;
        param = saved + h;
        const double up = eval_batch_loss(work.enc, work);
        param = saved - h;
        const double down = eval_batch_loss(work.enc, work);
        param = saved;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)}));
    };
    for (std::size_t l = 0; l < work.enc.weights.size(); ++l) {
        auto& wdata = work.enc.weights[l].data();
        for (std::size_t p = 0; p < wdata.size(); ++p)
            probe(wdata[p], analytic.weight_grads[l].data()[p]);
        auto& bias = work.enc.biases[l];
        for (std::size_t p = 0; p < bias.size(); ++p) probe(bias[p], analytic.bias_grads[l][p]);
    }
    return worst;
}

} // namespace slic_test
