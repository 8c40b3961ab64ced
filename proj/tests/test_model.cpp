#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slic/model.hpp"
#include "gradcheck.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

using namespace slic;
using slic_test::GradCheckCase;

namespace {

Vec unit_at_cos(double c) {
    return {c, std::sqrt(1.0 - c * c)};
}

// independent straight-line forward, flat indexing throughout
Vec naive_forward(const Encoder& enc, const Vec& x) {
    Vec cur = x;
    const int layers = enc.arch.num_layers();
    for (int l = 0; l < layers; ++l) {
        const int out_dim = enc.weights[l].rows();
        const int in_dim = enc.weights[l].cols();
        Vec next(out_dim);
        for (int r = 0; r < out_dim; ++r) {
            double acc = enc.biases[l][r];
            for (int c = 0; c < in_dim; ++c) acc += enc.weights[l].data()[r * in_dim + c] * cur[c];
            next[r] = acc;
        }
        if (l + 1 < layers)
            for (double& v : next) v = std::max(0.0, v);
        cur = next;
    }
    return cur;
}

} // namespace

TEST_CASE("forward: zero weights give a zero embedding") {
    EncoderArch arch;
    arch.input_dim = 4;
    arch.backbone_dims = {3};
    arch.head_hidden = 3;
    arch.embed_dim = 2;
    Encoder enc;
    enc.arch = arch;
    const auto dims = arch.layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        enc.weights.emplace_back(dims[l + 1], dims[l]);
        enc.biases.emplace_back(dims[l + 1], 0.0);
    }
    ForwardTape tape = forward(enc, Vec{1.0, -2.0, 3.0, 0.5});
    for (double x : tape.output()) CHECK(x == 0.0);
}

TEST_CASE("forward: identity layers pass positive inputs through") {
    EncoderArch arch;
    arch.input_dim = 3;
    arch.backbone_dims = {3};
    arch.head_hidden = 3;
    arch.embed_dim = 3;
    Encoder enc;
    enc.arch = arch;
    for (int l = 0; l < 3; ++l) {
        Matrix w(3, 3);
        for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0;
        enc.weights.push_back(w);
        enc.biases.emplace_back(3, 0.0);
    }
    Vec x = {0.5, 1.5, 2.0};
    auto tape = forward(enc, x);
    auto out = tape.output();
    for (int i = 0; i < 3; ++i) CHECK(out[i] == x[i]);
    auto backbone = tape.backbone_output(enc);
    for (int i = 0; i < 3; ++i) CHECK(backbone[i] == x[i]);
}

TEST_CASE("forward matches the straight-line oracle") {
    RngStream rng(61, 0);
    for (int trial = 0; trial < 10; ++trial) {
        EncoderArch arch;
        arch.input_dim = 3 + static_cast<int>(rng.below(6));
        arch.backbone_dims = {4 + static_cast<int>(rng.below(4))};
        arch.head_hidden = 3 + static_cast<int>(rng.below(4));
        arch.embed_dim = 2 + static_cast<int>(rng.below(4));
        Encoder enc = init_encoder(arch, rng);
        Vec x(arch.input_dim);
        for (double& v : x) v = rng.uniform(-2.0, 2.0);
        Vec expect = naive_forward(enc, x);
        ForwardTape tape = forward(enc, x);
        auto got = tape.output();
        REQUIRE(got.size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i)
            CHECK(std::abs(got[i] - expect[i]) < 1e-12);
    }
    Encoder enc = init_encoder({4, {3}, 3, 2}, rng);
    CHECK_THROWS_AS(forward(enc, Vec{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("triplet_loss known values") {
    Vec a = {1.0, 0.0};
    CHECK(triplet_loss(a, a, Vec{0.0, 1.0}, 0.2) == 0.0); // easy negative, hinge inactive
    CHECK(triplet_loss(a, unit_at_cos(0.7), unit_at_cos(0.6), 0.2) ==
          doctest::Approx(0.1).epsilon(1e-9));
    Vec p = unit_at_cos(0.3);
    CHECK(triplet_loss(a, p, p, 0.2) == 0.2); // p = n cancels exactly
    CHECK_THROWS_AS(triplet_loss(a, Vec{0.0, 0.0}, p, 0.2), std::domain_error);
}

TEST_CASE("temporal_loss known values") {
    Vec x = {1.0, 0.0};
    // aug = x: loss = max(0, -d(x, tn) + m2)
    CHECK(temporal_loss(x, x, unit_at_cos(0.99), 0.04) ==
          doctest::Approx(0.04 - 0.01).epsilon(1e-9));
    CHECK(temporal_loss(x, unit_at_cos(0.95), unit_at_cos(0.98), 0.04) ==
          doctest::Approx(0.05 - 0.02 + 0.04).epsilon(1e-9));
    CHECK(temporal_loss(x, unit_at_cos(0.999), Vec{-1.0, 0.0}, 0.04) == 0.0);
}

TEST_CASE("infonce_loss known values and monotonicity") {
    Vec a = {1.0, 0.0};
    Vec p = unit_at_cos(0.5);
    Matrix negs(1, 2);
    negs.at(0, 0) = 0.5;
    negs.at(0, 1) = std::sqrt(0.75);
    CHECK(infonce_loss(a, p, negs, 0.1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Matrix opposite(1, 2);
    opposite.at(0, 0) = -1.0;
    CHECK(infonce_loss(a, a, opposite, 0.1) ==
          doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-6));
    CHECK(infonce_loss(a, a, opposite, 0.1) < 1e-8);

    double prev = infonce_loss(a, unit_at_cos(0.1), negs, 0.1);
    for (double c : {0.3, 0.5, 0.7, 0.9}) {
        double cur = infonce_loss(a, unit_at_cos(c), negs, 0.1);
        CHECK(cur < prev);
        prev = cur;
    }
    CHECK_THROWS_AS(infonce_loss(a, p, negs, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(infonce_loss(a, p, Matrix(0, 2), 0.1), std::invalid_argument);
}

TEST_CASE("total_loss skip rules") {
    using OD = std::optional<double>;
    std::vector<OD> inst = {0.2, std::nullopt, 0.4};
    std::vector<OD> temp = {0.1, 0.1, 0.1};
    CHECK(total_loss(inst, temp, 0.0) == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(total_loss(inst, temp, 1.0) == doctest::Approx(0.4).epsilon(1e-14));
    std::vector<OD> both_empty = {std::nullopt};
    CHECK(total_loss(both_empty, {{0.1}}, 2.0) == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("losses are invariant to embedding scale") {
    RngStream rng(62, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 3 + static_cast<int>(rng.below(5));
        Vec a(d), p(d), n(d);
        for (double& x : a) x = rng.uniform(-1.0, 1.0);
        for (double& x : p) x = rng.uniform(-1.0, 1.0);
        for (double& x : n) x = rng.uniform(-1.0, 1.0);
        const double c = rng.uniform(0.01, 50.0);
        Vec a_scaled(d);
        for (int i = 0; i < d; ++i) a_scaled[i] = c * a[i];
        CHECK(std::abs(triplet_loss(a, p, n, 0.2) - triplet_loss(a_scaled, p, n, 0.2)) < 1e-10);
        Matrix negs(1, d);
        std::copy(n.begin(), n.end(), negs.row(0));
        CHECK(std::abs(infonce_loss(a, p, negs, 0.1) - infonce_loss(a_scaled, p, negs, 0.1)) <
              1e-10);
    }
}

TEST_CASE("inactive hinge emits zero gradients") {
    Vec a = {1.0, 0.0};
    Vec p = unit_at_cos(0.99);
    Vec n = {-1.0, 0.0};
    Vec ga(2, 0.0), gp(2, 0.0), gn(2, 0.0);
    const double loss = triplet_loss_grad(a, p, n, 0.2, 1.0, ga, gp, gn);
    CHECK(loss == 0.0);
    for (double x : ga) CHECK(x == 0.0);
    for (double x : gp) CHECK(x == 0.0);
    for (double x : gn) CHECK(x == 0.0);
}

TEST_CASE("gradient check: analytic vs central finite differences (triplet)") {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        GradCheckCase c = slic_test::random_grad_case(seed, LossKind::triplet);
        CHECK(slic_test::grad_check_error(c) < 1e-5);
    }
}

TEST_CASE("gradient check: analytic vs central finite differences (infonce)") {
    for (std::uint64_t seed : {11, 12, 13}) {
        GradCheckCase c = slic_test::random_grad_case(seed, LossKind::infonce);
        CHECK(slic_test::grad_check_error(c) < 1e-5);
    }
}

TEST_CASE("temporal term scales linearly in lambda") {
    GradCheckCase c = slic_test::random_grad_case(21, LossKind::triplet);
    auto grads_at = [&](double lambda) {
        GradCheckCase copy = c;
        copy.loss.lambda = lambda;
        return slic_test::analytic_gradients(copy.enc, copy);
    };
    Gradients g0 = grads_at(0.0), g1 = grads_at(1.0), g2 = grads_at(2.0);
    for (std::size_t l = 0; l < g0.weight_grads.size(); ++l)
        for (std::size_t p = 0; p < g0.weight_grads[l].data().size(); ++p) {
            const double lin = g0.weight_grads[l].data()[p] +
                               2.0 * (g1.weight_grads[l].data()[p] - g0.weight_grads[l].data()[p]);
            CHECK(std::abs(g2.weight_grads[l].data()[p] - lin) < 1e-12);
        }
}

TEST_CASE("sgd_step semantics") {
    EncoderArch arch{2, {2}, 2, 2};
    RngStream rng(63, 0);
    Encoder enc = init_encoder(arch, rng);
    Encoder before = enc;
    OptState opt = OptState::make(enc, 0.1, 0.5);
    Gradients zero = Gradients::zeros_like(enc);
    sgd_step(enc, zero, opt);
    for (std::size_t l = 0; l < enc.weights.size(); ++l)
        CHECK(enc.weights[l].data() == before.weights[l].data());

    // momentum 0: exactly param -= lr * grad
    Encoder enc2 = before;
    OptState opt2 = OptState::make(enc2, 0.1, 0.0);
    Gradients g = Gradients::zeros_like(enc2);
    g.weight_grads[0].at(0, 0) = 2.0;
    sgd_step(enc2, g, opt2);
    CHECK(enc2.weights[0].at(0, 0) == doctest::Approx(before.weights[0].at(0, 0) - 0.2).epsilon(1e-15));

    // two steps, constant gradient, momentum 0.5: total update lr*(g + 1.5 g)
    Encoder enc3 = before;
    OptState opt3 = OptState::make(enc3, 0.1, 0.5);
    sgd_step(enc3, g, opt3);
    sgd_step(enc3, g, opt3);
    CHECK(enc3.weights[0].at(0, 0) ==
          doctest::Approx(before.weights[0].at(0, 0) - 0.1 * (2.0 + 3.0)).epsilon(1e-15));
}

TEST_CASE("init_encoder determinism, shapes, and bounds") {
    EncoderArch arch{10, {8, 6}, 5, 4};
    RngStream a(64, 0), b(64, 0);
    Encoder e1 = init_encoder(arch, a);
    Encoder e2 = init_encoder(arch, b);
    REQUIRE(e1.weights.size() == 4);
    for (std::size_t l = 0; l < e1.weights.size(); ++l) {
        CHECK(e1.weights[l].data() == e2.weights[l].data());
        const double bound = std::sqrt(6.0 / e1.weights[l].cols());
        for (double x : e1.weights[l].data()) {
            CHECK(x >= -bound);
            CHECK(x <= bound);
        }
        for (double x : e1.biases[l]) CHECK(x == 0.0);
    }
    CHECK(e1.weights[0].rows() == 8);
    CHECK(e1.weights[0].cols() == 10);
    CHECK(e1.weights[3].rows() == 4);

    Vec x(10);
    RngStream rng(64, 1);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    auto out = forward(e1, x).output();
    bool nonzero = false;
    for (double v : out) nonzero |= v != 0.0;
    CHECK(nonzero);
}

TEST_CASE("checkpoint round-trip and corruption") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() /
                          ("slic_ckpt_" + std::to_string(::getpid()) + ".bin");
    EncoderArch arch{6, {5, 4}, 3, 2};
    RngStream rng(65, 0);
    Encoder enc = init_encoder(arch, rng);
    save_encoder(enc, path, 9001, 42);
    LoadedEncoder loaded = load_encoder(path);
    CHECK(loaded.seed == 9001);
    CHECK(loaded.epoch == 42);
    CHECK(loaded.encoder.arch == arch);
    for (std::size_t l = 0; l < enc.weights.size(); ++l) {
        CHECK(loaded.encoder.weights[l].data() == enc.weights[l].data());
        CHECK(loaded.encoder.biases[l] == enc.biases[l]);
    }

    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("WRONGMAG", 8);
    }
    CHECK_THROWS_AS(load_encoder(path), DataError);

    save_encoder(enc, path, 9001, 42);
    fs::resize_file(path, fs::file_size(path) - 9);
    CHECK_THROWS_AS(load_encoder(path), DataError);
    fs::remove(path);
}
