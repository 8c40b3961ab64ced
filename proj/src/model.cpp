#include "slic/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace slic {

std::vector<int> EncoderArch::layer_dims() const {
    std::vector<int> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), backbone_dims.begin(), backbone_dims.end());
    dims.push_back(head_hidden);
    dims.push_back(embed_dim);
    return dims;
}

void EncoderArch::validate() const {
    if (input_dim < 1) throw std::invalid_argument("EncoderArch: input_dim must be >= 1");
    if (backbone_dims.empty()) throw std::invalid_argument("EncoderArch: backbone_dims must be non-empty");
    for (int d : backbone_dims)
        if (d < 1) throw std::invalid_argument("EncoderArch: backbone dims must be >= 1");
    if (head_hidden < 1 || embed_dim < 1)
        throw std::invalid_argument("EncoderArch: head dims must be >= 1");
}

void LossConfig::validate() const {
    if (m1 <= 0.0 || m2 <= 0.0) throw std::invalid_argument("LossConfig: margins must be > 0");
    if (m2 >= m1) throw std::invalid_argument("LossConfig: m2 must be < m1");
    if (lambda < 0.0) throw std::invalid_argument("LossConfig: lambda must be >= 0");
    if (infonce_temperature <= 0.0)
        throw std::invalid_argument("LossConfig: temperature must be > 0");
}

ForwardTape forward(const Encoder& enc, std::span<const double> x) {
    if (static_cast<int>(x.size()) != enc.arch.input_dim)
        throw std::invalid_argument("forward: input dim mismatch");
    const int layers = enc.arch.num_layers();
    ForwardTape tape;
    tape.acts.resize(layers + 1);
    tape.acts[0].assign(x.begin(), x.end());
    for (int l = 0; l < layers; ++l) {
        const Matrix& w = enc.weights[l];
        const Vec& b = enc.biases[l];
        const Vec& in = tape.acts[l];
        Vec out(w.rows());
        for (int r = 0; r < w.rows(); ++r) {
            const double* wr = w.row(r);
            double acc = b[r];
            for (int c = 0; c < w.cols(); ++c) acc += wr[c] * in[c];
            out[r] = (l + 1 < layers && acc < 0.0) ? 0.0 : acc; // ReLU except final layer
        }
        tape.acts[l + 1] = std::move(out);
    }
    return tape;
}

Gradients Gradients::zeros_like(const Encoder& enc) {
    Gradients g;
    for (const auto& w : enc.weights) g.weight_grads.emplace_back(w.rows(), w.cols());
    for (const auto& b : enc.biases) g.bias_grads.emplace_back(b.size(), 0.0);
    return g;
}

void Gradients::zero() {
    for (auto& w : weight_grads) std::fill(w.data().begin(), w.data().end(), 0.0);
    for (auto& b : bias_grads) std::fill(b.begin(), b.end(), 0.0);
}

void backward(const Encoder& enc, const ForwardTape& tape, std::span<const double> output_grad,
              Gradients& out) {
    const int layers = enc.arch.num_layers();
    if (static_cast<int>(tape.acts.size()) != layers + 1)
        throw std::invalid_argument("backward: tape does not match encoder");
    if (static_cast<int>(output_grad.size()) != enc.arch.embed_dim)
        throw std::invalid_argument("backward: output grad dim mismatch");

    Vec delta(output_grad.begin(), output_grad.end());
    for (int l = layers - 1; l >= 0; --l) {
        const Matrix& w = enc.weights[l];
        const Vec& in = tape.acts[l];
        Matrix& dw = out.weight_grads[l];
        Vec& db = out.bias_grads[l];
        for (int r = 0; r < w.rows(); ++r) {
            const double dr = delta[r];
            if (dr == 0.0) continue;
            double* dwr = dw.row(r);
            for (int c = 0; c < w.cols(); ++c) dwr[c] += dr * in[c];
            db[r] += dr;
        }
        if (l == 0) break;
        Vec prev(w.cols(), 0.0);
        for (int r = 0; r < w.rows(); ++r) {
            const double dr = delta[r];
            if (dr == 0.0) continue;
            const double* wr = w.row(r);
            for (int c = 0; c < w.cols(); ++c) prev[c] += dr * wr[c];
        }
        // ReLU subgradient: zero where the activation did not fire (0 at the kink)
        const Vec& act = tape.acts[l];
        for (int c = 0; c < w.cols(); ++c)
            if (act[c] <= 0.0) prev[c] = 0.0;
        delta = std::move(prev);
    }
}

namespace {

struct CosineParts {
    double dot, na, nb, cos;
};

CosineParts cosine_parts(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double aa = 0.0, bb = 0.0, ab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa += a[i] * a[i];
        bb += b[i] * b[i];
        ab += a[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) throw std::domain_error("cosine: zero-norm input");
    CosineParts p;
    p.na = std::sqrt(aa);
    p.nb = std::sqrt(bb);
    p.dot = ab;
    p.cos = ab / (p.na * p.nb);
    return p;
}

// accumulates weight * d(cos(a,b))/da into ga (and likewise gb)
void add_cosine_sim_grad(std::span<const double> a, std::span<const double> b,
                         const CosineParts& p, double weight, std::span<double> ga,
                         std::span<double> gb) {
    const double inv_nanb = 1.0 / (p.na * p.nb);
    const double ca = p.cos / (p.na * p.na);
    const double cb = p.cos / (p.nb * p.nb);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ga[i] += weight * (b[i] * inv_nanb - ca * a[i]);
        gb[i] += weight * (a[i] * inv_nanb - cb * b[i]);
    }
}

} // namespace

double cosine_distance_grad(std::span<const double> a, std::span<const double> b, double weight,
                            std::span<double> ga, std::span<double> gb) {
    CosineParts p = cosine_parts(a, b);
    add_cosine_sim_grad(a, b, p, -weight, ga, gb);
    double d = 1.0 - p.cos;
    if (d < 0.0) d = 0.0;
    if (d > 2.0) d = 2.0;
    return d;
}

double triplet_loss(std::span<const double> a, std::span<const double> p, std::span<const double> n,
                    double margin) {
    const double d_ap = cosine_distance(a, p);
    const double d_an = cosine_distance(a, n);
    return std::max(0.0, d_ap - d_an + margin);
}

double temporal_loss(std::span<const double> x, std::span<const double> aug_x,
                     std::span<const double> temp_neg, double m2) {
    return triplet_loss(x, aug_x, temp_neg, m2);
}

double triplet_loss_grad(std::span<const double> a, std::span<const double> p,
                         std::span<const double> n, double margin, double weight,
                         std::span<double> ga, std::span<double> gp, std::span<double> gn) {
    const double d_ap = cosine_distance(a, p);
    const double d_an = cosine_distance(a, n);
    const double hinge = d_ap - d_an + margin;
    if (hinge <= 0.0) return 0.0; // inactive (and 0 at the kink)
    cosine_distance_grad(a, p, weight, ga, gp);
    cosine_distance_grad(a, n, -weight, ga, gn);
    return hinge;
}

double infonce_loss(std::span<const double> anchor, std::span<const double> positive,
                    const Matrix& negatives, double temperature) {
    if (temperature <= 0.0) throw std::invalid_argument("infonce_loss: temperature must be > 0");
    if (negatives.rows() < 1) throw std::invalid_argument("infonce_loss: need at least one negative");
    const double sp = cosine_parts(anchor, positive).cos;
    std::vector<double> sn(negatives.rows());
    double m = sp;
    for (int j = 0; j < negatives.rows(); ++j) {
        sn[j] = cosine_parts(anchor, negatives.row_span(j)).cos;
        m = std::max(m, sn[j]);
    }
    double denom = std::exp((sp - m) / temperature);
    for (double s : sn) denom += std::exp((s - m) / temperature);
    return -((sp - m) / temperature) + std::log(denom);
}

double infonce_loss_grad(std::span<const double> anchor, std::span<const double> positive,
                         const Matrix& negatives, double temperature, double weight,
                         std::span<double> ga, std::span<double> gp, Matrix& gnegs) {
    if (temperature <= 0.0) throw std::invalid_argument("infonce_loss: temperature must be > 0");
    if (negatives.rows() < 1) throw std::invalid_argument("infonce_loss: need at least one negative");

    const CosineParts pp = cosine_parts(anchor, positive);
    std::vector<CosineParts> pn(negatives.rows());
    double m = pp.cos;
    for (int j = 0; j < negatives.rows(); ++j) {
        pn[j] = cosine_parts(anchor, negatives.row_span(j));
        m = std::max(m, pn[j].cos);
    }
    const double ep = std::exp((pp.cos - m) / temperature);
    double denom = ep;
    std::vector<double> en(negatives.rows());
    for (int j = 0; j < negatives.rows(); ++j) {
        en[j] = std::exp((pn[j].cos - m) / temperature);
        denom += en[j];
    }
    const double loss = -((pp.cos - m) / temperature) + std::log(denom);

    // dL/ds_p = (softmax_p - 1)/tau, dL/ds_nj = softmax_nj/tau
    const double gp_coeff = weight * (ep / denom - 1.0) / temperature;
    add_cosine_sim_grad(anchor, positive, pp, gp_coeff, ga, gp);
    for (int j = 0; j < negatives.rows(); ++j) {
        const double gn_coeff = weight * (en[j] / denom) / temperature;
        add_cosine_sim_grad(anchor, negatives.row_span(j), pn[j], gn_coeff, ga, gnegs.row_span(j));
    }
    return loss;
}

double total_loss(std::span<const std::optional<double>> instance_losses,
                  std::span<const std::optional<double>> temporal_losses, double lambda) {
    double inst_sum = 0.0, temp_sum = 0.0;
    int inst_n = 0, temp_n = 0;
    for (const auto& v : instance_losses)
        if (v) {
            inst_sum += *v;
            ++inst_n;
        }
    for (const auto& v : temporal_losses)
        if (v) {
            temp_sum += *v;
            ++temp_n;
        }
    double total = 0.0;
    if (inst_n > 0) total += inst_sum / inst_n;
    if (temp_n > 0) total += lambda * (temp_sum / temp_n);
    return total;
}

OptState OptState::make(const Encoder& enc, double lr, double momentum) {
    OptState s;
    s.lr = lr;
    s.momentum = momentum;
    for (const auto& w : enc.weights) s.weight_momentum.emplace_back(w.rows(), w.cols());
    for (const auto& b : enc.biases) s.bias_momentum.emplace_back(b.size(), 0.0);
    return s;
}

void sgd_step(Encoder& enc, const Gradients& grads, OptState& opt) {
    for (std::size_t l = 0; l < enc.weights.size(); ++l) {
        auto& w = enc.weights[l].data();
        auto& buf = opt.weight_momentum[l].data();
        const auto& g = grads.weight_grads[l].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            buf[i] = opt.momentum * buf[i] + g[i];
            w[i] -= opt.lr * buf[i];
        }
        auto& b = enc.biases[l];
        auto& bbuf = opt.bias_momentum[l];
        const auto& bg = grads.bias_grads[l];
        for (std::size_t i = 0; i < b.size(); ++i) {
            bbuf[i] = opt.momentum * bbuf[i] + bg[i];
            b[i] -= opt.lr * bbuf[i];
        }
    }
}

Encoder init_encoder(const EncoderArch& arch, RngStream& rng) {
    arch.validate();
    Encoder enc;
    enc.arch = arch;
    const auto dims = arch.layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l];
        const int fan_out = dims[l + 1];
        const double bound = std::sqrt(6.0 / fan_in);
        Matrix w(fan_out, fan_in);
        for (double& x : w.data()) x = rng.uniform(-bound, bound);
        enc.weights.push_back(std::move(w));
        enc.biases.emplace_back(fan_out, 0.0);
    }
    return enc;
}

namespace {
constexpr char kCkptMagic[8] = {'S', 'L', 'I', 'C', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;
} // namespace

void save_encoder(const Encoder& enc, const std::filesystem::path& path, std::uint64_t seed,
                  int epoch) {
    nlohmann::json header;
    header["arch"] = {{"input_dim", enc.arch.input_dim},
                      {"backbone_dims", enc.arch.backbone_dims},
                      {"head_hidden", enc.arch.head_hidden},
                      {"embed_dim", enc.arch.embed_dim}};
    header["seed"] = seed;
    header["epoch"] = epoch;
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_encoder: cannot open " + path.string());
    out.write(kCkptMagic, 8);
    std::uint32_t version = kCkptVersion;
    std::uint32_t header_len = static_cast<std::uint32_t>(header_str.size());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&header_len), 4);
    out.write(header_str.data(), header_len);
    for (std::size_t l = 0; l < enc.weights.size(); ++l) {
        const auto& w = enc.weights[l].data();
        out.write(reinterpret_cast<const char*>(w.data()),
                  static_cast<std::streamsize>(w.size() * sizeof(double)));
        const auto& b = enc.biases[l];
        out.write(reinterpret_cast<const char*>(b.data()),
                  static_cast<std::streamsize>(b.size() * sizeof(double)));
    }
    if (!out) throw DataError("save_encoder: write failed for " + path.string());
}

LoadedEncoder load_encoder(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_encoder: cannot open " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw DataError("load_encoder: bad magic in " + path.string());
    std::uint32_t version = 0, header_len = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&header_len), 4);
    if (!in || version != kCkptVersion) throw DataError("load_encoder: unsupported version");
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), header_len);
    if (!in) throw DataError("load_encoder: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_encoder: bad header JSON: " + std::string(e.what()));
    }

    LoadedEncoder out;
    EncoderArch arch;
    arch.input_dim = header.at("arch").at("input_dim").get<int>();
    arch.backbone_dims = header.at("arch").at("backbone_dims").get<std::vector<int>>();
    arch.head_hidden = header.at("arch").at("head_hidden").get<int>();
    arch.embed_dim = header.at("arch").at("embed_dim").get<int>();
    arch.validate();
    out.seed = header.value("seed", std::uint64_t{0});
    out.epoch = header.value("epoch", 0);

    out.encoder.arch = arch;
    const auto dims = arch.layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Matrix w(dims[l + 1], dims[l]);
        in.read(reinterpret_cast<char*>(w.data().data()),
                static_cast<std::streamsize>(w.data().size() * sizeof(double)));
        Vec b(dims[l + 1]);
        in.read(reinterpret_cast<char*>(b.data()),
                static_cast<std::streamsize>(b.size() * sizeof(double)));
        if (!in) throw DataError("load_encoder: truncated parameter blob (layer " +
                                 std::to_string(l) + ")");
        out.encoder.weights.push_back(std::move(w));
        out.encoder.biases.push_back(std::move(b));
    }
    in.peek();
    if (!in.eof()) throw DataError("load_encoder: trailing bytes after parameter blob");
    for (const auto& w : out.encoder.weights)
        for (double x : w.data())
            if (!std::isfinite(x)) throw DataError("load_encoder: non-finite parameter");
    return out;
}

} // namespace slic
