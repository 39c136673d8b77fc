#include "ecalab/model.hpp"

#include "ecalab/rng.hpp"

#include <cmath>
#include <numbers>

namespace ecalab::model {

void validate(const ModelConfig& c) {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::config_error, "model config: " + what); };
    if (c.n_layers < 1) fail("n_layers must be positive");
    if (c.n_heads < 1 || c.d_model % c.n_heads != 0) fail("d_model must be divisible by n_heads");
    if (c.d_ff < 1) fail("d_ff must be positive");
    if (c.context_len < 2) fail("context_len must be at least 2");
    if (c.dropout < 0 || c.dropout >= 1) fail("dropout must lie in [0, 1)");
    if (c.head == HeadKind::binary && (c.input_width < 1 || c.output_width < 1)) fail("binary head needs widths");
    if (c.head == HeadKind::tokens && c.vocab_size < 2) fail("token head needs a vocabulary");
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"n_layers", c.n_layers},       {"n_heads", c.n_heads},
            {"d_model", c.d_model},         {"d_ff", c.d_ff},
            {"context_len", c.context_len}, {"head", c.head == HeadKind::binary ? "binary" : "tokens"},
            {"input_width", c.input_width}, {"output_width", c.output_width},
            {"vocab_size", c.vocab_size},   {"dropout", c.dropout},
            {"init_std", c.init_std},       {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_model = j.value("d_model", c.d_model);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.context_len = j.value("context_len", c.context_len);
    const std::string head = j.value("head", std::string("binary"));
    if (head != "binary" && head != "tokens") throw Error(ErrorKind::config_error, "unknown head '" + head + "'");
    c.head = head == "binary" ? HeadKind::binary : HeadKind::tokens;
    c.input_width = j.value("input_width", c.input_width);
    c.output_width = j.value("output_width", c.output_width);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.dropout = j.value("dropout", c.dropout);
    c.init_std = j.value("init_std", c.init_std);
    c.seed = j.value("seed", c.seed);
    validate(c);
    return c;
}

// ------------------------------------------------------------------ layout

ParamLayout::ParamLayout(const ModelConfig& c) {
    validate(c);
    const std::size_t d = c.d_model;
    if (c.head == HeadKind::binary) {
        add("in_proj.weight", c.input_width, d, false);
        add("in_proj.bias", 1, d, false);
    } else {
        add("tok_emb.weight", c.vocab_size, d, false);
    }
    add("pos_emb", c.context_len, d, true);
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        add(p + "ln1.gamma", 1, d, true);
        add(p + "ln1.beta", 1, d, true);
        add(p + "attn.qkv.weight", d, 3 * d, true);
        add(p + "attn.qkv.bias", 1, 3 * d, true);
        add(p + "attn.proj.weight", d, d, true);
        add(p + "attn.proj.bias", 1, d, true);
        add(p + "ln2.gamma", 1, d, true);
        add(p + "ln2.beta", 1, d, true);
        add(p + "mlp.fc.weight", d, c.d_ff, true);
        add(p + "mlp.fc.bias", 1, c.d_ff, true);
        add(p + "mlp.proj.weight", c.d_ff, d, true);
        add(p + "mlp.proj.bias", 1, d, true);
    }
    add("ln_f.gamma", 1, d, true);
    add("ln_f.beta", 1, d, true);
    const std::size_t out = c.head == HeadKind::binary ? c.output_width : c.vocab_size;
    add("out_proj.weight", d, out, false);
    add("out_proj.bias", 1, out, false);
}

std::size_t ParamLayout::add(std::string name, std::size_t rows, std::size_t cols, bool backbone) {
    tensors_.push_back({std::move(name), rows, cols, total_, backbone});
    total_ += rows * cols;
    return tensors_.size() - 1;
}

std::size_t ParamLayout::index(const std::string& name) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i)
        if (tensors_[i].name == name) return i;
    throw Error(ErrorKind::contract_error, "no tensor named '" + name + "'");
}

const TensorInfo& ParamLayout::at(const std::string& name) const { return tensors_[index(name)]; }

bool ParamLayout::contains(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.name == name) return true;
    return false;
}

// ------------------------------------------------------------- primitives

namespace {

template <typename S>
using Matrix = RowMatrix<S>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using ConstMap = Eigen::Map<const RowMatrix<S>>;
template <typename S>
using MutMap = Eigen::Map<RowMatrix<S>>;

constexpr double ln_eps = 1e-5;

template <typename S>
struct Views {
    const ParamLayout& layout;
    const S* base;
    ConstMap<S> operator()(const std::string& name) const {
        const auto& t = layout.at(name);
        return ConstMap<S>(base + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
    }
};

template <typename S>
struct GradViews {
    const ParamLayout& layout;
    S* base;
    MutMap<S> operator()(const std::string& name) const {
        const auto& t = layout.at(name);
        return MutMap<S>(base + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
    }
};

template <typename S>
Matrix<S> layer_norm(const RowMatrix<S>& x, const ConstMap<S>& gamma, const ConstMap<S>& beta, Vector<S>& mean,
                     Vector<S>& rstd) {
    const auto n = x.rows();
    const auto d = static_cast<S>(x.cols());
    mean.resize(n);
    rstd.resize(n);
    RowMatrix<S> y(n, x.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
        const S m = x.row(r).sum() / d;
        const S var = (x.row(r).array() - m).square().sum() / d;
        const S rs = S(1) / std::sqrt(var + static_cast<S>(ln_eps));
        mean[r] = m;
        rstd[r] = rs;
        y.row(r) = ((x.row(r).array() - m) * rs) * gamma.row(0).array() + beta.row(0).array();
    }
    return y;
}

// Returns dx; accumulates parameter gradients when dgamma/dbeta are given.
template <typename S>
Matrix<S> layer_norm_backward(const RowMatrix<S>& x, const RowMatrix<S>& dy, const ConstMap<S>& gamma,
                              const Vector<S>& mean, const Vector<S>& rstd, MutMap<S>* dgamma, MutMap<S>* dbeta) {
    const auto n = x.rows();
    const auto d = static_cast<S>(x.cols());
    RowMatrix<S> dx(n, x.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto xhat = ((x.row(r).array() - mean[r]) * rstd[r]).eval();
        if (dgamma) dgamma->row(0).array() += dy.row(r).array() * xhat;
        if (dbeta) dbeta->row(0) += dy.row(r);
        const auto dxhat = (dy.row(r).array() * gamma.row(0).array()).eval();
        const S mean_dxhat = dxhat.sum() / d;
        const S mean_dxhat_xhat = (dxhat * xhat).sum() / d;
        dx.row(r) = rstd[r] * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
    }
    return dx;
}

template <typename S>
constexpr S gelu_c() {
    return static_cast<S>(0.7978845608028654);  // sqrt(2 / pi)
}

template <typename S>
Matrix<S> gelu(const RowMatrix<S>& u) {
    const S c = gelu_c<S>();
    return u.unaryExpr([c](S v) {
        return S(0.5) * v * (S(1) + std::tanh(c * (v + S(0.044715) * v * v * v)));
    });
}

template <typename S>
Matrix<S> gelu_backward(const RowMatrix<S>& u, const RowMatrix<S>& dg) {
    const S c = gelu_c<S>();
    RowMatrix<S> out(u.rows(), u.cols());
    const S* pu = u.data();
    const S* pd = dg.data();
    S* po = out.data();
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        const S v = pu[i];
        const S t = std::tanh(c * (v + S(0.044715) * v * v * v));
        const S dt = (S(1) - t * t) * c * (S(1) + S(3) * S(0.044715) * v * v);
        po[i] = pd[i] * (S(0.5) * (S(1) + t) + S(0.5) * v * dt);
    }
    return out;
}

template <typename S>
void apply_dropout(RowMatrix<S>& m, std::vector<std::uint8_t>& mask, double p, std::uint64_t key, S scale) {
    mask.resize(static_cast<std::size_t>(m.size()));
    CounterRng rng(key);
    S* pm = m.data();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.next_double() >= p ? 1 : 0;
        pm[i] = mask[i] ? pm[i] * scale : S(0);
    }
}

template <typename S>
void dropout_backward(RowMatrix<S>& grad, const std::vector<std::uint8_t>& mask, S scale) {
    if (mask.empty()) return;
    S* pg = grad.data();
    for (std::size_t i = 0; i < mask.size(); ++i) pg[i] = mask[i] ? pg[i] * scale : S(0);
}

std::string block_prefix(std::size_t l) { return "blocks." + std::to_string(l) + "."; }

}  // namespace

// ------------------------------------------------------------ Transformer

template <typename S>
Transformer<S>::Transformer(const ModelConfig& config)
    : config_(config), layout_(config), values_(layout_.size(), S(0)) {
    std::vector<std::string> all;
    for (const auto& t : layout_.tensors()) all.push_back(t.name);
    init_tensors(all);
}

template <typename S>
Transformer<S>::Transformer(const ModelConfig& config, std::span<const S> values)
    : config_(config), layout_(config), values_(values.begin(), values.end()) {
    if (values_.size() != layout_.size())
        throw Error(ErrorKind::contract_error, "parameter count does not match the model config");
}

template <typename S>
Eigen::Map<RowMatrix<S>> Transformer<S>::tensor(const std::string& name) {
    const auto& t = layout_.at(name);
    return {values_.data() + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols)};
}

template <typename S>
Eigen::Map<const RowMatrix<S>> Transformer<S>::tensor(const std::string& name) const {
    const auto& t = layout_.at(name);
    return {values_.data() + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols)};
}

template <typename S>
void Transformer<S>::init_tensors(const std::vector<std::string>& names) {
    // GPT-2 initialization: N(0, std) weights and embeddings, residual output
    // projections scaled by 1/sqrt(2 * n_layers), zero biases, unit LN gains.
    const double resid_std = config_.init_std / std::sqrt(2.0 * static_cast<double>(config_.n_layers));
    for (const auto& name : names) {
        const std::size_t idx = layout_.index(name);
        const auto& t = layout_.tensors()[idx];
        S* p = values_.data() + t.offset;
        const std::size_t n = t.rows * t.cols;
        const bool is_bias = name.ends_with(".bias") || name.ends_with(".beta");
        if (name.ends_with(".gamma")) {
            std::fill(p, p + n, S(1));
        } else if (is_bias) {
            std::fill(p, p + n, S(0));
        } else {
            const bool resid = name.ends_with("attn.proj.weight") || name.ends_with("mlp.proj.weight");
            const double sd = resid ? resid_std : config_.init_std;
            CounterRng rng(CounterRng::derive(config_.seed, {0x494E4954ULL, fnv1a64(name)}));
            for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<S>(sd * rng.next_normal());
        }
    }
}

template <typename S>
void Transformer<S>::check_input(const Batch<S>& in) const {
    if (in.batch == 0 || in.len == 0) throw Error(ErrorKind::contract_error, "empty batch");
    if (in.len > config_.context_len)
        throw Error(ErrorKind::contract_error, "sequence length " + std::to_string(in.len) + " exceeds context " +
                                                   std::to_string(config_.context_len));
    const auto rows = static_cast<Eigen::Index>(in.batch * in.len);
    if (config_.head == HeadKind::binary) {
        if (in.binary.rows() != rows || in.binary.cols() != static_cast<Eigen::Index>(config_.input_width))
            throw Error(ErrorKind::contract_error, "binary input must be (batch*len) x input_width");
    } else {
        if (in.tokens.size() != static_cast<std::size_t>(rows))
            throw Error(ErrorKind::contract_error, "token input must hold batch*len ids");
        for (auto t : in.tokens)
            if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size)
                throw Error(ErrorKind::contract_error, "token id outside the vocabulary");
    }
}

template <typename S>
RowMatrix<S> Transformer<S>::forward(const Batch<S>& in, ForwardCache<S>* cache, AttentionTrace* trace,
                                     const DropoutContext* dropout) const {
    check_input(in);
    const Views<S> W{layout_, values_.data()};
    const std::size_t B = in.batch, T = in.len, D = config_.d_model, H = config_.n_heads, dh = D / H;
    const auto BT = static_cast<Eigen::Index>(B * T);
    const auto Ti = static_cast<Eigen::Index>(T);
    const auto dhi = static_cast<Eigen::Index>(dh);
    const auto Di = static_cast<Eigen::Index>(D);
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    const bool drop = dropout && config_.dropout > 0;
    const S keep_scale = static_cast<S>(1.0 / (1.0 - config_.dropout));

    ForwardCache<S> local;
    ForwardCache<S>& c = cache ? *cache : local;
    const bool keep = cache != nullptr;
    c.batch = B;
    c.len = T;
    c.dropout_scale = keep_scale;
    c.layers.assign(config_.n_layers, {});
    if (trace) {
        trace->batch = B;
        trace->layers = config_.n_layers;
        trace->heads = H;
        trace->keys = T;
        trace->weights.assign(B * config_.n_layers * H * T, 0.0);
    }

    RowMatrix<S> x(BT, Di);
    if (config_.head == HeadKind::binary) {
        x.noalias() = in.binary * W("in_proj.weight");
        x.rowwise() += W("in_proj.bias").row(0);
        if (keep) c.binary_in = in.binary;
    } else {
        const auto emb = W("tok_emb.weight");
        for (Eigen::Index r = 0; r < BT; ++r) x.row(r) = emb.row(in.tokens[static_cast<std::size_t>(r)]);
        if (keep) c.tokens = in.tokens;
    }
    const auto pos = W("pos_emb");
    for (Eigen::Index r = 0; r < BT; ++r) x.row(r) += pos.row(r % Ti);
    if (drop) apply_dropout(x, c.drop_embed, config_.dropout, CounterRng::derive(dropout->key, {0}), keep_scale);

    for (std::size_t l = 0; l < config_.n_layers; ++l) {
        const std::string p = block_prefix(l);
        LayerCache<S>& lc = c.layers[l];
        if (keep) lc.x_in = x;
        RowMatrix<S> h1 = layer_norm<S>(x, W(p + "ln1.gamma"), W(p + "ln1.beta"), lc.ln1_mean, lc.ln1_rstd);
        RowMatrix<S> qkv(BT, 3 * Di);
        qkv.noalias() = h1 * W(p + "attn.qkv.weight");
        qkv.rowwise() += W(p + "attn.qkv.bias").row(0);

        RowMatrix<S> attn(BT, Di);
        if (keep) lc.probs.resize(B * H);
        RowMatrix<S> scores(Ti, Ti);
        for (std::size_t b = 0; b < B; ++b) {
            const auto r0 = static_cast<Eigen::Index>(b * T);
            for (std::size_t h = 0; h < H; ++h) {
                const auto q = qkv.block(r0, static_cast<Eigen::Index>(h * dh), Ti, dhi);
                const auto k = qkv.block(r0, Di + static_cast<Eigen::Index>(h * dh), Ti, dhi);
                const auto v = qkv.block(r0, 2 * Di + static_cast<Eigen::Index>(h * dh), Ti, dhi);
                scores.noalias() = q * k.transpose();
                for (Eigen::Index i = 0; i < Ti; ++i) {
                    const S m = scores.row(i).head(i + 1).maxCoeff();
                    S sum = 0;
                    for (Eigen::Index j = 0; j <= i; ++j) {
                        const S e = std::exp((scores(i, j) - m) * scale);
                        scores(i, j) = e;
                        sum += e;
                    }
                    const S inv = S(1) / sum;
                    scores.row(i).head(i + 1) *= inv;
                    scores.row(i).tail(Ti - i - 1).setZero();
                }
                attn.block(r0, static_cast<Eigen::Index>(h * dh), Ti, dhi).noalias() = scores * v;
                if (trace)
                    for (std::size_t j = 0; j < T; ++j)
                        trace->weights[((b * config_.n_layers + l) * H + h) * T + j] =
                            static_cast<double>(scores(Ti - 1, static_cast<Eigen::Index>(j)));
                if (keep) lc.probs[b * H + h] = scores;
            }
        }
        RowMatrix<S> o(BT, Di);
        o.noalias() = attn * W(p + "attn.proj.weight");
        o.rowwise() += W(p + "attn.proj.bias").row(0);
        if (drop)
            apply_dropout(o, lc.drop_attn, config_.dropout, CounterRng::derive(dropout->key, {l + 1, 1}), keep_scale);
        x += o;
        if (keep) {
            lc.h1 = std::move(h1);
            lc.qkv = std::move(qkv);
            lc.attn_out = std::move(attn);
            lc.x_mid = x;
        }

        RowMatrix<S> h2 = layer_norm<S>(x, W(p + "ln2.gamma"), W(p + "ln2.beta"), lc.ln2_mean, lc.ln2_rstd);
        RowMatrix<S> u(BT, static_cast<Eigen::Index>(config_.d_ff));
        u.noalias() = h2 * W(p + "mlp.fc.weight");
        u.rowwise() += W(p + "mlp.fc.bias").row(0);
        RowMatrix<S> g = gelu<S>(u);
        RowMatrix<S> m(BT, Di);
        m.noalias() = g * W(p + "mlp.proj.weight");
        m.rowwise() += W(p + "mlp.proj.bias").row(0);
        if (drop)
            apply_dropout(m, lc.drop_mlp, config_.dropout, CounterRng::derive(dropout->key, {l + 1, 2}), keep_scale);
        x += m;
        if (keep) {
            lc.h2 = std::move(h2);
            lc.u = std::move(u);
            lc.g = std::move(g);
        }
    }

    if (keep) c.x_final = x;
    RowMatrix<S> ln_out = layer_norm<S>(x, W("ln_f.gamma"), W("ln_f.beta"), c.lnf_mean, c.lnf_rstd);
    RowMatrix<S> logits(BT, W("out_proj.weight").cols());
    logits.noalias() = ln_out * W("out_proj.weight");
    logits.rowwise() += W("out_proj.bias").row(0);
    c.ln_out = std::move(ln_out);
    return logits;
}

template <typename S>
RowMatrix<S> Transformer<S>::hidden_states(const Batch<S>& input) const {
    ForwardCache<S> cache;
    forward(input, &cache);
    return std::move(cache.ln_out);
}

template <typename S>
void Transformer<S>::backward(const ForwardCache<S>& c, const Matrix& dlogits, std::span<S> grads,
                              bool backbone_grads) const {
    if (grads.size() != values_.size()) throw Error(ErrorKind::contract_error, "gradient buffer size mismatch");
    if (c.layers.size() != config_.n_layers || c.x_final.rows() == 0)
        throw Error(ErrorKind::contract_error, "backward needs a cache filled by forward");
    const Views<S> W{layout_, values_.data()};
    const GradViews<S> G{layout_, grads.data()};
    const std::size_t B = c.batch, T = c.len, D = config_.d_model, H = config_.n_heads, dh = D / H;
    const auto BT = static_cast<Eigen::Index>(B * T);
    const auto Ti = static_cast<Eigen::Index>(T);
    const auto dhi = static_cast<Eigen::Index>(dh);
    const auto Di = static_cast<Eigen::Index>(D);
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));

    {
        auto gw = G("out_proj.weight");
        gw.noalias() += c.ln_out.transpose() * dlogits;
        G("out_proj.bias").row(0) += dlogits.colwise().sum();
    }
    Matrix dln = dlogits * W("out_proj.weight").transpose();
    MutMap<S> gf_gamma = G("ln_f.gamma"), gf_beta = G("ln_f.beta");
    Matrix dx = layer_norm_backward<S>(c.x_final, dln, W("ln_f.gamma"), c.lnf_mean, c.lnf_rstd,
                                       backbone_grads ? &gf_gamma : nullptr, backbone_grads ? &gf_beta : nullptr);

    for (std::size_t li = config_.n_layers; li-- > 0;) {
        const std::string p = block_prefix(li);
        const LayerCache<S>& lc = c.layers[li];

        // MLP branch: x = x_mid + proj(gelu(fc(ln2(x_mid))))
        Matrix dm = dx;
        dropout_backward(dm, lc.drop_mlp, c.dropout_scale);
        if (backbone_grads) {
            G(p + "mlp.proj.weight").noalias() += lc.g.transpose() * dm;
            G(p + "mlp.proj.bias").row(0) += dm.colwise().sum();
        }
        Matrix dg = dm * W(p + "mlp.proj.weight").transpose();
        Matrix du = gelu_backward<S>(lc.u, dg);
        if (backbone_grads) {
            G(p + "mlp.fc.weight").noalias() += lc.h2.transpose() * du;
            G(p + "mlp.fc.bias").row(0) += du.colwise().sum();
        }
        Matrix dh2 = du * W(p + "mlp.fc.weight").transpose();
        MutMap<S> g2g = G(p + "ln2.gamma"), g2b = G(p + "ln2.beta");
        dx += layer_norm_backward<S>(lc.x_mid, dh2, W(p + "ln2.gamma"), lc.ln2_mean, lc.ln2_rstd,
                                     backbone_grads ? &g2g : nullptr, backbone_grads ? &g2b : nullptr);

        // Attention branch: x_mid = x_in + proj(attn(ln1(x_in)))
        Matrix d_o = dx;
        dropout_backward(d_o, lc.drop_attn, c.dropout_scale);
        if (backbone_grads) {
            G(p + "attn.proj.weight").noalias() += lc.attn_out.transpose() * d_o;
            G(p + "attn.proj.bias").row(0) += d_o.colwise().sum();
        }
        Matrix dattn = d_o * W(p + "attn.proj.weight").transpose();
        Matrix dqkv(BT, 3 * Di);
        Matrix dp(Ti, Ti);
        for (std::size_t b = 0; b < B; ++b) {
            const auto r0 = static_cast<Eigen::Index>(b * T);
            for (std::size_t h = 0; h < H; ++h) {
                const auto col = static_cast<Eigen::Index>(h * dh);
                const auto q = lc.qkv.block(r0, col, Ti, dhi);
                const auto k = lc.qkv.block(r0, Di + col, Ti, dhi);
                const auto v = lc.qkv.block(r0, 2 * Di + col, Ti, dhi);
                const auto dout = dattn.block(r0, col, Ti, dhi);
                const Matrix& P = lc.probs[b * H + h];
                dqkv.block(r0, 2 * Di + col, Ti, dhi).noalias() = P.transpose() * dout;
                dp.noalias() = dout * v.transpose();
                for (Eigen::Index i = 0; i < Ti; ++i) {
                    const S dot = P.row(i).head(i + 1).dot(dp.row(i).head(i + 1));
                    for (Eigen::Index j = 0; j <= i; ++j) dp(i, j) = P(i, j) * (dp(i, j) - dot) * scale;
                    dp.row(i).tail(Ti - i - 1).setZero();
                }
                dqkv.block(r0, col, Ti, dhi).noalias() = dp * k;
                dqkv.block(r0, Di + col, Ti, dhi).noalias() = dp.transpose() * q;
            }
        }
        if (backbone_grads) {
            G(p + "attn.qkv.weight").noalias() += lc.h1.transpose() * dqkv;
            G(p + "attn.qkv.bias").row(0) += dqkv.colwise().sum();
        }
        Matrix dh1 = dqkv * W(p + "attn.qkv.weight").transpose();
        MutMap<S> g1g = G(p + "ln1.gamma"), g1b = G(p + "ln1.beta");
        dx += layer_norm_backward<S>(lc.x_in, dh1, W(p + "ln1.gamma"), lc.ln1_mean, lc.ln1_rstd,
                                     backbone_grads ? &g1g : nullptr, backbone_grads ? &g1b : nullptr);
    }

    dropout_backward(dx, c.drop_embed, c.dropout_scale);
    if (backbone_grads) {
        auto gp = G("pos_emb");
        for (Eigen::Index r = 0; r < BT; ++r) gp.row(r % Ti) += dx.row(r);
    }
    if (config_.head == HeadKind::binary) {
        G("in_proj.weight").noalias() += c.binary_in.transpose() * dx;
        G("in_proj.bias").row(0) += dx.colwise().sum();
    } else {
        auto ge = G("tok_emb.weight");
        for (Eigen::Index r = 0; r < BT; ++r) ge.row(c.tokens[static_cast<std::size_t>(r)]) += dx.row(r);
    }
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace ecalab::model
