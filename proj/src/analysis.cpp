#include "ecalab/analysis.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace ecalab::analysis {

using complexity::WolframClass;

// -------------------------------------------------------------- pearson

std::string CorrelationResult::label(int digits) const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f%s", digits, r, significant() ? "*" : "");
    return buf;
}

CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(ErrorKind::contract_error, "pearson: length mismatch");
    const std::size_t n = x.size();
    if (n < 3) throw Error(ErrorKind::undefined_correlation, "pearson: need at least 3 points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0) || !(syy > 0)) throw Error(ErrorKind::undefined_correlation, "pearson: zero variance");
    CorrelationResult res;
    res.n = n;
    res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double dof = static_cast<double>(n - 2);
    const double one_minus = 1.0 - res.r * res.r;
    if (one_minus <= 0) {
        res.p = 0;
    } else {
        const double t = std::abs(res.r) * std::sqrt(dof / one_minus);
        const boost::math::students_t dist(dof);
        res.p = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
    }
    return res;
}

// -------------------------------------------------------------- results

namespace {

void check_unit(const std::optional<double>& v, const char* name) {
    if (v && !(*v >= 0 && *v <= 1))
        throw Error(ErrorKind::contract_error, std::string(name) + " must lie in [0, 1]");
}

}  // namespace

void validate(const ExperimentResult& r) {
    check_unit(r.efficiency_easy, "efficiency_easy");
    check_unit(r.efficiency_hard, "efficiency_hard");
    check_unit(r.chess_accuracy, "chess_accuracy");
    check_unit(r.avg_attention_last10, "avg_attention_last10");
    if (r.seeds < 1) throw Error(ErrorKind::contract_error, "seeds must be positive");
}

std::optional<double> metric(const ExperimentResult& r, std::string_view name) {
    if (name == "efficiency_easy") return r.efficiency_easy;
    if (name == "efficiency_hard") return r.efficiency_hard;
    if (name == "chess_accuracy") return r.chess_accuracy;
    if (name == "avg_attention_last10") return r.avg_attention_last10;
    throw Error(ErrorKind::contract_error, "unknown metric '" + std::string(name) + "'");
}

double measure(const complexity::ComplexityReport& c, std::string_view name) {
    if (name == "lempel_ziv") return c.lempel_ziv;
    if (name == "compression") return c.compression;
    if (name == "lyapunov") return c.lyapunov;
    if (name == "krylov") return c.krylov;
    throw Error(ErrorKind::contract_error, "unknown complexity measure '" + std::string(name) + "'");
}

namespace {

std::optional<double>* metric_slot(ExperimentResult& r, std::string_view name) {
    if (name == "efficiency_easy") return &r.efficiency_easy;
    if (name == "efficiency_hard") return &r.efficiency_hard;
    if (name == "chess_accuracy") return &r.chess_accuracy;
    return &r.avg_attention_last10;
}

// Order-independent mean: values are summed in sorted order.
double sorted_mean(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

std::vector<ExperimentResult> average_seeds(std::span<const ExperimentResult> replicates) {
    std::map<std::pair<int, std::size_t>, std::vector<const ExperimentResult*>> groups;
    for (const auto& r : replicates) groups[{r.rule.code(), r.horizon}].push_back(&r);
    std::vector<ExperimentResult> out;
    for (const auto& [key, members] : groups) {
        ExperimentResult avg = *members.front();
        avg.seeds = 0;
        for (const auto* m : members) avg.seeds += m->seeds;
        for (const char* name : metric_names) {
            std::vector<double> vals;
            for (const auto* m : members)
                if (auto v = metric(*m, name)) vals.push_back(*v);
            *metric_slot(avg, name) = vals.empty() ? std::nullopt : std::optional<double>(sorted_mean(vals));
        }
        out.push_back(avg);
    }
    return out;
}

std::vector<CorrelationEntry> correlations(std::span<const ExperimentResult> results) {
    std::vector<CorrelationEntry> out;
    for (const char* m : metric_names) {
        for (const char* c : measure_names) {
            CorrelationEntry e{m, c, std::nullopt, {}};
            std::vector<double> x, y;
            for (const auto& r : results)
                if (auto v = metric(r, m)) {
                    x.push_back(measure(r.complexity, c));
                    y.push_back(*v);
                }
            try {
                e.result = pearson(x, y);
            } catch (const Error& err) {
                e.note = err.what();
            }
            out.push_back(std::move(e));
        }
    }
    return out;
}

nlohmann::json to_json(const std::vector<CorrelationEntry>& entries) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries) {
        nlohmann::json j = {{"metric", e.metric}, {"measure", e.measure}};
        if (e.result) {
            j["r"] = e.result->r;
            j["p"] = e.result->p;
            j["n"] = e.result->n;
            j["significant"] = e.result->significant();
            j["label"] = e.result->label();
        } else {
            j["r"] = nullptr;
            j["note"] = e.note;
        }
        arr.push_back(std::move(j));
    }
    return arr;
}

ClassSummary class_summary(std::span<const ExperimentResult> results) {
    ClassSummary s;
    for (WolframClass cls : {WolframClass::I, WolframClass::II, WolframClass::III, WolframClass::IV}) {
        bool any = false;
        for (const auto& r : results) any = any || r.complexity.wolfram_class == cls;
        if (!any) {
            s.notes.push_back(std::string("class ") + complexity::to_string(cls) + ": no results, omitted");
            continue;
        }
        for (const char* m : metric_names) {
            std::vector<double> vals;
            for (const auto& r : results)
                if (r.complexity.wolfram_class == cls)
                    if (auto v = metric(r, m)) vals.push_back(*v);
            if (vals.empty()) {
                s.notes.push_back(std::string("class ") + complexity::to_string(cls) + ": no " + m + " values");
                continue;
            }
            std::sort(vals.begin(), vals.end());
            ClassStat st;
            st.cls = cls;
            st.metric = m;
            st.n = vals.size();
            st.mean = sorted_mean(vals);
            if (vals.size() > 1) {
                double ss = 0;
                for (double v : vals) ss += (v - st.mean) * (v - st.mean);
                st.stderr_ = std::sqrt(ss / static_cast<double>(vals.size() - 1)) /
                             std::sqrt(static_cast<double>(vals.size()));
            }
            s.stats.push_back(st);
        }
    }
    return s;
}

// ------------------------------------------------------------ attention

AttentionSummary summarize_attention(const model::AttentionTrace& trace, std::size_t k) {
    if (trace.keys < 2) throw Error(ErrorKind::contract_error, "attention trace too short");
    const std::size_t kk = std::min(k, trace.keys - 1);
    AttentionSummary s;
    s.per_offset.assign(k, 0.0);
    s.probes = trace.batch;
    const double denom = static_cast<double>(trace.batch * trace.layers * trace.heads);
    for (std::size_t b = 0; b < trace.batch; ++b)
        for (std::size_t l = 0; l < trace.layers; ++l)
            for (std::size_t h = 0; h < trace.heads; ++h)
                for (std::size_t o = 1; o <= kk; ++o) s.per_offset[o - 1] += trace.at(b, l, h, trace.keys - 1 - o);
    for (auto& v : s.per_offset) v /= denom;
    s.mean = 0;
    for (double v : s.per_offset) s.mean += v;
    s.mean /= static_cast<double>(k);
    return s;
}

namespace {

model::Batch<float> slice(const model::Batch<float>& in, std::size_t b0, std::size_t b1) {
    model::Batch<float> out;
    out.batch = b1 - b0;
    out.len = in.len;
    if (in.binary.size() > 0) {
        out.binary = in.binary.middleRows(static_cast<Eigen::Index>(b0 * in.len),
                                          static_cast<Eigen::Index>((b1 - b0) * in.len));
    } else {
        out.tokens.assign(in.tokens.begin() + static_cast<std::ptrdiff_t>(b0 * in.len),
                          in.tokens.begin() + static_cast<std::ptrdiff_t>(b1 * in.len));
    }
    return out;
}

}  // namespace

AttentionSummary attention_last_k(const model::Transformer<float>& m, const model::Batch<float>& probe,
                                  std::size_t k, std::size_t batch_size) {
    if (probe.len < k + 1) throw Error(ErrorKind::contract_error, "probe sequences shorter than k + 1");
    AttentionSummary total;
    total.per_offset.assign(k, 0.0);
    for (std::size_t b0 = 0; b0 < probe.batch; b0 += batch_size) {
        const std::size_t b1 = std::min(probe.batch, b0 + batch_size);
        model::AttentionTrace trace;
        m.forward(slice(probe, b0, b1), nullptr, &trace);
        const auto part = summarize_attention(trace, k);
        for (std::size_t i = 0; i < k; ++i) total.per_offset[i] += part.per_offset[i] * static_cast<double>(b1 - b0);
    }
    for (auto& v : total.per_offset) v /= static_cast<double>(probe.batch);
    total.probes = probe.batch;
    for (double v : total.per_offset) total.mean += v;
    total.mean /= static_cast<double>(k);
    return total;
}

model::Batch<float> probe_batch(const datagen::PretrainDataset& ds) {
    model::Batch<float> b;
    b.batch = ds.samples.size();
    b.len = ds.config.t_len;
    b.binary.resize(static_cast<Eigen::Index>(b.batch * b.len), static_cast<Eigen::Index>(ds.config.x_len));
    float* out = b.binary.data();
    for (const auto& s : ds.samples)
        for (auto bit : s.window.bits) *out++ = bit;
    return b;
}

// ------------------------------------------------------------------ CKA

const char* to_string(CkaMode mode) noexcept { return mode == CkaMode::activation ? "activation" : "weight"; }

CkaMode parse_cka_mode(std::string_view text) {
    if (text == "activation") return CkaMode::activation;
    if (text == "weight") return CkaMode::weight;
    throw Error(ErrorKind::config_error, "unknown CKA mode '" + std::string(text) + "'");
}

double linear_cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    if (x.rows() != y.rows() || x.rows() < 2) throw Error(ErrorKind::contract_error, "CKA: row counts differ");
    const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd yc = y.rowwise() - y.colwise().mean();
    const double xx = (xc.transpose() * xc).norm();
    const double yy = (yc.transpose() * yc).norm();
    if (xx == 0 || yy == 0) return xx == yy ? 1.0 : 0.0;
    const double xy = (yc.transpose() * xc).squaredNorm();
    return std::clamp(xy / (xx * yy), 0.0, 1.0);
}

Eigen::MatrixXd activation_features(const model::Transformer<float>& m, const model::Batch<float>& probe,
                                    std::size_t batch_size) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(probe.batch * probe.len),
                        static_cast<Eigen::Index>(m.config().d_model));
    for (std::size_t b0 = 0; b0 < probe.batch; b0 += batch_size) {
        const std::size_t b1 = std::min(probe.batch, b0 + batch_size);
        const auto h = m.hidden_states(slice(probe, b0, b1));
        out.middleRows(static_cast<Eigen::Index>(b0 * probe.len), h.rows()) = h.cast<double>();
    }
    return out;
}

namespace {

void check_same_architecture(const model::ModelConfig& a, const model::ModelConfig& b, CkaMode mode) {
    bool same = a.n_layers == b.n_layers && a.n_heads == b.n_heads && a.d_model == b.d_model && a.d_ff == b.d_ff &&
                a.context_len == b.context_len;
    if (mode == CkaMode::activation)
        same = same && a.head == b.head && a.input_width == b.input_width && a.vocab_size == b.vocab_size;
    if (!same) throw Error(ErrorKind::contract_error, "CKA needs models with the same architecture");
}

const std::array<const char*, 4> block_weights = {"attn.qkv.weight", "attn.proj.weight", "mlp.fc.weight",
                                                  "mlp.proj.weight"};

double weight_cka(const model::Transformer<float>& a, const model::Transformer<float>& b) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t l = 0; l < a.config().n_layers; ++l)
        for (const char* w : block_weights) {
            const std::string name = "blocks." + std::to_string(l) + "." + w;
            sum += linear_cka(a.tensor(name).cast<double>(), b.tensor(name).cast<double>());
            ++n;
        }
    return sum / static_cast<double>(n);
}

}  // namespace

double cka(const model::ModelCheckpoint& a, const model::ModelCheckpoint& b, CkaMode mode,
           const model::Batch<float>& probe) {
    check_same_architecture(a.config, b.config, mode);
    const auto ma = a.model(), mb = b.model();
    if (mode == CkaMode::weight) return weight_cka(ma, mb);
    return linear_cka(activation_features(ma, probe), activation_features(mb, probe));
}

CkaMatrix cka_matrix(std::span<const model::ModelCheckpoint> models, std::vector<std::string> labels, CkaMode mode,
                     const model::Batch<float>& probe) {
    const std::size_t n = models.size();
    if (labels.size() != n) throw Error(ErrorKind::contract_error, "CKA labels do not match the models");
    for (std::size_t i = 1; i < n; ++i) check_same_architecture(models[0].config, models[i].config, mode);

    std::vector<model::Transformer<float>> nets;
    for (const auto& m : models) nets.push_back(m.model());
    std::vector<Eigen::MatrixXd> feats(n);
    if (mode == CkaMode::activation)
        tbb::parallel_for(std::size_t{0}, n, [&](std::size_t i) { feats[i] = activation_features(nets[i], probe); });

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    CkaMatrix out;
    out.mode = mode;
    out.labels = std::move(labels);
    out.values = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    tbb::parallel_for(std::size_t{0}, pairs.size(), [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        const double v = mode == CkaMode::activation ? linear_cka(feats[i], feats[j]) : weight_cka(nets[i], nets[j]);
        out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        out.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    });
    return out;
}

Embedding mds_embed(const Eigen::MatrixXd& similarity) {
    const auto n = similarity.rows();
    if (similarity.cols() != n || n < 1) throw Error(ErrorKind::contract_error, "MDS needs a square matrix");
    const Eigen::MatrixXd d = (Eigen::MatrixXd::Ones(n, n) - similarity).cwiseMax(0.0);
    const Eigen::MatrixXd d2 = d.cwiseProduct(d);
    const Eigen::MatrixXd j =
        Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    const Eigen::MatrixXd b = -0.5 * j * d2 * j;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (b + b.transpose()));
    const auto& evals = es.eigenvalues();  // ascending
    const double scale = std::max(1.0, std::abs(evals(n - 1)));

    Embedding e;
    e.coords.assign(static_cast<std::size_t>(n), {0.0, 0.0});
    std::size_t rank = 0;
    for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, n); ++c) {
        const double lambda = evals(n - 1 - c);
        if (lambda <= 1e-10 * scale) break;
        Eigen::VectorXd v = es.eigenvectors().col(n - 1 - c) * std::sqrt(lambda);
        Eigen::Index arg = 0;
        for (Eigen::Index i = 1; i < n; ++i)
            if (std::abs(v(i)) > std::abs(v(arg)) + 1e-12) arg = i;
        if (v(arg) < 0) v = -v;
        for (Eigen::Index i = 0; i < n; ++i) e.coords[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = v(i);
        ++rank;
    }
    e.dims = rank >= 2 ? 2 : 1;
    if (rank < 2) e.note = "degenerate configuration of rank " + std::to_string(rank) + ", returned 1-D coordinates";
    return e;
}

// ------------------------------------------------------------- horizons

HorizonComparison compare_horizons(std::span<const ExperimentResult> short_horizon,
                                   std::span<const ExperimentResult> long_horizon, std::string_view metric_name) {
    std::map<int, const ExperimentResult*> a, b;
    for (const auto& r : short_horizon) a[r.rule.code()] = &r;
    for (const auto& r : long_horizon) b[r.rule.code()] = &r;
    if (a.size() != b.size() || !std::equal(a.begin(), a.end(), b.begin(), b.end(),
                                            [](const auto& x, const auto& y) { return x.first == y.first; }))
        throw Error(ErrorKind::contract_error, "horizon comparison needs the same rule set");
    HorizonComparison h;
    h.metric = metric_name;
    for (const auto& [code, ra] : a) {
        const auto va = metric(*ra, metric_name), vb = metric(*b[code], metric_name);
        if (!va || !vb) throw Error(ErrorKind::contract_error, "missing " + std::string(metric_name) + " for rule " +
                                                                   std::to_string(code));
        h.points.push_back({ra->rule, ra->complexity.lempel_ziv, *va, *vb, *vb < *va});
    }
    return h;
}

// -------------------------------------------------------------- exports

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::string preamble(const std::string& hash) { return hash.empty() ? std::string() : "# inputs_sha256=" + hash + "\n"; }

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        rows.push_back(std::move(fields));
    }
    return rows;
}

double to_double(const std::string& s) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::format_error, "bad number '" + s + "' in CSV");
    }
}

std::optional<double> to_optional(const std::string& s) {
    return s.empty() ? std::nullopt : std::optional<double>(to_double(s));
}

const char* results_header =
    "rule,horizon,wolfram_class,lempel_ziv,compression,lyapunov,krylov,efficiency_easy,efficiency_hard,"
    "chess_accuracy,avg_attention_last10,seeds";

}  // namespace

std::string results_csv(std::span<const ExperimentResult> results, const std::string& inputs_hash) {
    std::string out = preamble(inputs_hash) + results_header + "\n";
    for (const auto& r : results) {
        const auto& c = r.complexity;
        out += std::to_string(r.rule.code()) + "," + std::to_string(r.horizon) + "," +
               complexity::to_string(c.wolfram_class) + "," + fmt(c.lempel_ziv) + "," + fmt(c.compression) + "," +
               fmt(c.lyapunov) + "," + fmt(c.krylov) + "," + fmt(r.efficiency_easy) + "," + fmt(r.efficiency_hard) +
               "," + fmt(r.chess_accuracy) + "," + fmt(r.avg_attention_last10) + "," + std::to_string(r.seeds) + "\n";
    }
    return out;
}

std::vector<ExperimentResult> parse_results_csv(std::string_view text) {
    const auto rows = parse_csv(text);
    if (rows.empty()) throw Error(ErrorKind::format_error, "results CSV has no header");
    std::vector<ExperimentResult> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i];
        if (f.size() != 12) throw Error(ErrorKind::format_error, "results CSV row " + std::to_string(i) + " malformed");
        ExperimentResult r;
        r.rule = eca::RuleId::from_int(static_cast<int>(to_double(f[0])));
        r.horizon = static_cast<std::size_t>(to_double(f[1]));
        r.complexity.rule = r.rule;
        r.complexity.wolfram_class = complexity::parse_wolfram_class(f[2]);
        r.complexity.lempel_ziv = to_double(f[3]);
        r.complexity.compression = to_double(f[4]);
        r.complexity.lyapunov = to_double(f[5]);
        r.complexity.krylov = to_double(f[6]);
        r.efficiency_easy = to_optional(f[7]);
        r.efficiency_hard = to_optional(f[8]);
        r.chess_accuracy = to_optional(f[9]);
        r.avg_attention_last10 = to_optional(f[10]);
        r.seeds = static_cast<std::size_t>(to_double(f[11]));
        validate(r);
        out.push_back(r);
    }
    return out;
}

std::string attention_csv(const std::vector<std::pair<eca::RuleId, AttentionSummary>>& rows,
                          const std::string& inputs_hash) {
    std::string out = preamble(inputs_hash) + "rule,offset,attention\n";
    for (const auto& [rule, s] : rows) {
        for (std::size_t o = 0; o < s.per_offset.size(); ++o)
            out += std::to_string(rule.code()) + "," + std::to_string(o + 1) + "," + fmt(s.per_offset[o]) + "\n";
        out += std::to_string(rule.code()) + ",mean," + fmt(s.mean) + "\n";
    }
    return out;
}

std::string cka_csv(const CkaMatrix& m, const std::string& inputs_hash) {
    std::string out = preamble(inputs_hash) + "# mode=" + to_string(m.mode) + "\nmodel";
    for (const auto& l : m.labels) out += "," + l;
    out += "\n";
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        out += m.labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < m.values.cols(); ++j) out += "," + fmt(m.values(i, j));
        out += "\n";
    }
    return out;
}

std::string mds_csv(const Embedding& e, const std::vector<std::string>& labels, const std::string& inputs_hash) {
    std::string out = preamble(inputs_hash);
    if (!e.note.empty()) out += "# " + e.note + "\n";
    out += "model,x,y\n";
    for (std::size_t i = 0; i < e.coords.size(); ++i)
        out += (i < labels.size() ? labels[i] : std::to_string(i)) + "," + fmt(e.coords[i][0]) + "," +
               fmt(e.coords[i][1]) + "\n";
    return out;
}

std::string horizons_csv(const HorizonComparison& h, const std::string& inputs_hash) {
    std::string out = preamble(inputs_hash) + "# metric=" + h.metric + "\nrule,lempel_ziv,one_step,five_step,below_diagonal\n";
    for (const auto& p : h.points)
        out += std::to_string(p.rule.code()) + "," + fmt(p.lempel_ziv) + "," + fmt(p.one_step) + "," +
               fmt(p.five_step) + "," + (p.below_diagonal ? "1" : "0") + "\n";
    return out;
}

HorizonComparison parse_horizons_csv(std::string_view text) {
    HorizonComparison h;
    const auto pos = text.find("# metric=");
    if (pos != std::string_view::npos) {
        const auto end = text.find('\n', pos);
        h.metric = std::string(text.substr(pos + 9, end - pos - 9));
    }
    const auto rows = parse_csv(text);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i];
        if (f.size() != 5) throw Error(ErrorKind::format_error, "horizon CSV row malformed");
        h.points.push_back({eca::RuleId::from_int(static_cast<int>(to_double(f[0]))), to_double(f[1]), to_double(f[2]),
                            to_double(f[3]), f[4] == "1"});
    }
    return h;
}

std::string class_summary_csv(const ClassSummary& s, const std::string& inputs_hash) {
    std::string out = preamble(inputs_hash);
    for (const auto& n : s.notes) out += "# " + n + "\n";
    out += "class,metric,n,mean,stderr\n";
    for (const auto& st : s.stats)
        out += std::string(complexity::to_string(st.cls)) + "," + st.metric + "," + std::to_string(st.n) + "," +
               fmt(st.mean) + "," + fmt(st.stderr_) + "\n";
    return out;
}

}  // namespace ecalab::analysis
