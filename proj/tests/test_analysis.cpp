#include "ecalab/analysis.hpp"
#include "ecalab/rng.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace ecalab;
using namespace ecalab::analysis;
using complexity::WolframClass;

namespace {

ExperimentResult make_result(int rule, double lz, std::optional<double> easy, WolframClass cls = WolframClass::III) {
    ExperimentResult r;
    r.rule = eca::RuleId(rule);
    r.complexity.rule = r.rule;
    r.complexity.lempel_ziv = lz;
    r.complexity.compression = 0.1 + lz / 2;
    r.complexity.lyapunov = lz - 0.5;
    r.complexity.krylov = 3 * lz;
    r.complexity.wolfram_class = cls;
    r.efficiency_easy = easy;
    return r;
}

// CKA from centred Gram matrices, HSIC form.
double gram_cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    const auto n = x.rows();
    const Eigen::MatrixXd h =
        Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    const Eigen::MatrixXd k = h * (x * x.transpose()) * h, l = h * (y * y.transpose()) * h;
    return (k.cwiseProduct(l)).sum() / std::sqrt(k.squaredNorm() * l.squaredNorm());
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    CounterRng rng(seed);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.next_normal();
    return m;
}

}  // namespace

TEST_CASE("pearson against closed form and frozen p-values") {
    const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 1, 4, 3, 5};
    const auto a = pearson(x, y);
    CHECK(a.r == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(a.p == doctest::Approx(0.10408803866182799).epsilon(1e-9));
    CHECK(a.n == 5);
    CHECK(!a.significant());
    CHECK(a.label() == "0.80");

    const std::vector<double> x2{0.1, 0.5, 0.9, 1.3, 2.0, 2.2, 3.1}, y2{1.0, 0.7, 1.4, 0.9, 1.8, 1.1, 2.0};
    const auto b = pearson(x2, y2);
    CHECK(b.r == doctest::Approx(0.7424502509316713).epsilon(1e-12));
    CHECK(b.p == doctest::Approx(0.055962398441971456).epsilon(1e-9));

    const std::vector<double> x3{1, 2, 3}, y3{1, 3, 2};
    CHECK(pearson(x3, y3).p == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    const std::vector<double> lin{2, 4, 6, 8};
    const std::vector<double> inc{1, 2, 3, 4};
    const auto exact = pearson(inc, lin);
    CHECK(exact.r == doctest::Approx(1.0));
    CHECK(exact.p == 0.0);
    CHECK(exact.label(3) == "1.000*");

    std::vector<double> big_x, big_y;
    for (int i = 0; i < 40; ++i) {
        big_x.push_back(i);
        big_y.push_back(-i + (i % 3));
    }
    const auto neg = pearson(big_x, big_y);
    CHECK(neg.r < -0.99);
    CHECK(neg.significant());
    CHECK(neg.label().front() == '-');
    CHECK(neg.label().back() == '*');
}

TEST_CASE("pearson is invariant to affine maps and symmetric") {
    CounterRng rng(8);
    std::vector<double> x(20), y(20), xs(20);
    for (std::size_t i = 0; i < 20; ++i) {
        x[i] = rng.next_normal();
        y[i] = x[i] + rng.next_normal();
        xs[i] = 3.5 * x[i] - 7;
    }
    CHECK(pearson(x, y).r == doctest::Approx(pearson(xs, y).r).epsilon(1e-12));
    CHECK(pearson(x, y).p == doctest::Approx(pearson(y, x).p).epsilon(1e-12));
}

TEST_CASE("undefined correlations are reported, not computed") {
    const std::vector<double> two{1, 2}, flat{3, 3, 3}, ok{1, 2, 3};
    CHECK(thrown_kind([&] { pearson(two, two); }) == ErrorKind::undefined_correlation);
    CHECK(thrown_kind([&] { pearson(flat, ok); }) == ErrorKind::undefined_correlation);
    CHECK(thrown_kind([&] { pearson(ok, two); }) == ErrorKind::contract_error);

    std::vector<ExperimentResult> rs{make_result(30, 0.9, 0.5), make_result(110, 0.7, std::nullopt),
                                     make_result(0, 0.1, 0.1)};
    const auto entries = correlations(rs);
    CHECK(entries.size() == 16);
    for (const auto& e : entries) {
        CHECK(!e.result);
        CHECK(!e.note.empty());
    }
    CHECK(to_json(entries).size() == 16);
}

TEST_CASE("correlation table covers every metric and measure") {
    std::vector<ExperimentResult> rs;
    for (int i = 0; i < 6; ++i) rs.push_back(make_result(i, 0.1 * i, 0.2 + 0.05 * i * i));
    const auto entries = correlations(rs);
    const auto it = std::find_if(entries.begin(), entries.end(), [](const auto& e) {
        return e.metric == "efficiency_easy" && e.measure == "lempel_ziv";
    });
    REQUIRE(it != entries.end());
    REQUIRE(it->result);
    std::vector<double> x, y;
    for (const auto& r : rs) {
        x.push_back(r.complexity.lempel_ziv);
        y.push_back(*r.efficiency_easy);
    }
    CHECK(it->result->r == pearson(x, y).r);
}

TEST_CASE("seed averaging") {
    auto a = make_result(30, 0.9, 0.2), b = make_result(30, 0.9, 0.4), c = make_result(30, 0.9, std::nullopt);
    a.chess_accuracy = 0.5;
    std::vector<ExperimentResult> reps{a, b, c, make_result(30, 0.9, 1.0)};
    reps.back().horizon = 5;
    const auto avg = average_seeds(reps);
    REQUIRE(avg.size() == 2);
    CHECK(avg[0].seeds == 3);
    CHECK(*avg[0].efficiency_easy == doctest::Approx(0.3));
    CHECK(*avg[0].chess_accuracy == 0.5);
    CHECK(avg[1].horizon == 5);
}

TEST_CASE("class summary") {
    std::vector<ExperimentResult> rs{make_result(0, 0.1, 0.8, WolframClass::I)};
    auto s = class_summary(rs);
    REQUIRE(s.stats.size() == 1);
    CHECK(s.stats[0].n == 1);
    CHECK(s.stats[0].mean == 0.8);
    CHECK(s.stats[0].stderr_ == 0.0);
    CHECK(s.notes.size() == 3 + 3);  // three empty classes, three absent metrics

    std::vector<ExperimentResult> many;
    CounterRng rng(2);
    for (int i = 0; i < 9; ++i)
        many.push_back(make_result(i, 0.1, rng.next_double() * 1e3 + 1e-3 * i, WolframClass::II));
    const auto base = class_summary(many);
    std::vector<double> vals;
    for (const auto& r : many) vals.push_back(*r.efficiency_easy);
    double mean = 0, ss = 0;
    for (double v : vals) mean += v;
    mean /= 9;
    for (double v : vals) ss += (v - mean) * (v - mean);
    CHECK(base.stats[0].mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(base.stats[0].stderr_ == doctest::Approx(std::sqrt(ss / 8) / 3).epsilon(1e-12));
    for (int k = 0; k < 5; ++k) {
        std::reverse(many.begin(), many.end());
        std::rotate(many.begin(), many.begin() + k, many.end());
        const auto p = class_summary(many);
        CHECK(p.stats[0].mean == base.stats[0].mean);
        CHECK(p.stats[0].stderr_ == base.stats[0].stderr_);
    }
}

TEST_CASE("attention summary over the last k keys") {
    model::AttentionTrace t;
    t.batch = 1;
    t.layers = 1;
    t.heads = 2;
    t.keys = 12;
    t.weights.assign(24, 0.0);
    for (std::size_t h = 0; h < 2; ++h) {
        t.weights[h * 12 + 11] = 0.5;  // the query attending to itself is excluded
        t.weights[h * 12 + 10] = 0.3;  // offset 1
        t.weights[h * 12 + 0] = 0.2;   // offset 11, outside the window
    }
    const auto s = summarize_attention(t, 10);
    REQUIRE(s.per_offset.size() == 10);
    CHECK(s.per_offset[0] == doctest::Approx(0.3));
    for (std::size_t o = 1; o < 10; ++o) CHECK(s.per_offset[o] == 0.0);
    CHECK(s.mean == doctest::Approx(0.03));
    CHECK(s.probes == 1);
}

TEST_CASE("uniform attention gives 1/len per offset") {
    model::ModelConfig c;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_model = 8;
    c.d_ff = 16;
    c.context_len = 20;
    c.input_width = 6;
    c.output_width = 6;
    model::Transformer<float> m(c);
    for (std::size_t l = 0; l < 2; ++l) {
        m.tensor("blocks." + std::to_string(l) + ".attn.qkv.weight").leftCols(16).setZero();
        m.tensor("blocks." + std::to_string(l) + ".attn.qkv.bias").leftCols(16).setZero();
    }
    model::Batch<float> probe{3, 20, model::RowMatrix<float>::Random(60, 6), {}};
    const auto s = attention_last_k(m, probe, 10, 2);
    for (double v : s.per_offset) CHECK(v == doctest::Approx(1.0 / 20).epsilon(1e-5));
    CHECK(s.mean == doctest::Approx(1.0 / 20).epsilon(1e-5));
    CHECK(s.probes == 3);
}

TEST_CASE("linear CKA matches the Gram-matrix form") {
    const auto x = random_matrix(30, 5, 1), y = random_matrix(30, 7, 2);
    const Eigen::MatrixXd mixed = x * random_matrix(5, 4, 3) + 0.3 * y.leftCols(4);
    CHECK(linear_cka(x, y) == doctest::Approx(gram_cka(x, y)).epsilon(1e-10));
    CHECK(linear_cka(x, mixed) == doctest::Approx(gram_cka(x, mixed)).epsilon(1e-10));
    CHECK(linear_cka(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(linear_cka(x, y) == doctest::Approx(linear_cka(y, x)).epsilon(1e-12));

    // Invariant to orthogonal transforms and isotropic scaling, not to shifts of features.
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(5, 5, 4));
    const Eigen::MatrixXd q = qr.householderQ();
    CHECK(linear_cka(x * q * 4.0, y) == doctest::Approx(linear_cka(x, y)).epsilon(1e-10));
    CHECK(linear_cka(x.rowwise() + Eigen::RowVectorXd::Constant(5, 9.0), y) ==
          doctest::Approx(linear_cka(x, y)).epsilon(1e-10));

    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(30, 3);
    CHECK(linear_cka(zero, zero) == 1.0);
    CHECK(linear_cka(zero, x) == 0.0);
    const double v = linear_cka(x, y);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK_THROWS_AS(linear_cka(x, random_matrix(29, 5, 1)), Error);
}

TEST_CASE("checkpoint CKA and the pairwise matrix") {
    model::ModelConfig c;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_model = 8;
    c.d_ff = 16;
    c.context_len = 4;
    c.input_width = 6;
    c.output_width = 6;
    std::vector<model::ModelCheckpoint> ckpts;
    for (std::uint64_t s = 0; s < 3; ++s) {
        c.seed = s;
        ckpts.push_back(model::ModelCheckpoint::from(model::Transformer<float>(c)));
    }
    model::Batch<float> probe{10, 4, model::RowMatrix<float>::Random(40, 6).cwiseAbs().array().round(), {}};
    for (auto mode : {CkaMode::activation, CkaMode::weight}) {
        CHECK(parse_cka_mode(to_string(mode)) == mode);
        const auto mat = cka_matrix(ckpts, {"a", "b", "c"}, mode, probe);
        CHECK(mat.values.rows() == 3);
        for (int i = 0; i < 3; ++i) {
            CHECK(mat.values(i, i) == doctest::Approx(1.0));
            for (int j = 0; j < 3; ++j) {
                CHECK(mat.values(i, j) == doctest::Approx(mat.values(j, i)).epsilon(1e-12));
                CHECK(mat.values(i, j) >= 0.0);
                CHECK(mat.values(i, j) <= 1.0 + 1e-12);
            }
        }
        CHECK(mat.values(0, 1) == doctest::Approx(cka(ckpts[0], ckpts[1], mode, probe)).epsilon(1e-12));
        CHECK(cka_csv(mat).find("a,b,c") != std::string::npos);
    }
    auto other = c;
    other.n_layers = 1;
    const auto small = model::ModelCheckpoint::from(model::Transformer<float>(other));
    CHECK(thrown_kind([&] { cka(ckpts[0], small, CkaMode::weight, probe); }) == ErrorKind::contract_error);
    CHECK(thrown_kind([] { parse_cka_mode("bogus"); }) == ErrorKind::config_error);
}

TEST_CASE("MDS recovers planar distances") {
    const std::vector<std::array<double, 2>> pts{{0, 0}, {0.3, 0.1}, {0.1, 0.4}, {0.5, 0.5}, {0.2, 0.25}};
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXd s(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            s(i, j) = 1 - std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
    const auto e = mds_embed(s);
    CHECK(e.dims == 2);
    CHECK(e.note.empty());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& a = e.coords[i];
            const auto& b = e.coords[j];
            CHECK(std::hypot(a[0] - b[0], a[1] - b[1]) == doctest::Approx(1 - s(i, j)).epsilon(1e-9));
        }
    for (int d = 0; d < 2; ++d) {
        double mean = 0;
        for (const auto& c : e.coords) mean += c[d];
        CHECK(std::abs(mean) < 1e-12);
    }
}

TEST_CASE("MDS equilateral triangle and degenerate inputs") {
    Eigen::MatrixXd s = Eigen::MatrixXd::Constant(3, 3, 0.4);
    s.diagonal().setOnes();
    const auto e = mds_embed(s);
    CHECK(e.dims == 2);
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
            CHECK(std::hypot(e.coords[i][0] - e.coords[j][0], e.coords[i][1] - e.coords[j][1]) ==
                  doctest::Approx(0.6).epsilon(1e-9));

    const auto same = mds_embed(Eigen::MatrixXd::Ones(4, 4));
    CHECK(same.dims == 1);
    CHECK(!same.note.empty());
    for (const auto& c : same.coords) CHECK(c == std::array<double, 2>{0, 0});

    Eigen::MatrixXd line(3, 3);
    line << 1, 0.9, 0.8, 0.9, 1, 0.9, 0.8, 0.9, 1;
    const auto l = mds_embed(line);
    CHECK(l.dims == 1);
    CHECK(std::abs(l.coords[2][0] - l.coords[0][0]) == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(mds_embed(line).coords == l.coords);
}

TEST_CASE("horizon comparison") {
    std::vector<ExperimentResult> one, five;
    for (int r : {30, 110, 0}) {
        one.push_back(make_result(r, r / 200.0, 0.5));
        five.push_back(make_result(r, r / 200.0, r == 0 ? 0.5 : 0.25));
        five.back().horizon = 5;
    }
    const auto h = compare_horizons(one, five);
    REQUIRE(h.points.size() == 3);
    CHECK(h.points[0].rule.code() == 0);
    CHECK(!h.points[0].below_diagonal);  // equal values sit on the diagonal
    CHECK(h.points[1].below_diagonal);
    CHECK(h.points[1].one_step == 0.5);
    CHECK(h.points[1].five_step == 0.25);
    const auto back = parse_horizons_csv(horizons_csv(h, "abc"));
    REQUIRE(back.points.size() == 3);
    CHECK(back.points[2].five_step == 0.25);
    CHECK(back.points[2].below_diagonal);
    five.pop_back();
    CHECK(thrown_kind([&] { compare_horizons(one, five); }) == ErrorKind::contract_error);
}

TEST_CASE("results CSV round-trips exactly") {
    std::vector<ExperimentResult> rs{make_result(30, 0.123456789012345678, 1.0 / 3.0),
                                     make_result(110, 0.7, std::nullopt, WolframClass::IV)};
    rs[1].chess_accuracy = 0.41;
    rs[1].avg_attention_last10 = 0.0625;
    rs[1].seeds = 3;
    rs[1].horizon = 5;
    const auto text = results_csv(rs, "deadbeef");
    CHECK(text.rfind("# inputs_sha256=deadbeef\n", 0) == 0);
    CHECK(parse_results_csv(text) == rs);
    CHECK(thrown_kind([] { parse_results_csv("rule,horizon\n1,2\n"); }) == ErrorKind::format_error);

    ClassSummary cs = class_summary(rs);
    CHECK(class_summary_csv(cs).find("efficiency_easy") != std::string::npos);
    Embedding emb{{{0.5, -0.25}}, 2, {}};
    CHECK(mds_csv(emb, {"r30"}).find("r30,0.5,-0.25") != std::string::npos);
}
