#include "ecalab/analysis.hpp"
#include "ecalab/complexity.hpp"
#include "ecalab/datagen.hpp"
#include "ecalab/eca.hpp"
#include "ecalab/pipeline.hpp"
#include "ecalab/train.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace ecalab;

namespace {

using Bits = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

eca::RuleId rule_of(int code) { return eca::RuleId::from_int(code); }

eca::State state_of(const Bits& bits) {
    if (bits.ndim() != 1) throw py::value_error("state must be a 1-D array of 0/1");
    const std::span<const std::uint8_t> s(bits.data(), static_cast<std::size_t>(bits.size()));
    return eca::State::from_bits(s);
}

Bits bits_of(const eca::State& s) {
    Bits out(static_cast<py::ssize_t>(s.width()));
    auto* d = out.mutable_data();
    for (std::size_t i = 0; i < s.width(); ++i) d[i] = s.get(i) ? 1 : 0;
    return out;
}

Bits grid_array(const eca::SpacetimeGrid& g) {
    Bits out({static_cast<py::ssize_t>(g.height()), static_cast<py::ssize_t>(g.width())});
    auto m = out.mutable_unchecked<2>();
    for (std::size_t t = 0; t < g.height(); ++t)
        for (std::size_t x = 0; x < g.width(); ++x) m(t, x) = g.at(t, x) ? 1 : 0;
    return out;
}

eca::SpacetimeGrid grid_of(const Bits& a) {
    if (a.ndim() != 2) throw py::value_error("grid must be a 2-D array of 0/1");
    eca::SpacetimeGrid g{};
    const auto cols = static_cast<std::size_t>(a.shape(1));
    for (py::ssize_t t = 0; t < a.shape(0); ++t)
        g.rows.push_back(eca::State::from_bits(std::span<const std::uint8_t>(a.data(t, 0), cols)));
    return g;
}

py::dict report_dict(const complexity::ComplexityReport& r) {
    py::dict d;
    d["rule"] = r.rule.code();
    d["lempel_ziv"] = r.lempel_ziv;
    d["compression"] = r.compression;
    d["lyapunov"] = r.lyapunov;
    d["krylov"] = r.krylov;
    d["wolfram_class"] = complexity::to_string(r.wolfram_class);
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Elementary cellular automata, complexity measures and analysis helpers";
    m.attr("__version__") = pipeline::tool_version;

    static py::exception<Error> error(m, "EcalabError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(error.ptr(), e.what());
        }
    });

    m.def("step", [](int rule, const Bits& state) { return bits_of(eca::step(rule_of(rule), state_of(state))); },
          py::arg("rule"), py::arg("state"), "One synchronous update of a periodic row.");
    m.def(
        "evolve",
        [](int rule, const Bits& init, std::size_t steps) {
            return grid_array(eca::evolve(rule_of(rule), state_of(init), steps));
        },
        py::arg("rule"), py::arg("init"), py::arg("steps"), "Space-time grid of steps + 1 rows.");
    m.def("canonical", [](int rule) { return eca::canonical(rule_of(rule)).code(); }, py::arg("rule"));
    m.def("symmetry_classes", [] {
        std::vector<std::vector<int>> out;
        for (const auto& c : eca::symmetry_classes()) {
            std::vector<int> members;
            for (auto r : c.members) members.push_back(r.code());
            out.push_back(members);
        }
        return out;
    });
    m.def("wolfram_class", [](int rule) { return complexity::to_string(complexity::wolfram_class(rule_of(rule))); },
          py::arg("rule"));

    m.def(
        "lz76",
        [](const Bits& bits) {
            return complexity::lz76(std::span<const std::uint8_t>(bits.data(), static_cast<std::size_t>(bits.size())));
        },
        py::arg("bits"), "Number of LZ76 phrases of a flat 0/1 sequence.");
    m.def("compression_complexity", [](const Bits& grid) { return complexity::compression_complexity(grid_of(grid)); },
          py::arg("grid"));
    m.def("lyapunov", [](int rule, std::size_t width, std::size_t trials, std::size_t steps, std::uint64_t seed) {
        return complexity::lyapunov(rule_of(rule), width, trials, steps, seed);
    }, py::arg("rule"), py::arg("width") = 256, py::arg("trials") = 32, py::arg("steps") = 200, py::arg("seed") = 0);
    m.def("krylov", [](int rule, std::size_t width, std::size_t horizon) {
        return complexity::krylov(rule_of(rule), width, horizon);
    }, py::arg("rule"), py::arg("width") = 10, py::arg("horizon") = 32);
    m.def(
        "report",
        [](int rule, std::size_t width, std::size_t steps, std::uint64_t seed) {
            complexity::ComplexityConfig c;
            c.width = width;
            c.steps = steps;
            c.seed = seed;
            return report_dict(complexity::report(rule_of(rule), c));
        },
        py::arg("rule"), py::arg("width") = 256, py::arg("steps") = 1000, py::arg("seed") = 0,
        "All complexity measures for one rule.");

    m.def(
        "pearson",
        [](const std::vector<double>& x, const std::vector<double>& y) {
            const auto r = analysis::pearson(x, y);
            return py::make_tuple(r.r, r.p);
        },
        py::arg("x"), py::arg("y"), "Pearson r and two-sided p-value.");
    m.def("linear_cka", &analysis::linear_cka, py::arg("x"), py::arg("y"));
    m.def(
        "mds_embed",
        [](const Eigen::MatrixXd& similarity) {
            const auto e = analysis::mds_embed(similarity);
            Eigen::MatrixXd coords(static_cast<Eigen::Index>(e.coords.size()), 2);
            for (std::size_t i = 0; i < e.coords.size(); ++i)
                coords.row(static_cast<Eigen::Index>(i)) << e.coords[i][0], e.coords[i][1];
            return py::make_tuple(coords, e.dims, e.note);
        },
        py::arg("similarity"), "Classical MDS of 1 - similarity; returns (coords, dims, note).");

    m.def(
        "pretrain_windows",
        [](int rule, std::size_t samples, std::size_t horizon, std::uint64_t seed, std::size_t t_len,
           std::size_t x_len) {
            datagen::PretrainConfig c;
            c.t_len = t_len;
            c.x_len = x_len;
            const auto ds = datagen::gen_pretrain(rule_of(rule), samples, horizon, seed, c);
            const auto rows = static_cast<py::ssize_t>(ds.target_rows());
            Bits windows({static_cast<py::ssize_t>(samples), static_cast<py::ssize_t>(t_len),
                          static_cast<py::ssize_t>(x_len)});
            Bits targets({static_cast<py::ssize_t>(samples), rows, static_cast<py::ssize_t>(x_len)});
            for (std::size_t i = 0; i < samples; ++i) {
                const auto& s = ds.samples[i];
                std::copy(s.window.bits.begin(), s.window.bits.end(), windows.mutable_data(i));
                std::copy(s.target.bits.begin(), s.target.bits.end(), targets.mutable_data(i));
            }
            return py::make_tuple(windows, targets);
        },
        py::arg("rule"), py::arg("samples"), py::arg("horizon") = 1, py::arg("seed") = 0, py::arg("t_len") = 60,
        py::arg("x_len") = 100, "Pretraining windows and targets as (N, T, X) and (N, R, X) arrays.");

    m.def(
        "load_dataset_info",
        [](const std::string& path) {
            const auto ds = datagen::load_dataset(path);
            py::dict d;
            d["kind"] = datagen::to_string(datagen::kind_of(ds));
            d["records"] = datagen::record_count(ds);
            d["sha256"] = datagen::dataset_hash(ds);
            return d;
        },
        py::arg("path"));
    m.def(
        "load_checkpoint_info",
        [](const std::string& path) {
            const auto ckpt = model::load_checkpoint(path);
            py::dict d;
            d["config"] = model::to_json(ckpt.config).dump();
            d["provenance"] = ckpt.provenance.dump();
            d["parameters"] = ckpt.values.size();
            d["backbone_sha256"] = model::backbone_hash(ckpt);
            return d;
        },
        py::arg("path"), "Header summary of a validated .eck checkpoint (JSON fields as strings).");
    m.def("config_template", &pipeline::config_template);
}
