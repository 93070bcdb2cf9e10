#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fracperc/dyadic.hpp"
#include "fracperc/errors.hpp"
#include "fracperc/harness.hpp"
#include "fracperc/intersect.hpp"
#include "fracperc/patterns.hpp"
#include "fracperc/percolation.hpp"

namespace py = pybind11;
using namespace fracperc;

namespace {

// Cube indices of one level as a list of integer tuples.
std::vector<std::vector<std::uint32_t>> level_indices(const PercolationTree& t, int n) {
    std::vector<std::vector<std::uint32_t>> out;
    for (CubeCode c : t.level(n)) out.push_back(decode(c, t.dim(), n));
    return out;
}

std::vector<CubeCode> encode_all(const std::vector<std::vector<std::uint32_t>>& cubes, int n) {
    std::vector<CubeCode> codes;
    for (const auto& idx : cubes) codes.push_back(encode(idx, n));
    std::sort(codes.begin(), codes.end());
    codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
    return codes;
}

py::dict detection_dict(const DetectionResult& r) {
    py::dict d;
    d["present"] = r.present;
    d["tolerance"] = r.tolerance;
    d["visits"] = r.visits;
    if (r.witness) {
        d["params"] = r.witness->params;
        d["points"] = r.witness->points;
    } else {
        d["params"] = py::none();
        d["points"] = py::none();
    }
    return d;
}

DetectionOptions detection_options(double C, double min_scale) {
    DetectionOptions o;
    o.C = C;
    o.min_scale = min_scale;
    return o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "fractal percolation core";

    py::register_exception<harness::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<BudgetError>(m, "BudgetError", PyExc_RuntimeError);

    m.def("extinction_probability", &extinction_probability, py::arg("d"), py::arg("p"));
    m.def("offspring_distribution", &offspring_distribution, py::arg("d"), py::arg("p"));
    m.def("dimension_value", &dimension_value, py::arg("d"), py::arg("p"));

    py::class_<PercolationTree>(m, "Tree")
        .def_property_readonly("dim", &PercolationTree::dim)
        .def_property_readonly("depth", &PercolationTree::depth)
        .def_property_readonly("seed", &PercolationTree::seed)
        .def_property_readonly("p", [](const PercolationTree& t) { return t.law().p; })
        .def("survivor_count", &PercolationTree::survivor_count, py::arg("n"))
        .def("level", &level_indices, py::arg("n"), "cube indices (i_1, ..., i_d) of the surviving level-n cubes")
        .def("counts", [](const PercolationTree& t) {
            std::vector<std::size_t> c;
            for (int j = 0; j <= t.depth(); ++j) c.push_back(t.survivor_count(j));
            return c;
        })
        .def("mass", [](const PercolationTree& t, int n) { return natural_measure(t, n).total_mass(); }, py::arg("n"))
        .def("box_dimension", [](const PercolationTree& t, int lo, int hi) {
            return box_dimension_estimate(t, lo, hi).slope;
        }, py::arg("j_lo"), py::arg("j_hi"));

    m.def("sample_tree", [](int d, double p, int n, std::uint64_t seed, const std::string& variant) {
        const Variant v = parse_variant(variant);
        return v == Variant::coupled ? coupled_slice(d, seed, p, n) : sample_tree(make_law(d, p), v, seed, n);
    }, py::arg("d"), py::arg("p"), py::arg("n"), py::arg("seed") = 1, py::arg("variant") = "surviving");

    m.def("threshold", [](const std::string& descriptor) {
        const auto t = threshold_table(ConfigDescriptor::parse(descriptor));
        py::dict d;
        d["critical_s"] = t.critical_s;
        d["critical_p"] = t.critical_p();
        d["relative_s"] = t.relative_s;
        d["applicable"] = t.applicable;
        return d;
    }, py::arg("descriptor"));

    m.def("detect", [](const PercolationTree& t, int n, const std::string& descriptor, double C, double min_scale) {
        return detection_dict(
            detect_configuration(t, n, ConfigDescriptor::parse(descriptor), detection_options(C, min_scale)));
    }, py::arg("tree"), py::arg("n"), py::arg("descriptor"), py::arg("C") = 0.0, py::arg("min_scale") = 0.0);

    m.def("detect_cubes", [](const std::vector<std::vector<std::uint32_t>>& cubes, int n, const std::string& descriptor,
                             double C, double min_scale) {
        const auto codes = encode_all(cubes, n);
        return detection_dict(
            detect_configuration(codes, n, ConfigDescriptor::parse(descriptor), detection_options(C, min_scale)));
    }, py::arg("cubes"), py::arg("n"), py::arg("descriptor"), py::arg("C") = 0.0, py::arg("min_scale") = 0.0);

    m.def("intersection_mass", [](int d, int m_factors, double p, int n, const Eigen::MatrixXd& directions,
                                  const Eigen::VectorXd& point, std::uint64_t seed, const std::string& variant,
                                  const std::string& mode) {
        ProductMeasureSpec spec;
        spec.law = make_law(d, p);
        spec.m = m_factors;
        spec.variant = parse_variant(variant);
        spec.mode = parse_product_mode(mode);
        spec.seed = seed;
        const auto s = intersection_mass(spec, Target::plane(AffinePlane(directions, point)), n);
        py::dict out;
        out["Y"] = s.Y;
        out["se"] = s.se;
        out["kernel"] = s.kernel;
        return out;
    }, py::arg("d"), py::arg("m"), py::arg("p"), py::arg("n"), py::arg("directions"), py::arg("point"),
       py::arg("seed") = 1, py::arg("variant") = "extinction", py::arg("mode") = "independent");

    m.def("_run", [](const std::string& command, const std::map<std::string, std::string>& values,
                     const std::string& out, std::uint64_t seed, int threads) {
        harness::Config cfg;
        for (const auto& [k, v] : values) cfg.set(k, v);
        if (!cfg.has("seed")) cfg.set("seed", std::to_string(seed));
        harness::RunOptions opt;
        opt.out = out;
        opt.seed = seed;
        opt.threads = threads;
        py::gil_scoped_release release;
        return harness::run(command, cfg, opt).dump();
    });
    m.def("_preset", [](const std::string& command, const std::string& name) {
        return harness::preset(command, name).values();
    });
    m.def("_aggregate", [](const std::vector<std::string>& inputs, const std::string& out) {
        std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
        return harness::aggregate(paths, out).dump();
    });
    m.attr("commands") = harness::commands();
}
