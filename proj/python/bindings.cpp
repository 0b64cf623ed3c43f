#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <sstream>

#include "cli.hpp"
#include "malimg/binary_ingest.hpp"
#include "malimg/encoders.hpp"
#include "malimg/errors.hpp"
#include "malimg/extract.hpp"
#include "malimg/forest.hpp"
#include "malimg/knn.hpp"
#include "malimg/metrics.hpp"
#include "malimg/mlp.hpp"
#include "malimg/model_io.hpp"
#include "malimg/pe_parser.hpp"
#include "malimg/pipeline.hpp"
#include "malimg/png_io.hpp"
#include "malimg/runlog.hpp"

namespace py = pybind11;
using namespace malimg;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

ByteView view(const py::bytes& b, std::string_view& keep) {
    keep = std::string_view(b);
    return {reinterpret_cast<const std::uint8_t*>(keep.data()), keep.size()};
}

Bytes to_bytes(const py::bytes& b) {
    const std::string_view s(b);
    return Bytes(s.begin(), s.end());
}

py::bytes from_bytes(const Bytes& b) {
    return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

U8Array image_to_array(const MalImage& img) {
    std::vector<py::ssize_t> shape{img.height, img.width};
    if (img.channels > 1) shape.push_back(img.channels);
    U8Array a(shape);
    std::copy(img.pixels.begin(), img.pixels.end(), a.mutable_data());
    return a;
}

MalImage array_to_image(const U8Array& a) {
    if (a.ndim() != 2 && !(a.ndim() == 3 && a.shape(2) == 3)) {
        throw UsageError("image array must be HxW or HxWx3");
    }
    MalImage img;
    img.height = static_cast<std::uint32_t>(a.shape(0));
    img.width = static_cast<std::uint32_t>(a.shape(1));
    img.channels = a.ndim() == 3 ? 3 : 1;
    img.pixels.assign(a.data(), a.data() + a.size());
    return img;
}

FeatureMatrix to_matrix(const F32Array& x) {
    if (x.ndim() != 2) throw UsageError("feature array must be 2-D");
    FeatureMatrix m(static_cast<std::size_t>(x.shape(0)), static_cast<std::size_t>(x.shape(1)));
    std::copy(x.data(), x.data() + x.size(), m.values.begin());
    return m;
}

py::dict region_dict(const PESection& s) {
    static const char* kinds[] = {"header", "section", "gap", "overlay", "whole_file"};
    py::dict d;
    d["name"] = s.name;
    d["offset"] = s.raw_offset;
    d["size"] = s.raw_size;
    d["entropy"] = s.entropy_bits;
    d["kind"] = kinds[static_cast<int>(s.kind)];
    d["clamped"] = s.clamped;
    d["overlap_clipped"] = s.overlap_clipped;
    return d;
}

py::dict pe_dict(const PEFileInfo& info) {
    py::dict d;
    d["file_size"] = info.file_size;
    d["fallback"] = info.fallback;
    py::list sections, regions;
    for (const auto& s : info.sections) sections.append(region_dict(s));
    for (const auto& s : info.regions()) regions.append(region_dict(s));
    d["sections"] = sections;
    d["regions"] = regions;
    return d;
}

// Fitted model shared with Python.
struct Model {
    std::shared_ptr<Classifier> impl;

    py::tuple predict(const F32Array& x) const {
        const FeatureMatrix m = to_matrix(x);
        const auto preds = impl->predict_all(m);
        py::array_t<int> labels(static_cast<py::ssize_t>(preds.size()));
        py::array_t<double> probs({static_cast<py::ssize_t>(preds.size()), static_cast<py::ssize_t>(impl->num_classes())});
        auto l = labels.mutable_unchecked<1>();
        auto p = probs.mutable_unchecked<2>();
        for (std::size_t i = 0; i < preds.size(); ++i) {
            l(static_cast<py::ssize_t>(i)) = preds[i].label;
            for (std::size_t c = 0; c < preds[i].probabilities.size(); ++c) {
                p(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(c)) = preds[i].probabilities[c];
            }
        }
        return py::make_tuple(labels, probs);
    }
};

Model wrap(std::unique_ptr<Classifier> c) { return Model{std::shared_ptr<Classifier>(std::move(c))}; }

Weighting weighting_from(const std::string& s) {
    if (s == "uniform") return Weighting::uniform;
    if (s == "distance") return Weighting::distance;
    throw UsageError("weighting must be uniform or distance");
}

py::dict record_dict(const ManifestRecord& r) {
    py::dict d;
    d["sample_id"] = r.sample_id;
    d["source_path"] = r.source_path;
    d["family"] = r.family;
    d["method"] = r.method;
    d["geometry"] = r.geometry;
    d["image_path"] = r.image_path;
    d["split"] = std::string(to_string(r.split));
    d["flags"] = r.flags;
    d["fold"] = r.fold ? py::object(py::int_(*r.fold)) : py::object(py::none());
    d["generated"] = r.generated;
    return d;
}

ManifestRecord record_from(const py::dict& d) {
    ManifestRecord r;
    r.sample_id = d["sample_id"].cast<std::string>();
    auto get = [&](const char* key, std::string& field) {
        if (d.contains(key)) field = d[key].cast<std::string>();
    };
    get("source_path", r.source_path);
    get("family", r.family);
    get("method", r.method);
    get("geometry", r.geometry);
    get("image_path", r.image_path);
    if (d.contains("split")) r.split = parse_split(d["split"].cast<std::string>());
    if (d.contains("flags")) r.flags = d["flags"].cast<std::vector<std::string>>();
    if (d.contains("fold") && !d["fold"].is_none()) r.fold = d["fold"].cast<int>();
    if (d.contains("generated")) r.generated = d["generated"].cast<bool>();
    return r;
}

}  // namespace

PYBIND11_MODULE(_malimg, m) {
    m.doc() = "Executable-to-image encoders, classifiers and metrics";
    m.attr("__version__") = kVersion;

    py::register_exception<Error>(m, "MalimgError");
    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<EmptyFileError>(m, "EmptyFileError", PyExc_ValueError);
    py::register_exception<UndefinedAucError>(m, "UndefinedAucError", PyExc_ValueError);

    // ingest
    m.def("bin_width", &bin_width, py::arg("size_bytes"));
    m.def(
        "truncate_pad", [](const py::bytes& b, std::size_t n) {
            std::string_view keep;
            return from_bytes(truncate_pad(view(b, keep), n));
        },
        py::arg("data"), py::arg("length"));

    // PE
    m.def(
        "shannon_entropy", [](const py::bytes& b) {
            std::string_view keep;
            return shannon_entropy(view(b, keep));
        },
        py::arg("data"));
    m.def(
        "parse_pe", [](const py::bytes& b, bool fallback) {
            std::string_view keep;
            return pe_dict(fallback ? parse_pe_or_fallback(view(b, keep)) : parse_pe(view(b, keep)));
        },
        py::arg("data"), py::arg("fallback") = true);

    // encoders
    m.def("plasma", [] {
        U8Array a({256, 3});
        const auto& e = ColorMap256::plasma().entries();
        for (std::size_t i = 0; i < 256; ++i) {
            a.mutable_data()[i * 3] = e[i].r;
            a.mutable_data()[i * 3 + 1] = e[i].g;
            a.mutable_data()[i * 3 + 2] = e[i].b;
        }
        return a;
    });
    m.def(
        "encode_grayscale", [](const py::bytes& b, std::uint32_t width) {
            return image_to_array(encode_grayscale(layout_grid(to_bytes(b), width)));
        },
        py::arg("data"), py::arg("width"));
    m.def(
        "encode_colormap", [](const py::bytes& b, std::uint32_t width) {
            return image_to_array(encode_colormap(to_bytes(b), ColorMap256::plasma(), width));
        },
        py::arg("data"), py::arg("width"));
    m.def(
        "encode_3gram", [](const py::bytes& b, std::uint32_t width) {
            return image_to_array(encode_3gram(to_bytes(b), width));
        },
        py::arg("data"), py::arg("width"));
    m.def(
        "encode_pe", [](const py::bytes& b, std::optional<std::uint32_t> width) {
            const Bytes bytes = to_bytes(b);
            return image_to_array(encode_pe(parse_pe_or_fallback(bytes), bytes, width));
        },
        py::arg("data"), py::arg("width") = py::none());
    m.def(
        "resize", [](const U8Array& a, std::uint32_t w, std::uint32_t h) {
            return image_to_array(resize(array_to_image(a), w, h));
        },
        py::arg("image"), py::arg("width"), py::arg("height"));
    m.def(
        "extract_image",
        [](const py::bytes& b, const std::string& method, const std::string& geometry, std::uint32_t size) {
            const auto e = extract_image(to_bytes(b), ExtractConfig{parse_method(method), parse_geometry(geometry), size});
            return py::make_tuple(image_to_array(e.image), e.flags);
        },
        py::arg("data"), py::arg("method") = "colormap", py::arg("geometry") = "truncated", py::arg("size") = 128);
    m.def(
        "write_png", [](const std::filesystem::path& p, const U8Array& a) { write_png(p, array_to_image(a)); },
        py::arg("path"), py::arg("image"));
    m.def(
        "read_png", [](const std::filesystem::path& p) { return image_to_array(read_png(p)); }, py::arg("path"));

    // metrics
    m.def(
        "roc_auc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) { return roc_auc(scores, labels); },
        py::arg("scores"), py::arg("labels"));
    m.def(
        "classification_report_json",
        [](const std::vector<int>& truth, const std::vector<int>& pred, const std::vector<std::string>& classes) {
            const auto cm = confusion(truth, pred, classes.size());
            return to_json(classification_metrics(cm, classes)).dump();
        },
        py::arg("truth"), py::arg("pred"), py::arg("classes"));

    // classifiers
    py::class_<Model>(m, "Model")
        .def("predict", &Model::predict, py::arg("x"), "Returns (labels, probabilities).")
        .def_property_readonly("kind", [](const Model& s) { return std::string(to_string(s.impl->kind())); })
        .def_property_readonly("num_classes", [](const Model& s) { return s.impl->num_classes(); })
        .def_property_readonly("input_dims", [](const Model& s) { return s.impl->input_dims(); })
        .def("save", [](const Model& s, const std::filesystem::path& p) { save_model_file(p, *s.impl); });
    m.def(
        "load_model", [](const std::filesystem::path& p) { return wrap(load_model_file(p)); }, py::arg("path"));
    m.def(
        "knn_fit",
        [](const F32Array& x, std::vector<int> y, int num_classes, int k, const std::string& weighting) {
            return wrap(std::make_unique<KnnModel>(
                knn_fit(to_matrix(x), std::move(y), num_classes, KnnParams{k, weighting_from(weighting)})));
        },
        py::arg("x"), py::arg("y"), py::arg("num_classes"), py::arg("k") = 20, py::arg("weighting") = "distance");
    m.def(
        "mlp_fit",
        [](const F32Array& x, const std::vector<int>& y, int num_classes, std::vector<int> hidden, double alpha,
           double lr, int epochs, int batch, std::uint64_t seed) {
            const MlpParams p{std::move(hidden), alpha, lr, epochs, batch, seed};
            return wrap(std::make_unique<MlpModel>(mlp_fit(to_matrix(x), y, num_classes, p)));
        },
        py::arg("x"), py::arg("y"), py::arg("num_classes"), py::arg("hidden") = std::vector<int>{100, 100, 100, 20},
        py::arg("alpha") = 1e-4, py::arg("learning_rate") = 0.01, py::arg("epochs") = 30, py::arg("batch_size") = 32,
        py::arg("seed") = 42);
    m.def(
        "forest_fit",
        [](const F32Array& x, const std::vector<int>& y, int num_classes, int trees, int depth, std::uint64_t seed,
           int max_features, bool bootstrap) {
            const ForestParams p{trees, depth, seed, max_features, bootstrap, 1};
            return wrap(std::make_unique<ForestModel>(forest_fit(to_matrix(x), y, num_classes, p)));
        },
        py::arg("x"), py::arg("y"), py::arg("num_classes"), py::arg("trees") = 50, py::arg("depth") = 6,
        py::arg("seed") = 42, py::arg("max_features") = 0, py::arg("bootstrap") = true);

    // exchange formats
    m.def(
        "write_predictions",
        [](const std::filesystem::path& p, const std::vector<std::tuple<std::string, int, std::vector<double>>>& rows) {
            std::vector<PredictionRecord> recs;
            for (const auto& [id, label, probs] : rows) recs.push_back({id, Prediction{label, probs}});
            write_predictions(p, recs);
        },
        py::arg("path"), py::arg("rows"));
    m.def(
        "read_predictions",
        [](const std::filesystem::path& p, const std::vector<std::string>& classes) {
            py::list out;
            for (const auto& r : read_predictions(p, classes)) {
                out.append(py::make_tuple(r.sample_id, r.prediction.label, r.prediction.probabilities));
            }
            return out;
        },
        py::arg("path"), py::arg("classes") = std::vector<std::string>{});
    m.def(
        "read_manifest",
        [](const std::filesystem::path& p) {
            py::list out;
            for (const auto& r : read_manifest_jsonl(p)) out.append(record_dict(r));
            return out;
        },
        py::arg("path"));
    m.def(
        "write_manifest",
        [](const std::filesystem::path& p, const py::list& records) {
            std::vector<ManifestRecord> recs;
            for (const auto& r : records) recs.push_back(record_from(r.cast<py::dict>()));
            write_manifest_jsonl(p, recs);
        },
        py::arg("path"), py::arg("records"));
    m.def(
        "sha256_file", [](const std::filesystem::path& p) { return sha256_file(p); }, py::arg("path"));

    // command line
    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs one malimg command line; returns (exit_code, stdout, stderr).");
}
