#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pibase/broker_http.hpp"
#include "pibase/cli.hpp"
#include "pibase/pipeline.hpp"
#include "pibase/replay.hpp"
#include "pibase/toy.hpp"

namespace py = pybind11;
using namespace pibase;
using imaging::GrayImage;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

GrayImage to_image(const U8Array& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D uint8 array (height, width)");
    const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    return GrayImage(w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

U8Array to_array(const GrayImage& img) {
    U8Array out({img.height(), img.width()});
    std::copy(img.pixels().begin(), img.pixels().end(), out.mutable_data());
    return out;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json py_to_json(const py::object& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

detector::DetectParams detect_params(double scale_factor, int min_neighbors, int min_size, int step) {
    detector::DetectParams p;
    p.scale_factor = scale_factor;
    p.min_neighbors = min_neighbors;
    p.min_size = min_size;
    p.step = step;
    return p;
}

py::dict box_dict(const detector::DetectionBox& b) {
    py::dict d;
    d["x"] = b.rect.x;
    d["y"] = b.rect.y;
    d["w"] = b.rect.w;
    d["h"] = b.rect.h;
    d["neighbors"] = b.neighbor_count;
    d["scale"] = b.scale;
    return d;
}

// In-process broker with its HTTP front end.
class Server {
public:
    explicit Server(const std::string& data_dir) {
        broker::BrokerConfig cfg;
        cfg.data_dir = data_dir;
        broker_ = std::make_unique<broker::Broker>(cfg);
        http_ = std::make_unique<broker::HttpServer>(*broker_);
    }
    int start(const std::string& host, int port) { return http_->start(host, port); }
    void stop() { http_->stop(); }
    int port() const { return http_->port(); }
    std::string register_user(const std::string& email, const std::string& password) {
        return broker_->auth().register_user(email, password, "");
    }
    std::uint64_t commits() const { return broker_->db().commit_count(); }
    std::uint64_t published() const { return broker_->topics().published(broker::kIntrusionTopic); }

private:
    std::unique_ptr<broker::Broker> broker_;
    std::unique_ptr<broker::HttpServer> http_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "pibase native core";

    py::register_exception<Error>(m, "Error");
    py::register_exception<FormatError>(m, "FormatError", m.attr("Error"));
    py::register_exception<ArgumentError>(m, "ArgumentError", m.attr("Error"));
    py::register_exception<StateError>(m, "StateError", m.attr("Error"));
    py::register_exception<SizeError>(m, "SizeError", m.attr("Error"));
    py::register_exception<BoundsError>(m, "BoundsError", m.attr("Error"));

    // imaging
    m.def("load_pgm", [](py::bytes data) {
        const std::string s = data;
        return to_array(imaging::load_pgm(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())));
    });
    m.def("save_pgm", [](const U8Array& img) {
        const auto bytes = imaging::save_pgm(to_image(img));
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    });
    m.def("integral", [](const U8Array& img) {
        const auto ii = imaging::integral(to_image(img));
        py::array_t<std::int64_t> out({ii.height() + 1, ii.width() + 1});
        auto v = out.mutable_unchecked<2>();
        for (int y = 0; y <= ii.height(); ++y)
            for (int x = 0; x <= ii.width(); ++x) v(y, x) = ii.at(x, y);
        return out;
    });
    m.def("rect_sum", [](const U8Array& img, int x, int y, int w, int h) {
        return imaging::rect_sum(imaging::integral(to_image(img)), {x, y, w, h});
    });

    // recognizer
    m.def("lbp_image", [](const U8Array& img) {
        const auto lbp = recognizer::lbp_image(to_image(img));
        U8Array out({lbp.height(), lbp.width()});
        std::copy(lbp.codes().begin(), lbp.codes().end(), out.mutable_data());
        return out;
    });
    m.def(
        "describe",
        [](const U8Array& img, int grid) {
            return recognizer::grid_histograms(recognizer::lbp_image(to_image(img)), {grid, grid});
        },
        py::arg("image"), py::arg("grid") = 8);
    m.attr("DEFAULT_THRESHOLD") = recognizer::kDefaultThreshold;

    py::class_<recognizer::RecognizerModel>(m, "RecognizerModel")
        .def_static(
            "train",
            [](const std::vector<std::pair<std::string, U8Array>>& samples, int grid, int face_size) {
                std::vector<recognizer::LabeledFace> faces;
                for (const auto& [name, img] : samples) faces.push_back({name, to_image(img)});
                return recognizer::train(faces, {grid, grid}, {face_size, face_size});
            },
            py::arg("samples"), py::arg("grid") = 8, py::arg("face_size") = 100)
        .def_static("load", [](const std::string& text) { return recognizer::load_model(text); })
        .def("save", [](const recognizer::RecognizerModel& mdl) { return recognizer::save_model(mdl); })
        .def_property_readonly("entries", [](const recognizer::RecognizerModel& mdl) { return mdl.entries().size(); })
        .def_property_readonly("labels", [](const recognizer::RecognizerModel& mdl) { return mdl.labels(); })
        .def(
            "predict",
            [](const recognizer::RecognizerModel& mdl, const U8Array& face, double threshold) {
                const auto r = recognizer::predict(mdl, to_image(face), threshold);
                py::dict d;
                d["label"] = r.label;
                d["name"] = r.known() ? py::object(py::str(mdl.name_of(r.label))) : py::object(py::none());
                d["confidence"] = r.confidence;
                return d;
            },
            py::arg("face"), py::arg("threshold") = recognizer::kDefaultThreshold);

    // detector
    py::class_<detector::CascadeModel>(m, "Cascade")
        .def_static("load", [](const std::string& text) { return detector::load_cascade(text); })
        .def("save", [](const detector::CascadeModel& c) { return detector::save_cascade(c); })
        .def_property_readonly("stages", [](const detector::CascadeModel& c) { return c.stages().size(); })
        .def_property_readonly("metadata", [](const detector::CascadeModel& c) { return json_to_py(c.metadata()); })
        .def(
            "detect",
            [](const detector::CascadeModel& c, const U8Array& img, double scale_factor, int min_neighbors,
               int min_size, int step) {
                py::list out;
                for (const auto& b :
                     detector::detect(c, to_image(img), detect_params(scale_factor, min_neighbors, min_size, step))) {
                    out.append(box_dict(b));
                }
                return out;
            },
            py::arg("image"), py::arg("scale_factor") = 1.25, py::arg("min_neighbors") = 3, py::arg("min_size") = 0,
            py::arg("step") = 0)
        .def("accepts", [](const detector::CascadeModel& c, const U8Array& window) {
            const auto img = to_image(window);
            return detector::run_cascade(c, detector::WindowTables(img), {0, 0}, 1.0).accepted;
        });
    m.def("feature_count", [](int w, int h) { return detector::generate_features(w, h).size(); });
    m.def(
        "train_toy_cascade",
        [](std::uint64_t seed, std::size_t positives, std::size_t negatives, std::size_t pool, bool mine) {
            synth::ToyCascadeOptions o;
            o.seed = seed;
            o.positives = positives;
            o.negatives = negatives;
            o.pool = pool;
            o.mine = mine;
            py::gil_scoped_release release;
            return synth::train_toy_cascade(o).model;
        },
        py::arg("seed") = 1, py::arg("positives") = 500, py::arg("negatives") = 2000, py::arg("pool") = 4000,
        py::arg("mine") = true);

    // synthetic data
    m.def(
        "toy_faces",
        [](std::size_t count, std::uint64_t seed, int size) {
            synth::Rng rng(seed);
            py::list out;
            for (std::size_t i = 0; i < count; ++i) out.append(to_array(synth::random_face(size, rng)));
            return out;
        },
        py::arg("count"), py::arg("seed") = 1, py::arg("size") = 24);
    m.def(
        "identity_faces",
        [](std::uint64_t identity, std::size_t count, std::uint64_t seed, int size) {
            synth::Rng rng(seed);
            const auto id = synth::make_identity(identity);
            py::list out;
            for (std::size_t i = 0; i < count; ++i) out.append(to_array(synth::render_face(id, size, rng)));
            return out;
        },
        py::arg("identity"), py::arg("count"), py::arg("seed") = 1, py::arg("size") = 100);
    m.def(
        "write_replay",
        [](const std::string& dir, const std::vector<std::string>& events, std::uint64_t seed, int burst_count) {
            std::vector<synth::EventKind> kinds;
            for (const auto& e : events) kinds.push_back(synth::parse_event_kind(e));
            synth::ReplayOptions o;
            o.seed = seed;
            o.burst_count = burst_count;
            synth::write_replay(synth::make_replay(kinds, o), dir);
        },
        py::arg("dir"), py::arg("events"), py::arg("seed") = 7, py::arg("burst_count") = 3);

    // pipeline
    m.def("compute_metrics", [](const py::list& outcomes) {
        std::vector<pipeline::TrialOutcome> trials;
        for (const auto& o : outcomes) trials.push_back(pipeline::trial_from_json(py_to_json(py::reinterpret_borrow<py::object>(o))));
        const auto r = pipeline::compute_metrics(trials);
        py::dict d;
        d["tp"] = r.tp;
        d["fp"] = r.fp;
        d["fn"] = r.fn;
        d["tn"] = r.tn;
        d["precision"] = r.precision;
        d["recall"] = r.recall;
        return d;
    });
    m.def("parse_motion", [](const std::string& text) {
        py::list out;
        for (const auto& e : pipeline::parse_motion_file(text)) out.append(py::make_tuple(format_iso(e.timestamp), e.source_id));
        return out;
    });

    // broker
    py::class_<Server>(m, "Server")
        .def(py::init<const std::string&>(), py::arg("data_dir") = "")
        .def("start", &Server::start, py::arg("host") = "127.0.0.1", py::arg("port") = 0,
             py::call_guard<py::gil_scoped_release>())
        .def("stop", &Server::stop, py::call_guard<py::gil_scoped_release>())
        .def_property_readonly("port", &Server::port)
        .def("register_user", &Server::register_user)
        .def_property_readonly("commits", &Server::commits)
        .def_property_readonly("intrusions_published", &Server::published);
    m.attr("MAX_PAYLOAD_BYTES") = broker::kMaxPayloadBytes;
    m.def("wire_form", [](const py::object& message) {
        return broker::wire_form(broker::message_from_json(py_to_json(message)));
    });
    m.def("validate_message", [](const py::object& message) {
        broker::validate_message(broker::message_from_json(py_to_json(message)));
    });

    // cli
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
        py::arg("args"));
}
