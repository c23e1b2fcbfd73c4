#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pibase/broker_http.hpp"
#include "pibase/cli.hpp"
#include "pibase/client.hpp"
#include "pibase/codec.hpp"
#include "pibase/log.hpp"
#include "pibase/pipeline.hpp"
#include "pibase/toy.hpp"

namespace pibase::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Carries an exit code out of a command.
struct Exit : std::runtime_error {
    Exit(int c, const std::string& what) : std::runtime_error(what), code(c) {}
    int code;
};

[[noreturn]] void missing(const std::string& what, const std::string& path) {
    throw Exit(kMissingArtifact, what + " not found: " + path);
}

void require_file(const std::string& what, const std::string& path) {
    if (path.empty()) throw Exit(kUsage, "--" + what + " is required");
    if (!fs::is_regular_file(path)) missing(what, path);
}

void require_dir(const std::string& what, const std::string& path) {
    if (path.empty()) throw Exit(kUsage, "--" + what + " is required");
    if (!fs::is_directory(path)) missing(what, path);
}

std::optional<std::string> env(const char* name) {
    if (!name) return std::nullopt;
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

template <typename T>
T from_text(const std::string& text, const std::string& where) {
    if constexpr (std::is_same_v<T, std::string>) {
        return text;
    } else {
        T value{};
        if (!CLI::detail::lexical_cast(text, value)) throw ArgumentError("bad value for " + where + ": " + text);
        return value;
    }
}

struct Context {
    std::ostream& out;
    std::ostream& err;
    json config = json::object();

    // flag > env > config file > fallback
    template <typename T>
    T pick(const CLI::Option* flag, const T& flag_value, const char* env_name, const char* key,
           T fallback) const {
        if (flag && flag->count() > 0) return flag_value;
        if (auto v = env(env_name)) return from_text<T>(*v, env_name);
        const json* node = &config;
        std::string k(key);
        if (auto dot = k.find('.'); dot != std::string::npos) {
            if (!config.contains(k.substr(0, dot))) return fallback;
            node = &config.at(k.substr(0, dot));
            k = k.substr(dot + 1);
        }
        if (node->is_object() && node->contains(k)) {
            try {
                return node->at(k).get<T>();
            } catch (const json::exception&) {
                throw ArgumentError(std::string("config key ") + key + " has the wrong type");
            }
        }
        return fallback;
    }

    void emit(const json& line) const { out << line.dump() << '\n' << std::flush; }
};

// ------------------------------------------------------------ shared flags

struct BrokerFlags {
    std::string url, token, email, password;
    CLI::Option *url_opt = nullptr, *token_opt = nullptr, *email_opt = nullptr, *password_opt = nullptr;

    void add(CLI::App* app) {
        url_opt = app->add_option("--broker", url, "broker base URL (env PIBASE_BROKER_URL)");
        token_opt = app->add_option("--token", token, "session token (env PIBASE_TOKEN)");
        email_opt = app->add_option("--email", email, "log in with this account when no token is set");
        password_opt = app->add_option("--password", password, "password for --email");
    }

    std::string broker_url(const Context& ctx) const {
        auto u = ctx.pick<std::string>(url_opt, url, "PIBASE_BROKER_URL", "broker_url", "");
        if (u.empty()) throw Exit(kUsage, "no broker URL (use --broker or PIBASE_BROKER_URL)");
        return u;
    }

    std::unique_ptr<broker::HttpClient> connect(const Context& ctx) const {
        const auto base = broker_url(ctx);
        auto tok = ctx.pick<std::string>(token_opt, token, "PIBASE_TOKEN", "token", "");
        if (tok.empty()) {
            const auto mail = ctx.pick<std::string>(email_opt, email, "PIBASE_EMAIL", "email", "");
            const auto pass = ctx.pick<std::string>(password_opt, password, "PIBASE_PASSWORD", "password", "");
            if (mail.empty() || pass.empty()) throw AuthError("not authenticated: no token and no credentials");
            tok = broker::HttpClient::login(base, mail, pass);
        }
        return std::make_unique<broker::HttpClient>(base, tok, std::chrono::seconds(10));
    }
};

struct DetectFlags {
    double scale_factor = 0;
    int min_neighbors = 0, min_size = 0, step = 0;
    CLI::Option *scale_opt = nullptr, *neighbors_opt = nullptr, *size_opt = nullptr, *step_opt = nullptr;

    void add(CLI::App* app) {
        scale_opt = app->add_option("--scale-factor", scale_factor, "window growth per scale");
        neighbors_opt = app->add_option("--min-neighbors", min_neighbors, "raw hits needed per detection");
        size_opt = app->add_option("--min-size", min_size, "smallest window side in pixels");
        step_opt = app->add_option("--step", step, "window stride, 0 for automatic");
    }

    detector::DetectParams resolve(const Context& ctx) const {
        detector::DetectParams p;
        p.scale_factor = ctx.pick(scale_opt, scale_factor, nullptr, "detect.scale_factor", p.scale_factor);
        p.min_neighbors = ctx.pick(neighbors_opt, min_neighbors, nullptr, "detect.min_neighbors", p.min_neighbors);
        p.min_size = ctx.pick(size_opt, min_size, nullptr, "detect.min_size", p.min_size);
        p.step = ctx.pick(step_opt, step, nullptr, "detect.step", p.step);
        if (p.scale_factor <= 1.0) throw ArgumentError("scale factor must exceed 1");
        if (p.min_neighbors < 1) throw ArgumentError("min neighbors must be at least 1");
        if (p.min_size < 0 || p.step < 0) throw ArgumentError("min size and step must be non-negative");
        return p;
    }
};

std::string path_opt(const Context& ctx, const CLI::Option* opt, const std::string& value, const char* key) {
    return ctx.pick<std::string>(opt, value, nullptr, key, "");
}

detector::CascadeModel load_cascade_arg(const std::string& path) {
    require_file("cascade", path);
    return detector::read_cascade_file(path);
}

recognizer::RecognizerModel load_model_arg(const std::string& path) {
    require_file("model", path);
    return recognizer::read_model_file(path);
}

imaging::GrayImage load_image_arg(const std::string& path) {
    require_file("image", path);
    return imaging::read_pgm_file(path);
}

std::vector<fs::path> pgm_files(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

json box_json(const detector::DetectionBox& b) {
    return {{"x", b.rect.x}, {"y", b.rect.y}, {"w", b.rect.w},
            {"h", b.rect.h}, {"neighbors", b.neighbor_count}, {"scale", b.scale}};
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// ------------------------------------------------------------------ serve

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct ServeCmd {
    std::string host = "127.0.0.1", data_dir;
    int port = 8080;
    std::vector<std::string> accounts;
    CLI::Option *host_opt, *port_opt, *dir_opt;

    void add(CLI::App* app) {
        host_opt = app->add_option("--host", host, "address to bind");
        port_opt = app->add_option("--port", port, "port, 0 for any free one (env PIBASE_PORT)");
        dir_opt = app->add_option("--data-dir", data_dir, "persistence directory (env PIBASE_DATA_DIR)");
        app->add_option("--account", accounts, "EMAIL:PASSWORD to register at startup unless it exists");
    }

    int operator()(const Context& ctx) const {
        broker::BrokerConfig cfg;
        cfg.data_dir = ctx.pick<std::string>(dir_opt, data_dir, "PIBASE_DATA_DIR", "data_dir", "");
        broker::Broker broker(cfg);
        for (const auto& a : accounts) {
            const auto colon = a.find(':');
            if (colon == std::string::npos) throw ArgumentError("--account wants EMAIL:PASSWORD");
            try {
                broker.auth().register_user(a.substr(0, colon), a.substr(colon + 1), "");
            } catch (const ConflictError&) {
            }
        }
        broker::HttpServer server(broker);
        const auto h = ctx.pick<std::string>(host_opt, host, nullptr, "host", "127.0.0.1");
        const int bound = server.start(h, ctx.pick(port_opt, port, "PIBASE_PORT", "port", 8080));
        g_stop = false;
        auto prev_int = std::signal(SIGINT, on_signal);
        auto prev_term = std::signal(SIGTERM, on_signal);
        ctx.emit({{"listening", bound}, {"host", h}});
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        server.stop();
        std::signal(SIGINT, prev_int);
        std::signal(SIGTERM, prev_term);
        return kOk;
    }
};

// -------------------------------------------------------------------- run

struct RunCmd {
    BrokerFlags broker;
    DetectFlags detect;
    std::string motion, frames, cascade, model, queue, model_out;
    int burst_count = 10, interval_ms = 2000;
    double threshold = recognizer::kDefaultThreshold;
    bool sync = false;
    CLI::Option *cascade_opt, *model_opt, *queue_opt, *count_opt, *interval_opt, *threshold_opt;

    void add(CLI::App* app) {
        app->add_option("--motion", motion, "motion event file")->required();
        app->add_option("--frames", frames, "directory of PGM frames")->required();
        cascade_opt = app->add_option("--cascade", cascade, "detector cascade JSON");
        model_opt = app->add_option("--model", model, "recognizer model JSON; may be left out with --sync");
        queue_opt = app->add_option("--queue", queue, "retry journal path");
        count_opt = app->add_option("--burst-count", burst_count, "frames per burst");
        interval_opt = app->add_option("--interval-ms", interval_ms, "gap between burst frames");
        threshold_opt = app->add_option("--threshold", threshold, "UNKNOWN cut-off on confidence");
        app->add_flag("--sync", sync, "pull enrollments and retrain before the first event");
        app->add_option("--model-out", model_out, "write the final model here");
        broker.add(app);
        detect.add(app);
    }

    int operator()(const Context& ctx) const {
        const auto cascade_path = path_opt(ctx, cascade_opt, cascade, "cascade");
        const auto model_path = path_opt(ctx, model_opt, model, "model");
        auto cascade_model = load_cascade_arg(cascade_path);
        // --sync alone starts from nobody and learns the enrolled people
        auto recognizer_model = model_path.empty() && sync
                                    ? recognizer::RecognizerModel({8, 8}, {100, 100}, {}, {})
                                    : load_model_arg(model_path);
        require_file("motion", motion);
        require_dir("frames", frames);
        const auto events = pipeline::read_motion_file(motion);

        pipeline::PipelineConfig cfg;
        cfg.burst_count = ctx.pick(count_opt, burst_count, nullptr, "burst_count", cfg.burst_count);
        cfg.burst_interval =
            pipeline::Millis(ctx.pick(interval_opt, interval_ms, nullptr, "burst_interval_ms", interval_ms));
        if (cfg.burst_interval.count() < 0) throw ArgumentError("interval must be non-negative");
        cfg.process.detect = detect.resolve(ctx);
        cfg.process.threshold = ctx.pick(threshold_opt, threshold, nullptr, "threshold", threshold);
        if (cfg.process.threshold < 0) throw ArgumentError("threshold must be non-negative");
        cfg.queue_path = path_opt(ctx, queue_opt, queue, "queue");

        auto client = broker.connect(ctx);
        client->ping();

        pipeline::DirectorySource camera(frames);
        pipeline::Pipeline p(std::move(cascade_model), std::move(recognizer_model), camera, *client, cfg);
        if (sync) {
            const auto report = p.sync_enrollments();
            ctx.emit({{"sync", pipeline::sync_to_json(report)}});
        }
        for (const auto& e : events) ctx.emit(pipeline::report_to_json(p.handle_motion(e)));
        if (p.queue().pending() > 0) {
            try {
                p.flush_queue();
            } catch (const UnavailableError& e) {
                log().warn("final flush failed: {}", e.what());
            }
        }
        if (!model_out.empty()) recognizer::write_model_file(model_out, *p.model().model);
        if (const auto left = p.queue().pending(); left > 0) {
            ctx.err << "pibase: " << left << " upload(s) still queued";
            if (!cfg.queue_path.empty()) ctx.err << " in " << cfg.queue_path.string();
            ctx.err << '\n';
            return kConnectivity;
        }
        return kOk;
    }
};

// ----------------------------------------------------------------- enroll

struct EnrollCmd {
    BrokerFlags broker;
    std::string name;
    std::vector<std::string> images;

    void add(CLI::App* app) {
        app->add_option("--name", name, "person (storage folder)")->required();
        app->add_option("--images", images, "PGM images of the person");
        broker.add(app);
    }

    int operator()(const Context& ctx) const {
        if (images.empty()) throw Exit(kUsage, "enroll needs at least one image");
        try {
            broker::validate_storage_name(name, "name");
        } catch (const ArgumentError& e) {
            throw Exit(kUsage, e.what());
        }
        std::vector<std::pair<std::string, Bytes>> files;
        for (const auto& path : images) {
            if (!fs::is_regular_file(path)) missing("image", path);
            auto bytes = read_file(path);
            (void)imaging::load_pgm(bytes);
            files.emplace_back(fs::path(path).filename().string(), std::move(bytes));
        }
        auto client = broker.connect(ctx);
        json uploaded = json::array(), skipped = json::array(), names = json::array();
        for (const auto& [object, bytes] : files) {
            names.push_back(object);
            try {
                uploaded.push_back(client->storage_put(name, object, bytes, "image/x-portable-graymap"));
            } catch (const ConflictError&) {
                const auto url = broker::storage_url(name, object);
                if (client->storage_get(url) != bytes) {
                    throw Exit(kDataError, "storage object " + url + " exists with different content");
                }
                skipped.push_back(url);
            }
        }
        const json record{{"folder", name},
                          {"timestamp", format_iso(system_now())},
                          {"count", files.size()},
                          {"images", names}};
        const auto key = client->db_push("/Enrollments", record);
        ctx.emit({{"folder", name}, {"record", key}, {"uploaded", uploaded}, {"skipped", skipped}});
        return kOk;
    }
};

// ---------------------------------------------------------------- history

struct HistoryCmd {
    BrokerFlags broker;
    std::string from, to;

    void add(CLI::App* app) {
        app->add_option("--from", from, "ISO 8601 lower bound")->required();
        app->add_option("--to", to, "ISO 8601 upper bound")->required();
        broker.add(app);
    }

    int operator()(const Context& ctx) const {
        std::string lo, hi;
        try {
            lo = format_iso(parse_iso(from));
            hi = format_iso(parse_iso(to));
        } catch (const ArgumentError& e) {
            throw Exit(kUsage, e.what());
        }
        auto client = broker.connect(ctx);
        for (auto& row : client->db_query("/Users", "timestamp", lo, hi)) {
            json line = row.value.is_object() ? row.value : json{{"value", row.value}};
            line["key"] = row.key;
            ctx.emit(line);
        }
        return kOk;
    }
};

// ------------------------------------------------------------------- eval

struct EvalCmd {
    std::string outcomes;

    void add(CLI::App* app) { app->add_option("--outcomes", outcomes, "JSON lines of trial outcomes")->required(); }

    int operator()(const Context& ctx) const {
        require_file("outcomes", outcomes);
        const auto text = to_string(read_file(outcomes));
        std::vector<pipeline::TrialOutcome> trials;
        std::size_t line_no = 0, pos = 0;
        while (pos <= text.size()) {
            auto nl = text.find('\n', pos);
            if (nl == std::string::npos) nl = text.size();
            const auto line = text.substr(pos, nl - pos);
            pos = nl + 1;
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                trials.push_back(pipeline::trial_from_json(json::parse(line)));
            } catch (const std::exception& e) {
                throw Exit(kDataError, outcomes + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
        if (trials.empty()) throw Exit(kUsage, "no outcomes in " + outcomes);
        const auto m = pipeline::compute_metrics(trials);
        if (m.precision_degenerate) ctx.err << "pibase: precision undefined (no detections), reported as 1\n";
        if (m.recall_degenerate) ctx.err << "pibase: recall undefined (no faces present), reported as 1\n";
        ctx.out << "{\"precision\":" << fixed4(m.precision) << ",\"recall\":" << fixed4(m.recall) << "}\n";
        return kOk;
    }
};

// ---------------------------------------------------------- train-cascade

// Base-sized tiles cut from each negative image.
std::vector<imaging::GrayImage> tiles(const imaging::GrayImage& img, int size) {
    std::vector<imaging::GrayImage> out;
    for (int y = 0; y + size <= img.height(); y += size) {
        for (int x = 0; x + size <= img.width(); x += size) out.push_back(imaging::crop(img, {x, y, size, size}));
    }
    return out;
}

struct TrainCascadeCmd {
    std::string out, pos_dir, neg_dir;
    std::size_t positives = 500, negatives = 2000, pool = 4000;
    std::uint64_t seed = 1;
    int base = 24;
    detector::CascadeTargets targets{0.995, 0.5, 0.01, 20, 200, 20};
    bool no_mine = false;

    void add(CLI::App* app) {
        app->add_option("--out", out, "output cascade JSON")->required();
        app->add_option("--positives-dir", pos_dir, "face PGMs (resized to the base window)");
        app->add_option("--negatives-dir", neg_dir, "background PGMs, cut into base-sized tiles");
        app->add_option("--positives", positives, "synthetic positive count");
        app->add_option("--negatives", negatives, "synthetic negative count");
        app->add_option("--pool", pool, "features sampled from the enumeration");
        app->add_option("--seed", seed, "training seed");
        app->add_option("--base", base, "base window side for directory data");
        app->add_option("--stage-tpr", targets.per_stage_tpr, "minimum hit rate per stage");
        app->add_option("--stage-fpr", targets.per_stage_fpr, "maximum false-positive rate per stage");
        app->add_option("--overall-fpr", targets.overall_fpr, "target cumulative false-positive rate");
        app->add_option("--max-stages", targets.max_stages, "stage limit");
        app->add_option("--max-rounds", targets.max_rounds, "weak learners per stage limit");
        app->add_option("--min-negatives", targets.min_negatives, "stop when fewer negatives remain");
        app->add_flag("--no-mine", no_mine, "disable negative mining on synthetic scenes");
    }

    int operator()(const Context& ctx) const {
        if (pos_dir.empty() != neg_dir.empty()) {
            throw Exit(kUsage, "--positives-dir and --negatives-dir go together");
        }
        std::optional<detector::CascadeResult> result;
        try {
            if (pos_dir.empty()) {
                synth::ToyCascadeOptions o;
                o.positives = positives;
                o.negatives = negatives;
                o.pool = pool;
                o.seed = seed;
                o.targets = targets;
                o.mine = !no_mine;
                result = synth::train_toy_cascade(o);
            } else {
                require_dir("positives-dir", pos_dir);
                require_dir("negatives-dir", neg_dir);
                std::vector<imaging::GrayImage> pos, neg;
                for (const auto& f : pgm_files(pos_dir)) {
                    auto img = imaging::read_pgm_file(f);
                    if (img.width() != base || img.height() != base) img = imaging::resize_bilinear(img, base, base);
                    pos.push_back(std::move(img));
                }
                for (const auto& f : pgm_files(neg_dir)) {
                    for (auto& t : tiles(imaging::read_pgm_file(f), base)) neg.push_back(std::move(t));
                }
                if (pos.empty() || neg.empty()) throw Exit(kUsage, "no training images found");
                const auto all = detector::generate_features(base, base);
                const auto features = detector::sample_pool(all, pool, seed);
                result = detector::train_cascade(pos, neg, features, targets);
                result->model.metadata()["seed"] = seed;
                result->model.metadata()["data"] = "directories";
            }
        } catch (const detector::TrainingError& e) {
            if (e.partial()) {
                detector::write_cascade_file(out + ".partial", *e.partial());
                ctx.err << "pibase: partial cascade written to " << out << ".partial\n";
            }
            throw Exit(kDataError, std::string("training failed: ") + e.what());
        }
        detector::write_cascade_file(out, result->model);
        json weak = json::array();
        for (const auto& s : result->stages) weak.push_back(s.weak_count);
        ctx.emit({{"out", out},
                  {"stages", result->model.stages().size()},
                  {"weak", weak},
                  {"cumulative_fpr", result->cumulative_fpr},
                  {"held_fpr", result->held_fpr}});
        return kOk;
    }
};

// ------------------------------------------------------- train-recognizer

struct TrainRecognizerCmd {
    DetectFlags detect;
    std::string faces, out, cascade;
    int grid = 8, face_size = 100;

    void add(CLI::App* app) {
        app->add_option("--faces", faces, "directory with one subdirectory of PGMs per person")->required();
        app->add_option("--out", out, "output model JSON")->required();
        app->add_option("--cascade", cascade, "crop the largest detected face of each image");
        app->add_option("--grid", grid, "cells per side");
        app->add_option("--face-size", face_size, "side of the normalised face");
        detect.add(app);
    }

    int operator()(const Context& ctx) const {
        require_dir("faces", faces);
        if (grid < 1 || face_size < grid + 2) throw ArgumentError("face size must allow every grid cell");
        std::optional<detector::CascadeModel> cm;
        if (!cascade.empty()) cm = load_cascade_arg(cascade);
        pipeline::ProcessParams params;
        params.detect = detect.resolve(ctx);
        const recognizer::FaceSize size{face_size, face_size};

        std::vector<fs::path> people;
        for (const auto& e : fs::directory_iterator(faces)) {
            if (e.is_directory()) people.push_back(e.path());
        }
        std::sort(people.begin(), people.end());
        std::vector<recognizer::LabeledFace> samples;
        for (const auto& dir : people) {
            for (const auto& f : pgm_files(dir)) {
                auto img = imaging::read_pgm_file(f);
                if (cm) img = pipeline::enrollment_face(*cm, img, params, size);
                samples.push_back({dir.filename().string(), std::move(img)});
            }
        }
        if (samples.empty()) throw Exit(kUsage, "no face images under " + faces);
        const auto model = recognizer::train(samples, {grid, grid}, size);
        recognizer::write_model_file(out, model);
        ctx.emit({{"out", out}, {"entries", model.entries().size()}, {"people", model.labels().size()}});
        return kOk;
    }
};

// ---------------------------------------------------------- detect / recognize

struct DetectCmd {
    DetectFlags detect;
    std::string cascade, image;

    void add(CLI::App* app) {
        app->add_option("--cascade", cascade, "detector cascade JSON")->required();
        app->add_option("--image", image, "PGM image")->required();
        detect.add(app);
    }

    int operator()(const Context& ctx) const {
        const auto cm = load_cascade_arg(cascade);
        const auto img = load_image_arg(image);
        for (const auto& b : detector::detect(cm, img, detect.resolve(ctx))) ctx.emit(box_json(b));
        return kOk;
    }
};

struct RecognizeCmd {
    DetectFlags detect;
    std::string model, image, cascade;
    double threshold = recognizer::kDefaultThreshold;
    CLI::Option* threshold_opt;

    void add(CLI::App* app) {
        app->add_option("--model", model, "recognizer model JSON")->required();
        app->add_option("--image", image, "PGM image")->required();
        app->add_option("--cascade", cascade, "detect faces first instead of using the whole image");
        threshold_opt = app->add_option("--threshold", threshold, "UNKNOWN cut-off on confidence");
        detect.add(app);
    }

    int operator()(const Context& ctx) const {
        const auto rm = load_model_arg(model);
        const auto img = load_image_arg(image);
        const double tau = ctx.pick(threshold_opt, threshold, nullptr, "threshold", threshold);
        auto line = [&](const recognizer::RecognitionResult& r) {
            json j{{"label", r.label}, {"confidence", r.confidence}};
            j["name"] = r.known() ? json(rm.name_of(r.label)) : json("UNKNOWN");
            return j;
        };
        if (cascade.empty()) {
            ctx.emit(line(recognizer::predict(rm, img, tau)));
            return kOk;
        }
        const auto cm = load_cascade_arg(cascade);
        pipeline::ProcessParams params;
        for (const auto& b : detector::detect(cm, img, detect.resolve(ctx))) {
            auto j = line(recognizer::predict(rm, pipeline::face_crop(img, b.rect, params.crop_expand, rm.face_size()), tau));
            j["box"] = box_json(b);
            ctx.emit(j);
        }
        return kOk;
    }
};

json load_config(const std::string& flag_path) {
    std::string path = flag_path;
    if (path.empty()) path = env("PIBASE_CONFIG").value_or("");
    if (path.empty()) return json::object();
    if (!fs::is_regular_file(path)) missing("config", path);
    try {
        auto j = json::parse(to_string(read_file(path)));
        if (!j.is_object()) throw FormatError("config file must hold a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw FormatError("config " + path + ": " + e.what());
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Home security pipeline and message broker", "pibase"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (env PIBASE_CONFIG)");

    ServeCmd serve;
    RunCmd run_cmd;
    EnrollCmd enroll;
    HistoryCmd history;
    EvalCmd eval;
    TrainCascadeCmd train_cascade;
    TrainRecognizerCmd train_recognizer;
    DetectCmd detect;
    RecognizeCmd recognize;

    auto* s_serve = app.add_subcommand("serve", "run the broker HTTP server");
    serve.add(s_serve);
    auto* s_run = app.add_subcommand("run", "replay motion events through the pipeline");
    run_cmd.add(s_run);
    auto* s_enroll = app.add_subcommand("enroll", "upload images of a known person");
    enroll.add(s_enroll);
    auto* s_history = app.add_subcommand("history", "list intrusions between two times");
    history.add(s_history);
    auto* s_eval = app.add_subcommand("eval", "precision and recall of trial outcomes");
    eval.add(s_eval);
    auto* s_tc = app.add_subcommand("train-cascade", "train a face detector cascade");
    train_cascade.add(s_tc);
    auto* s_tr = app.add_subcommand("train-recognizer", "train a face recognizer model");
    train_recognizer.add(s_tr);
    auto* s_detect = app.add_subcommand("detect", "detect faces in an image");
    detect.add(s_detect);
    auto* s_recognize = app.add_subcommand("recognize", "recognize faces in an image");
    recognize.add(s_recognize);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        Context ctx{out, err, load_config(config_path)};
        if (s_serve->parsed()) return serve(ctx);
        if (s_run->parsed()) return run_cmd(ctx);
        if (s_enroll->parsed()) return enroll(ctx);
        if (s_history->parsed()) return history(ctx);
        if (s_eval->parsed()) return eval(ctx);
        if (s_tc->parsed()) return train_cascade(ctx);
        if (s_tr->parsed()) return train_recognizer(ctx);
        if (s_detect->parsed()) return detect(ctx);
        if (s_recognize->parsed()) return recognize(ctx);
        return kUsage;
    } catch (const Exit& e) {
        err << "pibase: " << e.what() << '\n';
        return e.code;
    } catch (const AuthError& e) {
        err << "pibase: authentication failed: " << e.what() << '\n';
        return kConnectivity;
    } catch (const ForbiddenError& e) {
        err << "pibase: forbidden: " << e.what() << '\n';
        return kConnectivity;
    } catch (const UnavailableError& e) {
        err << "pibase: broker unreachable: " << e.what() << '\n';
        return kConnectivity;
    } catch (const ArgumentError& e) {
        err << "pibase: " << e.what() << '\n';
        return kUsage;
    } catch (const FormatError& e) {
        err << "pibase: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        err << "pibase: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace pibase::cli
