#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "pibase/broker_http.hpp"
#include "pibase/cli.hpp"
#include "pibase/client.hpp"
#include "pibase/detector.hpp"
#include "pibase/recognizer.hpp"
#include "pibase/replay.hpp"

using namespace pibase;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out, err;
    std::vector<json> lines() const {
        std::vector<json> v;
        std::istringstream in(out);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) v.push_back(json::parse(line));
        return v;
    }
};

Result invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// Scoped environment variable.
struct Env {
    std::string name;
    Env(std::string n, const std::string& value) : name(std::move(n)) { ::setenv(name.c_str(), value.c_str(), 1); }
    ~Env() { ::unsetenv(name.c_str()); }
};

void write_text(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

const std::string kCascade = PIBASE_SOURCE_DIR "/models/toy_cascade.json";

struct Site {
    broker::Broker broker{config()};
    broker::HttpServer server{broker};
    std::string url;
    testing::TempDir dir;
    synth::ReplayFixture fx = synth::make_replay({synth::EventKind::Empty, synth::EventKind::Known, synth::EventKind::Stranger});

    Site() {
        url = "http://127.0.0.1:" + std::to_string(server.start());
        broker::HttpClient::register_user(url, "dev@example.com", "device-pass", "device");
        synth::write_replay(fx, dir.path());
        write_text(dir / "empty.json", R"({"grid":[8,8],"face_size":[100,100],"labels":{},"entries":[]})");
    }
    static broker::BrokerConfig config() {
        broker::BrokerConfig c;
        c.auth.pbkdf2_iterations = 1000;
        return c;
    }
    std::vector<std::string> creds() const {
        return {"--broker", url, "--email", "dev@example.com", "--password", "device-pass"};
    }
    std::vector<std::string> faces(const std::string& name) const {
        std::vector<std::string> out;
        for (const auto& e : std::filesystem::directory_iterator(dir / "faces" / name)) out.push_back(e.path().string());
        std::sort(out.begin(), out.end());
        return out;
    }
    Result enroll(const std::string& name) const {
        std::vector<std::string> args{"enroll", "--name", name};
        for (const auto& a : creds()) args.push_back(a);
        args.push_back("--images");
        for (const auto& f : faces(name)) args.push_back(f);
        return invoke(args);
    }
};

std::vector<std::string> operator+(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

TEST_CASE("usage errors and help") {
    CHECK(invoke({}).code == cli::kUsage);
    CHECK(invoke({"bogus"}).code == cli::kUsage);
    CHECK(invoke({"--help"}).code == cli::kOk);
    CHECK(invoke({"eval"}).code == cli::kUsage);
    CHECK(invoke({"history", "--from", "x"}).code == cli::kUsage);
}

TEST_CASE("eval output and errors") {
    testing::TempDir dir;
    std::string text;
    for (int i = 0; i < 106; ++i) text += R"({"trial":"t","face_present":true,"identity":"a","detected":true,"recognized_as":"a"})" "\n";
    for (int i = 0; i < 6; ++i) text += R"({"trial":"t","face_present":true,"identity":"a","detected":false})" "\n";
    write_text(dir / "o.jsonl", text + "\n");
    const auto r = invoke({"eval", "--outcomes", (dir / "o.jsonl").string()});
    CHECK(r.code == 0);
    CHECK(r.out == "{\"precision\":1.0000,\"recall\":0.9464}\n");

    write_text(dir / "bad.jsonl", R"({"face_present":true,"detected":true})" "\n{oops\n");
    const auto bad = invoke({"eval", "--outcomes", (dir / "bad.jsonl").string()});
    CHECK(bad.code == cli::kDataError);
    CHECK(bad.err.find("bad.jsonl:2:") != std::string::npos);
    CHECK(bad.out.empty());

    write_text(dir / "empty.jsonl", "\n\n");
    CHECK(invoke({"eval", "--outcomes", (dir / "empty.jsonl").string()}).code == cli::kUsage);
    CHECK(invoke({"eval", "--outcomes", (dir / "none.jsonl").string()}).code == cli::kMissingArtifact);

    write_text(dir / "neg.jsonl", R"({"face_present":false,"detected":false})" "\n");
    const auto degenerate = invoke({"eval", "--outcomes", (dir / "neg.jsonl").string()});
    CHECK(degenerate.code == 0);
    CHECK(degenerate.out == "{\"precision\":1.0000,\"recall\":1.0000}\n");
    CHECK(degenerate.err.find("undefined") != std::string::npos);
}

TEST_CASE("enroll, run with sync, history") {
    Site s;
    const auto e0 = s.enroll("person0");
    REQUIRE(e0.code == 0);
    const auto j0 = e0.lines().at(0);
    CHECK(j0["folder"] == "person0");
    CHECK(j0["uploaded"].size() == 10);
    CHECK(j0["skipped"].empty());
    REQUIRE(s.enroll("person1").code == 0);

    // Same files again: nothing new in storage, a fresh record.
    const auto again = s.enroll("person0");
    CHECK(again.code == 0);
    CHECK(again.lines().at(0)["skipped"].size() == 10);
    CHECK(s.broker.storage().list("person0").size() == 10);

    const auto run = invoke(std::vector<std::string>{"run", "--motion", (s.dir / "motion.txt").string(), "--frames",
                                                  (s.dir / "frames").string(), "--cascade", kCascade, "--model",
                                                  (s.dir / "empty.json").string(), "--sync", "--burst-count", "3",
                                                  "--interval-ms", "0", "--model-out", (s.dir / "out.json").string()} +
                         s.creds());
    REQUIRE(run.code == 0);
    const auto lines = run.lines();
    REQUIRE(lines.size() == 4);
    CHECK(lines[0]["sync"]["retrained"] == true);
    CHECK(lines[0]["sync"]["entries_after"] == 20);
    CHECK(lines[1]["outcome"] == "no_intrusion");
    CHECK(lines[2]["outcome"] == "no_intrusion");
    CHECK(lines[3]["outcome"] == "intrusion");
    CHECK(lines[3]["model_version"] == 2);
    CHECK(recognizer::read_model_file((s.dir / "out.json").string()).entries().size() == 20);

    const auto hist = invoke(std::vector<std::string>{"history", "--from", "2026-03-14", "--to", "2026-03-15"} + s.creds());
    REQUIRE(hist.code == 0);
    const auto rows = hist.lines();
    REQUIRE(rows.size() == 1);
    const auto oracle = s.broker.db().query("/Users", "timestamp", std::nullopt, std::nullopt);
    REQUIRE(oracle.size() == 1);
    CHECK(rows[0]["key"] == oracle[0].key);
    CHECK(rows[0]["imageUrl"] == oracle[0].value["imageUrl"]);
    CHECK(rows[0]["key"] == lines[3]["push_id"]);
    CHECK(s.broker.storage().list("intrusions").size() == 1);

    const auto none = invoke(std::vector<std::string>{"history", "--from", "2026-03-15T00:00:00+05:00", "--to", "2026-03-16"} + s.creds());
    CHECK(none.code == 0);
    CHECK(none.out.empty());
    CHECK(invoke(std::vector<std::string>{"history", "--from", "last week", "--to", "2026-03-16"} + s.creds()).code == cli::kUsage);

    // --sync with no --model starts empty
    const auto cold = invoke(std::vector<std::string>{"run", "--motion", (s.dir / "motion.txt").string(), "--frames",
                                                   (s.dir / "frames").string(), "--cascade", kCascade, "--sync",
                                                   "--burst-count", "3", "--interval-ms", "0"} +
                          s.creds());
    REQUIRE(cold.code == 0);
    CHECK(cold.lines().at(0)["sync"]["entries_before"] == 0);
    CHECK(cold.lines().at(0)["sync"]["entries_after"] == 20);
    CHECK(cold.lines().at(3)["outcome"] == "intrusion");
}

TEST_CASE("enroll validation") {
    Site s;
    const auto files = s.faces("person0");
    CHECK(invoke(std::vector<std::string>{"enroll", "--name", "person0"} + s.creds()).code == cli::kUsage);
    CHECK(invoke(std::vector<std::string>{"enroll", "--name", "a/b", "--images", files[0]} + s.creds()).code == cli::kUsage);
    CHECK(invoke(std::vector<std::string>{"enroll", "--name", "p", "--images", "/nonexistent.pgm"} + s.creds()).code == cli::kMissingArtifact);
    write_text(s.dir / "junk.pgm", "not an image");
    CHECK(invoke(std::vector<std::string>{"enroll", "--name", "p", "--images", (s.dir / "junk.pgm").string()} + s.creds()).code ==
          cli::kDataError);
    CHECK(s.broker.storage().list("p").empty());
    // Same object name, different bytes.
    REQUIRE(invoke(std::vector<std::string>{"enroll", "--name", "p", "--images", files[0]} + s.creds()).code == 0);
    std::filesystem::create_directories(s.dir / "other");
    const auto clash = s.dir / "other" / std::filesystem::path(files[0]).filename();
    std::filesystem::copy_file(files[1], clash);
    CHECK(invoke(std::vector<std::string>{"enroll", "--name", "p", "--images", clash.string()} + s.creds()).code == cli::kDataError);
    CHECK(invoke(std::vector<std::string>{"enroll", "--name", "p", "--images", files[0], "--broker", s.url, "--email",
                                       "dev@example.com", "--password", "wrong-pass"})
              .code == cli::kConnectivity);
}

TEST_CASE("run failures: missing artifacts, offline broker") {
    Site s;
    const std::vector<std::string> base{"run", "--motion", (s.dir / "motion.txt").string(), "--frames", (s.dir / "frames").string(),
                                        "--burst-count", "3", "--interval-ms", "0"};
    CHECK(invoke(base + std::vector<std::string>{"--cascade", "/nonexistent.json", "--model", (s.dir / "empty.json").string()} + s.creds())
              .code == cli::kMissingArtifact);
    CHECK(invoke(base + std::vector<std::string>{"--cascade", kCascade} + s.creds()).code == cli::kUsage);
    write_text(s.dir / "broken.json", "{");
    CHECK(invoke(base + std::vector<std::string>{"--cascade", kCascade, "--model", (s.dir / "broken.json").string()} + s.creds()).code ==
          cli::kDataError);
    CHECK(invoke(base + std::vector<std::string>{"--cascade", kCascade, "--model", (s.dir / "empty.json").string(), "--broker",
                                              "http://127.0.0.1:1", "--token", "x"})
              .code == cli::kConnectivity);
    CHECK(s.broker.db().query("/Users", "timestamp", std::nullopt, std::nullopt).empty());
}

TEST_CASE("settings precedence: flag over env over config") {
    Site s;
    const auto token = broker::HttpClient::login(s.url, "dev@example.com", "device-pass");
    const std::vector<std::string> hist{"history", "--from", "2026-01-01", "--to", "2027-01-01"};
    write_text(s.dir / "dead.json", json{{"broker_url", "http://127.0.0.1:1"}, {"token", token}}.dump());
    write_text(s.dir / "live.json", json{{"broker_url", s.url}, {"token", token}}.dump());
    const auto dead_cfg = (s.dir / "dead.json").string(), live_cfg = (s.dir / "live.json").string();

    CHECK(invoke(std::vector<std::string>{"--config", live_cfg} + hist).code == 0);
    CHECK(invoke(std::vector<std::string>{"--config", dead_cfg} + hist).code == cli::kConnectivity);
    {
        Env e("PIBASE_BROKER_URL", s.url);
        CHECK(invoke(std::vector<std::string>{"--config", dead_cfg} + hist).code == 0);
        CHECK(invoke(std::vector<std::string>{"--config", live_cfg} + hist + std::vector<std::string>{"--broker", "http://127.0.0.1:1"}).code == cli::kConnectivity);
        Env t("PIBASE_TOKEN", "not-a-token");
        CHECK(invoke(std::vector<std::string>{"--config", live_cfg} + hist).code == cli::kConnectivity);
        CHECK(invoke(std::vector<std::string>{"--config", live_cfg} + hist + std::vector<std::string>{"--token", token}).code == 0);
    }
    {
        Env c("PIBASE_CONFIG", live_cfg);
        CHECK(invoke(hist).code == 0);
    }
    CHECK(invoke(std::vector<std::string>{"--config", (s.dir / "nope.json").string()} + hist).code == cli::kMissingArtifact);
    CHECK(invoke(hist).code == cli::kUsage);

    // Nested detector settings.
    const auto frame = (s.dir / "frames" / "00006.pgm").string();
    write_text(s.dir / "strict.json", R"({"detect":{"min_neighbors":100000}})");
    const auto strict = (s.dir / "strict.json").string();
    const auto found = invoke({"detect", "--cascade", kCascade, "--image", frame});
    REQUIRE(found.code == 0);
    CHECK(found.lines().size() >= 1);
    CHECK(invoke({"--config", strict, "detect", "--cascade", kCascade, "--image", frame}).lines().empty());
    CHECK(invoke({"--config", strict, "detect", "--cascade", kCascade, "--image", frame, "--min-neighbors", "3"}).lines().size() ==
          found.lines().size());
    CHECK(invoke({"detect", "--cascade", kCascade, "--image", frame, "--scale-factor", "1"}).code == cli::kUsage);
}

TEST_CASE("train-recognizer, recognize, train-cascade") {
    testing::TempDir dir;
    const auto fx = synth::make_replay({synth::EventKind::Stranger});
    synth::write_replay(fx, dir.path());
    const auto model = (dir / "m.json").string();
    const auto r = invoke({"train-recognizer", "--faces", (dir / "faces").string(), "--out", model, "--cascade", kCascade});
    REQUIRE(r.code == 0);
    CHECK(r.lines().at(0)["entries"] == 20);
    const auto face = (dir / "faces" / "person1" / "00.pgm").string();
    const auto rec = invoke({"recognize", "--model", model, "--image", face, "--cascade", kCascade});
    REQUIRE(rec.code == 0);
    REQUIRE_FALSE(rec.lines().empty());
    CHECK(rec.lines()[0]["name"] == "person1");
    CHECK(rec.lines()[0]["confidence"] == 0.0);
    const auto stranger = invoke({"recognize", "--model", model, "--image", (dir / "frames" / "00000.pgm").string(), "--cascade", kCascade});
    REQUIRE_FALSE(stranger.lines().empty());
    CHECK(stranger.lines()[0]["name"] == "UNKNOWN");
    CHECK(stranger.lines()[0]["label"] == -1);

    const auto out = (dir / "c.json").string();
    const auto tc = invoke({"train-cascade", "--out", out, "--positives", "100", "--negatives", "300", "--pool", "300",
                         "--max-stages", "2", "--no-mine", "--overall-fpr", "0.000001"});
    REQUIRE(tc.code == 0);
    CHECK(tc.lines().at(0)["stages"].get<int>() >= 1);
    CHECK(detector::read_cascade_file(out).stages().size() == tc.lines()[0]["stages"].get<std::size_t>());
    CHECK(invoke({"train-cascade", "--out", (dir / "f.json").string(), "--positives", "0"}).code == cli::kUsage);
    CHECK(invoke({"train-cascade", "--out", (dir / "f.json").string(), "--positives-dir", (dir / "none").string(),
                  "--negatives-dir", (dir / "frames").string()}).code ==
          cli::kMissingArtifact);
}
