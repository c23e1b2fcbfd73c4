// Writes a synthetic replay fixture for `pibase enroll` / `pibase run`.
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pibase/errors.hpp"
#include "pibase/replay.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Synthetic replay fixture", "pibase-fixture"};
    std::string out, events = "empty,known,stranger";
    pibase::synth::ReplayOptions o;
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--events", events, "comma-separated empty|known|stranger");
    app.add_option("--seed", o.seed);
    app.add_option("--burst-count", o.burst_count);
    app.add_option("--people", o.people);
    app.add_option("--enroll-images", o.enroll_images);
    app.add_option("--start", o.start, "timestamp of the first event");
    CLI11_PARSE(app, argc, argv);
    try {
        std::vector<pibase::synth::EventKind> kinds;
        std::stringstream ss(events);
        for (std::string item; std::getline(ss, item, ',');) {
            if (!item.empty()) kinds.push_back(pibase::synth::parse_event_kind(item));
        }
        const auto fx = pibase::synth::make_replay(kinds, o);
        pibase::synth::write_replay(fx, out);
        std::cout << "{\"events\":" << kinds.size() << ",\"frames\":" << fx.frames.size()
                  << ",\"people\":" << fx.names.size() << "}\n";
    } catch (const pibase::ArgumentError& e) {
        std::cerr << "pibase-fixture: " << e.what() << '\n';
        return 64;
    }
    return 0;
}
