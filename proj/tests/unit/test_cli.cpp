#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "bikeflow/config.hpp"
#include "bikeflow/crash.hpp"
#include "bikeflow/csv.hpp"
#include "commands.hpp"
#include "helpers.hpp"

using namespace bikeflow;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string p(const fs::path& dir, const char* name) { return (dir / name).string(); }

// synth -> ingest into a fresh directory; returns it.
fs::path prepared() {
    static fs::path dir;
    if (!dir.empty()) return dir;
    dir = testing::temp_dir("cli");
    auto s = run({"synth", "--seed", "4", "--days", "370", "--stations", "1", "--out", p(dir, "panel")});
    REQUIRE(s.code == 0);
    auto panel = dir / "panel";
    auto i = run({"ingest", "--weather", p(panel, "weather.csv"), "--fallback", p(panel, "weather_fallback.csv"),
                  "--counts", p(panel, "counts.csv"), "--holidays", p(panel, "holidays.csv"), "--out",
                  p(dir, "ingest")});
    REQUIRE(i.code == 0);
    return dir;
}

std::vector<std::string> train_args(const fs::path& dir, const char* out) {
    return {"train", "--seed", "11", "--samples", p(dir / "ingest", "samples.csv"), "--hidden", "4",
            "--components", "2", "--max-epochs", "2", "--out", p(dir, out)};
}

}  // namespace

TEST_CASE("synthetic panel ingests without drops") {
    auto dir = prepared();
    auto summary = KeyValueConfig::load(p(dir / "ingest", "ingest_summary.txt"));
    CHECK(summary.get_int("dropped") == 0);
    CHECK(summary.get_int("samples") == 370 * 24);
    CHECK(fs::exists(dir / "panel" / "manifest.txt"));
    auto manifest = KeyValueConfig::load(p(dir / "ingest", "run_manifest.txt"));
    CHECK(manifest.get_string("command") == "ingest");
    CHECK(manifest.has("input.data.counts.fnv1a"));
    CHECK(manifest.has("output.samples.csv.fnv1a"));
}

TEST_CASE("training twice with one seed writes identical model files") {
    auto dir = prepared();
    REQUIRE(run(train_args(dir, "t1")).code == 0);
    REQUIRE(run(train_args(dir, "t2")).code == 0);
    CHECK(read_text_file(p(dir / "t1", "model.txt")) == read_text_file(p(dir / "t2", "model.txt")));
    CHECK(fs::exists(dir / "t1" / "history.csv"));

    auto e = run({"evaluate", "--seed", "3", "--model", p(dir / "t1", "model.txt"), "--samples",
                  p(dir / "ingest", "samples.csv"), "--draws", "10", "--out", p(dir, "eval")});
    CHECK(e.code == 0);
    CHECK(fs::exists(dir / "eval" / "gof.csv"));

    auto c = run({"compare", "--seed", "3", "--model", p(dir / "t1", "model.txt"), "--samples",
                  p(dir / "ingest", "samples.csv"), "--factor-table", "example", "--out", p(dir, "compare")});
    CHECK(c.code == 0);
    CHECK(fs::exists(dir / "compare" / "comparison.csv"));
}

TEST_CASE("exposure and crash commands") {
    auto dir = prepared();
    if (!fs::exists(dir / "t1" / "model.txt")) REQUIRE(run(train_args(dir, "t1")).code == 0);
    auto x = run({"exposure", "--seed", "2", "--model", p(dir / "t1", "model.txt"), "--samples",
                  p(dir / "ingest", "samples.csv"), "--out", p(dir, "exposure")});
    REQUIRE(x.code == 0);
    auto panel = dir / "panel";
    auto crash_args = [&](const std::string& extra) {
        return std::vector<std::string>{"crash", "--seed", "1", "--crashes", p(panel, "crashes.csv"), "--weather",
                                        p(panel, "weather.csv"), "--fallback", p(panel, "weather_fallback.csv"),
                                        "--holidays", p(panel, "holidays.csv"), "--exposure",
                                        "true=" + p(panel, "exposure_true.csv"), "--exposure", extra, "--out",
                                        p(dir, "crash")};
    };
    auto ok = run(crash_args("model=" + p(dir / "exposure", "exposure_model.csv")));
    CHECK(ok.code == 0);
    CHECK(fs::exists(dir / "crash" / "crash_comparison.csv"));

    HourlySeries flat = load_exposure(p(panel, "exposure_true.csv"));
    for (auto& [t, v] : flat) v = 1.0;
    write_text_file(p(dir, "flat.csv"), exposure_csv(flat));
    CHECK(run(crash_args("flat=" + p(dir, "flat.csv"))).code == cli::kExitNumerical);
}

TEST_CASE("exit codes") {
    auto dir = prepared();
    CHECK(run({}).code == cli::kExitConfig);
    CHECK(run({"frobnicate"}).code == cli::kExitConfig);
    CHECK(run({"train", "--samples", p(dir / "ingest", "samples.csv"), "--out", p(dir, "x")}).code ==
          cli::kExitConfig);
    CHECK(run({"train", "--seed", "1", "--samples", p(dir, "absent.csv"), "--out", p(dir, "x")}).code ==
          cli::kExitConfig);
    auto bad = run({"train", "--seed", "1", "--samples", p(dir / "ingest", "samples.csv"), "--architecture", "rnn",
                    "--out", p(dir, "x")});
    CHECK(bad.code == cli::kExitConfig);
    CHECK(bad.err.find("rnn") != std::string::npos);

    write_text_file(p(dir, "broken.csv"), "station_id,hour_utc,volume,aadct,aawct\ns,notatime,1,2,3\n");
    auto panel = dir / "panel";
    auto d = run({"ingest", "--weather", p(panel, "weather.csv"), "--counts", p(dir, "broken.csv"), "--holidays",
                  p(panel, "holidays.csv"), "--out", p(dir, "y")});
    CHECK(d.code == cli::kExitData);
    CHECK(d.err.find("broken.csv") != std::string::npos);

    write_text_file(p(dir, "cfg.txt"), "[train]\nbatchsize=3\n");
    CHECK(run({"train", "--config", p(dir, "cfg.txt"), "--seed", "1", "--samples", p(dir / "ingest", "samples.csv"),
               "--out", p(dir, "x")})
              .code == cli::kExitConfig);
    CHECK(run({"--version"}).code == cli::kExitOk);
}
