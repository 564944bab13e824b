// SPDX-License-Identifier: Apache-2.0
#include "dsagent/assets_io.hpp"
#include "dsagent/codec.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <thread>

using namespace dsagent;
using namespace dsagent::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Text, a code cell that needed one rewrite and produced a plot, Finish.
Session golden_session()
{
    ProjectSpec spec;
    spec.general_instructions = {{"estimated_steps", "3"}, {"plots", "one"}};
    spec.task_description = "Fit a baseline classifier.";
    spec.data_location = "data/train.csv";
    spec.metrics = "accuracy";
    auto s = new_session(spec, RunConfig{}, "golden");
    s.add_trace(1700000000000, "action", {{"step", 1}, {"action", {{"action", "request_text"}, {"spec", "Plan"}}}});
    s.append_cell(CellKind::Text, "## Plan\n\n1. Load `train.csv`.\n2. Fit a model.", "Plan", 1700000000001);
    const auto id = s.append_cell(CellKind::Code, "import pandas as pd\ndf = pd.read_csv('/data/train.csv')\n",
                                  "Load data", 1700000000002)
                        .id;
    ExecutionResult bad;
    bad.status = ExecStatus::Error;
    bad.stderr_text = "Traceback (most recent call last):\nFileNotFoundError: train.csv\n";
    bad.duration_ms = 12;
    s.record_result(id, bad);
    s.replace_source(id, "import pandas as pd\ndf = pd.read_csv('/data/train.csv')\nprint(df.shape)\n```\n",
                     1700000000003);
    ExecutionResult ok;
    ok.stdout_text = "(891, 12)\n";
    ok.duration_ms = 40;
    ok.artifacts_written = {"metrics.ndjson", "plots/fig1.png"};
    s.record_result(id, ok);
    s.append_cell(CellKind::Finish, "Finished: baseline done", "", 1700000000004);
    for (int i = 0; i < 3; ++i) {
        s.count_step();
    }
    return s;
}

void check_golden(const std::string& name, const std::string& actual)
{
    const auto path = fs::path(DSAGENT_TEST_DIR) / "fixtures" / "golden" / name;
    if (std::getenv("DSAGENT_UPDATE_GOLDEN") != nullptr) {
        fs::create_directories(path.parent_path());
        std::ofstream(path, std::ios::binary) << actual;
    }
    CHECK_MESSAGE(read_file(path) == actual, "golden mismatch: " << name);
}

std::string pointer_of(std::string_view bytes)
{
    try {
        load_run(bytes);
    } catch (const SchemaError& e) {
        return e.path();
    } catch (const Error& e) {
        return std::string(to_string(e.code()));
    }
    return "<none>";
}

} // namespace

TEST_CASE("golden run file, markdown and notebook")
{
    const auto s = golden_session();
    check_golden("run.json", save_run(s));
    check_golden("solution.md", export_markdown(s, "../"));
    check_golden("solution.ipynb", export_notebook(s));
    CHECK(load_run(read_file(fs::path(DSAGENT_TEST_DIR) / "fixtures" / "golden" / "run.json")) == s);
}

TEST_CASE("run files are canonical")
{
    const auto bytes = save_run(golden_session());
    CHECK(bytes.back() == '\n');
    CHECK(bytes.rfind("{\n  \"cells\": [", 0) == 0); // sorted keys, two-space indent
    const auto j = json::parse(bytes);
    CHECK(j["format_version"] == kRunFormatVersion);
    CHECK(j["status"] == "finished");
    CHECK(save_run(load_run(bytes)) == bytes);
}

TEST_CASE("load_run reports precise errors")
{
    auto j = json::parse(save_run(golden_session()));
    auto with = [&](auto mutate) {
        auto copy = j;
        mutate(copy);
        return pointer_of(copy.dump());
    };
    CHECK(pointer_of("not json").empty()); // root pointer
    CHECK(with([](json& x) { x["format_version"] = 2; }) == "VersionUnknown");
    CHECK(with([](json& x) { x["format_version"] = "1"; }) == "/format_version");
    CHECK(with([](json& x) { x.erase("cells"); }) == "/cells");
    CHECK(with([](json& x) { x["extra"] = 1; }) == "/extra");
    CHECK(with([](json& x) { x["status"] = "paused"; }) == "/status");
    CHECK(with([](json& x) { x["cells"][1]["results"][0]["attempt"] = 5; }) == "/cells/1/results/0/attempt");
    CHECK(with([](json& x) { x["cells"][0]["kind"] = "code"; }) == "/cells/1/ordinal");
    CHECK(with([](json& x) { x["config"]["max_steps"] = 0; }) == "/config");
    CHECK(with([](json& x) { x["spec"]["task_description"] = ""; }) == "/spec");
}

TEST_CASE("a run saved while running resumes awaiting the next step")
{
    auto s = new_session(sample_spec(), RunConfig{}, "r");
    s.append_cell(CellKind::Text, "t", "", 1);
    s.set_status(SessionStatus::Running);
    auto loaded = load_run(save_run(s));
    CHECK(loaded.status() == SessionStatus::AwaitingNextStep);
    note_resume(loaded, 99, false);
    CHECK(loaded.trace().back().event == "resumed");
    CHECK(loaded.trace().back().data["notice"] == std::string(kResumeNotice));
}

TEST_CASE("random sessions survive save, load, save")
{
    std::mt19937_64 rng(31);
    for (int i = 0; i < 200; ++i) {
        const auto s = random_session(rng);
        const auto bytes = save_run(s);
        const auto loaded = load_run(bytes);
        REQUIRE(loaded == s);
        REQUIRE(save_run(loaded) == bytes);
    }
}

TEST_CASE("assets directory layout and appends")
{
    const auto tmp = temp_dir("assets");
    auto dir = AssetsDir::create(tmp / "sess");
    CHECK(fs::is_directory(dir.plots_dir()));
    CHECK(fs::is_directory(dir.runs_dir()));
    CHECK(dir.write_asset(AssetKind::ModelCard, "v1") == "model_card.md");
    dir.write_asset(AssetKind::ModelCard, "v2");
    CHECK(read_file(dir.root() / "model_card.md") == "v2");
    dir.append_metric("accuracy", 0.72, 3, 1700000000000);
    dir.append_metric("loss", 0.5, 4, 1700000000001);
    const auto metrics = read_file(dir.root() / "metrics.ndjson");
    CHECK(metrics == "{\"name\":\"accuracy\",\"step\":3,\"timestamp\":\"2023-11-14T22:13:20.000Z\",\"value\":0.72}\n"
                     "{\"name\":\"loss\",\"step\":4,\"timestamp\":\"2023-11-14T22:13:20.001Z\",\"value\":0.5}\n");

    // Re-creating keeps existing content.
    auto again = AssetsDir::create(tmp / "sess");
    CHECK(read_file(again.root() / "model_card.md") == "v2");

    const auto listing = dir.list();
    REQUIRE(listing.size() == 2);
    CHECK(listing[0].path == "metrics.ndjson");
    CHECK(listing[1].path == "model_card.md");
    CHECK(listing[1].size == 2);
    fs::remove_all(tmp);
}

TEST_CASE("debug log timestamps strictly increase")
{
    const auto tmp = temp_dir("log");
    auto dir = AssetsDir::create(tmp / "a");
    struct Stuck final : Clock {
        std::int64_t now_ms() override { return 1700000000500 - (calls++ % 2) * 1000; }
        int calls = 0;
    } clock;
    for (int i = 0; i < 5; ++i) {
        dir.log_debug(clock, "line\nwith newline");
    }
    std::istringstream in(read_file(dir.root() / "debug.log"));
    std::string prev;
    int n = 0;
    for (std::string line; std::getline(in, line); ++n) {
        CHECK(line.substr(25) == "line with newline");
        const auto stamp = line.substr(0, 24);
        CHECK(stamp > prev);
        prev = stamp;
    }
    CHECK(n == 5);
    fs::remove_all(tmp);
}

TEST_CASE("concurrent appends never tear records")
{
    const auto tmp = temp_dir("concurrent");
    auto dir = AssetsDir::create(tmp / "a");
    std::vector<std::thread> writers;
    for (int t = 0; t < 4; ++t) {
        writers.emplace_back([&, t] {
            for (int i = 0; i < 200; ++i) {
                dir.append_metric("m" + std::to_string(t), i, i, 1700000000000 + i);
            }
        });
    }
    for (auto& w : writers) {
        w.join();
    }
    std::istringstream in(read_file(dir.root() / "metrics.ndjson"));
    int n = 0;
    for (std::string line; std::getline(in, line); ++n) {
        CHECK_NOTHROW((void)json::parse(line));
    }
    CHECK(n == 800);
    fs::remove_all(tmp);
}

TEST_CASE("paths cannot escape the root")
{
    const auto tmp = temp_dir("escape");
    auto dir = AssetsDir::create(tmp / "a");
    CHECK(dir.resolve("plots/x.png").has_value());
    CHECK_FALSE(dir.resolve("/etc/passwd").has_value());
    CHECK_FALSE(dir.resolve("../b").has_value());
    CHECK_FALSE(dir.resolve("plots/../../b").has_value());
    CHECK_FALSE(dir.resolve("").has_value());
    fs::create_directories(tmp / "outside");
    fs::create_directory_symlink(tmp / "outside", dir.root() / "link");
    CHECK_FALSE(dir.resolve("link/file").has_value());
    CHECK_THROWS_AS(dir.write_file("../oops", "x"), Error);
    CHECK(dir.write_file("runs/nested/x.txt", "x") == "runs/nested/x.txt");
    fs::remove_all(tmp);
}

TEST_CASE("exports written under runs/")
{
    const auto tmp = temp_dir("exports");
    auto dir = AssetsDir::create(tmp / "a");
    const auto s = golden_session();
    const auto paths = write_exports(dir, s);
    CHECK(paths.run_file == "runs/run.json");
    CHECK(read_file(dir.root() / paths.run_file) == save_run(s));
    CHECK(read_file(dir.root() / paths.markdown) == export_markdown(s, "../"));
    CHECK(json::parse(read_file(dir.root() / "spec.json")) == codec::to_json(s.spec()));
    fs::remove_all(tmp);
}

TEST_CASE("notebook structure")
{
    const auto nb = notebook_json(golden_session());
    CHECK(nb["nbformat"] == 4);
    CHECK(nb["nbformat_minor"] == 5);
    REQUIRE(nb["cells"].size() == 3);
    CHECK(nb["cells"][0]["cell_type"] == "markdown");
    const auto& code = nb["cells"][1];
    CHECK(code["cell_type"] == "code");
    CHECK(code["execution_count"] == 1);
    CHECK(code["outputs"][0]["name"] == "stdout");
    CHECK(code["outputs"].size() == 1);
    CHECK(code["source"][0] == "import pandas as pd\n");
}

TEST_CASE("run files match the published schema")
{
    const auto tmp = temp_dir("run-schema");
    std::ofstream(tmp / "golden.json", std::ios::binary) << save_run(golden_session());
    std::mt19937_64 rng(77);
    GenOptions opts;
    opts.allow_running = true;
    for (int i = 0; i < 100; ++i) {
        std::ofstream(tmp / ("r" + std::to_string(i) + ".json"), std::ios::binary) << save_run(random_session(rng, opts));
    }
    const auto schema = fs::path(DSAGENT_TEST_DIR).parent_path() / "docs" / "run-file.schema.json";
    const std::string script = "import json,pathlib,sys,jsonschema\n"
                               "v=jsonschema.Draft7Validator(json.load(open(sys.argv[1])))\n"
                               "bad=[p.name+': '+e.message for p in sorted(pathlib.Path(sys.argv[2]).glob('*.json'))"
                               " for e in v.iter_errors(json.load(open(p)))]\n"
                               "print('\\n'.join(bad[:5]))\nsys.exit(1 if bad else 0)\n";
    std::ofstream(tmp / "check.py") << script;
    const auto cmd = "python3 '" + (tmp / "check.py").string() + "' '" + schema.string() + "' '" + tmp.string() +
                     "' > '" + (tmp / "out.txt").string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK_MESSAGE(status == 0, read_file(tmp / "out.txt"));
    fs::remove_all(tmp);
}
