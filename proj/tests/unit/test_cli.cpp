// SPDX-License-Identifier: Apache-2.0
#include "dsagent/cli.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace dsagent;
using namespace dsagent::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(DSAGENT_TEST_DIR) / "fixtures" / "e2e";

CliRunOptions e2e_options(const fs::path& assets)
{
    CliRunOptions o;
    o.spec_file = kFixtures / "spec.yaml";
    o.config_file = kFixtures / "service.yaml";
    o.assets_dir = assets;
    o.session_id = "cli";
    o.fixed_clock = 1700000000000;
    o.make_executor = [](const Session&, const AssetsDir&) { return std::make_unique<FakeExecutor>(); };
    return o;
}

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const CliRunOptions& o)
{
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli_run(o, out, err);
    return {code, out.str(), err.str()};
}

int shell(const std::string& command)
{
    const int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kBinary = std::string(DSAGENT_BUILD_DIR) + "/tools/dsagent";

} // namespace

TEST_CASE("scripted run to completion")
{
    const auto tmp = temp_dir("cli");
    const auto r = run(e2e_options(tmp / "a"));
    CAPTURE(r.err);
    CHECK(r.code == exit_code::kFinished);
    CHECK(r.out.find("step 1: context") != std::string::npos);
    CHECK(r.out.find("  action request_code: Print hello.") != std::string::npos);
    CHECK(r.out.find("    Code #1 attempt 1: success") != std::string::npos);
    CHECK(r.out.find("status finished after 3 steps") != std::string::npos);
    const auto runfile = load_run(read_file(tmp / "a" / "runs" / "run.json"));
    REQUIRE(runfile.cells().size() == 3);
    CHECK(runfile.cells()[1].results[0].stdout_text == "hello\n");
    CHECK(fs::exists(tmp / "a" / "runs" / "solution.md"));
    CHECK(fs::exists(tmp / "a" / "runs" / "solution.ipynb"));
    CHECK(read_file(tmp / "a" / "debug.log").find("cell_added") != std::string::npos);

    // Same inputs, same clock: same bytes.
    const auto again = run(e2e_options(tmp / "b"));
    CHECK(again.code == 0);
    CHECK(read_file(tmp / "a" / "runs" / "run.json") == read_file(tmp / "b" / "runs" / "run.json"));
    fs::remove_all(tmp);
}

TEST_CASE("step limit, then resume")
{
    const auto tmp = temp_dir("cli-limit");
    auto o = e2e_options(tmp / "a");
    o.overrides = {{"max_steps", 1}};
    const auto first = run(o);
    CHECK(first.code == exit_code::kStoppedMaxSteps);
    CHECK(first.out.find("status stopped_max_steps after 1 steps") != std::string::npos);

    CliRunOptions resume = e2e_options(tmp / "b");
    resume.spec_file.reset();
    resume.resume = tmp / "a" / "runs" / "run.json";
    resume.overrides = {{"max_steps", 10}};
    const auto second = run(resume);
    CAPTURE(second.err);
    CHECK(second.code == exit_code::kFinished);
    CHECK(second.out.find(std::string(kResumeNotice)) != std::string::npos);
    const auto s = load_run(read_file(tmp / "b" / "runs" / "run.json"));
    // The restarted script begins again with request_text.
    CHECK(s.cells().size() == 4);
    CHECK(s.cells().front().source == load_run(read_file(tmp / "a" / "runs" / "run.json")).cells().front().source);
    fs::remove_all(tmp);
}

TEST_CASE("configuration problems exit 3")
{
    const auto tmp = temp_dir("cli-bad");
    auto o = e2e_options(tmp / "a");
    o.spec_file = tmp / "missing.yaml";
    CHECK(run(o).code == exit_code::kConfigError);

    o = e2e_options(tmp / "a");
    o.overrides = {{"max_steps", -1}};
    CHECK(run(o).code == exit_code::kConfigError);

    o = e2e_options(tmp / "a");
    o.overrides = {{"colour", 1}};
    const auto r = run(o);
    CHECK(r.code == exit_code::kConfigError);
    CHECK(r.err.find("colour") != std::string::npos);

    o = e2e_options(tmp / "a");
    o.config_file = tmp / "nope.yaml";
    CHECK(run(o).code == exit_code::kConfigError);

    o = e2e_options(tmp / "a");
    o.spec_file.reset();
    CHECK(run(o).code == exit_code::kConfigError);
    fs::remove_all(tmp);
}

TEST_CASE("diagnostics gate the run")
{
    const auto tmp = temp_dir("cli-diag");
    {
        std::ofstream(tmp / "service.yaml")
            << "assets_root: assets\nbackends:\n"
               "  orchestrator: {kind: openai, base_url: 'http://127.0.0.1:9/v1', api_key_env: ''}\n"
               "  text: {kind: scripted, script: [t]}\n  code: {kind: scripted, script: [c]}\n";
    }
    auto o = e2e_options(tmp / "a");
    o.config_file = tmp / "service.yaml";
    const auto r = run(o);
    CHECK(r.code == exit_code::kConfigError);
    CHECK(r.err.find("FAIL") != std::string::npos);

    o.skip_diagnostics = true;
    const auto skipped = run(o);
    CHECK(skipped.code == exit_code::kFailed);
    CHECK(skipped.err.find("unreachable") != std::string::npos);

    std::ostringstream out;
    std::ostringstream err;
    CHECK(cli_diagnose(tmp / "service.yaml", true, out, err) == exit_code::kConfigError);
    CHECK(json::parse(out.str())["backends"]["orchestrator"]["reachable"] == false);
    fs::remove_all(tmp);
}

TEST_CASE("export")
{
    const auto golden = fs::path(DSAGENT_TEST_DIR) / "fixtures" / "golden";
    std::ostringstream out;
    std::ostringstream err;
    CHECK(cli_export(golden / "run.json", "md", std::nullopt, out, err) == 0);
    CHECK(out.str().rfind("# Solution\n", 0) == 0);
    out.str("");
    CHECK(cli_export(golden / "run.json", "json", std::nullopt, out, err) == 0);
    CHECK(out.str() == read_file(golden / "run.json"));
    CHECK(cli_export(golden / "run.json", "pdf", std::nullopt, out, err) == exit_code::kConfigError);
    CHECK(cli_export(golden / "missing.json", "md", std::nullopt, out, err) == exit_code::kConfigError);

    const auto tmp = temp_dir("cli-export");
    CHECK(cli_export(golden / "run.json", "ipynb", tmp / "x.ipynb", out, err) == 0);
    CHECK(read_file(tmp / "x.ipynb") == read_file(golden / "solution.ipynb"));
    fs::remove_all(tmp);
}

TEST_CASE("the executable")
{
    const auto golden = (fs::path(DSAGENT_TEST_DIR) / "fixtures" / "golden" / "run.json").string();
    CHECK(shell(kBinary + " export " + golden + " -f md > /dev/null") == 0);
    CHECK(shell(kBinary + " export /nonexistent.json > /dev/null 2>&1") == 3);
    CHECK(shell(kBinary + " run --no-such-flag > /dev/null 2>&1") == 3);
    CHECK(shell(kBinary + " --help > /dev/null") == 0);
}
