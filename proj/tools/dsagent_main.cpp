// SPDX-License-Identifier: Apache-2.0
//
// dsagent run | serve | diagnose | export
#include "dsagent/cli.hpp"
#include "dsagent/error.hpp"
#include "dsagent/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <thread>

namespace {

/// RunConfig overrides. Each flag is accepted in kebab and snake case so it
/// matches the run-file field names exactly.
struct RunFlags {
    std::optional<int> max_steps, max_code_retries, history_char_limit, head_tail_lines;
    std::optional<std::string> orchestrator_model, text_model, code_model, tool_mode;
    std::optional<double> orchestrator_temperature, text_temperature, code_temperature;
    std::optional<std::int64_t> cell_timeout_ms;
    std::optional<bool> network_enabled;

    void attach(CLI::App& app)
    {
        app.add_option("--max-steps,--max_steps", max_steps, "Orchestrator decisions per run (default 30)");
        app.add_option("--max-code-retries,--max_code_retries", max_code_retries,
                       "Rewrites of a failing code cell (default 3)");
        app.add_option("--history-char-limit,--history_char_limit", history_char_limit,
                       "Rendered history budget in characters (default 10000)");
        app.add_option("--head-tail-lines,--head_tail_lines", head_tail_lines,
                       "Output head / error tail lines (default 20)");
        app.add_option("--orchestrator-model,--orchestrator_model", orchestrator_model);
        app.add_option("--text-model,--text_model", text_model);
        app.add_option("--code-model,--code_model", code_model);
        app.add_option("--orchestrator-temperature,--orchestrator_temperature", orchestrator_temperature);
        app.add_option("--text-temperature,--text_temperature", text_temperature);
        app.add_option("--code-temperature,--code_temperature", code_temperature);
        app.add_option("--tool-mode,--tool_mode", tool_mode, "native or emulated")
            ->check(CLI::IsMember({"native", "emulated"}));
        app.add_option("--cell-timeout-ms,--cell_timeout_ms", cell_timeout_ms);
        app.add_option("--network-enabled,--network_enabled", network_enabled, "Allow network access in cells");
    }

    [[nodiscard]] nlohmann::json to_json() const
    {
        nlohmann::json j = nlohmann::json::object();
        auto put = [&](const char* key, const auto& v) {
            if (v) {
                j[key] = *v;
            }
        };
        put("max_steps", max_steps);
        put("max_code_retries", max_code_retries);
        put("history_char_limit", history_char_limit);
        put("head_tail_lines", head_tail_lines);
        put("orchestrator_model", orchestrator_model);
        put("text_model", text_model);
        put("code_model", code_model);
        put("orchestrator_temperature", orchestrator_temperature);
        put("text_temperature", text_temperature);
        put("code_temperature", code_temperature);
        put("tool_mode", tool_mode);
        put("cell_timeout_ms", cell_timeout_ms);
        put("network_enabled", network_enabled);
        return j;
    }
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Agentic data-science runs: orchestrator, text and code agents over a sandboxed interpreter"};
    app.require_subcommand(1);

    std::optional<std::filesystem::path> config_file;
    app.add_option("-c,--config", config_file, "Service config (YAML or JSON)")->check(CLI::ExistingFile);

    // run
    auto* run = app.add_subcommand("run", "Autorun one project headless and write all exports");
    dsagent::CliRunOptions run_opts;
    RunFlags flags;
    std::optional<std::string> runtime;
    run->add_option("spec", run_opts.spec_file, "Spec file (YAML or JSON)")->check(CLI::ExistingFile);
    run->add_option("--assets", run_opts.assets_dir, "Assets directory (default <assets_root>/<session id>)");
    run->add_option("--session-id", run_opts.session_id);
    run->add_option("--resume", run_opts.resume, "Continue a saved run file")->check(CLI::ExistingFile);
    run->add_flag("--replay", run_opts.replay, "On resume, re-execute successful code cells first");
    run->add_flag("--skip-diagnostics", run_opts.skip_diagnostics);
    run->add_option("--fixed-clock", run_opts.fixed_clock, "Deterministic timestamps from this epoch-ms value");
    run->add_option("--runtime", runtime, "namespace, docker or process")
        ->check(CLI::IsMember({"namespace", "docker", "process"}));
    run->add_option("--image", run_opts.image, "Container image or rootfs directory");
    flags.attach(*run);

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP service for the web console");
    std::optional<std::string> listen;
    serve->add_option("--listen", listen, "host:port (overrides the config)");

    // diagnose
    auto* diagnose = app.add_subcommand("diagnose", "Check backends, sandbox runtime and assets directory");
    bool as_json = false;
    diagnose->add_flag("--json", as_json);

    // export
    auto* exp = app.add_subcommand("export", "Convert a run file");
    std::filesystem::path run_file;
    std::string format = "md";
    std::optional<std::filesystem::path> output;
    exp->add_option("run_file", run_file)->required()->check(CLI::ExistingFile);
    exp->add_option("-f,--format", format)->check(CLI::IsMember({"json", "md", "ipynb"}));
    exp->add_option("-o,--output", output);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Help and version requests exit 0; usage errors share the config-error code.
        return app.exit(e) == 0 ? 0 : dsagent::exit_code::kConfigError;
    }

    if (*run) {
        run_opts.config_file = config_file;
        run_opts.overrides = flags.to_json();
        if (runtime) {
            run_opts.runtime = dsagent::parse_runtime_kind(*runtime);
        }
        return dsagent::cli_run(run_opts, std::cout, std::cerr);
    }
    if (*diagnose) {
        return dsagent::cli_diagnose(config_file, as_json, std::cout, std::cerr);
    }
    if (*exp) {
        return dsagent::cli_export(run_file, format, output, std::cout, std::cerr);
    }

    try {
        auto config = config_file ? dsagent::ServiceConfig::load(*config_file) : dsagent::ServiceConfig::defaults();
        if (listen) {
            const auto colon = listen->rfind(':');
            if (colon == std::string::npos) {
                std::cerr << "error: --listen expects host:port\n";
                return dsagent::exit_code::kConfigError;
            }
            config.listen_host = listen->substr(0, colon);
            config.listen_port = std::stoi(listen->substr(colon + 1));
        }
        const auto report = dsagent::run_diagnostics(config);
        std::cerr << report.to_text();
        if (!report.runtime.ok || !report.assets.ok) {
            std::cerr << "error: sandbox runtime or assets directory unusable\n";
            return dsagent::exit_code::kConfigError;
        }
        // SIGINT/SIGTERM are taken by a watcher thread; server threads
        // inherit the blocked mask.
        sigset_t stop_signals;
        sigemptyset(&stop_signals);
        sigaddset(&stop_signals, SIGINT);
        sigaddset(&stop_signals, SIGTERM);
        pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

        dsagent::Service service(config);
        const int port = service.bind(config.listen_host, config.listen_port);
        if (port < 0) {
            std::cerr << "error: cannot bind " << config.listen_host << ":" << config.listen_port << "\n";
            return dsagent::exit_code::kConfigError;
        }
        std::thread watcher([&] {
            int sig = 0;
            sigwait(&stop_signals, &sig);
            service.stop();
        });
        std::cerr << "listening on " << config.listen_host << ":" << port << "\n";
        service.listen_after_bind();
        // Wake the watcher if the server stopped on its own.
        pthread_kill(watcher.native_handle(), SIGTERM);
        watcher.join();
        return 0;
    } catch (const dsagent::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return dsagent::exit_code::kConfigError;
    }
}
