// SPDX-License-Identifier: Apache-2.0
#include "dsagent/cli.hpp"

#include "dsagent/codec.hpp"
#include "dsagent/error.hpp"
#include "dsagent/orchestrator.hpp"
#include "dsagent/prompts.hpp"
#include "dsagent/service_config.hpp"
#include "dsagent/spec_file.hpp"
#include "yaml_json.hpp"

#include <fstream>
#include <ostream>

namespace dsagent {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ServiceConfig load_config(const std::optional<fs::path>& file)
{
    return file ? ServiceConfig::load(*file) : ServiceConfig::defaults();
}

std::string one_line(std::string s, std::size_t max = 72)
{
    for (auto& c : s) {
        c = c == '\n' ? ' ' : c;
    }
    if (s.size() > max) {
        s = s.substr(0, max - 3) + "...";
    }
    return s;
}

/// Terminal trace: one line per decision plus indented detail lines.
class TracePrinter {
public:
    TracePrinter(std::ostream& out, const Session& session) : out_(out), session_(session) {}

    void operator()(const EngineEvent& e)
    {
        const auto& d = e.data;
        if (e.type == "render" && d.value("role", "") == "orchestrator") {
            out_ << "step " << d.value("step", 0) << ": context " << d.value("emitted_chars", 0) << "/"
                 << d.value("untruncated_chars", 0) << " chars" << (d.value("truncated", false) ? " (truncated)" : "")
                 << "\n";
        } else if (e.type == "action") {
            const auto& a = d["action"];
            const auto name = a.value("action", "");
            std::string arg = a.value("spec", a.value("purpose", a.value("summary_hint", "")));
            out_ << "  action " << name << (arg.empty() ? "" : ": " + one_line(arg)) << "\n";
        } else if (e.type == "cell_added") {
            out_ << "  + " << d.value("kind", "") << " #" << d.value("ordinal", 0) << "\n";
        } else if (e.type == "execution") {
            const auto& cell = session_.cell(d.value("cell_id", std::int64_t{0}));
            out_ << "    Code #" << cell.ordinal << " attempt " << d.value("attempt", 0) << ": "
                 << d.value("status", "") << " (" << d.value("duration_ms", 0) << " ms)\n";
        } else if (e.type == "retry") {
            out_ << "    rewrite " << d.value("rewrite", 0) << " requested\n";
        } else if (e.type == "parse_error") {
            out_ << "  unusable orchestrator reply (attempt " << d.value("attempt", 0)
                 << "): " << one_line(d.value("error", ""), 120) << "\n";
        } else if (e.type == "failure") {
            out_ << "  failed during " << d.value("stage", "") << ": " << one_line(d.value("error", ""), 200) << "\n";
        }
        out_.flush();
    }

private:
    std::ostream& out_;
    const Session& session_;
};

int status_exit(SessionStatus status)
{
    switch (status) {
    case SessionStatus::Finished: return exit_code::kFinished;
    case SessionStatus::StoppedMaxSteps: return exit_code::kStoppedMaxSteps;
    default: return exit_code::kFailed;
    }
}

} // namespace

int cli_run(const CliRunOptions& options, std::ostream& out, std::ostream& err)
{
    ServiceConfig config;
    std::optional<Session> session;
    std::unique_ptr<ManualClock> manual_clock;
    SystemClock system_clock;
    Clock* clock = &system_clock;
    if (options.fixed_clock) {
        manual_clock = std::make_unique<ManualClock>(*options.fixed_clock);
        clock = manual_clock.get();
    }
    fs::path data_base = fs::current_path();

    try {
        config = load_config(options.config_file);
        if (options.runtime) {
            config.sandbox.runtime = *options.runtime;
        }
        if (options.image) {
            config.sandbox.image = *options.image;
        }
        if (options.resume) {
            auto loaded = load_run(detail::read_text_file(*options.resume));
            auto state = loaded.state();
            if (options.session_id) {
                state.session_id = *options.session_id;
            }
            session.emplace(Session::restore(std::move(state)));
            if (!options.overrides.empty()) {
                auto cfg = session->config();
                codec::apply_config_overrides(cfg, options.overrides);
                session->update_config(cfg);
            }
            note_resume(*session, clock->now_ms(), options.replay);
            out << kResumeNotice << "\n";
        } else {
            if (!options.spec_file) {
                throw Error(ErrorCode::InvalidSpec, "a spec file is required unless --resume is given");
            }
            auto spec = load_spec_file(*options.spec_file);
            data_base = fs::absolute(*options.spec_file).parent_path();
            auto run = effective_run_config(config);
            codec::apply_config_overrides(run, options.overrides);
            validate(run);
            session.emplace(new_session(std::move(spec), run,
                                        options.session_id ? *options.session_id : generate_session_id()));
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::kConfigError;
    }

    std::unique_ptr<LlmGateway> gateway;
    std::optional<AssetsDir> assets;
    std::unique_ptr<CellExecutor> executor;
    PromptSet prompts;
    try {
        gateway = build_gateway(config);
        prompts = PromptSet::load(default_prompts_dir());
        assets.emplace(AssetsDir::create(options.assets_dir ? *options.assets_dir
                                                            : config.assets_root / session->id()));
        if (!options.skip_diagnostics) {
            auto report = run_diagnostics(config, *gateway);
            if (options.make_executor) {
                report.runtime = {true, "injected executor"};
            }
            if (!report.ok()) {
                err << report.to_text();
                err << "error: diagnostics failed; fix the items marked FAIL or pass --skip-diagnostics\n";
                return exit_code::kConfigError;
            }
        }
        if (options.make_executor) {
            executor = options.make_executor(*session, *assets);
        } else {
            const auto data = resolve_data_path(session->spec().data_location, data_base);
            executor = Sandbox::open(session->id(), data.empty() ? std::string{} : data.string(), session->config(),
                                     config.sandbox, assets->root(), *clock);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::kConfigError;
    }

    SystemClock log_clock;
    Orchestrator orchestrator(*gateway, *executor, prompts, *clock);
    TracePrinter printer(out, *session);
    orchestrator.set_observer([&](const EngineEvent& e) {
        printer(e);
        try {
            assets->log_debug(log_clock, e.type + " " + e.data.dump(-1, ' ', false, json::error_handler_t::replace));
        } catch (const Error&) {
        }
    });

    out << "session " << session->id() << ", assets in " << assets->root().string() << "\n";
    try {
        if (options.replay) {
            orchestrator.replay(*session);
        }
        orchestrator.autorun(*session);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
    }

    try {
        const auto paths = write_exports(*assets, *session);
        out << "status " << to_string(session->status()) << " after " << session->step_count() << " steps\n";
        out << "wrote " << paths.run_file << ", " << paths.markdown << ", " << paths.notebook << "\n";
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::kFailed;
    }
    return status_exit(session->status());
}

int cli_diagnose(const std::optional<fs::path>& config_file, bool as_json, std::ostream& out, std::ostream& err)
{
    ServiceConfig config;
    try {
        config = load_config(config_file);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::kConfigError;
    }
    const auto report = run_diagnostics(config);
    if (as_json) {
        out << report.to_json().dump(2) << "\n";
    } else {
        out << report.to_text();
    }
    return report.ok() ? 0 : exit_code::kConfigError;
}

int cli_export(const fs::path& run_file, const std::string& format, const std::optional<fs::path>& output,
               std::ostream& out, std::ostream& err)
{
    std::string text;
    try {
        const auto session = load_run(detail::read_text_file(run_file));
        if (format == "json") {
            text = save_run(session);
        } else if (format == "md") {
            text = export_markdown(session);
        } else if (format == "ipynb") {
            text = export_notebook(session);
        } else {
            err << "error: format must be json, md or ipynb\n";
            return exit_code::kConfigError;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::kConfigError;
    }
    if (!output) {
        out << text;
        return 0;
    }
    std::ofstream file(*output, std::ios::binary);
    file << text;
    if (!file) {
        err << "error: cannot write " << output->string() << "\n";
        return exit_code::kFailed;
    }
    return 0;
}

} // namespace dsagent
