// spikechip_cli.cpp - command-line front end
//
// run, validate, compile, trace, serve and demo. Every command exits
// nonzero with a one-line diagnostic on failure and writes outputs only
// through complete-then-rename, so a failed command leaves no partial file.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spikechip/config_io.hpp"
#include "spikechip/netbuild.hpp"
#include "spikechip/scenarios.hpp"
#include "spikechip/server.hpp"

namespace fs = std::filesystem;
using namespace spikechip;

namespace
{

struct RunArgs
{
    std::string config;
    std::string events;
    std::string sensor;
    std::string sensor_chip = "0,0";
    std::string until = "1s";
    std::string out;
    std::optional<uint64_t> seed;
};

ChipCoord parse_chip(const std::string &text)
{
    int x = 0;
    int y = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%d,%d%c", &x, &y, &tail) != 2)
    {
        throw ConfigError("chip must be 'x,y', got '" + text + "'");
    }
    return ChipCoord{x, y};
}

int cmd_run(const RunArgs &a)
{
    ChipGridConfig cfg = load_config(a.config);
    if (a.seed)
    {
        cfg.mismatch.seed = *a.seed;
    }
    std::vector<InputEvent> inputs;
    if (!a.events.empty())
    {
        try
        {
            inputs = parse_event_text(read_text_file(a.events));
        }
        catch (const ConfigError &e)
        {
            throw ConfigError(a.events + ": " + e.what());
        }
    }
    if (!a.sensor.empty())
    {
        try
        {
            const std::vector<InputEvent> s =
                    parse_sensor_text(read_text_file(a.sensor), parse_chip(a.sensor_chip));
            inputs.insert(inputs.end(), s.begin(), s.end());
        }
        catch (const ConfigError &e)
        {
            throw ConfigError(a.sensor + ": " + e.what());
        }
    }
    const int64_t until = parse_duration(a.until);
    const SimulationReport report = run(cfg, inputs, until);
    write_report(a.out, report);
    std::printf("%zu spikes, %zu output events, %zu errors, report %016llx -> %s\n",
            report.spikes.size(), report.output_events.size(), report.errors.size(),
            static_cast<unsigned long long>(report.hash()), a.out.c_str());
    return 0;
}

bool is_network_document(const Json &doc)
{
    return doc.is_object() && (doc.contains("populations") || doc.contains("projections"));
}

void print_diagnostics(const std::vector<Diagnostic> &diags)
{
    for (const Diagnostic &d : diags)
    {
        std::printf("%s\n", d.text().c_str());
    }
}

int cmd_validate(const std::string &path)
{
    const std::string text = read_text_file(path);
    Json doc;
    try
    {
        doc = Json::parse(text);
    }
    catch (const Json::parse_error &e)
    {
        throw ConfigError(path + ": not valid JSON: " + e.what());
    }
    std::vector<Diagnostic> diags;
    try
    {
        if (is_network_document(doc))
        {
            const CompileResult compiled = compile(network_from_json(doc));
            diags = compiled.diagnostics;
            const std::vector<Diagnostic> more = validate(compiled.config, compiled);
            diags.insert(diags.end(), more.begin(), more.end());
        }
        else
        {
            diags = validate(config_from_json(doc));
        }
    }
    catch (const ConfigError &e)
    {
        throw ConfigError(path + ": " + e.what());
    }
    print_diagnostics(diags);
    if (has_errors(diags))
    {
        return 1;
    }
    std::printf("%s: ok\n", path.c_str());
    return 0;
}

int cmd_compile(const std::string &in, const std::string &out, const std::string &tags_out)
{
    const CompileResult compiled = [&] {
        try
        {
            return compile(load_network(in));
        }
        catch (const ConfigError &e)
        {
            const std::string msg = e.what();
            if (msg.rfind(in, 0) == 0)
            {
                throw;
            }
            throw ConfigError(in + ": " + msg);
        }
    }();
    print_diagnostics(compiled.diagnostics);
    std::string tags_text;
    if (!tags_out.empty())
    {
        Json tags = Json::array();
        for (const ProjectionTags &t : compiled.tags)
        {
            tags.push_back({{"chip", {t.chip.x, t.chip.y}}, {"core", t.core}, {"tags", t.tags}});
        }
        tags_text = tags.dump(1) + "\n";
    }
    write_text_file(out, serialize_config(compiled.config));
    if (!tags_out.empty())
    {
        write_text_file(tags_out, tags_text);
    }
    std::printf("%s -> %s\n", in.c_str(), out.c_str());
    return 0;
}

struct TraceTable
{
    std::string label;
    std::vector<std::pair<std::string, std::string>> rows; // (t_us, value)
};

TraceTable read_trace(const fs::path &file)
{
    TraceTable t;
    t.label = file.stem().string();
    std::istringstream in(read_text_file(file));
    std::string line;
    while (std::getline(in, line))
    {
        if (line.empty() || line[0] == '#')
        {
            continue;
        }
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
        {
            throw ConfigError(file.string() + ": malformed trace line '" + line + "'");
        }
        t.rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return t;
}

int cmd_trace(const std::string &report, const std::vector<std::string> &channels,
        const bool list, const std::string &out)
{
    const fs::path dir = fs::path(report) / "traces";
    if (!fs::is_directory(dir))
    {
        throw ConfigError("'" + report + "' has no traces directory");
    }
    std::vector<std::string> labels;
    for (const auto &e : fs::directory_iterator(dir))
    {
        if (e.path().extension() == ".tsv")
        {
            labels.push_back(e.path().stem().string());
        }
    }
    std::sort(labels.begin(), labels.end());
    if (list)
    {
        for (const std::string &l : labels)
        {
            std::printf("%s\n", l.c_str());
        }
        return 0;
    }
    const std::vector<std::string> wanted = channels.empty() ? labels : channels;
    if (wanted.empty())
    {
        throw ConfigError("'" + report + "' has no traces");
    }
    std::vector<TraceTable> tables;
    for (const std::string &c : wanted)
    {
        if (std::find(labels.begin(), labels.end(), c) == labels.end())
        {
            throw ConfigError("no trace '" + c + "' in '" + report + "'");
        }
        tables.push_back(read_trace(dir / (c + ".tsv")));
    }

    // Outer join on time; a channel without a sample at that time is empty.
    std::map<int64_t, std::vector<std::string>> joined;
    for (std::size_t i = 0; i < tables.size(); ++i)
    {
        for (const auto &[t, v] : tables[i].rows)
        {
            auto &row = joined[parse_time_us(t)];
            row.resize(tables.size());
            row[i] = v;
        }
    }
    std::string text = "t_us";
    for (const TraceTable &t : tables)
    {
        text += "\t" + t.label;
    }
    text += "\n";
    for (auto &[t, row] : joined)
    {
        row.resize(tables.size());
        text += format_time_us(t);
        for (const std::string &v : row)
        {
            text += "\t" + v;
        }
        text += "\n";
    }
    if (out.empty())
    {
        std::fwrite(text.data(), 1, text.size(), stdout);
    }
    else
    {
        write_text_file(out, text);
    }
    return 0;
}

int cmd_serve(const std::string &config, const std::string &events, const std::string &listen,
        const int frame_ms)
{
    ChipGridConfig cfg = config.empty() ? ChipGridConfig{} : load_config(config);
    std::vector<InputEvent> inputs;
    if (!events.empty())
    {
        inputs = parse_event_text(read_text_file(events));
    }
    ServerOptions opts;
    opts.listen = listen.empty() ? default_listen_address() : parse_listen_address(listen);
    opts.frame_interval_ms = frame_ms;
    opts.handle_signals = true;
    MonitorServer server(std::move(cfg), std::move(inputs), opts);
    server.start();
    std::printf("listening on %s:%u\n", opts.listen.host.c_str(),
            static_cast<unsigned>(server.port()));
    std::fflush(stdout);
    server.wait();
    server.stop();
    return 0;
}

int cmd_demo(const std::string &name, const std::string &out)
{
    std::vector<std::string> names;
    if (name == "all")
    {
        names = demo_names();
    }
    else
    {
        const auto &known = demo_names();
        if (std::find(known.begin(), known.end(), name) == known.end())
        {
            std::string list;
            for (const std::string &n : known)
            {
                list += " " + n;
            }
            throw ConfigError("unknown demo '" + name + "'; known:" + list + " all");
        }
        names = {name};
    }
    // Run everything first so a failure leaves nothing behind.
    std::vector<DemoOutput> outputs;
    for (const std::string &n : names)
    {
        outputs.push_back(run_demo(n));
    }
    for (const DemoOutput &d : outputs)
    {
        const fs::path dir = names.size() == 1 ? fs::path(out) : fs::path(out) / d.run.name;
        write_report(dir, d.run.report,
                {{"config.json", serialize_config(d.run.config)},
                        {"inputs.evt", format_event_text(d.run.inputs)},
                        {"metrics.json", d.metrics.dump(1) + "\n"}});
        std::printf("%s -> %s\n", d.run.name.c_str(), dir.string().c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Event-driven simulator of a mixed-signal neuromorphic chip grid"};
    app.require_subcommand(1);

    RunArgs ra;
    CLI::App *run_cmd = app.add_subcommand("run", "Simulate a configuration and write a report");
    run_cmd->add_option("--config", ra.config, "Configuration document")->required();
    run_cmd->add_option("--events", ra.events, "Input event file (t_us hex24 [x y])");
    run_cmd->add_option("--sensor", ra.sensor, "Sensor event file (t_us x y pol)");
    run_cmd->add_option("--sensor-chip", ra.sensor_chip, "Chip receiving sensor events, x,y");
    run_cmd->add_option("--until", ra.until, "Simulated duration, with ns/us/ms/s suffix");
    run_cmd->add_option("--out", ra.out, "Report directory")->required();
    run_cmd->add_option("--seed", ra.seed, "Override the mismatch seed");

    std::string validate_path;
    CLI::App *validate_cmd =
            app.add_subcommand("validate", "Check a configuration or network document");
    validate_cmd->add_option("file", validate_path, "Document to check")->required();

    std::string compile_in;
    std::string compile_out;
    std::string compile_tags;
    CLI::App *compile_cmd =
            app.add_subcommand("compile", "Compile a network document to a configuration");
    compile_cmd->add_option("network", compile_in, "Network document")->required();
    compile_cmd->add_option("--out", compile_out, "Configuration to write")->required();
    compile_cmd->add_option("--tags", compile_tags, "Also write the allocated tags");

    std::string trace_report;
    std::vector<std::string> trace_channels;
    bool trace_list = false;
    std::string trace_out;
    CLI::App *trace_cmd = app.add_subcommand("trace", "Extract monitor channels from a report");
    trace_cmd->add_option("report", trace_report, "Report directory")->required();
    trace_cmd->add_option("--channel", trace_channels, "Channel label (repeatable)");
    trace_cmd->add_flag("--list", trace_list, "List the channel labels");
    trace_cmd->add_option("--out", trace_out, "Write the table here instead of stdout");

    std::string serve_config;
    std::string serve_events;
    std::string serve_listen;
    int serve_frame_ms = 20;
    CLI::App *serve_cmd = app.add_subcommand("serve", "Start the live monitoring server");
    serve_cmd->add_option("--config", serve_config, "Initial configuration");
    serve_cmd->add_option("--events", serve_events, "Input events queued at start");
    serve_cmd->add_option("--listen", serve_listen,
            "host:port (default SPIKECHIP_LISTEN or 127.0.0.1:7878)");
    serve_cmd->add_option("--frame-ms", serve_frame_ms, "Frame interval")
            ->check(CLI::Range(1, 10000));

    std::string demo_name;
    std::string demo_out = "demo";
    CLI::App *demo_cmd = app.add_subcommand("demo", "Run a shipped scenario");
    demo_cmd->add_option("scenario", demo_name, "Scenario name or 'all'")->required();
    demo_cmd->add_option("--out", demo_out, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (*run_cmd)
        {
            return cmd_run(ra);
        }
        if (*validate_cmd)
        {
            return cmd_validate(validate_path);
        }
        if (*compile_cmd)
        {
            return cmd_compile(compile_in, compile_out, compile_tags);
        }
        if (*trace_cmd)
        {
            return cmd_trace(trace_report, trace_channels, trace_list, trace_out);
        }
        if (*serve_cmd)
        {
            return cmd_serve(serve_config, serve_events, serve_listen, serve_frame_ms);
        }
        if (*demo_cmd)
        {
            return cmd_demo(demo_name, demo_out);
        }
    }
    catch (const std::exception &e)
    {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
