// config_io.hpp - configuration documents, event files and report export
//
// Configuration and network documents are JSON with a schema_version.
// Only biases that were set and neurons that differ from the default are
// written, and parse(serialize(doc)) == doc. Event files are line based
// with times in microseconds; '#' starts a comment.
#ifndef SPIKECHIP_CONFIG_IO_HPP
#define SPIKECHIP_CONFIG_IO_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "spikechip/chip_config.hpp"
#include "spikechip/engine.hpp"
#include "spikechip/netbuild.hpp"

namespace spikechip
{

using Json = nlohmann::json;

Json config_to_json(const ChipGridConfig &cfg);
// Throws ConfigError on schema violations; the result is validated.
ChipGridConfig config_from_json(const Json &doc);

std::string serialize_config(const ChipGridConfig &cfg);
ChipGridConfig parse_config(const std::string &text);

Json network_to_json(const NetworkSpec &spec);
NetworkSpec network_from_json(const Json &doc);

Json diagnostics_to_json(const std::vector<Diagnostic> &diags);

// Reads a whole file; throws ConfigError naming the path on failure.
std::string read_text_file(const std::filesystem::path &path);
// Writes through a temporary sibling and renames, so readers never see a
// partial file.
void write_text_file(const std::filesystem::path &path, const std::string &text);

ChipGridConfig load_config(const std::filesystem::path &path);
NetworkSpec load_network(const std::filesystem::path &path);

// Microseconds <-> nanoseconds; text keeps three decimals.
int64_t parse_time_us(const std::string &token);
std::string format_time_us(int64_t t_ns);

// Duration with an optional unit suffix: ns, us, ms or s (default s).
int64_t parse_duration(const std::string &text);

// "t_us hex24 [chip_x chip_y]" per line.
std::vector<InputEvent> parse_event_text(const std::string &text);
std::string format_event_text(std::span<const InputEvent> events);

// "t_us x y pol" or "t_us hex24" per line, addressed to one chip.
std::vector<InputEvent> parse_sensor_text(const std::string &text, ChipCoord chip = {});

// Emitted words as "t_us hex24 chip_x chip_y".
std::string format_output_events(std::span<const OutputEventRecord> events);
std::string format_spikes(std::span<const SpikeRecord> spikes);
std::string format_trace(const TraceRecord &trace);

Json counters_to_json(const SimulationReport &report);

// Writes events.evt, spikes.txt, counters.json, report.txt and one
// traces/<label>.tsv per tap, plus any extra files given by name. The
// directory is assembled beside the target and moved into place only when
// complete.
void write_report(const std::filesystem::path &dir, const SimulationReport &report,
        const std::map<std::string, std::string> &extra_files = {});

} // namespace spikechip

#endif
