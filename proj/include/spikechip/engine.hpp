// engine.hpp - deterministic event-driven simulation of a chip grid
//
// Time is an integer count of nanoseconds. The queue orders events by
// (time, kind, seq). Between queued events all active neurons are advanced
// in sub-steps of at most max_step; a step that contains a threshold
// crossing is cut at the first crossing (rounded up to the next nanosecond)
// so every neuron stays on a common clock. Neurons with no input and
// negligible state are skipped and caught up lazily.
#ifndef SPIKECHIP_ENGINE_HPP
#define SPIKECHIP_ENGINE_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spikechip/chip_config.hpp"
#include "spikechip/monitor.hpp"
#include "spikechip/routing.hpp"
#include "spikechip/sensor.hpp"

namespace spikechip
{

enum class EventKind : uint8_t
{
    pulse_edge = 0,
    input_word = 1,
    delivery = 2,
    monitor_tick = 3,
};

const char *event_kind_name(EventKind k);

struct SimEvent
{
    int64_t t_ns = 0;
    EventKind kind = EventKind::input_word;
    uint64_t seq = 0;
    uint32_t a = 0;
    uint32_t b = 0;
    uint32_t c = 0;
    double w = 0.0;
};

// Strict weak order used by the queue: earlier time, then kind, then seq.
constexpr bool event_before(const SimEvent &x, const SimEvent &y)
{
    if (x.t_ns != y.t_ns)
    {
        return x.t_ns < y.t_ns;
    }
    if (x.kind != y.kind)
    {
        return x.kind < y.kind;
    }
    return x.seq < y.seq;
}

struct InputEvent
{
    int64_t t_ns = 0;
    uint32_t word = 0;
    ChipCoord chip{};
    bool operator==(const InputEvent &) const = default;
};

struct SpikeRecord
{
    int64_t t_ns = 0;
    ChipCoord chip{};
    int core = 0;
    int neuron = 0;
    bool operator==(const SpikeRecord &) const = default;
};

struct OutputEventRecord
{
    int64_t t_ns = 0;
    uint32_t word = 0;
    ChipCoord chip{}; // emitting chip
    bool operator==(const OutputEventRecord &) const = default;
};

struct TraceSample
{
    int64_t t_ns = 0;
    double value = 0.0;
    bool operator==(const TraceSample &) const = default;
};

struct TraceRecord
{
    MonitorTap tap{};
    std::vector<TraceSample> samples;
};

struct ErrorRecord
{
    int64_t t_ns = 0;
    std::string message;
};

struct EngineCounters
{
    uint64_t input_events = 0;
    uint64_t input_errors = 0;
    uint64_t words_routed = 0;
    uint64_t words_dropped_grid = 0;
    uint64_t words_dropped_no_cores = 0;
    uint64_t deliveries = 0;
    uint64_t cam_matches = 0;
    uint64_t pulses_started = 0;
    uint64_t pulses_dropped_busy = 0;
    uint64_t spikes = 0;
    uint64_t events_processed = 0;
    uint64_t substeps = 0;
};

struct SimulationReport
{
    int64_t until_ns = 0;
    std::vector<SpikeRecord> spikes;
    std::vector<OutputEventRecord> output_events;
    std::vector<TraceRecord> traces;
    EngineCounters counters{};
    SensorCounters sensor{};
    EnergyLedger energy{};
    std::vector<ErrorRecord> errors;
    std::vector<std::string> warnings;

    // Canonical text of everything above; the report hash is its FNV-1a.
    std::string canonical_text() const;
    uint64_t hash() const;
};

// Instantaneous state of one neuron, for monitors and tests.
struct NeuronProbe
{
    double I_mem = 0.0;
    double V_mem = 0.0;
    double I_adaptation = 0.0;
    double I_calcium = 0.0;
    double V_gain = 0.0;
    double I_gain = 0.0;
    bool refractory = false;
    std::array<double, dendrite_count> dendrite{}; // DPI outputs after alpha
    std::array<double, dendrite_count> input{}; // branch input currents
};

class Simulator
{
public:
    explicit Simulator(ChipGridConfig cfg);
    ~Simulator();
    Simulator(const Simulator &) = delete;
    Simulator &operator=(const Simulator &) = delete;
    Simulator(Simulator &&) noexcept;
    Simulator &operator=(Simulator &&) noexcept;

    // Queue an input word; words in the past or wider than 24 bits become
    // error records.
    void inject(const InputEvent &ev);
    void inject(std::span<const InputEvent> events);

    // Process every event up to and including t_ns and advance to it.
    void run_until(int64_t t_ns);
    int64_t now() const;
    // Time of the next queued event, or INT64_MAX.
    int64_t next_event_time() const;

    const ChipGridConfig &config() const;
    // Replace the configuration, keeping dynamic state.
    void apply_config(const ChipGridConfig &cfg);
    void set_bias(ChipCoord chip, int core, const std::string &name, const BiasCode &code);
    void set_latch(ChipCoord chip, int core, int neuron, const std::string &name, bool value);

    // Called between queued events; the place to drain a command queue.
    void set_command_hook(std::function<void()> hook);
    void set_spike_listener(std::function<void(const SpikeRecord &)> listener);
    void set_sample_listener(
            std::function<void(std::size_t tap, const TraceSample &)> listener);
    // Observers for tracing: every processed event, and every committed
    // integration interval [t0, t1].
    void set_event_listener(std::function<void(const SimEvent &)> listener);
    void set_step_listener(std::function<void(int64_t t0, int64_t t1)> listener);

    const SimulationReport &report() const;
    SimulationReport take_report();
    // Drops recorded spikes, output events, trace samples and errors;
    // counters and the energy ledger keep accumulating.
    void clear_records();

    NeuronProbe probe(ChipCoord chip, int core, int neuron);
    double synapse_weight(ChipCoord chip, int core, int neuron, int synapse);
    // Hash of the full dynamic state.
    uint64_t state_hash();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

SimulationReport run(const ChipGridConfig &cfg, std::span<const InputEvent> inputs,
        int64_t until_ns);

} // namespace spikechip

#endif
