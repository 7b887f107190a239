// protocol.hpp - live monitoring and control protocol
//
// Messages are JSON objects with a "type" field; an optional "id" is echoed
// in the reply. ProtocolCore is the single writer of one simulator: every
// mutation goes through handle(), replies and frames leave through the
// sink. The configuration carries a version that each accepted change
// increments; apply_config with a stale version is refused.
#ifndef SPIKECHIP_PROTOCOL_HPP
#define SPIKECHIP_PROTOCOL_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spikechip/config_io.hpp"
#include "spikechip/engine.hpp"

namespace spikechip
{

using SessionId = uint64_t;

struct Outbound
{
    std::optional<SessionId> to; // empty = every session
    Json message;
};

// Parameter paths: "chip(x,y)/coreC/NAME" for biases and DE_MUX,
// "chip(x,y)/coreC/nN/NAME" for neuron latches.
struct ParamPath
{
    ChipCoord chip{};
    int core = 0;
    std::optional<int> neuron;
    std::string name;

    std::string text() const;
};

ParamPath parse_param_path(const std::string &text);

// Paths of every bias, latch and DE_MUX entry that differs; "structure" when
// anything else (grid, neurons' SRAM/CAM contents, analog, engine,
// mismatch, monitors) differs.
std::vector<std::string> config_changes(const ChipGridConfig &from, const ChipGridConfig &to);

class ProtocolCore
{
public:
    using Sink = std::function<void(const Outbound &)>;

    ProtocolCore(ChipGridConfig cfg, std::vector<InputEvent> inputs, Sink sink);

    SessionId open_session();
    // Registers a session under an id chosen by the transport.
    void add_session(SessionId id);
    void close_session(SessionId id);

    // Processes one client message. Never advances simulated time.
    void handle(SessionId from, const Json &message);
    void handle_text(SessionId from, const std::string &line);

    // Runs the simulator to t_ns, draining `between_events` after every
    // event, then publishes frames to subscribers.
    void advance(int64_t t_ns);
    void set_between_events(std::function<void()> hook);

    // Run-control state requested by clients.
    bool running() const { return running_; }
    double speed() const { return speed_; } // simulated seconds per wall second
    // Open target of a run_control step, if any.
    std::optional<int64_t> step_target() const { return step_target_; }

    int64_t now() const;
    uint64_t version() const { return version_; }
    std::shared_ptr<const Json> snapshot() const;
    Simulator &simulator() { return *sim_; }

private:
    struct Subscription
    {
        std::set<std::size_t> taps;
        bool raster = false;
        bool counters = false;
        int decimation = 1;
        std::map<std::size_t, uint64_t> seen; // samples per tap
    };

    void reply(SessionId to, const Json &request, Json message);
    void broadcast(Json message);
    void error_reply(SessionId to, const Json &request, const std::string &what);
    void reset_simulator();
    void commit(const ChipGridConfig &next, const std::vector<std::string> &changes,
            SessionId from, const Json &request, Json echo);
    void on_apply(SessionId from, const Json &m);
    void on_param(SessionId from, const Json &m);
    void on_latch(SessionId from, const Json &m);
    void on_inject(SessionId from, const Json &m);
    void on_run_control(SessionId from, const Json &m);
    void on_subscribe(SessionId from, const Json &m);
    Json counters_message() const;
    void publish(int64_t t0, int64_t t1);

    ChipGridConfig initial_;
    std::vector<InputEvent> inputs_;
    std::unique_ptr<Simulator> sim_;
    Sink sink_;
    std::function<void()> between_;
    uint64_t version_ = 1;
    mutable std::shared_ptr<const Json> snapshot_;
    SessionId next_session_ = 1;
    std::map<SessionId, Subscription> sessions_;
    bool running_ = false;
    double speed_ = 1.0;
    std::optional<int64_t> step_target_;
    bool in_advance_ = false;
    bool reset_pending_ = false;
    int64_t published_ns_ = 0;
};

} // namespace spikechip

#endif
