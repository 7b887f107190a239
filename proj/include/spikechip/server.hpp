// server.hpp - socket transport for the monitoring protocol
//
// One listening port accepts two framings: newline-delimited JSON over
// plain TCP, and WebSocket text messages (detected by the HTTP upgrade
// request) for browser clients. All sessions feed one engine thread that
// owns the ProtocolCore; network I/O runs on a separate thread so a slow
// client never blocks the simulation. Queued frames beyond a bound are
// dropped oldest first; replies are never dropped.
#ifndef SPIKECHIP_SERVER_HPP
#define SPIKECHIP_SERVER_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "spikechip/protocol.hpp"

namespace spikechip
{

struct ListenAddress
{
    std::string host = "127.0.0.1";
    uint16_t port = 7878;
};

// "host:port" or ":port"; throws ConfigError.
ListenAddress parse_listen_address(const std::string &text);
// SPIKECHIP_LISTEN if set, else 127.0.0.1:7878.
ListenAddress default_listen_address();

struct ServerOptions
{
    ListenAddress listen{};
    int frame_interval_ms = 20;
    std::size_t max_queued_frames = 256;
    bool handle_signals = false; // SIGINT/SIGTERM end wait()
};

class MonitorServer
{
public:
    MonitorServer(ChipGridConfig cfg, std::vector<InputEvent> inputs, ServerOptions options);
    ~MonitorServer();
    MonitorServer(const MonitorServer &) = delete;
    MonitorServer &operator=(const MonitorServer &) = delete;

    // Binds and starts the I/O and engine threads; port 0 picks a free port.
    void start();
    uint16_t port() const;
    // Blocks until stop() is called or, with handle_signals, a signal arrives.
    void wait();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace spikechip

#endif
