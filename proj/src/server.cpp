// server.cpp

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "spikechip/server.hpp"

namespace
{

using namespace spikechip;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using beast::error_code;

bool droppable(const Json &m)
{
    const std::string t = m.value("type", "");
    return t == "trace_frame" || t == "raster_frame" || t == "counters";
}

struct Command
{
    enum Kind : uint8_t
    {
        open,
        close,
        message,
    } kind;
    SessionId id;
    std::string text;
};

class Session;

// Shared between the I/O thread (sessions) and the engine thread (commands).
struct Hub
{
    std::mutex mutex;
    std::condition_variable wake;
    std::deque<Command> commands;
    bool stopping = false;

    void submit(Command c)
    {
        {
            std::lock_guard lock(mutex);
            commands.push_back(std::move(c));
        }
        wake.notify_all();
    }
};

class Session : public std::enable_shared_from_this<Session>
{
public:
    Session(SessionId id, Hub &hub, std::size_t max_frames)
        : id_(id), hub_(hub), max_frames_(max_frames)
    {
    }
    virtual ~Session() = default;

    SessionId id() const { return id_; }

    // I/O thread only.
    void deliver(std::shared_ptr<const std::string> text, const bool frame)
    {
        if (closed_)
        {
            return;
        }
        if (frame)
        {
            std::size_t frames = 0;
            for (const auto &q : queue_)
            {
                frames += q.second ? 1 : 0;
            }
            if (frames >= max_frames_)
            {
                // oldest frame not already being written
                for (auto it = queue_.begin() + (writing_ ? 1 : 0); it != queue_.end(); ++it)
                {
                    if (it->second)
                    {
                        queue_.erase(it);
                        break;
                    }
                }
            }
        }
        queue_.emplace_back(std::move(text), frame);
        if (!writing_)
        {
            write_next();
        }
    }

    virtual void begin() = 0;
    virtual void shutdown() = 0;

protected:
    virtual void write_front() = 0;

    void write_next()
    {
        if (queue_.empty() || closed_)
        {
            writing_ = false;
            return;
        }
        writing_ = true;
        write_front();
    }

    void on_written(const error_code &ec)
    {
        if (ec)
        {
            fail();
            return;
        }
        queue_.pop_front();
        write_next();
    }

    void fail()
    {
        if (closed_)
        {
            return;
        }
        closed_ = true;
        queue_.clear();
        hub_.submit(Command{Command::close, id_, {}});
        shutdown();
    }

    void submit_line(std::string line)
    {
        hub_.submit(Command{Command::message, id_, std::move(line)});
    }

    SessionId id_;
    Hub &hub_;
    std::size_t max_frames_;
    std::deque<std::pair<std::shared_ptr<const std::string>, bool>> queue_;
    bool writing_ = false;
    bool closed_ = false;
};

class LineSession : public Session
{
public:
    LineSession(SessionId id, Hub &hub, std::size_t max_frames, tcp::socket socket,
            std::string pending)
        : Session(id, hub, max_frames), socket_(std::move(socket)), inbox_(std::move(pending))
    {
    }

    void begin() override
    {
        split_lines();
        read();
    }

    void shutdown() override
    {
        error_code ec;
        socket_.shutdown(tcp::socket::shutdown_both, ec);
        socket_.close(ec);
    }

private:
    void read()
    {
        auto self = shared_from_this();
        socket_.async_read_some(asio::buffer(chunk_),
                [this, self](const error_code &ec, const std::size_t n) {
                    if (ec)
                    {
                        fail();
                        return;
                    }
                    inbox_.append(chunk_.data(), n);
                    split_lines();
                    read();
                });
    }

    void split_lines()
    {
        std::size_t start = 0;
        for (std::size_t nl; (nl = inbox_.find('\n', start)) != std::string::npos; start = nl + 1)
        {
            std::string line = inbox_.substr(start, nl - start);
            if (!line.empty() && line.back() == '\r')
            {
                line.pop_back();
            }
            if (line.find_first_not_of(" \t") != std::string::npos)
            {
                submit_line(std::move(line));
            }
        }
        inbox_.erase(0, start);
    }

    void write_front() override
    {
        auto self = shared_from_this();
        const auto text = queue_.front().first;
        std::array<asio::const_buffer, 2> bufs{asio::buffer(*text), asio::buffer("\n", 1)};
        asio::async_write(socket_, bufs,
                [this, self, text](const error_code &ec, std::size_t) { on_written(ec); });
    }

    tcp::socket socket_;
    std::string inbox_;
    std::array<char, 4096> chunk_{};
};

class WebSocketSession : public Session
{
public:
    WebSocketSession(SessionId id, Hub &hub, std::size_t max_frames, tcp::socket socket,
            const std::string &pending)
        : Session(id, hub, max_frames), ws_(std::move(socket))
    {
        auto b = buffer_.prepare(pending.size());
        asio::buffer_copy(b, asio::buffer(pending));
        buffer_.commit(pending.size());
    }

    void begin() override
    {
        auto self = shared_from_this();
        http::async_read(ws_.next_layer(), buffer_, request_,
                [this, self](const error_code &ec, std::size_t) {
                    if (ec || !websocket::is_upgrade(request_))
                    {
                        fail();
                        return;
                    }
                    ws_.text(true);
                    ws_.async_accept(request_, [this, self](const error_code &ec2) {
                        if (ec2)
                        {
                            fail();
                            return;
                        }
                        accepted_ = true;
                        read();
                        write_next();
                    });
                });
    }

    void shutdown() override
    {
        error_code ec;
        ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
        ws_.next_layer().close(ec);
    }

private:
    void read()
    {
        auto self = shared_from_this();
        buffer_.consume(buffer_.size());
        ws_.async_read(buffer_, [this, self](const error_code &ec, std::size_t) {
            if (ec)
            {
                fail();
                return;
            }
            submit_line(beast::buffers_to_string(buffer_.data()));
            read();
        });
    }

    void write_front() override
    {
        if (!accepted_)
        {
            writing_ = false;
            return;
        }
        auto self = shared_from_this();
        const auto text = queue_.front().first;
        ws_.async_write(asio::buffer(*text),
                [this, self, text](const error_code &ec, std::size_t) { on_written(ec); });
    }

    websocket::stream<tcp::socket> ws_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> request_;
    bool accepted_ = false;
};

// Reads the first bytes of a connection to choose its framing.
class Sniffer : public std::enable_shared_from_this<Sniffer>
{
public:
    using Start = std::function<void(tcp::socket, std::string, bool websocket)>;

    Sniffer(tcp::socket socket, Start start) : socket_(std::move(socket)), start_(std::move(start))
    {
    }

    void run()
    {
        auto self = shared_from_this();
        socket_.async_read_some(asio::buffer(chunk_),
                [this, self](const error_code &ec, const std::size_t n) {
                    if (ec)
                    {
                        return;
                    }
                    seen_.append(chunk_.data(), n);
                    const std::string get = "GET ";
                    const std::size_t k = std::min(seen_.size(), get.size());
                    if (seen_.compare(0, k, get, 0, k) == 0 && seen_.size() < get.size())
                    {
                        run();
                        return;
                    }
                    const bool ws = seen_.compare(0, get.size(), get) == 0;
                    start_(std::move(socket_), std::move(seen_), ws);
                });
    }

private:
    tcp::socket socket_;
    Start start_;
    std::string seen_;
    std::array<char, 1024> chunk_{};
};

} // namespace

spikechip::ListenAddress spikechip::parse_listen_address(const std::string &text)
{
    const auto colon = text.rfind(':');
    if (colon == std::string::npos)
    {
        throw ConfigError("listen address '" + text + "' must be host:port");
    }
    ListenAddress a;
    if (colon > 0)
    {
        a.host = text.substr(0, colon);
    }
    const std::string port = text.substr(colon + 1);
    std::size_t used = 0;
    int p = -1;
    try
    {
        p = std::stoi(port, &used);
    }
    catch (const std::exception &)
    {
        used = 0;
    }
    if (used != port.size() || port.empty() || p < 0 || p > 65535)
    {
        throw ConfigError("invalid port in listen address '" + text + "'");
    }
    a.port = static_cast<uint16_t>(p);
    return a;
}

spikechip::ListenAddress spikechip::default_listen_address()
{
    const char *env = std::getenv("SPIKECHIP_LISTEN");
    if (env != nullptr && *env != '\0')
    {
        return parse_listen_address(env);
    }
    return {};
}

struct spikechip::MonitorServer::Impl
{
    ServerOptions options;
    asio::io_context io;
    tcp::acceptor acceptor{io};
    Hub hub;
    ProtocolCore core;
    std::map<SessionId, std::shared_ptr<Session>> sessions; // I/O thread only
    std::atomic<SessionId> next_id{1};
    std::thread io_thread;
    std::thread engine_thread;
    asio::signal_set signals{io};

    Impl(ChipGridConfig cfg, std::vector<InputEvent> inputs, ServerOptions opts)
        : options(std::move(opts)),
          core(std::move(cfg), std::move(inputs), [this](const Outbound &o) { dispatch(o); })
    {
        core.set_between_events([this] { drain(); });
    }

    // Engine thread: serialize once, hand to the I/O thread.
    void dispatch(const Outbound &o)
    {
        auto text = std::make_shared<const std::string>(o.message.dump());
        const bool frame = droppable(o.message);
        asio::post(io, [this, to = o.to, text, frame] {
            if (to.has_value())
            {
                const auto it = sessions.find(*to);
                if (it != sessions.end())
                {
                    it->second->deliver(text, frame);
                }
                return;
            }
            for (auto &[id, s] : sessions)
            {
                s->deliver(text, frame);
            }
        });
    }

    void accept()
    {
        acceptor.async_accept([this](const error_code &ec, tcp::socket socket) {
            if (ec)
            {
                return;
            }
            std::make_shared<Sniffer>(std::move(socket),
                    [this](tcp::socket s, std::string seen, const bool ws) {
                        const SessionId id = next_id++;
                        std::shared_ptr<Session> session;
                        if (ws)
                        {
                            session = std::make_shared<WebSocketSession>(
                                    id, hub, options.max_queued_frames, std::move(s), seen);
                        }
                        else
                        {
                            session = std::make_shared<LineSession>(id, hub,
                                    options.max_queued_frames, std::move(s), std::move(seen));
                        }
                        sessions[id] = session;
                        hub.submit(Command{Command::open, id, {}});
                        session->begin();
                    })
                    ->run();
            accept();
        });
    }

    // Engine thread.
    void drain()
    {
        std::deque<Command> batch;
        {
            std::lock_guard lock(hub.mutex);
            batch.swap(hub.commands);
        }
        for (auto &c : batch)
        {
            switch (c.kind)
            {
            case Command::open:
                core.add_session(c.id);
                break;
            case Command::close:
                core.close_session(c.id);
                asio::post(io, [this, id = c.id] { sessions.erase(id); });
                break;
            case Command::message:
                core.handle_text(c.id, c.text);
                break;
            }
        }
    }

    bool stopping()
    {
        std::lock_guard lock(hub.mutex);
        return hub.stopping;
    }

    void engine_loop()
    {
        using clock = std::chrono::steady_clock;
        const auto interval = std::chrono::milliseconds(options.frame_interval_ms);
        auto last = clock::now();
        while (true)
        {
            {
                std::unique_lock lock(hub.mutex);
                if (!core.running() && !core.step_target().has_value())
                {
                    hub.wake.wait_for(lock, interval,
                            [&] { return hub.stopping || !hub.commands.empty(); });
                }
                if (hub.stopping)
                {
                    break;
                }
            }
            drain();
            const auto now = clock::now();
            const double wall = std::chrono::duration<double>(now - last).count();
            last = now;
            try
            {
                // Frames keep flowing through long steps; each chunk is one
                // frame interval of simulated time at the current speed.
                const auto chunk = static_cast<int64_t>(
                        core.speed() * options.frame_interval_ms * 1e6);
                if (core.step_target().has_value())
                {
                    core.advance(std::min(*core.step_target(), core.now() + std::max<int64_t>(chunk, 1)));
                }
                else if (core.running())
                {
                    const auto dt = static_cast<int64_t>(wall * core.speed() * 1e9);
                    core.advance(core.now() + std::clamp<int64_t>(dt, 1, 2 * std::max<int64_t>(chunk, 1)));
                    std::this_thread::sleep_until(now + interval);
                }
            }
            catch (const std::exception &e)
            {
                dispatch(Outbound{std::nullopt, Json{{"type", "error"}, {"message", e.what()}}});
            }
            if (stopping())
            {
                break;
            }
        }
    }
};

spikechip::MonitorServer::MonitorServer(
        ChipGridConfig cfg, std::vector<InputEvent> inputs, ServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(cfg), std::move(inputs), std::move(options)))
{
}

spikechip::MonitorServer::~MonitorServer()
{
    stop();
}

void spikechip::MonitorServer::start()
{
    Impl &m = *impl_;
    error_code ec;
    const auto address = asio::ip::make_address(m.options.listen.host, ec);
    if (ec)
    {
        throw ConfigError("invalid listen host '" + m.options.listen.host + "'");
    }
    const tcp::endpoint ep(address, m.options.listen.port);
    m.acceptor.open(ep.protocol());
    m.acceptor.set_option(asio::socket_base::reuse_address(true));
    m.acceptor.bind(ep, ec);
    if (ec)
    {
        throw ConfigError("cannot listen on " + m.options.listen.host + ":" +
                std::to_string(m.options.listen.port) + ": " + ec.message());
    }
    m.acceptor.listen();
    m.accept();
    if (m.options.handle_signals)
    {
        m.signals.add(SIGINT);
        m.signals.add(SIGTERM);
        m.signals.async_wait([&m](const error_code &sec, int) {
            if (sec)
            {
                return;
            }
            {
                std::lock_guard lock(m.hub.mutex);
                m.hub.stopping = true;
            }
            m.hub.wake.notify_all();
        });
    }
    m.io_thread = std::thread([&m] {
        auto guard = asio::make_work_guard(m.io);
        m.io.run();
    });
    m.engine_thread = std::thread([&m] { m.engine_loop(); });
}

uint16_t spikechip::MonitorServer::port() const
{
    return impl_->acceptor.local_endpoint().port();
}

void spikechip::MonitorServer::wait()
{
    Impl &m = *impl_;
    std::unique_lock lock(m.hub.mutex);
    m.hub.wake.wait(lock, [&] { return m.hub.stopping; });
}

void spikechip::MonitorServer::stop()
{
    Impl &m = *impl_;
    {
        std::lock_guard lock(m.hub.mutex);
        m.hub.stopping = true;
    }
    m.hub.wake.notify_all();
    if (m.engine_thread.joinable())
    {
        m.engine_thread.join();
    }
    if (m.io_thread.joinable())
    {
        asio::post(m.io, [&m] {
            error_code ec;
            m.acceptor.close(ec);
            m.signals.cancel(ec);
            for (auto &[id, s] : m.sessions)
            {
                s->shutdown();
            }
            m.sessions.clear();
            m.io.stop();
        });
        m.io_thread.join();
    }
}
