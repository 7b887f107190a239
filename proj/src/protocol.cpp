// protocol.cpp

#include <regex>

#include "spikechip/protocol.hpp"

namespace
{

using namespace spikechip;

double to_us(const int64_t t_ns)
{
    return static_cast<double>(t_ns) / 1000.0;
}

bool structure_differs(const ChipGridConfig &a, const ChipGridConfig &b)
{
    if (a.width != b.width || a.height != b.height || a.analog != b.analog ||
            a.engine != b.engine || a.mismatch != b.mismatch || a.monitors != b.monitors)
    {
        return true;
    }
    for (std::size_t c = 0; c < a.chips.size(); ++c)
    {
        if (a.chips[c].sensor != b.chips[c].sensor)
        {
            return true;
        }
        for (int k = 0; k < cores_per_chip; ++k)
        {
            for (int n = 0; n < neurons_per_core; ++n)
            {
                const NeuronConfig &x = a.chips[c].cores[k].neurons[n];
                const NeuronConfig &y = b.chips[c].cores[k].neurons[n];
                if (x.srams != y.srams || x.synapses != y.synapses)
                {
                    return true;
                }
            }
        }
    }
    return false;
}

std::string core_prefix(const ChipCoord c, const int core)
{
    return "chip(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")/core" +
            std::to_string(core);
}

} // namespace

std::string spikechip::ParamPath::text() const
{
    std::string s = core_prefix(chip, core);
    if (neuron.has_value())
    {
        s += "/n" + std::to_string(*neuron);
    }
    return s + "/" + name;
}

spikechip::ParamPath spikechip::parse_param_path(const std::string &text)
{
    static const std::regex re(R"(chip\((\d+),(\d+)\)/core(\d+)(?:/n(\d+))?/([A-Z][A-Z0-9_]*))");
    std::smatch m;
    if (!std::regex_match(text, m, re))
    {
        throw ConfigError("malformed parameter path '" + text +
                "' (expected chip(x,y)/coreC/NAME or chip(x,y)/coreC/nN/NAME)");
    }
    ParamPath p;
    p.chip = {std::stoi(m[1]), std::stoi(m[2])};
    p.core = std::stoi(m[3]);
    if (m[4].matched)
    {
        p.neuron = std::stoi(m[4]);
    }
    p.name = m[5];
    if (p.core >= cores_per_chip || (p.neuron.has_value() && *p.neuron >= neurons_per_core))
    {
        throw ConfigError("parameter path '" + text + "' is out of range");
    }
    return p;
}

std::vector<std::string> spikechip::config_changes(
        const ChipGridConfig &from, const ChipGridConfig &to)
{
    std::vector<std::string> out;
    if (from.width != to.width || from.height != to.height)
    {
        out.emplace_back("structure");
        return out;
    }
    for (int ci = 0; ci < static_cast<int>(from.chips.size()); ++ci)
    {
        const ChipCoord cc{ci % from.width, ci / from.width};
        for (int k = 0; k < cores_per_chip; ++k)
        {
            const CoreConfig &a = from.chips[ci].cores[k];
            const CoreConfig &b = to.chips[ci].cores[k];
            for (const auto &spec : core_bias_table())
            {
                if (a.bias_code(spec.name) != b.bias_code(spec.name))
                {
                    out.push_back(core_prefix(cc, k) + "/" + spec.name);
                }
            }
            if (a.de_mux != b.de_mux)
            {
                out.push_back(core_prefix(cc, k) + "/DE_MUX");
            }
            for (int n = 0; n < neurons_per_core; ++n)
            {
                if (a.neurons[n].latches == b.neurons[n].latches)
                {
                    continue;
                }
                for (const auto &[name, ptr] : latch_table())
                {
                    if (a.neurons[n].latches.*ptr != b.neurons[n].latches.*ptr)
                    {
                        out.push_back(ParamPath{cc, k, n, name}.text());
                    }
                }
            }
        }
    }
    if (structure_differs(from, to))
    {
        out.emplace_back("structure");
    }
    return out;
}

spikechip::ProtocolCore::ProtocolCore(
        ChipGridConfig cfg, std::vector<InputEvent> inputs, Sink sink)
    : initial_(std::move(cfg)), inputs_(std::move(inputs)), sink_(std::move(sink))
{
    sim_ = std::make_unique<Simulator>(initial_);
    sim_->inject(inputs_);
}

spikechip::SessionId spikechip::ProtocolCore::open_session()
{
    const SessionId id = next_session_++;
    sessions_[id] = {};
    return id;
}

void spikechip::ProtocolCore::add_session(const SessionId id)
{
    sessions_[id] = {};
    next_session_ = std::max(next_session_, id + 1);
}

void spikechip::ProtocolCore::close_session(const SessionId id)
{
    sessions_.erase(id);
}

int64_t spikechip::ProtocolCore::now() const
{
    return sim_->now();
}

std::shared_ptr<const spikechip::Json> spikechip::ProtocolCore::snapshot() const
{
    if (!snapshot_)
    {
        snapshot_ = std::make_shared<const Json>(config_to_json(sim_->config()));
    }
    return snapshot_;
}

void spikechip::ProtocolCore::reply(const SessionId to, const Json &request, Json message)
{
    if (request.is_object() && request.contains("id"))
    {
        message["id"] = request.at("id");
    }
    sink_(Outbound{to, std::move(message)});
}

void spikechip::ProtocolCore::broadcast(Json message)
{
    sink_(Outbound{std::nullopt, std::move(message)});
}

void spikechip::ProtocolCore::error_reply(
        const SessionId to, const Json &request, const std::string &what)
{
    reply(to, request, Json{{"type", "error"}, {"message", what}});
}

void spikechip::ProtocolCore::handle_text(const SessionId from, const std::string &line)
{
    Json m;
    try
    {
        m = Json::parse(line);
    }
    catch (const Json::parse_error &e)
    {
        error_reply(from, Json(), std::string("message is not valid JSON: ") + e.what());
        return;
    }
    handle(from, m);
}

void spikechip::ProtocolCore::handle(const SessionId from, const Json &m)
{
    if (!m.is_object() || !m.contains("type") || !m.at("type").is_string())
    {
        error_reply(from, m, "message needs a string 'type'");
        return;
    }
    const std::string type = m.at("type").get<std::string>();
    try
    {
        if (type == "get_config")
        {
            reply(from, m, Json{{"type", "config"}, {"version", version_}, {"config", *snapshot()}});
        }
        else if (type == "apply_config")
        {
            on_apply(from, m);
        }
        else if (type == "param_update")
        {
            on_param(from, m);
        }
        else if (type == "latch_update")
        {
            on_latch(from, m);
        }
        else if (type == "inject_events")
        {
            on_inject(from, m);
        }
        else if (type == "run_control")
        {
            on_run_control(from, m);
        }
        else if (type == "subscribe")
        {
            on_subscribe(from, m);
        }
        else if (type == "counters")
        {
            reply(from, m, counters_message());
        }
        else
        {
            error_reply(from, m, "unknown message type '" + type + "'");
        }
    }
    catch (const std::exception &e)
    {
        error_reply(from, m, e.what());
    }
}

void spikechip::ProtocolCore::commit(const ChipGridConfig &next,
        const std::vector<std::string> &changes, const SessionId from, const Json &request,
        Json echo)
{
    if (!changes.empty())
    {
        sim_->apply_config(next);
        ++version_;
        snapshot_.reset();
        for (auto it = sessions_.begin(); it != sessions_.end(); ++it)
        {
            auto &taps = it->second.taps;
            std::erase_if(taps, [&](const std::size_t t) { return t >= next.monitors.size(); });
        }
    }
    echo["version"] = version_;
    echo["changes"] = changes;
    reply(from, request, std::move(echo));
    if (!changes.empty())
    {
        broadcast(Json{{"type", "config_changed"}, {"version", version_}, {"changes", changes},
                {"session", from}});
    }
}

void spikechip::ProtocolCore::on_apply(const SessionId from, const Json &m)
{
    if (!m.contains("version") || !m.at("version").is_number_integer())
    {
        error_reply(from, m, "apply_config needs the version it was based on");
        return;
    }
    if (m.at("version").get<uint64_t>() != version_)
    {
        reply(from, m, Json{{"type", "conflict"}, {"version", version_},
                               {"message", "configuration changed since version " +
                                       m.at("version").dump()}});
        return;
    }
    if (!m.contains("config"))
    {
        error_reply(from, m, "apply_config needs a config document");
        return;
    }
    const ChipGridConfig next = config_from_json(m.at("config"));
    commit(next, config_changes(sim_->config(), next), from, m, Json{{"type", "applied"}});
}

namespace
{

bool stale(const Json &m, const uint64_t version)
{
    return m.contains("version") && m.at("version").is_number_integer() &&
            m.at("version").get<uint64_t>() != version;
}

} // namespace

void spikechip::ProtocolCore::on_param(const SessionId from, const Json &m)
{
    if (stale(m, version_))
    {
        reply(from, m, Json{{"type", "conflict"}, {"version", version_}});
        return;
    }
    const ParamPath p = parse_param_path(m.at("path").get<std::string>());
    const BiasSpec *spec = find_bias(p.name);
    if (spec == nullptr || p.neuron.has_value())
    {
        throw ConfigError("'" + p.text() + "' is not a core bias");
    }
    BiasCode code;
    code.coarse = m.at("coarse").get<int>();
    code.fine = m.at("fine").get<int>();
    code.k_parameter = m.value("k", 1.0);
    code.validate();
    ChipGridConfig next = sim_->config();
    if (next.chip_index(p.chip) < 0)
    {
        throw ConfigError("'" + p.text() + "' lies outside the grid");
    }
    next.chip(p.chip).cores[p.core].set_bias(p.name, code);
    const AnalogConfig &analog = next.analog;
    Json echo{{"type", "param_applied"}, {"path", p.text()}, {"coarse", code.coarse},
            {"fine", code.fine}, {"k", code.k_parameter},
            {"current", resolve_bias(code, analog.coarse_table)},
            {"value", bias_value(*spec, code, analog)}};
    commit(next, config_changes(sim_->config(), next), from, m, std::move(echo));
}

void spikechip::ProtocolCore::on_latch(const SessionId from, const Json &m)
{
    if (stale(m, version_))
    {
        reply(from, m, Json{{"type", "conflict"}, {"version", version_}});
        return;
    }
    const ParamPath p = parse_param_path(m.at("path").get<std::string>());
    const bool value = m.at("value").get<bool>();
    ChipGridConfig next = sim_->config();
    if (next.chip_index(p.chip) < 0)
    {
        throw ConfigError("'" + p.text() + "' lies outside the grid");
    }
    CoreConfig &core = next.chip(p.chip).cores[p.core];
    if (p.name == "DE_MUX" && !p.neuron.has_value())
    {
        core.de_mux = value;
    }
    else
    {
        bool *latch = p.neuron.has_value() ? find_latch(core.neurons[*p.neuron].latches, p.name) :
                                             nullptr;
        if (latch == nullptr)
        {
            throw ConfigError("'" + p.text() + "' is not a latch");
        }
        *latch = value;
    }
    commit(next, config_changes(sim_->config(), next), from, m,
            Json{{"type", "latch_applied"}, {"path", p.text()}, {"value", value}});
}

void spikechip::ProtocolCore::on_inject(const SessionId from, const Json &m)
{
    std::vector<InputEvent> events;
    if (m.contains("text"))
    {
        events = parse_event_text(m.at("text").get<std::string>());
    }
    for (const auto &e : m.value("events", Json::array()))
    {
        InputEvent ev;
        ev.t_ns = std::llround(e.at("t_us").get<double>() * 1000.0);
        const Json &w = e.at("word");
        if (w.is_string())
        {
            const std::string s = w.get<std::string>();
            std::size_t used = 0;
            ev.word = static_cast<uint32_t>(std::stoul(s, &used, 16));
            if (used != s.size())
            {
                throw ConfigError("invalid hex word '" + s + "'");
            }
        }
        else
        {
            ev.word = w.get<uint32_t>();
        }
        if (e.contains("chip"))
        {
            ev.chip = {e.at("chip").at(0).get<int>(), e.at("chip").at(1).get<int>()};
        }
        events.push_back(ev);
    }
    if (m.value("relative", false))
    {
        for (auto &e : events)
        {
            e.t_ns += sim_->now();
        }
    }
    sim_->inject(events);
    reply(from, m, Json{{"type", "injected"}, {"count", events.size()}});
}

void spikechip::ProtocolCore::on_run_control(const SessionId from, const Json &m)
{
    const std::string action = m.at("action").get<std::string>();
    if (action == "run")
    {
        const double speed = m.value("speed", speed_);
        if (!(speed > 0.0))
        {
            throw ConfigError("run speed must be positive");
        }
        speed_ = speed;
        running_ = true;
        step_target_.reset();
    }
    else if (action == "pause")
    {
        running_ = false;
        step_target_.reset();
    }
    else if (action == "step")
    {
        const double d_us = m.at("duration_us").get<double>();
        if (!(d_us > 0.0))
        {
            throw ConfigError("step duration must be positive");
        }
        running_ = false;
        step_target_ = sim_->now() + std::llround(d_us * 1000.0);
    }
    else if (action == "reset")
    {
        running_ = false;
        step_target_.reset();
        if (in_advance_)
        {
            reset_pending_ = true;
        }
        else
        {
            reset_simulator();
        }
    }
    else
    {
        throw ConfigError("unknown run_control action '" + action + "'");
    }
    Json state{{"type", "run_state"}, {"running", running_}, {"speed", speed_},
            {"t_us", to_us(sim_->now())}};
    if (step_target_.has_value())
    {
        state["step_target_us"] = to_us(*step_target_);
    }
    reply(from, m, state);
    broadcast(state);
}

void spikechip::ProtocolCore::reset_simulator()
{
    reset_pending_ = false;
    const ChipGridConfig cfg = sim_->config();
    sim_ = std::make_unique<Simulator>(cfg);
    sim_->inject(inputs_);
    published_ns_ = 0;
    for (auto &[id, s] : sessions_)
    {
        s.seen.clear();
    }
}

void spikechip::ProtocolCore::on_subscribe(const SessionId from, const Json &m)
{
    Subscription &s = sessions_.at(from);
    const auto &monitors = sim_->config().monitors;
    if (m.contains("taps"))
    {
        std::set<std::size_t> taps;
        const Json &t = m.at("taps");
        if (t.is_string() && t.get<std::string>() == "all")
        {
            for (std::size_t i = 0; i < monitors.size(); ++i)
            {
                taps.insert(i);
            }
        }
        else
        {
            for (const auto &e : t)
            {
                std::size_t index = monitors.size();
                if (e.is_number_integer())
                {
                    index = e.get<std::size_t>();
                }
                else if (e.is_string())
                {
                    for (std::size_t i = 0; i < monitors.size(); ++i)
                    {
                        if (monitors[i].label() == e.get<std::string>())
                        {
                            index = i;
                        }
                    }
                }
                if (index >= monitors.size())
                {
                    throw ConfigError("no monitor tap " + e.dump());
                }
                taps.insert(index);
            }
        }
        s.taps = std::move(taps);
    }
    s.raster = m.value("raster", s.raster);
    s.counters = m.value("counters", s.counters);
    const int decimation = m.value("decimation", s.decimation);
    if (decimation < 1)
    {
        throw ConfigError("decimation must be at least 1");
    }
    s.decimation = decimation;
    Json taps = Json::array();
    for (const std::size_t i : s.taps)
    {
        taps.push_back(Json{{"index", i}, {"label", monitors[i].label()}});
    }
    reply(from, m, Json{{"type", "subscribed"}, {"taps", taps}, {"raster", s.raster},
                           {"counters", s.counters}, {"decimation", s.decimation}});
}

spikechip::Json spikechip::ProtocolCore::counters_message() const
{
    Json c = counters_to_json(sim_->report());
    c.erase("report_hash");
    c.erase("errors");
    c.erase("until_us");
    c["type"] = "counters";
    c["t_us"] = to_us(sim_->now());
    c["version"] = version_;
    return c;
}

void spikechip::ProtocolCore::set_between_events(std::function<void()> hook)
{
    between_ = std::move(hook);
}

void spikechip::ProtocolCore::advance(const int64_t t_ns)
{
    if (t_ns > sim_->now())
    {
        in_advance_ = true;
        sim_->set_command_hook([this] {
            if (between_)
            {
                between_();
            }
        });
        try
        {
            sim_->run_until(t_ns);
        }
        catch (...)
        {
            in_advance_ = false;
            throw;
        }
        in_advance_ = false;
    }
    if (step_target_.has_value() && sim_->now() >= *step_target_)
    {
        step_target_.reset();
        broadcast(Json{{"type", "run_state"}, {"running", running_}, {"speed", speed_},
                {"t_us", to_us(sim_->now())}});
    }
    publish(published_ns_, sim_->now());
    published_ns_ = sim_->now();
    if (reset_pending_)
    {
        reset_simulator();
    }
}

void spikechip::ProtocolCore::publish(const int64_t t0, const int64_t t1)
{
    const SimulationReport &r = sim_->report();
    for (auto &[id, s] : sessions_)
    {
        if (!s.taps.empty())
        {
            Json taps = Json::array();
            for (const std::size_t i : s.taps)
            {
                if (i >= r.traces.size())
                {
                    continue;
                }
                Json samples = Json::array();
                uint64_t &seen = s.seen[i];
                for (const auto &x : r.traces[i].samples)
                {
                    if (seen++ % static_cast<uint64_t>(s.decimation) == 0)
                    {
                        samples.push_back(Json::array({to_us(x.t_ns), x.value}));
                    }
                }
                taps.push_back(Json{{"index", i}, {"label", r.traces[i].tap.label()},
                        {"samples", samples}});
            }
            sink_(Outbound{id, Json{{"type", "trace_frame"}, {"t0_us", to_us(t0)},
                                       {"t1_us", to_us(t1)}, {"taps", taps}}});
        }
        if (s.raster)
        {
            Json spikes = Json::array();
            for (const auto &x : r.spikes)
            {
                spikes.push_back(
                        Json::array({to_us(x.t_ns), x.chip.x, x.chip.y, x.core, x.neuron}));
            }
            sink_(Outbound{id, Json{{"type", "raster_frame"}, {"t0_us", to_us(t0)},
                                       {"t1_us", to_us(t1)}, {"spikes", spikes}}});
        }
        if (s.counters)
        {
            sink_(Outbound{id, counters_message()});
        }
    }
    for (const auto &e : r.errors)
    {
        broadcast(Json{{"type", "error"}, {"t_us", to_us(e.t_ns)}, {"message", e.message}});
    }
    sim_->clear_records();
}
