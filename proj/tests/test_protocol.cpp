// test_protocol.cpp

#include <map>

#include "doctest.h"
#include "spikechip/protocol.hpp"

using namespace spikechip;

namespace
{

constexpr int64_t ms = 1000000;

// Neuron 0 of core 0 with a DC input and a short refractory period, and a
// membrane probe every 100 us.
ChipGridConfig probe_config(const BiasCode dc = {0, 0})
{
    ChipGridConfig c;
    CoreConfig &core = c.chips[0].cores[0];
    core.set_bias("SOIF_DC", dc);
    core.set_bias("SOIF_REFR", {2, 255});
    core.neurons[0].latches.SO_DC = true;
    MonitorTap tap;
    tap.kind = MonitorKind::probe;
    tap.source = MonitorSource::membrane;
    tap.interval_ns = 100000;
    c.monitors.push_back(tap);
    return c;
}

struct Harness
{
    std::map<SessionId, std::vector<Json>> inbox;
    ProtocolCore core;
    std::vector<SessionId> ids;

    explicit Harness(ChipGridConfig cfg, std::vector<InputEvent> inputs = {})
        : core(std::move(cfg), std::move(inputs), [this](const Outbound &o) { route(o); })
    {
    }

    void route(const Outbound &o)
    {
        if (o.to.has_value())
        {
            inbox[*o.to].push_back(o.message);
            return;
        }
        for (const SessionId id : ids)
        {
            inbox[id].push_back(o.message);
        }
    }

    SessionId open()
    {
        ids.push_back(core.open_session());
        return ids.back();
    }

    // Sends one message and returns the replies addressed to the sender.
    std::vector<Json> send(const SessionId id, const Json &m)
    {
        inbox[id].clear();
        core.handle(id, m);
        return inbox[id];
    }

    Json first(const SessionId id, const Json &m, const std::string &type)
    {
        for (const auto &r : send(id, m))
        {
            if (r.at("type") == type)
            {
                return r;
            }
        }
        FAIL("no " << type << " reply to " << m.dump());
        return {};
    }

    std::vector<Json> frames(const SessionId id, const std::string &type) const
    {
        std::vector<Json> out;
        const auto it = inbox.find(id);
        if (it == inbox.end())
        {
            return out;
        }
        for (const auto &m : it->second)
        {
            if (m.at("type") == type)
            {
                out.push_back(m);
            }
        }
        return out;
    }
};

std::size_t raster_count(const std::vector<Json> &frames)
{
    std::size_t n = 0;
    for (const auto &f : frames)
    {
        n += f.at("spikes").size();
    }
    return n;
}

} // namespace

TEST_CASE("parameter paths")
{
    const ParamPath p = parse_param_path("chip(1,2)/core3/SOIF_DC");
    CHECK(p.chip == ChipCoord{1, 2});
    CHECK(p.core == 3);
    CHECK(!p.neuron.has_value());
    CHECK(p.name == "SOIF_DC");
    CHECK(p.text() == "chip(1,2)/core3/SOIF_DC");
    const ParamPath q = parse_param_path("chip(0,0)/core1/n255/SOIF_TYPE");
    CHECK(q.neuron == 255);
    CHECK(q.text() == "chip(0,0)/core1/n255/SOIF_TYPE");
    CHECK_THROWS_AS(parse_param_path("chip(0,0)/core4/SOIF_DC"), ConfigError);
    CHECK_THROWS_AS(parse_param_path("chip(0,0)/core0/n256/SOIF_DC"), ConfigError);
    CHECK_THROWS_AS(parse_param_path("core0/SOIF_DC"), ConfigError);
}

TEST_CASE("config diff lists only what changed")
{
    const ChipGridConfig a = probe_config();
    ChipGridConfig b = a;
    CHECK(config_changes(a, b).empty());
    b.chips[0].cores[2].set_bias("SOIF_GAIN", {4, 4});
    b.chips[0].cores[0].neurons[9].latches.SOIF_TYPE = true;
    b.chips[0].cores[1].de_mux = true;
    const std::vector<std::string> want = {"chip(0,0)/core0/n9/SOIF_TYPE",
            "chip(0,0)/core1/DE_MUX", "chip(0,0)/core2/SOIF_GAIN"};
    CHECK(config_changes(a, b) == want);
    // Setting a bias to its nominal code is not a change.
    ChipGridConfig c = a;
    c.chips[0].cores[3].set_bias("SOIF_LEAK", find_bias("SOIF_LEAK")->nominal);
    CHECK(config_changes(a, c).empty());
    c.chips[0].cores[3].neurons[0].synapses[0].cam_tag = 1;
    CHECK(config_changes(a, c) == std::vector<std::string>{"structure"});
}

TEST_CASE("get, modify, apply, get")
{
    Harness h(probe_config());
    const SessionId s = h.open();
    const Json got = h.first(s, Json{{"type", "get_config"}, {"id", 7}}, "config");
    CHECK(got.at("id") == 7);
    CHECK(got.at("version") == 1);
    CHECK(config_from_json(got.at("config")) == probe_config());

    Json doc = got.at("config");
    doc["chips"][0]["cores"][0]["biases"]["SOIF_DC"] = Json::array({3, 40});
    const Json applied = h.first(s,
            Json{{"type", "apply_config"}, {"version", 1}, {"config", doc}}, "applied");
    CHECK(applied.at("version") == 2);
    CHECK(applied.at("changes") == Json::array({"chip(0,0)/core0/SOIF_DC"}));

    const Json again = h.first(s, Json{{"type", "get_config"}}, "config");
    CHECK(again.at("version") == 2);
    CHECK(again.at("config") == doc);
    CHECK(h.core.simulator().config().chips[0].cores[0].bias_code("SOIF_DC") == BiasCode{3, 40});

    // Applying the same document again changes nothing and keeps the version.
    const Json same = h.first(s,
            Json{{"type", "apply_config"}, {"version", 2}, {"config", doc}}, "applied");
    CHECK(same.at("version") == 2);
    CHECK(same.at("changes").empty());
}

TEST_CASE("stale apply is refused without change")
{
    Harness h(probe_config());
    const SessionId a = h.open();
    const SessionId b = h.open();
    Json doc = h.first(a, Json{{"type", "get_config"}}, "config").at("config");
    h.first(b, Json{{"type", "param_update"}, {"path", "chip(0,0)/core0/SOIF_GAIN"}, {"coarse", 2},
                    {"fine", 9}},
            "param_applied");
    const auto before = h.core.snapshot();
    CHECK(h.core.version() == 2);

    doc["chips"][0]["cores"][0]["biases"]["SOIF_DC"] = Json::array({5, 255});
    const Json c = h.first(a, Json{{"type", "apply_config"}, {"version", 1}, {"config", doc}},
            "conflict");
    CHECK(c.at("version") == 2);
    CHECK(h.core.version() == 2);
    CHECK(*h.core.snapshot() == *before);
    CHECK(h.core.simulator().config().chips[0].cores[0].bias_code("SOIF_DC") == BiasCode{0, 0});

    const Json pc = h.first(a, Json{{"type", "param_update"}, {"path", "chip(0,0)/core0/SOIF_DC"},
                                       {"coarse", 5}, {"fine", 255}, {"version", 1}},
            "conflict");
    CHECK(pc.at("version") == 2);
    CHECK(*h.core.snapshot() == *before);
}

TEST_CASE("all clients see the same document after any apply")
{
    Harness h(probe_config());
    const SessionId a = h.open();
    const SessionId b = h.open();
    const SessionId c = h.open();
    h.inbox.clear();
    h.core.handle(a, Json{{"type", "latch_update"}, {"path", "chip(0,0)/core2/n4/SOIF_TYPE"},
                                 {"value", true}});
    for (const SessionId s : {b, c})
    {
        const auto changed = h.frames(s, "config_changed");
        REQUIRE(changed.size() == 1);
        CHECK(changed[0].at("version") == 2);
        CHECK(changed[0].at("changes") == Json::array({"chip(0,0)/core2/n4/SOIF_TYPE"}));
    }
    const Json ga = h.first(a, Json{{"type", "get_config"}}, "config");
    const Json gb = h.first(b, Json{{"type", "get_config"}}, "config");
    const Json gc = h.first(c, Json{{"type", "get_config"}}, "config");
    CHECK(ga == gb);
    CHECK(gb == gc);
    CHECK(config_from_json(ga.at("config")).chips[0].cores[2].neurons[4].latches.SOIF_TYPE);
}

TEST_CASE("param_update echoes the resolved current")
{
    Harness h(probe_config());
    const SessionId s = h.open();
    for (const BiasCode code : {BiasCode{0, 0}, BiasCode{3, 128}, BiasCode{5, 255}, BiasCode{1, 1}})
    {
        const Json r = h.first(s, Json{{"type", "param_update"}, {"path", "chip(0,0)/core1/SOIF_DC"},
                                          {"coarse", code.coarse}, {"fine", code.fine}},
                "param_applied");
        CHECK(r.at("current").get<double>() == resolve_bias(code));
        CHECK(r.at("coarse") == code.coarse);
        CHECK(r.at("fine") == code.fine);
        CHECK(h.core.simulator().config().chips[0].cores[1].bias_code("SOIF_DC") == code);
    }
    CHECK(h.first(s, Json{{"type", "param_update"}, {"path", "chip(0,0)/core1/SOIF_DC"},
                          {"coarse", 6}, {"fine", 0}},
                  "error")
                    .at("message")
                    .get<std::string>()
                    .size() > 0);
    CHECK(h.frames(s, "error").size() == 1);
    h.first(s, Json{{"type", "param_update"}, {"path", "chip(0,0)/core1/NOPE"}, {"coarse", 1},
                    {"fine", 1}},
            "error");
    h.first(s, Json{{"type", "param_update"}, {"path", "chip(0,1)/core1/SOIF_DC"}, {"coarse", 1},
                    {"fine", 1}},
            "error");
}

TEST_CASE("latch updates reach neurons and DE_MUX")
{
    Harness h(probe_config());
    const SessionId s = h.open();
    h.first(s, Json{{"type", "latch_update"}, {"path", "chip(0,0)/core3/DE_MUX"}, {"value", true}},
            "latch_applied");
    CHECK(h.core.simulator().config().chips[0].cores[3].de_mux);
    h.first(s, Json{{"type", "latch_update"}, {"path", "chip(0,0)/core0/n0/SO_DC"}, {"value", false}},
            "latch_applied");
    CHECK(!h.core.simulator().config().chips[0].cores[0].neurons[0].latches.SO_DC);
    h.first(s, Json{{"type", "latch_update"}, {"path", "chip(0,0)/core0/n0/NOPE"}, {"value", true}},
            "error");
    h.first(s, Json{{"type", "latch_update"}, {"path", "chip(0,0)/core0/SO_DC"}, {"value", true}},
            "error");
}

TEST_CASE("raising SOIF_DC raises the firing in subsequent frames")
{
    Harness h(probe_config({0, 0}));
    const SessionId s = h.open();
    const Json sub = h.first(s, Json{{"type", "subscribe"}, {"taps", Json::array({0})},
                                       {"raster", true}},
            "subscribed");
    CHECK(sub.at("taps")[0].at("label") == probe_config().monitors[0].label());

    h.inbox.clear();
    h.core.advance(50 * ms);
    const std::size_t low = raster_count(h.frames(s, "raster_frame"));
    const auto traces_low = h.frames(s, "trace_frame");
    REQUIRE(traces_low.size() == 1);
    // samples at 0, 0.1, ..., 50 ms
    CHECK(traces_low[0].at("taps")[0].at("samples").size() == 501);
    double vmax_low = 0.0;
    for (const auto &x : traces_low[0].at("taps")[0].at("samples"))
    {
        vmax_low = std::max(vmax_low, x[1].get<double>());
    }

    h.first(s, Json{{"type", "param_update"}, {"path", "chip(0,0)/core0/SOIF_DC"}, {"coarse", 5},
                    {"fine", 255}},
            "param_applied");
    h.inbox.clear();
    h.core.advance(100 * ms);
    const std::size_t high = raster_count(h.frames(s, "raster_frame"));
    const auto traces_high = h.frames(s, "trace_frame");
    REQUIRE(traces_high.size() == 1);
    CHECK(traces_high[0].at("t0_us") == 50000.0);
    CHECK(traces_high[0].at("t1_us") == 100000.0);
    double vmax_high = 0.0;
    for (const auto &x : traces_high[0].at("taps")[0].at("samples"))
    {
        vmax_high = std::max(vmax_high, x[1].get<double>());
    }
    CHECK(low == 0);
    CHECK(high > 10);
    CHECK(vmax_high > vmax_low);
}

TEST_CASE("decimation and counters frames")
{
    Harness h(probe_config({5, 255}));
    const SessionId s = h.open();
    h.first(s, Json{{"type", "subscribe"}, {"taps", "all"}, {"decimation", 10}, {"counters", true}},
            "subscribed");
    h.inbox.clear();
    h.core.advance(10 * ms);
    h.core.advance(20 * ms);
    const auto tf = h.frames(s, "trace_frame");
    REQUIRE(tf.size() == 2);
    // samples at 0, 0.1, ..., 20 ms: 201 samples, every tenth kept
    std::size_t kept = 0;
    for (const auto &f : tf)
    {
        kept += f.at("taps")[0].at("samples").size();
    }
    CHECK(kept == 21);
    CHECK(tf[0].at("taps")[0].at("samples")[1][0] == 1000.0);
    const auto cf = h.frames(s, "counters");
    REQUIRE(cf.size() == 2);
    CHECK(cf[1].at("engine").at("spikes").get<uint64_t>() >=
            cf[0].at("engine").at("spikes").get<uint64_t>());
    CHECK(cf[1].at("t_us") == 20000.0);
    h.first(s, Json{{"type", "subscribe"}, {"taps", Json::array({3})}}, "error");
}

TEST_CASE("injected events drive the network")
{
    ChipGridConfig cfg = probe_config();
    SynapseConfig &syn = cfg.chips[0].cores[0].neurons[0].synapses[0];
    syn.cam_tag = 12;
    syn.weight_bits = {true, true, true, true};
    syn.set_target(Dendrite::ampa);
    cfg.chips[0].cores[0].set_bias("SYAM_W0", {5, 255});
    Harness h(cfg);
    const SessionId s = h.open();
    const uint32_t w = encode_word(InterNeuronEvent::make(12, 0, 0, 0b0001));
    const Json r = h.first(s, Json{{"type", "inject_events"},
                                      {"events", Json::array({Json{{"t_us", 1000.0}, {"word", w}},
                                                         Json{{"t_us", 1500.0},
                                                                 {"word", "0x00000"}}})}},
            "injected");
    CHECK(r.at("count") == 2);
    h.first(s, Json{{"type", "inject_events"}, {"text", "2000.0 " + [&] {
                                                   char b[16];
                                                   std::snprintf(b, sizeof b, "%06X", w);
                                                   return std::string(b);
                                               }() + "\n"}},
            "injected");
    h.core.advance(5 * ms);
    CHECK(h.core.simulator().report().counters.cam_matches == 2);
    CHECK(h.core.simulator().report().counters.input_events == 3);

    // Past events become error frames.
    h.inbox.clear();
    h.first(s, Json{{"type", "inject_events"},
                    {"events", Json::array({Json{{"t_us", 10.0}, {"word", w}}})}},
            "injected");
    h.core.advance(6 * ms);
    CHECK(h.frames(s, "error").size() == 1);
    // relative timing counts from now
    h.first(s, Json{{"type", "inject_events"}, {"relative", true},
                    {"events", Json::array({Json{{"t_us", 10.0}, {"word", w}}})}},
            "injected");
    h.core.advance(7 * ms);
    CHECK(h.core.simulator().report().counters.cam_matches == 3);
}

TEST_CASE("run control")
{
    Harness h(probe_config({5, 255}));
    const SessionId s = h.open();
    CHECK(!h.core.running());
    Json r = h.first(s, Json{{"type", "run_control"}, {"action", "run"}, {"speed", 0.5}}, "run_state");
    CHECK(r.at("running") == true);
    CHECK(h.core.speed() == 0.5);
    r = h.first(s, Json{{"type", "run_control"}, {"action", "step"}, {"duration_us", 2500.0}},
            "run_state");
    CHECK(r.at("running") == false);
    REQUIRE(h.core.step_target().has_value());
    CHECK(*h.core.step_target() == 2500000);
    h.core.advance(*h.core.step_target());
    CHECK(!h.core.step_target().has_value());
    CHECK(h.core.now() == 2500000);
    h.first(s, Json{{"type", "run_control"}, {"action", "reset"}}, "run_state");
    CHECK(h.core.now() == 0);
    h.first(s, Json{{"type", "run_control"}, {"action", "warp"}}, "error");
    h.first(s, Json{{"type", "run_control"}, {"action", "run"}, {"speed", -1.0}}, "error");
}

TEST_CASE("malformed messages get error replies")
{
    Harness h(probe_config());
    const SessionId s = h.open();
    h.inbox.clear();
    h.core.handle_text(s, "{nope");
    REQUIRE(h.inbox[s].size() == 1);
    CHECK(h.inbox[s][0].at("type") == "error");
    CHECK(h.first(s, Json{{"type", "bogus"}, {"id", "x"}}, "error").at("id") == "x");
    h.first(s, Json{{"kind", "get_config"}}, "error");
    h.first(s, Json{{"type", "apply_config"}, {"config", Json::object()}}, "error");
    h.first(s, Json{{"type", "apply_config"}, {"version", 1},
                    {"config", Json{{"schema_version", 9}}}},
            "error");
    CHECK(h.core.version() == 1);
}

TEST_CASE("commands drained between events take effect at the next event")
{
    Harness h(probe_config({0, 0}));
    const SessionId s = h.open();
    h.first(s, Json{{"type", "subscribe"}, {"raster", true}}, "subscribed");
    int64_t applied_at = -1;
    h.core.set_between_events([&] {
        if (applied_at < 0 && h.core.now() >= 20 * ms)
        {
            applied_at = h.core.now();
            h.core.handle(s, Json{{"type", "param_update"}, {"path", "chip(0,0)/core0/SOIF_DC"},
                                     {"coarse", 5}, {"fine", 255}});
        }
    });
    h.core.advance(60 * ms);
    // monitor ticks every 100 us bound the latency
    CHECK(applied_at >= 20 * ms);
    CHECK(applied_at <= 20 * ms + 100000);
    const auto raster = h.frames(s, "raster_frame");
    REQUIRE(raster.size() == 1);
    const Json &spikes = raster[0].at("spikes");
    REQUIRE(!spikes.empty());
    CHECK(spikes[0][0].get<double>() * 1000.0 > static_cast<double>(applied_at));
}

TEST_CASE("replaying a message log reproduces the engine state")
{
    const std::vector<Json> log = {
            Json{{"type", "subscribe"}, {"taps", "all"}, {"raster", true}},
            Json{{"type", "param_update"}, {"path", "chip(0,0)/core0/SOIF_DC"}, {"coarse", 4},
                    {"fine", 200}},
            Json{{"type", "run_control"}, {"action", "step"}, {"duration_us", 10000.0}},
            Json{{"type", "latch_update"}, {"path", "chip(0,0)/core0/n0/SO_ADAPTATION"},
                    {"value", true}},
            Json{{"type", "run_control"}, {"action", "step"}, {"duration_us", 15000.0}},
    };
    auto play = [&] {
        Harness h(probe_config());
        const SessionId s = h.open();
        for (const auto &m : log)
        {
            h.core.handle(s, m);
            if (const auto t = h.core.step_target())
            {
                h.core.advance(*t);
            }
        }
        return std::make_pair(h.core.simulator().state_hash(), h.inbox[s]);
    };
    const auto a = play();
    const auto b = play();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}
