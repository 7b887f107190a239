// config_io.cpp

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "spikechip/config_io.hpp"

namespace
{

using namespace spikechip;
namespace fs = std::filesystem;

[[noreturn]] void schema_error(const std::string &where, const std::string &what)
{
    throw ConfigError(where + ": " + what);
}

const Json &member(const Json &obj, const char *key, const std::string &where)
{
    if (!obj.is_object() || !obj.contains(key))
    {
        schema_error(where, std::string("missing '") + key + "'");
    }
    return obj.at(key);
}

template <class T>
T value_as(const Json &j, const std::string &where)
{
    try
    {
        return j.get<T>();
    }
    catch (const Json::exception &)
    {
        schema_error(where, "unexpected value " + j.dump());
    }
}

template <class T>
T optional_value(const Json &obj, const char *key, const T fallback, const std::string &where)
{
    if (!obj.is_object() || !obj.contains(key))
    {
        return fallback;
    }
    return value_as<T>(obj.at(key), where + "/" + key);
}

Json coord_json(const ChipCoord c)
{
    return Json::array({c.x, c.y});
}

ChipCoord coord_from(const Json &j, const std::string &where)
{
    if (!j.is_array() || j.size() != 2)
    {
        schema_error(where, "expected [x, y]");
    }
    return {value_as<int>(j[0], where), value_as<int>(j[1], where)};
}

Json bias_json(const BiasCode &c)
{
    Json j = Json::array({c.coarse, c.fine});
    if (c.k_parameter != 1.0)
    {
        j.push_back(c.k_parameter);
    }
    return j;
}

BiasCode bias_from(const Json &j, const std::string &where)
{
    BiasCode c;
    if (j.is_array() && (j.size() == 2 || j.size() == 3))
    {
        c.coarse = value_as<int>(j[0], where);
        c.fine = value_as<int>(j[1], where);
        if (j.size() == 3)
        {
            c.k_parameter = value_as<double>(j[2], where);
        }
    }
    else if (j.is_object())
    {
        c.coarse = value_as<int>(member(j, "coarse", where), where);
        c.fine = value_as<int>(member(j, "fine", where), where);
        c.k_parameter = optional_value(j, "k", 1.0, where);
    }
    else
    {
        schema_error(where, "bias must be [coarse, fine] or [coarse, fine, k]");
    }
    try
    {
        c.validate();
    }
    catch (const std::exception &e)
    {
        schema_error(where, e.what());
    }
    return c;
}

const char *dendrite_key(const Dendrite d)
{
    switch (d)
    {
    case Dendrite::ampa:
        return "ampa";
    case Dendrite::nmda:
        return "nmda";
    case Dendrite::gaba_b:
        return "gaba_b";
    case Dendrite::gaba_a:
        return "gaba_a";
    }
    return "?";
}

Dendrite dendrite_from(const std::string &name, const std::string &where)
{
    for (int b = 0; b < dendrite_count; ++b)
    {
        const auto d = static_cast<Dendrite>(b);
        if (name == dendrite_key(d) || name == dendrite_name(d))
        {
            return d;
        }
    }
    schema_error(where, "unknown dendrite '" + name + "'");
}

Direction direction_from(const std::string &name, const std::string &where)
{
    for (const auto d : {Direction::west, Direction::east, Direction::south, Direction::north})
    {
        if (name == direction_name(d))
        {
            return d;
        }
    }
    schema_error(where, "unknown direction '" + name + "'");
}

const char *polarity_key(const PolarityMode p)
{
    switch (p)
    {
    case PolarityMode::both:
        return "both";
    case PolarityMode::on_only:
        return "on_only";
    case PolarityMode::off_only:
        return "off_only";
    }
    return "?";
}

Json sram_json(const SramEntry &e)
{
    return Json{{"tag", e.tag}, {"dx", e.dx}, {"dy", e.dy}, {"cores", e.cores}};
}

SramEntry sram_from(const Json &j, const std::string &where)
{
    SramEntry e;
    e.tag = value_as<uint16_t>(member(j, "tag", where), where + "/tag");
    e.dx = optional_value(j, "dx", 0, where);
    e.dy = optional_value(j, "dy", 0, where);
    e.cores = optional_value<uint8_t>(j, "cores", 0, where);
    return e;
}

Json latches_json(const NeuronLatches &l)
{
    Json j = Json::object();
    for (const auto &[name, ptr] : latch_table())
    {
        if (l.*ptr)
        {
            j[name] = true;
        }
    }
    return j;
}

void latches_from(const Json &j, NeuronLatches &l, const std::string &where)
{
    if (!j.is_object())
    {
        schema_error(where, "latches must be an object");
    }
    for (const auto &[name, v] : j.items())
    {
        bool *p = find_latch(l, name);
        if (p == nullptr)
        {
            schema_error(where, "unknown latch '" + name + "'");
        }
        *p = value_as<bool>(v, where + "/" + name);
    }
}

Json synapse_json(const SynapseConfig &s)
{
    Json j{{"tag", s.cam_tag}};
    const auto t = s.target();
    j["dendrite"] = t.has_value() ? Json(dendrite_key(*t)) : Json(nullptr);
    j["weight"] = Json::array();
    for (const bool b : s.weight_bits)
    {
        j["weight"].push_back(b ? 1 : 0);
    }
    if (s.precise_delay)
    {
        j["precise_delay"] = true;
    }
    if (s.mismatched_delay)
    {
        j["mismatched_delay"] = true;
    }
    if (s.stp_enabled)
    {
        j["stp"] = true;
    }
    return j;
}

SynapseConfig synapse_from(const Json &j, const std::string &where)
{
    SynapseConfig s;
    s.cam_tag = optional_value<uint16_t>(j, "tag", 0, where);
    if (j.contains("dendrite") && !j.at("dendrite").is_null())
    {
        s.set_target(dendrite_from(value_as<std::string>(j.at("dendrite"), where), where));
    }
    if (j.contains("weight"))
    {
        const Json &w = j.at("weight");
        if (!w.is_array() || w.size() != 4)
        {
            schema_error(where, "weight must list 4 bits");
        }
        for (int i = 0; i < 4; ++i)
        {
            s.weight_bits[i] = value_as<int>(w[i], where + "/weight") != 0;
        }
    }
    s.precise_delay = optional_value(j, "precise_delay", false, where);
    s.mismatched_delay = optional_value(j, "mismatched_delay", false, where);
    s.stp_enabled = optional_value(j, "stp", false, where);
    return s;
}

Json sensor_json(const SensorPipelineConfig &p)
{
    Json j{{"geometry", Json::array({p.geometry.width, p.geometry.height})},
            {"pool", Json::array({p.pool_x, p.pool_y})},
            {"cut", Json{{"x", p.cut_x}, {"y", p.cut_y}, {"w", p.cut_w}, {"h", p.cut_h}}},
            {"polarity", polarity_key(p.polarity)}, {"polarity_split", p.polarity_split}};
    j["pixel_filter"] = Json::array();
    for (const auto &a : p.pixel_filter)
    {
        j["pixel_filter"].push_back(Json::array({a.x, a.y}));
    }
    j["duplicate_to"] =
            p.duplicate_to.has_value() ? Json(direction_name(*p.duplicate_to)) : Json(nullptr);
    j["mapping"] = Json::array();
    for (const auto &e : p.mapping)
    {
        j["mapping"].push_back(e.has_value() ? Json::array({e->tag, e->dx, e->dy, e->cores}) :
                                               Json(nullptr));
    }
    return j;
}

SensorPipelineConfig sensor_from(const Json &j, const std::string &where)
{
    SensorPipelineConfig p;
    if (j.contains("preset"))
    {
        p.geometry = sensor_preset(value_as<std::string>(j.at("preset"), where + "/preset"));
    }
    if (j.contains("geometry"))
    {
        const ChipCoord g = coord_from(j.at("geometry"), where + "/geometry");
        p.geometry = {g.x, g.y};
    }
    if (j.contains("pool"))
    {
        const ChipCoord g = coord_from(j.at("pool"), where + "/pool");
        p.pool_x = g.x;
        p.pool_y = g.y;
    }
    if (j.contains("cut"))
    {
        const Json &c = j.at("cut");
        p.cut_x = optional_value(c, "x", 0, where + "/cut");
        p.cut_y = optional_value(c, "y", 0, where + "/cut");
        p.cut_w = optional_value(c, "w", max_patch_size, where + "/cut");
        p.cut_h = optional_value(c, "h", max_patch_size, where + "/cut");
    }
    const std::string pol = optional_value<std::string>(j, "polarity", "both", where);
    bool found = false;
    for (const auto m : {PolarityMode::both, PolarityMode::on_only, PolarityMode::off_only})
    {
        if (pol == polarity_key(m))
        {
            p.polarity = m;
            found = true;
        }
    }
    if (!found)
    {
        schema_error(where, "unknown polarity mode '" + pol + "'");
    }
    p.polarity_split = optional_value(j, "polarity_split", false, where);
    if (j.contains("pixel_filter"))
    {
        for (const auto &a : j.at("pixel_filter"))
        {
            const ChipCoord c = coord_from(a, where + "/pixel_filter");
            p.pixel_filter.push_back({static_cast<uint16_t>(c.x), static_cast<uint16_t>(c.y)});
        }
    }
    if (j.contains("duplicate_to") && !j.at("duplicate_to").is_null())
    {
        p.duplicate_to = direction_from(value_as<std::string>(j.at("duplicate_to"), where), where);
    }
    if (j.contains("identity"))
    {
        const Json &id = j.at("identity");
        p.mapping = identity_mapping(p.cut_w, p.cut_h, optional_value<uint8_t>(id, "cores", 1, where),
                optional_value(id, "dx", 0, where), optional_value(id, "dy", 0, where));
    }
    else if (j.contains("mapping"))
    {
        for (const auto &e : j.at("mapping"))
        {
            if (e.is_null())
            {
                p.mapping.emplace_back();
                continue;
            }
            if (!e.is_array() || e.size() != 4)
            {
                schema_error(where, "mapping entries are [tag, dx, dy, cores] or null");
            }
            p.mapping.push_back(SramEntry{value_as<uint16_t>(e[0], where), value_as<int>(e[1], where),
                    value_as<int>(e[2], where), value_as<uint8_t>(e[3], where)});
        }
    }
    return p;
}

Json monitor_json(const MonitorTap &t)
{
    return Json{{"kind", t.kind == MonitorKind::sadc ? "sadc" : "probe"}, {"channel", t.channel},
            {"group", t.group}, {"source", monitor_source_name(t.source)},
            {"chip", coord_json(t.chip)}, {"core", t.core}, {"neuron", t.neuron},
            {"branch", dendrite_key(t.branch)}, {"synapse", t.synapse}, {"gain", t.gain},
            {"interval_ns", t.interval_ns}, {"window_samples", t.window_samples},
            {"constant_value", t.constant_value}};
}

MonitorTap monitor_from(const Json &j, const std::string &where)
{
    MonitorTap t;
    const std::string kind = optional_value<std::string>(j, "kind", "sadc", where);
    if (kind != "sadc" && kind != "probe")
    {
        schema_error(where, "monitor kind must be sadc or probe");
    }
    t.kind = kind == "sadc" ? MonitorKind::sadc : MonitorKind::probe;
    t.channel = optional_value(j, "channel", 0, where);
    t.group = optional_value(j, "group", 0, where);
    t.source = parse_monitor_source(optional_value<std::string>(j, "source", "membrane", where));
    if (j.contains("chip"))
    {
        t.chip = coord_from(j.at("chip"), where + "/chip");
    }
    t.core = optional_value(j, "core", 0, where);
    t.neuron = optional_value(j, "neuron", 0, where);
    t.branch = dendrite_from(optional_value<std::string>(j, "branch", "ampa", where), where);
    t.synapse = optional_value(j, "synapse", 20, where);
    t.gain = optional_value(j, "gain", t.gain, where);
    t.interval_ns = optional_value(j, "interval_ns", t.interval_ns, where);
    t.window_samples = optional_value(j, "window_samples", t.window_samples, where);
    t.constant_value = optional_value(j, "constant_value", 0.0, where);
    return t;
}

Json analog_json(const AnalogConfig &a)
{
    return Json{{"physics",
                        Json{{"thermal_voltage", a.physics.thermal_voltage},
                                {"kappa", a.physics.kappa},
                                {"process_current", a.physics.process_current},
                                {"supply_voltage", a.physics.supply_voltage},
                                {"switch_threshold_fraction", a.physics.switch_threshold_fraction}}},
            {"coarse_table", a.coarse_table}, {"C_mem", a.C_mem}, {"C_refr", a.C_refr},
            {"C_feedback_px", a.C_feedback_px}, {"C_synapse_px", a.C_synapse_px},
            {"C_dendrite", a.C_dendrite}, {"C_adaptation", a.C_adaptation},
            {"C_calcium", a.C_calcium}, {"C_stp", a.C_stp},
            {"stp_tau_recovery", a.stp_tau_recovery}, {"exp_feedback_gain", a.exp_feedback_gain},
            {"exp_ceiling_factor", a.exp_ceiling_factor}, {"exp_refr_swing", a.exp_refr_swing},
            {"homeostasis_time_base", a.homeostasis_time_base},
            {"homeostasis_deadband", a.homeostasis_deadband},
            {"energy_thresholded_pJ", a.energy_thresholded_pJ},
            {"energy_exponential_pJ", a.energy_exponential_pJ}};
}

AnalogConfig analog_from(const Json &j, const std::string &where)
{
    AnalogConfig a;
    if (j.contains("physics"))
    {
        const Json &p = j.at("physics");
        const std::string w = where + "/physics";
        a.physics.thermal_voltage = optional_value(p, "thermal_voltage", a.physics.thermal_voltage, w);
        a.physics.kappa = optional_value(p, "kappa", a.physics.kappa, w);
        a.physics.process_current = optional_value(p, "process_current", a.physics.process_current, w);
        a.physics.supply_voltage = optional_value(p, "supply_voltage", a.physics.supply_voltage, w);
        a.physics.switch_threshold_fraction = optional_value(
                p, "switch_threshold_fraction", a.physics.switch_threshold_fraction, w);
    }
    if (j.contains("coarse_table"))
    {
        const Json &t = j.at("coarse_table");
        if (!t.is_array() || t.size() != coarse_levels)
        {
            schema_error(where, "coarse_table needs 6 entries");
        }
        for (int i = 0; i < coarse_levels; ++i)
        {
            a.coarse_table[i] = value_as<double>(t[i], where + "/coarse_table");
        }
    }
#define SPIKECHIP_FIELD(name) a.name = optional_value(j, #name, a.name, where)
    SPIKECHIP_FIELD(C_mem);
    SPIKECHIP_FIELD(C_refr);
    SPIKECHIP_FIELD(C_feedback_px);
    SPIKECHIP_FIELD(C_synapse_px);
    SPIKECHIP_FIELD(C_dendrite);
    SPIKECHIP_FIELD(C_adaptation);
    SPIKECHIP_FIELD(C_calcium);
    SPIKECHIP_FIELD(C_stp);
    SPIKECHIP_FIELD(stp_tau_recovery);
    SPIKECHIP_FIELD(exp_feedback_gain);
    SPIKECHIP_FIELD(exp_ceiling_factor);
    SPIKECHIP_FIELD(exp_refr_swing);
    SPIKECHIP_FIELD(homeostasis_time_base);
    SPIKECHIP_FIELD(homeostasis_deadband);
    SPIKECHIP_FIELD(energy_thresholded_pJ);
    SPIKECHIP_FIELD(energy_exponential_pJ);
#undef SPIKECHIP_FIELD
    return a;
}

} // namespace

Json spikechip::config_to_json(const ChipGridConfig &cfg)
{
    Json doc;
    doc["schema_version"] = config_schema_version;
    doc["grid"] = Json{{"width", cfg.width}, {"height", cfg.height}};
    doc["analog"] = analog_json(cfg.analog);
    doc["engine"] = Json{{"max_step_ns", cfg.engine.max_step_ns},
            {"link_latency_ns", cfg.engine.link_latency_ns},
            {"mode", cfg.engine.mode == EngineMode::full ? "full" : "closed"},
            {"full_rtol", cfg.engine.full_rtol}, {"full_floor", cfg.engine.full_floor}};
    doc["mismatch"] = Json{
            {"enabled", cfg.mismatch.enabled}, {"seed", cfg.mismatch.seed}, {"cv", cfg.mismatch.cv}};
    doc["monitors"] = Json::array();
    for (const auto &t : cfg.monitors)
    {
        doc["monitors"].push_back(monitor_json(t));
    }
    doc["chips"] = Json::array();
    for (std::size_t ci = 0; ci < cfg.chips.size(); ++ci)
    {
        const ChipConfig &chip = cfg.chips[ci];
        Json jc{{"x", static_cast<int>(ci) % cfg.width}, {"y", static_cast<int>(ci) / cfg.width}};
        jc["cores"] = Json::array();
        for (int c = 0; c < cores_per_chip; ++c)
        {
            const CoreConfig &core = chip.cores[c];
            Json jk{{"core", c}, {"de_mux", core.de_mux}};
            jk["biases"] = Json::object();
            for (const auto &[name, code] : core.biases)
            {
                jk["biases"][name] = bias_json(code);
            }
            jk["neurons"] = Json::array();
            for (int n = 0; n < neurons_per_core; ++n)
            {
                const NeuronConfig &nc = core.neurons[n];
                if (nc == NeuronConfig{})
                {
                    continue;
                }
                Json jn{{"index", n}, {"latches", latches_json(nc.latches)}};
                jn["srams"] = Json::array();
                for (int k = 0; k < sram_entries; ++k)
                {
                    if (nc.srams[k] != SramEntry{})
                    {
                        Json e = sram_json(nc.srams[k]);
                        e["slot"] = k;
                        jn["srams"].push_back(e);
                    }
                }
                jn["synapses"] = Json::array();
                for (int s = 0; s < synapses_per_neuron; ++s)
                {
                    if (nc.synapses[s] != SynapseConfig{})
                    {
                        Json e = synapse_json(nc.synapses[s]);
                        e["slot"] = s;
                        jn["synapses"].push_back(e);
                    }
                }
                jk["neurons"].push_back(jn);
            }
            jc["cores"].push_back(jk);
        }
        jc["sensor"] = chip.sensor.has_value() ? sensor_json(*chip.sensor) : Json(nullptr);
        doc["chips"].push_back(jc);
    }
    return doc;
}

spikechip::ChipGridConfig spikechip::config_from_json(const Json &doc)
{
    const std::string root = "config";
    if (!doc.is_object())
    {
        schema_error(root, "document must be an object");
    }
    const int version = value_as<int>(member(doc, "schema_version", root), root + "/schema_version");
    if (version != config_schema_version)
    {
        schema_error(root, "unsupported schema_version " + std::to_string(version) +
                        " (expected " + std::to_string(config_schema_version) + ")");
    }
    ChipGridConfig cfg;
    if (doc.contains("grid"))
    {
        cfg.width = optional_value(doc.at("grid"), "width", 1, root + "/grid");
        cfg.height = optional_value(doc.at("grid"), "height", 1, root + "/grid");
    }
    if (cfg.width < 1 || cfg.height < 1 || cfg.width > 16 || cfg.height > 16)
    {
        schema_error(root + "/grid", "dimensions must lie within 1x1 and 16x16");
    }
    cfg = make_grid(cfg.width, cfg.height);
    if (doc.contains("analog"))
    {
        cfg.analog = analog_from(doc.at("analog"), root + "/analog");
    }
    if (doc.contains("engine"))
    {
        const Json &e = doc.at("engine");
        const std::string w = root + "/engine";
        cfg.engine.max_step_ns = optional_value(e, "max_step_ns", cfg.engine.max_step_ns, w);
        cfg.engine.link_latency_ns = optional_value(e, "link_latency_ns", cfg.engine.link_latency_ns, w);
        const std::string mode = optional_value<std::string>(e, "mode", "closed", w);
        if (mode != "closed" && mode != "full")
        {
            schema_error(w, "mode must be closed or full");
        }
        cfg.engine.mode = mode == "full" ? EngineMode::full : EngineMode::closed;
        cfg.engine.full_rtol = optional_value(e, "full_rtol", cfg.engine.full_rtol, w);
        cfg.engine.full_floor = optional_value(e, "full_floor", cfg.engine.full_floor, w);
    }
    if (doc.contains("mismatch"))
    {
        const Json &m = doc.at("mismatch");
        const std::string w = root + "/mismatch";
        cfg.mismatch.enabled = optional_value(m, "enabled", false, w);
        cfg.mismatch.seed = optional_value<uint64_t>(m, "seed", 1, w);
        if (m.contains("cv"))
        {
            cfg.mismatch.cv = value_as<std::map<std::string, double>>(m.at("cv"), w + "/cv");
        }
    }
    if (doc.contains("monitors"))
    {
        int i = 0;
        for (const auto &t : doc.at("monitors"))
        {
            cfg.monitors.push_back(monitor_from(t, root + "/monitors/" + std::to_string(i++)));
        }
    }
    if (doc.contains("chips"))
    {
        for (const auto &jc : doc.at("chips"))
        {
            const ChipCoord cc{optional_value(jc, "x", 0, root), optional_value(jc, "y", 0, root)};
            const std::string wc = root + "/chip(" + std::to_string(cc.x) + "," +
                    std::to_string(cc.y) + ")";
            if (cfg.chip_index(cc) < 0)
            {
                schema_error(wc, "chip lies outside the grid");
            }
            ChipConfig &chip = cfg.chip(cc);
            if (jc.contains("cores"))
            {
                for (const auto &jk : jc.at("cores"))
                {
                    const int c = value_as<int>(member(jk, "core", wc), wc + "/core");
                    const std::string wk = wc + "/core" + std::to_string(c);
                    if (c < 0 || c >= cores_per_chip)
                    {
                        schema_error(wk, "core index out of range");
                    }
                    CoreConfig &core = chip.cores[c];
                    core.de_mux = optional_value(jk, "de_mux", false, wk);
                    if (jk.contains("biases"))
                    {
                        for (const auto &[name, code] : jk.at("biases").items())
                        {
                            if (find_bias(name) == nullptr)
                            {
                                schema_error(wk, "unknown bias '" + name + "'");
                            }
                            core.biases[name] = bias_from(code, wk + "/" + name);
                        }
                    }
                    if (!jk.contains("neurons"))
                    {
                        continue;
                    }
                    for (const auto &jn : jk.at("neurons"))
                    {
                        const int n = value_as<int>(member(jn, "index", wk), wk + "/index");
                        const std::string wn = wk + "/n" + std::to_string(n);
                        if (n < 0 || n >= neurons_per_core)
                        {
                            schema_error(wn, "neuron index out of range");
                        }
                        NeuronConfig &nc = core.neurons[n];
                        if (jn.contains("latches"))
                        {
                            latches_from(jn.at("latches"), nc.latches, wn + "/latches");
                        }
                        for (const auto &e : jn.value("srams", Json::array()))
                        {
                            const int k = value_as<int>(member(e, "slot", wn), wn + "/sram");
                            if (k < 0 || k >= sram_entries)
                            {
                                schema_error(wn, "SRAM slot out of range");
                            }
                            nc.srams[k] = sram_from(e, wn + "/sram" + std::to_string(k));
                        }
                        for (const auto &e : jn.value("synapses", Json::array()))
                        {
                            const int s = value_as<int>(member(e, "slot", wn), wn + "/syn");
                            if (s < 0 || s >= synapses_per_neuron)
                            {
                                schema_error(wn, "synapse slot out of range");
                            }
                            nc.synapses[s] = synapse_from(e, wn + "/syn" + std::to_string(s));
                        }
                    }
                }
            }
            if (jc.contains("sensor") && !jc.at("sensor").is_null())
            {
                chip.sensor = sensor_from(jc.at("sensor"), wc + "/sensor");
            }
        }
    }
    cfg.validate();
    return cfg;
}

std::string spikechip::serialize_config(const ChipGridConfig &cfg)
{
    return config_to_json(cfg).dump(1) + "\n";
}

spikechip::ChipGridConfig spikechip::parse_config(const std::string &text)
{
    Json doc;
    try
    {
        doc = Json::parse(text);
    }
    catch (const Json::parse_error &e)
    {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(doc);
}

Json spikechip::network_to_json(const NetworkSpec &spec)
{
    Json doc{{"schema_version", config_schema_version},
            {"grid", Json{{"width", spec.width}, {"height", spec.height}}}};
    doc["populations"] = Json::array();
    for (const auto &p : spec.populations)
    {
        doc["populations"].push_back(Json{{"name", p.name}, {"size", p.size},
                {"chip", coord_json(p.chip)}, {"core", p.core}, {"first", p.first},
                {"latches", p.latches}});
    }
    doc["projections"] = Json::array();
    for (const auto &p : spec.projections)
    {
        Json j{{"pre", p.pre}, {"post", p.post}, {"rule", projection_rule_name(p.rule)},
                {"r", p.r}};
        if (p.rule == ProjectionRule::pairs)
        {
            j["pairs"] = p.pairs;
        }
        if (p.tag.has_value())
        {
            j["tag"] = *p.tag;
        }
        SynapseConfig s;
        s.set_target(p.synapse.dendrite);
        s.weight_bits = p.synapse.weight_bits;
        s.precise_delay = p.synapse.precise_delay;
        s.mismatched_delay = p.synapse.mismatched_delay;
        s.stp_enabled = p.synapse.stp;
        Json js = synapse_json(s);
        js.erase("tag");
        j["synapse"] = js;
        doc["projections"].push_back(j);
    }
    doc["cores"] = Json::array();
    for (const auto &c : spec.cores)
    {
        Json j{{"chip", coord_json(c.chip)}, {"core", c.core}, {"de_mux", c.de_mux}};
        j["biases"] = Json::object();
        for (const auto &[name, code] : c.biases)
        {
            j["biases"][name] = bias_json(code);
        }
        doc["cores"].push_back(j);
    }
    if (spec.base.has_value())
    {
        doc["base"] = config_to_json(*spec.base);
    }
    return doc;
}

spikechip::NetworkSpec spikechip::network_from_json(const Json &doc)
{
    const std::string root = "network";
    if (!doc.is_object())
    {
        schema_error(root, "document must be an object");
    }
    const int version = optional_value(doc, "schema_version", config_schema_version, root);
    if (version != config_schema_version)
    {
        schema_error(root, "unsupported schema_version " + std::to_string(version));
    }
    NetworkSpec s;
    if (doc.contains("grid"))
    {
        s.width = optional_value(doc.at("grid"), "width", 1, root + "/grid");
        s.height = optional_value(doc.at("grid"), "height", 1, root + "/grid");
    }
    int i = 0;
    for (const auto &j : doc.value("populations", Json::array()))
    {
        const std::string w = root + "/populations/" + std::to_string(i++);
        PopulationSpec p;
        p.name = value_as<std::string>(member(j, "name", w), w + "/name");
        p.size = optional_value(j, "size", 1, w);
        if (j.contains("chip"))
        {
            p.chip = coord_from(j.at("chip"), w + "/chip");
        }
        p.core = optional_value(j, "core", 0, w);
        p.first = optional_value(j, "first", 0, w);
        if (j.contains("latches"))
        {
            p.latches = value_as<std::map<std::string, bool>>(j.at("latches"), w + "/latches");
        }
        s.populations.push_back(p);
    }
    i = 0;
    for (const auto &j : doc.value("projections", Json::array()))
    {
        const std::string w = root + "/projections/" + std::to_string(i++);
        ProjectionSpec p;
        p.pre = value_as<std::string>(member(j, "pre", w), w + "/pre");
        p.post = value_as<std::string>(member(j, "post", w), w + "/post");
        p.rule = parse_projection_rule(optional_value<std::string>(j, "rule", "all_to_all", w));
        p.r = optional_value(j, "r", 1, w);
        if (j.contains("pairs"))
        {
            p.pairs = value_as<std::vector<std::pair<int, int>>>(j.at("pairs"), w + "/pairs");
        }
        if (j.contains("tag"))
        {
            p.tag = value_as<uint16_t>(j.at("tag"), w + "/tag");
        }
        if (j.contains("synapse"))
        {
            Json js = j.at("synapse");
            if (!js.contains("dendrite"))
            {
                js["dendrite"] = "ampa";
            }
            const SynapseConfig sc = synapse_from(js, w + "/synapse");
            if (!sc.target().has_value())
            {
                schema_error(w + "/synapse", "a projection needs a target dendrite");
            }
            p.synapse.dendrite = *sc.target();
            if (js.contains("weight"))
            {
                p.synapse.weight_bits = sc.weight_bits;
            }
            p.synapse.precise_delay = sc.precise_delay;
            p.synapse.mismatched_delay = sc.mismatched_delay;
            p.synapse.stp = sc.stp_enabled;
        }
        s.projections.push_back(p);
    }
    i = 0;
    for (const auto &j : doc.value("cores", Json::array()))
    {
        const std::string w = root + "/cores/" + std::to_string(i++);
        CoreSettings c;
        if (j.contains("chip"))
        {
            c.chip = coord_from(j.at("chip"), w + "/chip");
        }
        c.core = optional_value(j, "core", 0, w);
        c.de_mux = optional_value(j, "de_mux", false, w);
        const Json biases = j.value("biases", Json::object());
        for (const auto &[name, code] : biases.items())
        {
            c.biases[name] = bias_from(code, w + "/" + name);
        }
        s.cores.push_back(c);
    }
    if (doc.contains("base"))
    {
        s.base = config_from_json(doc.at("base"));
    }
    return s;
}

Json spikechip::diagnostics_to_json(const std::vector<Diagnostic> &diags)
{
    Json j = Json::array();
    for (const auto &d : diags)
    {
        j.push_back(Json{{"severity", d.severity == Severity::error ? "error" : "warning"},
                {"where", d.where}, {"message", d.message}});
    }
    return j;
}

std::string spikechip::read_text_file(const fs::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw ConfigError("cannot read '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spikechip::write_text_file(const fs::path &path, const std::string &text)
{
    fs::path tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
        {
            throw ConfigError("cannot write '" + path.string() + "'");
        }
        out << text;
        out.flush();
        if (!out)
        {
            fs::remove(tmp);
            throw ConfigError("failed writing '" + path.string() + "'");
        }
    }
    fs::rename(tmp, path);
}

spikechip::ChipGridConfig spikechip::load_config(const fs::path &path)
{
    try
    {
        return parse_config(read_text_file(path));
    }
    catch (const ConfigError &e)
    {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

spikechip::NetworkSpec spikechip::load_network(const fs::path &path)
{
    try
    {
        return network_from_json(Json::parse(read_text_file(path)));
    }
    catch (const Json::parse_error &e)
    {
        throw ConfigError(path.string() + ": not valid JSON: " + e.what());
    }
    catch (const ConfigError &e)
    {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

int64_t spikechip::parse_time_us(const std::string &token)
{
    std::size_t used = 0;
    double v = 0.0;
    try
    {
        v = std::stod(token, &used);
    }
    catch (const std::exception &)
    {
        used = 0;
    }
    if (used != token.size() || !std::isfinite(v))
    {
        throw ConfigError("invalid time '" + token + "'");
    }
    return std::llround(v * 1000.0);
}

std::string spikechip::format_time_us(const int64_t t_ns)
{
    char buf[40];
    const int64_t a = t_ns < 0 ? -t_ns : t_ns;
    std::snprintf(buf, sizeof buf, "%s%" PRId64 ".%03" PRId64, t_ns < 0 ? "-" : "", a / 1000,
            a % 1000);
    return buf;
}

int64_t spikechip::parse_duration(const std::string &text)
{
    static const std::pair<const char *, double> units[] = {
            {"ns", 1.0}, {"us", 1e3}, {"ms", 1e6}, {"s", 1e9}};
    for (const auto &[suffix, scale] : units)
    {
        const std::string sfx(suffix);
        if (text.size() > sfx.size() && text.ends_with(sfx))
        {
            const std::string num = text.substr(0, text.size() - sfx.size());
            // "ms" also ends with "s"; require a numeric stem
            try
            {
                std::size_t used = 0;
                const double v = std::stod(num, &used);
                if (used == num.size() && std::isfinite(v) && v >= 0)
                {
                    return std::llround(v * scale);
                }
            }
            catch (const std::exception &)
            {
            }
        }
    }
    try
    {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size() && std::isfinite(v) && v >= 0)
        {
            return std::llround(v * 1e9);
        }
    }
    catch (const std::exception &)
    {
    }
    throw ConfigError("invalid duration '" + text + "' (use e.g. 1s, 250ms, 10us)");
}

namespace
{

std::vector<std::string> tokens_of(const std::string &line)
{
    std::string body = line.substr(0, line.find('#'));
    std::istringstream ss(body);
    std::vector<std::string> t;
    std::string tok;
    while (ss >> tok)
    {
        t.push_back(tok);
    }
    return t;
}

uint32_t parse_hex_word(const std::string &tok)
{
    std::size_t used = 0;
    unsigned long long v = 0;
    try
    {
        v = std::stoull(tok, &used, 16);
    }
    catch (const std::exception &)
    {
        used = 0;
    }
    if (used != tok.size() || v > 0xFFFFFFFFULL)
    {
        throw ConfigError("invalid hex word '" + tok + "'");
    }
    return static_cast<uint32_t>(v);
}

int parse_int(const std::string &tok)
{
    std::size_t used = 0;
    int v = 0;
    try
    {
        v = std::stoi(tok, &used);
    }
    catch (const std::exception &)
    {
        used = 0;
    }
    if (used != tok.size())
    {
        throw ConfigError("invalid integer '" + tok + "'");
    }
    return v;
}

template <class F>
std::vector<InputEvent> parse_lines(const std::string &text, F &&per_line)
{
    std::vector<InputEvent> out;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line))
    {
        ++number;
        const auto t = tokens_of(line);
        if (t.empty())
        {
            continue;
        }
        try
        {
            out.push_back(per_line(t));
        }
        catch (const ConfigError &e)
        {
            throw ConfigError("line " + std::to_string(number) + ": " + e.what());
        }
    }
    std::stable_sort(out.begin(), out.end(),
            [](const InputEvent &a, const InputEvent &b) { return a.t_ns < b.t_ns; });
    return out;
}

} // namespace

std::vector<spikechip::InputEvent> spikechip::parse_event_text(const std::string &text)
{
    return parse_lines(text, [](const std::vector<std::string> &t) {
        if (t.size() != 2 && t.size() != 4)
        {
            throw ConfigError("expected 't_us hex24 [chip_x chip_y]'");
        }
        InputEvent e;
        e.t_ns = parse_time_us(t[0]);
        e.word = parse_hex_word(t[1]);
        if (t.size() == 4)
        {
            e.chip = {parse_int(t[2]), parse_int(t[3])};
        }
        return e;
    });
}

std::string spikechip::format_event_text(const std::span<const InputEvent> events)
{
    std::string out;
    char buf[96];
    for (const auto &e : events)
    {
        std::snprintf(buf, sizeof buf, "%s %06X %d %d\n", format_time_us(e.t_ns).c_str(), e.word,
                e.chip.x, e.chip.y);
        out += buf;
    }
    return out;
}

std::vector<spikechip::InputEvent> spikechip::parse_sensor_text(
        const std::string &text, const ChipCoord chip)
{
    return parse_lines(text, [&](const std::vector<std::string> &t) {
        InputEvent e;
        e.chip = chip;
        if (t.size() == 2)
        {
            e.t_ns = parse_time_us(t[0]);
            e.word = parse_hex_word(t[1]);
            if (e.word <= word_mask && !is_sensor_word(e.word))
            {
                throw ConfigError("raw word '" + t[1] + "' is not a sensor word");
            }
            return e;
        }
        if (t.size() != 4)
        {
            throw ConfigError("expected 't_us x y pol' or 't_us hex24'");
        }
        e.t_ns = parse_time_us(t[0]);
        const int x = parse_int(t[1]);
        const int y = parse_int(t[2]);
        const int pol = parse_int(t[3]);
        if (x < 0 || y < 0 || x > max_sensor_coordinate || y > max_sensor_coordinate ||
                (pol != 0 && pol != 1))
        {
            throw ConfigError("sensor event out of range");
        }
        SensorEvent se;
        se.x = static_cast<uint16_t>(x);
        se.y = static_cast<uint16_t>(y);
        se.pol = pol == 1;
        e.word = encode_word(se);
        return e;
    });
}

std::string spikechip::format_output_events(const std::span<const OutputEventRecord> events)
{
    std::string out;
    char buf[96];
    for (const auto &e : events)
    {
        std::snprintf(buf, sizeof buf, "%s %06X %d %d\n", format_time_us(e.t_ns).c_str(),
                e.word, e.chip.x, e.chip.y);
        out += buf;
    }
    return out;
}

std::string spikechip::format_spikes(const std::span<const SpikeRecord> spikes)
{
    std::string out = "# t_us chip_x chip_y core neuron\n";
    char buf[96];
    for (const auto &s : spikes)
    {
        std::snprintf(buf, sizeof buf, "%s %d %d %d %d\n", format_time_us(s.t_ns).c_str(),
                s.chip.x, s.chip.y, s.core, s.neuron);
        out += buf;
    }
    return out;
}

std::string spikechip::format_trace(const TraceRecord &trace)
{
    std::string out = "# " + trace.tap.label() + "\n# t_us value\n";
    char buf[96];
    for (const auto &s : trace.samples)
    {
        std::snprintf(buf, sizeof buf, "%s\t%.17g\n", format_time_us(s.t_ns).c_str(), s.value);
        out += buf;
    }
    return out;
}

Json spikechip::counters_to_json(const SimulationReport &r)
{
    const EngineCounters &c = r.counters;
    Json j;
    j["until_us"] = format_time_us(r.until_ns);
    j["engine"] = Json{{"input_events", c.input_events}, {"input_errors", c.input_errors},
            {"words_routed", c.words_routed}, {"words_dropped_grid", c.words_dropped_grid},
            {"words_dropped_no_cores", c.words_dropped_no_cores}, {"deliveries", c.deliveries},
            {"cam_matches", c.cam_matches}, {"pulses_started", c.pulses_started},
            {"pulses_dropped_busy", c.pulses_dropped_busy}, {"spikes", c.spikes},
            {"events_processed", c.events_processed}, {"substeps", c.substeps}};
    const SensorCounters &s = r.sensor;
    j["sensor"] = Json{{"input", s.input}, {"mapped", s.mapped},
            {"duplicated_and_mapped", s.duplicated_and_mapped},
            {"duplicates_emitted", s.duplicates_emitted}, {"dropped_geometry", s.dropped_geometry},
            {"dropped_filter", s.dropped_filter}, {"dropped_cut", s.dropped_cut},
            {"dropped_polarity", s.dropped_polarity}, {"dropped_unmapped", s.dropped_unmapped}};
    Json cores = Json::array();
    for (const auto &[key, n] : r.energy.counts())
    {
        cores.push_back(Json{{"chip_index", key.first}, {"core", key.second},
                {"thresholded_spikes", n.first}, {"exponential_spikes", n.second}});
    }
    j["energy"] = Json{{"per_core", cores}, {"total_pJ", r.energy.energy_pJ()},
            {"thresholded_pJ_per_spike", r.energy.thresholded_pJ()},
            {"exponential_pJ_per_spike", r.energy.exponential_pJ()}};
    Json errors = Json::array();
    for (const auto &e : r.errors)
    {
        errors.push_back(Json{{"t_us", format_time_us(e.t_ns)}, {"message", e.message}});
    }
    j["errors"] = errors;
    j["warnings"] = r.warnings;
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016" PRIx64, r.hash());
    j["report_hash"] = hash;
    return j;
}

void spikechip::write_report(const fs::path &dir, const SimulationReport &report,
        const std::map<std::string, std::string> &extra_files)
{
    const fs::path target = fs::absolute(dir).lexically_normal();
    if (fs::exists(target) && !fs::is_directory(target))
    {
        throw ConfigError("'" + dir.string() + "' exists and is not a directory");
    }
    const fs::path parent = target.has_parent_path() ? target.parent_path() : fs::path(".");
    fs::create_directories(parent);
    std::random_device rd;
    fs::path staging;
    for (int attempt = 0; attempt < 16; ++attempt)
    {
        staging = parent / ("." + target.filename().string() + ".tmp" + std::to_string(rd()));
        if (fs::create_directory(staging))
        {
            break;
        }
        staging.clear();
    }
    if (staging.empty())
    {
        throw ConfigError("cannot create a staging directory beside '" + dir.string() + "'");
    }
    try
    {
        write_text_file(staging / "events.evt", format_output_events(report.output_events));
        write_text_file(staging / "spikes.txt", format_spikes(report.spikes));
        write_text_file(staging / "counters.json", counters_to_json(report).dump(1) + "\n");
        write_text_file(staging / "report.txt", report.canonical_text());
        fs::create_directory(staging / "traces");
        for (const auto &t : report.traces)
        {
            write_text_file(staging / "traces" / (t.tap.label() + ".tsv"), format_trace(t));
        }
        for (const auto &[name, text] : extra_files)
        {
            write_text_file(staging / name, text);
        }
        if (fs::exists(target))
        {
            fs::remove_all(target);
        }
        fs::rename(staging, target);
    }
    catch (...)
    {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
}
