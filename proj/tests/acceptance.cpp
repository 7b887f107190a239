// acceptance.cpp - one PASS/FAIL line per acceptance criterion
//
// Each check uses an oracle that is independent of the code under test:
// fixed-step RK4, bit-level field extraction, interval merging, a dense
// Eigen solve, or a closed-form statistic. The exit status is the number of
// failed criteria.

#include <algorithm>
#include <array>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spikechip/config_io.hpp"
#include "spikechip/dendrite.hpp"
#include "spikechip/engine.hpp"
#include "spikechip/kernels.hpp"
#include "spikechip/mismatch.hpp"
#include "spikechip/monitor.hpp"
#include "spikechip/netbuild.hpp"
#include "spikechip/routing.hpp"
#include "spikechip/scenarios.hpp"
#include "spikechip/soma.hpp"
#include "spikechip/synapse.hpp"

using namespace spikechip;
namespace fs = std::filesystem;

namespace
{

struct Outcome
{
    bool pass = true;
    std::string detail;

    // Records a failed clause; the first one is kept for the summary line.
    void require(const bool ok, const std::string &what)
    {
        if (!ok && pass)
        {
            detail = "FAILED " + what + "; " + detail;
        }
        pass = pass && ok;
    }
};

std::string fmt(const char *f, ...) __attribute__((format(printf, 1, 2)));

std::string fmt(const char *f, ...)
{
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

class Stopwatch
{
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

double log_uniform(std::mt19937_64 &rng, const double lo, const double hi)
{
    std::uniform_real_distribution<double> u(std::log10(lo), std::log10(hi));
    return std::pow(10.0, u(rng));
}

double rel(const double a, const double b)
{
    return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

// ---- 1. DPI correctness ------------------------------------------------------

// Fixed-step RK4 on tau dI/dt = (I_gain / I_tau) I_in - I.
double rk4_linear(double I, const double I_in, const DpiParams &p, const double dt,
        const PhysicsConstants &k, const int steps)
{
    const double tau = p.C * k.thermal_voltage / (k.kappa * p.I_tau);
    const auto f = [&](const double y) { return ((p.I_gain / p.I_tau) * I_in - y) / tau; };
    const double h = dt / steps;
    for (int i = 0; i < steps; ++i)
    {
        const double k1 = f(I);
        const double k2 = f(I + 0.5 * h * k1);
        const double k3 = f(I + 0.5 * h * k2);
        const double k4 = f(I + h * k3);
        I += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return I;
}

Outcome dpi_correctness()
{
    Outcome o;
    const Stopwatch sw;
    const PhysicsConstants k;
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> segments(1, 5);

    double worst = 0.0;
    for (int c = 0; c < 1000; ++c)
    {
        const DpiParams p{log_uniform(rng, 1e-13, 1e-10), log_uniform(rng, 1e-13, 1e-10),
                log_uniform(rng, 1e-13, 1e-11)};
        const double tau = dpi_tau(p, k);
        DpiState s{log_uniform(rng, 1e-13, 1e-10), 0.0};
        double oracle = s.I_out;
        // A piecewise-constant input schedule of one to five segments
        const int n = segments(rng);
        for (int i = 0; i < n; ++i)
        {
            const double I_in = u(rng) < 0.2 ? 0.0 : log_uniform(rng, 1e-13, 1e-10);
            const double dt = 2.0 * tau * u(rng);
            s = dpi_advance(s, p, I_in, dt, k);
            oracle = rk4_linear(oracle, I_in, p, dt, k, 2000);
        }
        worst = std::max(worst, rel(s.I_out, oracle));
    }
    o.require(worst <= 1e-9, "closed form vs RK4");

    // Limits of the general equation at 100x dominance
    double lim_linear = 0.0;
    double lim_decay = 0.0;
    double lim_integrator = 0.0;
    double lim_full = 0.0;
    for (int c = 0; c < 100; ++c)
    {
        const DpiParams p{log_uniform(rng, 1e-13, 1e-11), log_uniform(rng, 1e-13, 1e-11),
                log_uniform(rng, 1e-13, 1e-11)};
        const double tau = dpi_tau(p, k);
        const double A = p.I_gain / p.I_tau;

        // I_out >> I_gain: the input term becomes (I_gain / I_tau) I_in
        const double I_big = 100.0 * p.I_gain;
        const double I_in = log_uniform(rng, 1e-13, 1e-10);
        const double drive = dpi_full_rhs(I_big, I_in, p, k) * tau + I_big;
        lim_linear = std::max(lim_linear, rel(drive, A * I_in));

        // no input: pure exponential decay
        lim_decay = std::max(lim_decay, rel(dpi_full_rhs(I_big, 0.0, p, k), -I_big / tau));

        // I_gain >> I_out: the capacitor integrates I_in - I_tau
        const double I_small = p.I_gain / 100.0;
        const double I_hi = p.I_tau * log_uniform(rng, 1e3, 1e4);
        const double dVdt =
                k.thermal_voltage / k.kappa * dpi_full_rhs(I_small, I_hi, p, k) / I_small;
        lim_integrator = std::max(lim_integrator, rel(dVdt, (I_hi - p.I_tau) / p.C));

        // Integrated full mode tracks the closed form while I_out >> I_gain
        const double I_drive = 100.0 * p.I_gain / A * (1.0 + 9.0 * u(rng));
        const DpiState s0{I_big * (1.0 + 9.0 * u(rng)), 0.0};
        const double full = dpi_advance_full(s0, p, I_drive, tau, k).I_out;
        const double closed = dpi_advance(s0, p, I_drive, tau, k).I_out;
        lim_full = std::max(lim_full, rel(full, closed));
    }
    o.require(lim_linear <= 0.01, "first-order limit");
    o.require(lim_decay <= 0.01, "decay limit");
    o.require(lim_integrator <= 0.01, "integrator limit");
    o.require(lim_full <= 0.01, "integrated full mode");
    const double secs = sw.seconds();
    o.require(secs < 10.0, "runtime");
    o.detail += fmt("max rel err %.2e over 1000 cases (<= 1e-9); limits %.2e/%.2e/%.2e, "
                    "full mode %.2e (<= 1e-2); %.2f s",
            worst, lim_linear, lim_decay, lim_integrator, lim_full, secs);
    return o;
}

// ---- 2. charge per event -------------------------------------------------------

Outcome charge_per_event()
{
    Outcome o;
    const PhysicsConstants k;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int c = 0; c < 100; ++c)
    {
        const DpiParams p{log_uniform(rng, 1e-13, 1e-11), log_uniform(rng, 1e-12, 1e-10),
                log_uniform(rng, 0.5e-12, 5e-12)};
        const double tau = dpi_tau(p, k);
        // T_pulse << tau and (I_tau / I_w) tau << T_pulse, each by 100x or more
        PulseExtenderState px;
        const double T_target = tau * log_uniform(rng, 1e-3, 1e-2);
        px.I_pw = px.C_px * k.supply_voltage * 0.75 / T_target;
        px = px_trigger(px, 0.0, k);
        const double T = px.pulse_end - px.pulse_start;
        const double I_w = 100.0 * p.I_tau * tau / T * log_uniform(rng, 1.0, 10.0);

        // Trapezoid integral of the response on a dense grid
        double q = 0.0;
        DpiState s{0.0, 0.0};
        double prev = 0.0;
        const auto integrate = [&](const double I_in, const double span, const int steps) {
            const double h = span / steps;
            for (int i = 0; i < steps; ++i)
            {
                s = dpi_advance(s, p, I_in, h, k);
                q += 0.5 * h * (prev + s.I_out);
                prev = s.I_out;
            }
        };
        integrate(I_w, T, 2000);
        integrate(0.0, 40.0 * tau, 40000);
        const double Q = lpf_charge_per_event(p.I_gain, I_w, p.I_tau, T);
        worst = std::max(worst, rel(q, Q));
    }
    o.require(worst <= 0.01, "charge");
    o.detail += fmt("max rel err %.2e over 100 parameter sets (<= 1e-2)", worst);
    return o;
}

// ---- 3. pulse semantics -------------------------------------------------------

// Measure of the union of [t_i, t_i + w].
double union_measure(std::vector<double> t, const double w)
{
    std::sort(t.begin(), t.end());
    double total = 0.0;
    double lo = t[0];
    double hi = t[0] + w;
    for (std::size_t i = 1; i < t.size(); ++i)
    {
        if (t[i] > hi)
        {
            total += hi - lo;
            lo = t[i];
        }
        hi = std::max(hi, t[i] + w);
    }
    return total + hi - lo;
}

// Calls f on every non-decreasing sequence of 1..max_len grid indices.
void for_each_schedule(const int points, const int max_len,
        const std::function<void(const std::vector<int> &)> &f)
{
    std::vector<int> seq;
    const std::function<void(int)> rec = [&](const int from) {
        if (!seq.empty())
        {
            f(seq);
        }
        if (static_cast<int>(seq.size()) == max_len)
        {
            return;
        }
        for (int i = from; i < points; ++i)
        {
            seq.push_back(i);
            rec(i);
            seq.pop_back();
        }
    };
    rec(0);
}

Outcome pulse_semantics()
{
    Outcome o;
    const PhysicsConstants k;
    // Grid spacing 0.5 ms; widths chosen so no boundary lands on a grid point.
    const double step = 0.5e-3;
    const int points = 13;
    PulseExtenderState basic;
    basic.I_pw = basic.C_px * k.supply_voltage * 0.75 / 1.1e-3;
    PulseExtenderState delayed = basic;
    delayed.mode = PulseMode::delayed;
    delayed.I_delay = delayed.C_px * k.supply_voltage * 0.75 / 2.3e-3;
    const double Tp = pulse_width(basic, k);
    const double Td = pulse_delay(delayed, k);

    uint64_t schedules = 0;
    uint64_t union_bad = 0;
    uint64_t drop_bad = 0;
    for_each_schedule(points, 5, [&](const std::vector<int> &seq) {
        ++schedules;
        std::vector<double> t;
        for (const int i : seq)
        {
            t.push_back(i * step);
        }

        // basic: total active time and activity between events equal the union
        PulseExtenderState px = basic;
        double active = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i)
        {
            const PulseExtenderState before = px;
            px = px_trigger(px, t[i], k);
            if (i > 0 && px.pulse_start != before.pulse_start)
            {
                active += before.pulse_end - before.pulse_start;
            }
        }
        active += px.pulse_end - px.pulse_start;
        if (std::abs(active - union_measure(t, Tp)) > 1e-15)
        {
            ++union_bad;
        }

        // delayed: an event inside [accepted, accepted + Td + Tp) is ignored
        PulseExtenderState pd = delayed;
        double accepted = -1.0;
        for (const double ti : t)
        {
            const PulseExtenderState before = pd;
            pd = px_delayed_trigger(pd, ti, k);
            const bool inside = accepted >= 0.0 && ti < accepted + Td + Tp;
            if (inside)
            {
                if (pd.pulse_start != before.pulse_start || pd.pulse_end != before.pulse_end ||
                        pd.phase != before.phase || pd.phase_end != before.phase_end)
                {
                    ++drop_bad;
                }
            }
            else
            {
                accepted = ti;
                if (std::abs(pd.pulse_start - (ti + Td)) > 1e-15 ||
                        std::abs(pd.pulse_end - (ti + Td + Tp)) > 1e-15)
                {
                    ++drop_bad;
                }
            }
        }
    });
    o.require(union_bad == 0, "union semantics");
    o.require(drop_bad == 0, "drop semantics");
    o.detail += fmt("%llu schedules of <= 5 events: %llu union and %llu drop mismatches",
            static_cast<unsigned long long>(schedules), static_cast<unsigned long long>(union_bad),
            static_cast<unsigned long long>(drop_bad));
    return o;
}

// ---- 4. calibration -------------------------------------------------------------

Outcome calibration()
{
    Outcome o;
    const PhysicsConstants k;

    // Membrane ramp-down with no input
    SomaConfig c;
    c.I_leak = 0.834e-12;
    c.C_mem = 7.72e-12;
    SomaState s = make_soma_state(c, {}, k);
    s.membrane.I_out = 0.5e-9;
    const double v0 = membrane_voltage(s.membrane.I_out, k);
    s = soma_step(s, c, {}, {}, 0.0, 0.5, k).state;
    const double slew = (v0 - membrane_voltage(s.membrane.I_out, k)) / 0.5;
    o.require(rel(slew, 0.108) <= 0.005, "slew");

    // Refractory period from the nominal bias
    ChipGridConfig cfg;
    CoreConfig &core = cfg.chips[0].cores[0];
    SomaConfig sc;
    sc.I_refr = cfg.bias_current({0, 0}, 0, "SOIF_REFR");
    sc.C_refr = cfg.analog.C_refr;
    const double T_refr = refractory_period(sc, cfg.analog.physics);
    o.require(rel(T_refr, 1.58) <= 0.01, "refractory period");

    // Saturated firing under maximal DC
    core.set_bias("SOIF_DC", {5, 255});
    core.neurons[0].latches.SO_DC = true;
    const SimulationReport r = run(cfg, {}, 20'000'000'000);
    std::vector<int64_t> t;
    for (const SpikeRecord &sp : r.spikes)
    {
        t.push_back(sp.t_ns);
    }
    double rate = 0.0;
    if (t.size() >= 3)
    {
        rate = static_cast<double>(t.size() - 2) / ((t.back() - t[1]) * 1e-9);
    }
    o.require(t.size() >= 3 && rel(rate, 1.0 / T_refr) <= 1e-3, "saturated rate");
    o.detail += fmt("slew %.3f mV/s (108 +- 0.5%%), T_refr %.4f s (1.58 +- 1%%), "
                    "rate %.5f Hz vs 1/T_refr %.5f Hz (+- 0.1%%)",
            slew * 1e3, T_refr, rate, 1.0 / T_refr);
    return o;
}

// ---- 5. routing --------------------------------------------------------------

int sign_magnitude(const uint32_t code, const int bits)
{
    const uint32_t mag = code & ((1U << (bits - 1)) - 1U);
    return (code >> (bits - 1)) & 1U ? -static_cast<int>(mag) : static_cast<int>(mag);
}

Direction rule(const int dx, const int dy)
{
    if (dx < 0)
    {
        return Direction::west;
    }
    if (dx > 0)
    {
        return Direction::east;
    }
    if (dy < 0)
    {
        return Direction::south;
    }
    if (dy > 0)
    {
        return Direction::north;
    }
    return Direction::local;
}

Outcome routing()
{
    Outcome o;
    const Stopwatch sw;
    uint64_t codec_bad = 0;
    for (uint32_t w = 0; w <= word_mask; ++w)
    {
        const AerEvent e = decode_word(w);
        bool fields = false;
        if ((w >> 23) == 0)
        {
            const auto *ev = std::get_if<InterNeuronEvent>(&e);
            fields = ev != nullptr && ev->tag == ((w >> 12) & 0x7FFU) &&
                    ev->dy == ((w >> 8) & 0xFU) && ev->dx == ((w >> 4) & 0xFU) &&
                    ev->cores == (w & 0xFU) &&
                    ev->dx_value() == sign_magnitude((w >> 4) & 0xFU, 4) &&
                    ev->dy_value() == sign_magnitude((w >> 8) & 0xFU, 4);
        }
        else
        {
            const auto *ev = std::get_if<SensorEvent>(&e);
            fields = ev != nullptr && ev->pol == (((w >> 22) & 1U) != 0) &&
                    ev->y == ((w >> 13) & 0x1FFU) && ev->x == ((w >> 4) & 0x1FFU) &&
                    ev->dy == ((w >> 2) & 0x3U) && ev->dx == (w & 0x3U);
        }
        if (!fields || encode_word(e) != w)
        {
            ++codec_bad;
        }
    }
    o.require(codec_bad == 0, "codec");

    int decision_bad = 0;
    int hop_bad = 0;
    ChipGrid grid(15, 15);
    for (int dx = -7; dx <= 7; ++dx)
    {
        for (int dy = -7; dy <= 7; ++dy)
        {
            if (route_decision(dx, dy) != rule(dx, dy))
            {
                ++decision_bad;
            }
            const RouteResult r = grid.route({7, 7}, encode_word(InterNeuronEvent::make(3, dx, dy, 1)));
            bool ok = r.delivered && r.hops == std::abs(dx) + std::abs(dy) &&
                    r.destination == ChipCoord{7 + dx, 7 + dy} &&
                    static_cast<int>(r.path.size()) == r.hops;
            // Every hop follows the rule on the remaining displacement
            int rx = dx;
            int ry = dy;
            for (std::size_t h = 0; ok && h < r.path.size(); ++h)
            {
                ok = r.path[h] == rule(rx, ry);
                switch (r.path[h])
                {
                case Direction::west: ++rx; break;
                case Direction::east: --rx; break;
                case Direction::south: ++ry; break;
                case Direction::north: --ry; break;
                case Direction::local: break;
                }
            }
            ok = ok && rx == 0 && ry == 0;
            if (!ok)
            {
                ++hop_bad;
            }
        }
    }
    o.require(decision_bad == 0, "route decision");
    o.require(hop_bad == 0, "hop counts");
    const double secs = sw.seconds();
    o.require(secs < 30.0, "runtime");
    o.detail += fmt("2^24 words: %llu codec errors; 225 pairs: %d decision and %d hop errors; "
                    "%.2f s",
            static_cast<unsigned long long>(codec_bad), decision_bad, hop_bad, secs);
    return o;
}

// ---- 6. connectivity ----------------------------------------------------------

Outcome connectivity()
{
    Outcome o;
    const ChipGridConfig a2a = compile(all_to_all_network(16, 4)).config;
    const SramEntry e = a2a.chips[0].cores[0].neurons[0].srams[0];
    const uint32_t w = encode_word(InterNeuronEvent::make(e.tag, e.dx, e.dy, e.cores));
    const SimulationReport r = run(a2a, std::vector<InputEvent>{{1000, w, {0, 0}}}, 10'000'000);
    o.require(r.counters.pulses_started == 64, "all-to-all pulses");

    const ChipGridConfig ring = compile(ring_network(16, 2)).config;
    int ring_bad = 0;
    for (int i = 0; i < 16; ++i)
    {
        std::set<uint16_t> got;
        for (const SynapseConfig &s : ring.chips[0].cores[1].neurons[i].synapses)
        {
            if (s.target().has_value())
            {
                got.insert(s.cam_tag);
            }
        }
        std::set<uint16_t> want;
        for (int d = -2; d <= 2; ++d)
        {
            want.insert(static_cast<uint16_t>((i + d + 16) % 16));
        }
        if (got != want)
        {
            ++ring_bad;
        }
    }
    o.require(ring_bad == 0, "ring tags");
    o.detail += fmt("n=16 r=4: %llu pulses from one spike (64); n=16 r=2: %d of 16 post neurons "
                    "off the 5-tag modular pattern",
            static_cast<unsigned long long>(r.counters.pulses_started), ring_bad);
    return o;
}

// ---- 7. adaptation ----------------------------------------------------------------

Outcome adaptation()
{
    Outcome o;
    const AdaptationResult a = run_adaptation();
    std::vector<int64_t> drive;
    for (const int64_t t : a.spike_times)
    {
        if (t < a.input_off_ns)
        {
            drive.push_back(t);
        }
    }
    o.require(drive.size() >= 10, "enough spikes");
    // Spike times are integer nanoseconds, so intervals may jitter by 1 ns.
    int increases = 0;
    for (std::size_t i = 2; i < drive.size(); ++i)
    {
        if (drive[i] - drive[i - 1] < drive[i - 1] - drive[i - 2] - 1)
        {
            ++increases;
        }
    }
    o.require(increases == 0, "non-increasing rate");
    const double first = 1e9 / static_cast<double>(drive[1] - drive[0]);
    const double last = 1e9 / static_cast<double>(drive.back() - drive[drive.size() - 2]);
    const double before = 1e9 / static_cast<double>(drive[drive.size() - 5] - drive[drive.size() - 6]);
    o.require(rel(before, last) < 0.01, "converged");
    o.require(last < 0.5 * first, "steady below half");
    const double decay = a.I_adapt_after / a.I_adapt_at_off;
    o.require(decay < 0.01, "decay");
    o.detail += fmt("rate %.2f -> %.2f Hz (%.1f%% of initial, < 50%%), %d rate increases; "
                    "I_adapt after 5 tau / at off = %.4f (< 0.01)",
            first, last, 100.0 * last / first, increases, decay);
    return o;
}

// ---- 8. homeostasis ------------------------------------------------------------

Outcome homeostasis()
{
    Outcome o;
    std::string per_seed;
    double worst_dev = 0.0;
    uint64_t checks = 0;
    uint64_t violations = 0;
    double worst_wall = 0.0;
    for (const uint64_t seed : {homeostasis_seed, uint64_t{1}, uint64_t{2}, uint64_t{3}, uint64_t{4}})
    {
        const Stopwatch sw;
        const HomeostasisResult h = run_homeostasis(seed, homeostasis_duration_s);
        worst_wall = std::max(worst_wall, sw.seconds());
        const std::vector<double> &c = h.calcium_counts;
        const double ref = h.reference_counts;
        // First window above the reference, then the first at or below it
        std::size_t up = 0;
        while (up < c.size() && c[up] <= ref)
        {
            ++up;
        }
        std::size_t cross = up;
        while (cross < c.size() && c[cross] > ref)
        {
            ++cross;
        }
        o.require(cross < c.size(), "crossing");
        double dev = 0.0;
        for (std::size_t i = cross; i < c.size(); ++i)
        {
            dev = std::max(dev, std::abs(c[i] - ref) / ref);
        }
        worst_dev = std::max(worst_dev, dev);
        checks += h.direction_checks;
        violations += h.direction_violations;
        const double ratio = h.initial_gain / h.settled_gain;
        o.require(ratio > 5.0 && ratio < 20.0, "initial gain about 10x");
        per_seed += fmt(" s%llu:x%zu/%.0f%%", static_cast<unsigned long long>(seed), cross,
                100.0 * dev);
    }
    o.require(worst_dev <= 0.2, "band");
    o.require(checks > 0 && violations == 0, "direction");
    o.require(worst_wall < 10.0, "wall time");
    o.detail += fmt("5 seeds x %.0f s: max deviation after crossing %.1f%% (<= 20%%), "
                    "%llu/%llu gain direction violations, max wall %.2f s;",
            homeostasis_duration_s, 100.0 * worst_dev, static_cast<unsigned long long>(violations),
            static_cast<unsigned long long>(checks), worst_wall);
    o.detail += per_seed;
    return o;
}

// ---- 9. order detection --------------------------------------------------------

Outcome order_detection()
{
    Outcome o;
    const std::array<std::pair<OrderMechanism, int64_t>, 3> cases = {{
            {OrderMechanism::conductance, 5'000'000},
            {OrderMechanism::alpha, 20'000'000},
            {OrderMechanism::nmda, 5'000'000},
    }};
    for (const auto &[m, gap] : cases)
    {
        const OrderResult r = run_order_detection(m);
        o.require(r.gap_ns == gap, "timing");
        o.require(r.forward_spikes == 1 && r.reversed_spikes == 0, order_mechanism_name(m));
        o.detail += fmt("%s%s gap %lld ms: forward %d, reversed %d", o.detail.empty() ? "" : "; ",
                order_mechanism_name(m), static_cast<long long>(r.gap_ns / 1'000'000),
                r.forward_spikes, r.reversed_spikes);
    }
    return o;
}

// ---- 10. diffusion ---------------------------------------------------------------

// Node currents through g_n from a dense nodal solve.
std::vector<double> eigen_oracle(const std::vector<double> &inj, const DiffusionGridConfig &g)
{
    const int n = g.size();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i)
    {
        G(i, i) += g.g_n;
        b(i) = inj[static_cast<std::size_t>(i)];
        const int row = i / g.width;
        const int col = i % g.width;
        const auto link = [&](const int j, const double gc) {
            G(i, i) += gc;
            G(i, j) -= gc;
        };
        if (col > 0)
        {
            link(i - 1, g.g_h);
        }
        if (col + 1 < g.width)
        {
            link(i + 1, g.g_h);
        }
        if (row > 0)
        {
            link(i - g.width, g.g_v);
        }
        if (row + 1 < g.height)
        {
            link(i + g.width, g.g_v);
        }
    }
    const Eigen::VectorXd v = G.fullPivLu().solve(b);
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
    {
        out[static_cast<std::size_t>(i)] = g.g_n * v(i);
    }
    return out;
}

Outcome diffusion()
{
    Outcome o;
    const DiffusionResult d = run_diffusion();
    const int n = diffusion_nodes;
    const int c = d.injected_node;
    const double I = d.injected_current;
    std::vector<double> inj(static_cast<std::size_t>(n), 0.0);
    inj[static_cast<std::size_t>(c)] = I;
    const std::vector<double> oracle = eigen_oracle(inj, d.grid);
    const DiffusionSolver solver(d.grid);
    const std::vector<double> solved = solver.solve(inj);

    double oracle_err = 0.0;
    double engine_err = 0.0;
    double total = 0.0;
    for (int i = 0; i < n; ++i)
    {
        const auto k = static_cast<std::size_t>(i);
        oracle_err = std::max(oracle_err, std::abs(solved[k] - oracle[k]) / I);
        engine_err = std::max(engine_err, std::abs(d.outputs[k] - oracle[k]) / I);
        total += d.outputs[k];
    }
    double asym = 0.0;
    int monotone_bad = 0;
    for (int k = 1; c - k >= 0 && c + k < n; ++k)
    {
        asym = std::max(asym, std::abs(d.outputs[c - k] - d.outputs[c + k]) / I);
    }
    for (int i = 1; i < n; ++i)
    {
        const double nearer = i <= c ? d.outputs[i] : d.outputs[i - 1];
        const double farther = i <= c ? d.outputs[i - 1] : d.outputs[i];
        if (!(farther < nearer))
        {
            ++monotone_bad;
        }
    }
    const double conservation = std::abs(total - I) / I;
    o.require(asym <= 1e-9, "symmetry");
    o.require(monotone_bad == 0, "monotone");
    o.require(conservation <= 1e-9, "conservation");
    o.require(oracle_err <= 1e-9, "solver vs dense oracle");
    o.require(engine_err <= 1e-9, "engine vs dense oracle");
    o.detail += fmt("16x1, injection at node %d: asymmetry %.1e, conservation %.1e, solver %.1e, "
                    "engine %.1e (all <= 1e-9 of injection), %d monotonicity breaks",
            c, asym, conservation, oracle_err, engine_err, monotone_bad);
    return o;
}

// ---- 11. short-term depression ---------------------------------------------------

Outcome stp()
{
    Outcome o;
    const StpResult s = run_stp();
    const std::vector<double> &p = s.peaks;
    o.require(p.size() == 11, "pulse count");
    const auto top = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    o.require(top > 0 && top + 1 < p.size(), "interior maximum");
    int shape_bad = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
    {
        if (i <= top ? !(p[i] > p[i - 1]) : !(p[i] < p[i - 1]))
        {
            ++shape_bad;
        }
    }
    o.require(shape_bad == 0, "rise then sag");
    const double recovered = s.weight_recovered / s.baseline_weight;
    o.require(recovered >= 0.99, "recovery");
    const double after_ms = (s.recovered_ns - s.input_end_ns) * 1e-6;
    o.require(s.recovered_ns >= 0 && after_ms <= 250.0, "recovery time");
    o.detail += fmt("%zu pulses at 167 Hz, peak at pulse %zu, %d shape breaks; weight %.1f%% of "
                    "baseline at end, %.2f%% at +250 ms, 99%% reached %.0f ms after input",
            p.size(), top + 1, shape_bad, 100.0 * s.weight_at_end / s.baseline_weight,
            100.0 * recovered, after_ms);
    return o;
}

// ---- 12. mismatch ----------------------------------------------------------------

double ks_statistic(std::vector<double> x, const double sigma)
{
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        // Lognormal with median 1: Phi(ln x / sigma)
        const double f = 0.5 * std::erfc(-std::log(x[i]) / (sigma * std::sqrt(2.0)));
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

std::string delay_path(const int i)
{
    return "chip0/core" + std::to_string(i % 4) + "/n" + std::to_string(i / 4 % 256) + "/syn" +
            std::to_string(i / 1024);
}

Outcome mismatch()
{
    Outcome o;
    const MismatchConfig cfg;
    const MismatchModel m(31, cfg.cv);
    // Kolmogorov asymptotic critical value for alpha = 0.01
    const double crit = 1.62762 / std::sqrt(10000.0);
    for (const char *cls : {"dly0", "dly1", "dly2"})
    {
        const double cv = cfg.cv.at(cls);
        std::vector<double> x;
        for (int i = 0; i < 10000; ++i)
        {
            x.push_back(m.sample(delay_path(i) + "/" + cls));
        }
        const double sigma = std::sqrt(std::log1p(cv * cv));
        const double d = ks_statistic(x, sigma);
        o.require(d < crit, cls);
        o.detail += fmt("%s CV %.1f%% D=%.4f; ", cls, 100.0 * cv, d);
    }

    // Mean and spread of each (precise, mismatched) delay group
    const DelayBases bases{1e-10, 1e-10, 1e-10};
    const PhysicsConstants pc;
    std::array<double, 4> mean{};
    std::array<double, 4> cv{};
    for (int g = 0; g < 4; ++g)
    {
        SynapseConfig syn;
        syn.precise_delay = (g & 1) != 0;
        syn.mismatched_delay = (g & 2) != 0;
        std::vector<double> t;
        for (int i = 0; i < 10000; ++i)
        {
            const std::string p = delay_path(i) + "/";
            const DelayFactors f{m.sample(p + "dly0"), m.sample(p + "dly1"), m.sample(p + "dly2")};
            t.push_back(synapse_delay_time(syn, bases, f, 2e-12, pc));
        }
        mean[g] = std::accumulate(t.begin(), t.end(), 0.0) / 10000.0;
        double var = 0.0;
        for (const double v : t)
        {
            var += (v - mean[g]) * (v - mean[g]);
        }
        cv[g] = std::sqrt(var / 9999.0) / mean[g];
    }
    // index = precise + 2 * mismatched
    o.require(mean[0] > mean[1] && mean[0] > mean[2] && mean[1] > mean[3] && mean[2] > mean[3],
            "group mean ordering");
    o.require(cv[2] > cv[1], "group spread ordering");
    o.detail += fmt("critical %.4f; mean delay (p,m) 00 %.3g > 10 %.3g, 01 %.3g > 11 %.3g s; "
                    "CV 01 %.1f%% > 10 %.1f%%",
            crit, mean[0], mean[1], mean[2], mean[3], 100.0 * cv[2], 100.0 * cv[1]);
    return o;
}

// ---- 13. energy ------------------------------------------------------------------

Outcome energy()
{
    Outcome o;
    EnergyLedger ledger;
    for (int i = 0; i < 1000; ++i)
    {
        ledger.record_spike(0, 0, SomaModel::thresholded);
    }
    const double thr_nJ = ledger.energy_pJ() * 1e-3;
    EnergyLedger exp_ledger;
    for (int i = 0; i < 1000; ++i)
    {
        exp_ledger.record_spike(0, 0, SomaModel::exponential);
    }
    const double exp_nJ = exp_ledger.energy_pJ() * 1e-3;
    o.require(thr_nJ == 150.0 && exp_nJ == 300.0, "ledger");

    // The engine charges the same amounts: stop each run right after spike 1000.
    std::array<double, 2> engine_nJ{};
    for (const bool exponential : {false, true})
    {
        ChipGridConfig cfg;
        CoreConfig &core = cfg.chips[0].cores[0];
        core.set_bias("SOIF_DC", {5, 255});
        core.set_bias("SOIF_REFR", {4, 255});
        core.neurons[0].latches.SO_DC = true;
        core.neurons[0].latches.SOIF_TYPE = exponential;
        const SimulationReport probe = run(cfg, {}, 10'000'000'000);
        if (probe.spikes.size() < 1000)
        {
            o.require(false, "engine spike count");
            continue;
        }
        const SimulationReport r = run(cfg, {}, probe.spikes[999].t_ns + 1);
        engine_nJ[exponential ? 1 : 0] = r.energy.energy_pJ() * 1e-3;
        o.require(r.spikes.size() == 1000, "engine spike count");
    }
    o.require(engine_nJ[0] == 150.0 && engine_nJ[1] == 300.0, "engine energy");
    o.detail += fmt("1000 thresholded spikes %.6g nJ, 1000 exponential spikes %.6g nJ; "
                    "engine runs %.6g and %.6g nJ",
            thr_nJ, exp_nJ, engine_nJ[0], engine_nJ[1]);
    return o;
}

// ---- 14. determinism ---------------------------------------------------------------

// Report hash of the reference run below, recorded on x86-64 Linux.
constexpr uint64_t reference_hash = 0xdcd168923b25edf5ULL;

ScenarioRun determinism_scenario()
{
    ScenarioRun s;
    s.config = homeostasis_config();
    s.config.mismatch.enabled = true;
    s.config.mismatch.seed = 4242;
    s.inputs = poisson_train(200.0, 2.0, 9, encode_word(InterNeuronEvent::make(1, 0, 0, 1)));
    return s;
}

std::string read_all(const fs::path &dir)
{
    std::string all;
    std::vector<fs::path> files;
    for (const auto &e : fs::recursive_directory_iterator(dir))
    {
        if (e.is_regular_file())
        {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const fs::path &f : files)
    {
        all += fs::relative(f, dir).string() + "\n" + read_text_file(f);
    }
    return all;
}

Outcome determinism()
{
    Outcome o;
    const ScenarioRun s = determinism_scenario();
    const int64_t until = 2'000'000'000;
    const SimulationReport a = run(s.config, s.inputs, until);
    const SimulationReport b = run(s.config, s.inputs, until);
    o.require(!a.spikes.empty(), "activity");
    o.require(a.canonical_text() == b.canonical_text(), "in-process repeat");

    const fs::path tmp = fs::temp_directory_path() / ("spikechip_acceptance_" +
            std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
    write_report(tmp / "a", a);
    write_report(tmp / "b", b);
    const bool files_equal = read_all(tmp / "a") == read_all(tmp / "b");
    fs::remove_all(tmp);
    o.require(files_equal, "report files");

    // The same inputs and seed with a different mismatch seed must differ.
    ScenarioRun other = s;
    other.config.mismatch.seed = 4243;
    o.require(run(other.config, other.inputs, until).hash() != a.hash(), "seed sensitivity");

    o.require(a.hash() == reference_hash, "reference hash");
    o.detail += fmt("%zu spikes, report hash %016llx (reference %016llx), report files %s",
            a.spikes.size(), static_cast<unsigned long long>(a.hash()),
            static_cast<unsigned long long>(reference_hash), files_equal ? "identical" : "differ");
    return o;
}

} // namespace

int main()
{
    const std::vector<std::pair<const char *, Outcome (*)()>> criteria = {
            {"DPI correctness", dpi_correctness},
            {"Charge per event", charge_per_event},
            {"Pulse semantics", pulse_semantics},
            {"Calibration reproduction", calibration},
            {"Routing bit-exactness", routing},
            {"Connectivity compilation", connectivity},
            {"Adaptation", adaptation},
            {"Homeostasis", homeostasis},
            {"Order detection", order_detection},
            {"Diffusion", diffusion},
            {"Short-term depression", stp},
            {"Mismatch", mismatch},
            {"Energy ledger", energy},
            {"Determinism", determinism},
    };
    int failed = 0;
    int index = 0;
    for (const auto &[name, check] : criteria)
    {
        Outcome o;
        try
        {
            o = check();
        }
        catch (const std::exception &e)
        {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", ++index, name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", index - failed, criteria.size());
    return failed;
}
