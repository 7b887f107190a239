// test_scenarios.cpp

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "spikechip/scenarios.hpp"

using namespace spikechip;

namespace
{

uint32_t tag_word(const uint16_t tag)
{
    return encode_word(InterNeuronEvent::make(tag, 0, 0, 1));
}

int spikes_of_neuron0(const SimulationReport &r)
{
    return static_cast<int>(std::count_if(r.spikes.begin(), r.spikes.end(),
            [](const SpikeRecord &s) { return s.core == 0 && s.neuron == 0; }));
}

} // namespace

TEST_CASE("poisson trains are reproducible and have the requested rate")
{
    const uint32_t w = tag_word(1);
    const auto a = poisson_train(100.0, 50.0, 3, w);
    const auto b = poisson_train(100.0, 50.0, 3, w);
    const auto c = poisson_train(100.0, 50.0, 4, w);
    CHECK(a == b);
    CHECK(a != c);
    CHECK(std::is_sorted(a.begin(), a.end(),
            [](const InputEvent &x, const InputEvent &y) { return x.t_ns < y.t_ns; }));
    CHECK(a.back().t_ns < 50'000'000'000);
    for (const InputEvent &e : a)
    {
        CHECK(e.word == w);
    }
    // 5000 expected events; 5 sigma is about 354
    CHECK(std::abs(static_cast<double>(a.size()) - 5000.0) < 354.0);
    CHECK_THROWS_AS(poisson_train(0.0, 1.0, 1, w), ConfigError);
    CHECK(poisson_train(10.0, 0.0, 1, w).empty());
}

TEST_CASE("dpi time constant")
{
    const PhysicsConstants k;
    CHECK(dpi_time_constant(1e-12, 35.7e-12, k) == doctest::Approx(1.0e-3).epsilon(1e-3));
    CHECK(dpi_time_constant(7.72e-12, 0.834e-12, k) == doctest::Approx(0.3306).epsilon(1e-3));
}

TEST_CASE("demo names and unknown demos")
{
    const auto &names = demo_names();
    CHECK(names.size() == 7);
    CHECK(std::find(names.begin(), names.end(), "homeostasis") != names.end());
    CHECK_THROWS_AS(run_demo("bogus"), ConfigError);
    CHECK_THROWS_AS(run_demo("order-bogus"), ConfigError);
}

TEST_CASE("order detection in one run matches separate runs")
{
    for (const OrderMechanism m :
            {OrderMechanism::conductance, OrderMechanism::alpha, OrderMechanism::nmda})
    {
        INFO(order_mechanism_name(m));
        const OrderResult joint = run_order_detection(m);
        const ChipGridConfig cfg = order_config(m);
        CHECK_NOTHROW(cfg.validate());
        const int64_t g = joint.gap_ns;
        const int64_t span = joint.reversed_at_ns;
        const std::vector<InputEvent> fwd = {{0, tag_word(1), {}}, {g, tag_word(2), {}}};
        const std::vector<InputEvent> rev = {{0, tag_word(2), {}}, {g, tag_word(1), {}}};
        CHECK(spikes_of_neuron0(run(cfg, fwd, span)) == joint.forward_spikes);
        CHECK(spikes_of_neuron0(run(cfg, rev, span)) == joint.reversed_spikes);
        // Each input alone stays below threshold
        CHECK(spikes_of_neuron0(run(cfg, std::vector<InputEvent>{{0, tag_word(1), {}}}, span)) == 0);
        CHECK(spikes_of_neuron0(run(cfg, std::vector<InputEvent>{{0, tag_word(2), {}}}, span)) == 0);
    }
}

TEST_CASE("adaptation result is self-consistent")
{
    const AdaptationResult a = run_adaptation();
    REQUIRE(a.spike_times.size() > 10);
    CHECK(a.rates.size() + 1 <= a.spike_times.size());
    CHECK(a.tau_adaptation > 0.0);
    CHECK(a.I_adapt_at_off > 0.0);
    // No spikes while the input is off and no drive remains
    const auto after = std::count_if(a.spike_times.begin(), a.spike_times.end(),
            [&](const int64_t t) { return t > a.input_off_ns + 10'000'000; });
    CHECK(after == 0);
}

TEST_CASE("homeostasis windows and gain")
{
    const HomeostasisResult h = run_homeostasis(homeostasis_seed, 10.0);
    CHECK(h.window_s == doctest::Approx(2.0));
    CHECK(h.calcium_counts.size() == 5);
    CHECK(h.calcium_counts.front() > h.reference_counts);
    CHECK(h.settled_gain < h.initial_gain);
    CHECK(h.direction_violations == 0);
}

TEST_CASE("diffusion demo conserves the injected current")
{
    const DiffusionResult d = run_diffusion();
    REQUIRE(d.outputs.size() == diffusion_nodes);
    double total = 0.0;
    for (const double v : d.outputs)
    {
        CHECK(v > 0.0);
        total += v;
    }
    CHECK(total == doctest::Approx(d.injected_current).epsilon(1e-9));
    CHECK(d.grid.width == diffusion_nodes);
    CHECK(d.grid.height == 1);
    // The injected node keeps the largest share and peaks highest
    CHECK(std::max_element(d.outputs.begin(), d.outputs.end()) - d.outputs.begin() ==
            d.injected_node);
    CHECK(std::max_element(d.peak_membrane.begin(), d.peak_membrane.end()) -
                    d.peak_membrane.begin() ==
            d.injected_node);
}

TEST_CASE("stp weight only falls during the train")
{
    const StpResult s = run_stp();
    CHECK(s.weight_at_end < s.baseline_weight);
    CHECK(s.weight_recovered <= s.baseline_weight * (1.0 + 1e-12));
    CHECK(s.recovered_ns > s.input_end_ns);
}

TEST_CASE("demo metrics carry the scenario outputs")
{
    const DemoOutput d = run_demo("order-nmda");
    CHECK(d.metrics.at("forward_spikes") == 1);
    CHECK(d.metrics.at("reversed_spikes") == 0);
    CHECK(d.run.name == "order-nmda");
    CHECK_FALSE(d.run.inputs.empty());
}
