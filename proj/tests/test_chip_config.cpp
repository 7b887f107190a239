#include "doctest.h"
#include <set>
#include "spikechip/chip_config.hpp"
#include "spikechip/soma.hpp"

using namespace spikechip;

TEST_CASE("nominal profile reproduces the calibration currents")
{
    const ChipGridConfig g;
    CHECK(g.bias_current({0, 0}, 0, "SOIF_LEAK") == doctest::Approx(0.834e-12).epsilon(1e-3));
    CHECK(g.bias_current({0, 0}, 0, "SOIF_REFR") == doctest::Approx(1.71e-12).epsilon(1e-3));
    // Membrane slew I_leak / C_mem
    const double slew = g.bias_current({0, 0}, 0, "SOIF_LEAK") / g.analog.C_mem;
    CHECK(slew == doctest::Approx(0.108).epsilon(0.005));
    SomaConfig sc;
    sc.I_refr = g.bias_current({0, 0}, 0, "SOIF_REFR");
    sc.C_refr = g.analog.C_refr;
    CHECK(refractory_period(sc, g.analog.physics) == doctest::Approx(1.58).epsilon(0.01));
}

TEST_CASE("every bias has a nominal code and a unique name")
{
    std::set<std::string> names;
    for (const auto &b : core_bias_table())
    {
        CHECK(names.insert(b.name).second);
        CHECK_NOTHROW(b.nominal.validate());
        CHECK(find_bias(b.name) == &b);
    }
    CHECK(find_bias("NOPE") == nullptr);
}

TEST_CASE("bias codes are stored only when set")
{
    CoreConfig c;
    CHECK(c.bias_code("SOIF_DC") == find_bias("SOIF_DC")->nominal);
    c.set_bias("SOIF_DC", {3, 7});
    CHECK(c.bias_code("SOIF_DC") == BiasCode{3, 7});
    CHECK(c.biases.size() == 1);
    CHECK_THROWS_AS(c.set_bias("SOIF_DC", {6, 0}), ConfigError);
    CHECK_THROWS_AS(c.set_bias("BAD", {0, 0}), ConfigError);
    CHECK_THROWS_AS(c.bias_code("BAD"), ConfigError);
}

TEST_CASE("voltage and conductance biases")
{
    const AnalogConfig a;
    const BiasSpec &v = *find_bias("SOHO_VREF_M");
    CHECK(bias_value(v, {0, 0}, a) == 0.0);
    const double I = resolve_bias({1, 100});
    CHECK(bias_value(v, {1, 100}, a) ==
            doctest::Approx(current_to_gate_voltage(I, Polarity::n_type, a.physics)));
    const BiasSpec &g = *find_bias("DEAM_NRES");
    CHECK(bias_value(g, {1, 100}, a) ==
            doctest::Approx(a.physics.kappa * I / a.physics.thermal_voltage));
}

TEST_CASE("latch table")
{
    NeuronLatches l;
    bool *p = find_latch(l, "SO_DC");
    REQUIRE(p != nullptr);
    *p = true;
    CHECK(l.SO_DC);
    CHECK(find_latch(l, "DE_MUX") == nullptr);
    CHECK(latch_table().size() == 15);
}

TEST_CASE("grid validation")
{
    ChipGridConfig g = make_grid(2, 3);
    CHECK(g.chips.size() == 6);
    CHECK_NOTHROW(g.validate());
    CHECK(g.chip_index({1, 2}) == 5);
    CHECK(g.chip_index({2, 0}) == -1);
    CHECK_THROWS_AS(g.chip({2, 0}), ConfigError);

    ChipGridConfig big = make_grid(17, 1);
    CHECK_THROWS_AS(big.validate(), ConfigError);

    ChipGridConfig bad = make_grid(1, 1);
    bad.chips[0].cores[0].biases["NOPE"] = {0, 1};
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = make_grid(1, 1);
    bad.chips[0].cores[2].neurons[5].srams[1].dx = 8;
    try
    {
        bad.validate();
        FAIL("expected a range error");
    }
    catch (const ConfigError &e)
    {
        CHECK(std::string(e.what()).find("core2/n5/sram1") != std::string::npos);
    }

    bad = make_grid(1, 1);
    bad.chips[0].cores[0].neurons[0].synapses[0].dendrite_select = {true, true, false, false};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("monitor constraints")
{
    ChipGridConfig g;
    MonitorTap a;
    a.channel = 3;
    MonitorTap b = a;
    g.monitors = {a, b};
    CHECK_THROWS_AS(g.validate(), ConfigError); // same channel twice
    b.channel = 4;
    b.gain = 2e12;
    g.monitors = {a, b};
    CHECK_THROWS_AS(g.validate(), ConfigError); // one gain per group
    b.gain = a.gain;
    g.monitors = {a, b};
    CHECK_NOTHROW(g.validate());

    MonitorTap p;
    p.kind = MonitorKind::probe;
    p.source = MonitorSource::membrane;
    MonitorTap q = p;
    q.neuron = 9;
    g.monitors = {p, q};
    CHECK_THROWS_AS(g.validate(), ConfigError); // one membrane probe per core
    q.core = 1;
    g.monitors = {p, q};
    CHECK_NOTHROW(g.validate());
    p.chip = {1, 0};
    g.monitors = {p};
    CHECK_THROWS_AS(g.validate(), ConfigError);
}
