#include <array>
#include <cmath>

#include "doctest.h"
#include "spikechip/synapse.hpp"

using namespace spikechip;

TEST_CASE("cam match is exact equality")
{
    CHECK(cam_match(1023, 1023));
    CHECK_FALSE(cam_match(1023, 1022));
    for (const uint16_t cam : {uint16_t{0}, uint16_t{77}, uint16_t{2047}})
    {
        int hits = 0;
        for (int t = 0; t <= max_tag; ++t)
        {
            hits += cam_match(static_cast<uint16_t>(t), cam) ? 1 : 0;
        }
        CHECK(hits == 1);
    }
}

TEST_CASE("synapse config validation")
{
    SynapseConfig s;
    s.cam_tag = 2048;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.cam_tag = 5;
    s.dendrite_select = {true, true, false, false};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.set_target(Dendrite::gaba_b);
    CHECK_NOTHROW(s.validate());
    CHECK(s.target() == Dendrite::gaba_b);
    s.set_target(std::nullopt);
    CHECK_FALSE(s.target().has_value());
}

TEST_CASE("synapse weight current")
{
    const PhysicsConstants k;
    const std::array<double, 4> bases = {80e-12, 40e-12, 20e-12, 10e-12};
    SynapseConfig s;
    CHECK(synapse_weight_current(s, bases, nullptr, k) == 0.0);
    s.weight_bits = {true, false, true, false};
    CHECK(synapse_weight_current(s, bases, nullptr, k) == doctest::Approx(100e-12));
    StpState stp;
    stp.V_stpw = 0.3;
    stp.V_stp = 0.3;
    s.stp_enabled = true;
    CHECK(synapse_weight_current(s, bases, &stp, k) ==
            doctest::Approx(k.process_current * std::exp(k.kappa * 0.3 / k.thermal_voltage)));
}

TEST_CASE("delay groups and ordering")
{
    const PhysicsConstants k;
    const DelayBases b{1e-12, 2e-12, 3e-12};
    const auto T = [&](const bool precise, const bool mismatched) {
        SynapseConfig s;
        s.precise_delay = precise;
        s.mismatched_delay = mismatched;
        return synapse_delay_time(s, b, {}, 2e-12, k);
    };
    const double swing = 2e-12 * 1.8 * 0.75;
    CHECK(T(false, false) == doctest::Approx(swing / 1e-12));
    CHECK(T(true, true) == doctest::Approx(swing / 6e-12));
    CHECK(T(false, false) >= T(false, true));
    CHECK(T(true, false) >= T(true, true));
    CHECK(T(false, false) >= T(true, false));
    SynapseConfig s;
    CHECK_THROWS_AS(synapse_delay_time(s, DelayBases{0.0, 1e-12, 1e-12}, {}, 2e-12, k),
            ConfigError);
}

TEST_CASE("short-term depression")
{
    const PhysicsConstants k;
    StpState s;
    s.V_stpw = 0.4;
    s.V_stp = 0.4;
    s.I_stpstr = 1e-12;
    s.C_stp = 1e-12;
    const StpState d = stp_on_pulse(s, 1e-3);
    CHECK(d.V_stp == doctest::Approx(0.399));
    CHECK(stp_on_pulse(s, 0.0).V_stp == s.V_stp);
    CHECK(stp_weight(d, k) / stp_weight(s, k) ==
            doctest::Approx(std::exp(-k.kappa * 1e-3 / k.thermal_voltage)));
    StpState floor = s;
    floor.I_stpstr = 1e-6;
    CHECK(stp_on_pulse(floor, 1.0).V_stp == 0.0);

    CHECK(stp_recover(s, 1.0).V_stp == s.V_stp);
    const StpState r = stp_recover(d, s.tau_recovery);
    CHECK((s.V_stpw - r.V_stp) == doctest::Approx((s.V_stpw - d.V_stp) / std::exp(1.0)));
}

TEST_CASE("depression never exceeds the fixed-point weight")
{
    const PhysicsConstants k;
    StpState s;
    s.V_stpw = 0.35;
    s.V_stp = 0.35;
    s.I_stpstr = 5e-12;
    const double top = stp_weight(s, k);
    for (int i = 0; i < 200; ++i)
    {
        s = stp_on_pulse(s, 1e-4 * (i % 7));
        CHECK(stp_weight(s, k) <= top * (1 + 1e-15));
        s = stp_recover(s, 1e-3 * (i % 5));
        CHECK(stp_weight(s, k) <= top * (1 + 1e-15));
    }
}
