// monitor.hpp - sADC conversion and energy accounting
#ifndef SPIKECHIP_MONITOR_HPP
#define SPIKECHIP_MONITOR_HPP

#include <cstdint>
#include <map>
#include <span>
#include <utility>

#include "spikechip/chip_config.hpp"
#include "spikechip/soma.hpp"

namespace spikechip
{

// counts = round(gain * mean_current * window)
int64_t sadc_counts(const MonitorTap &tap, double mean_current, double window);

// Mean of equally spaced samples spanning the window (trapezoid rule).
int64_t sadc_counts(const MonitorTap &tap, std::span<const double> trace, double window);

class EnergyLedger
{
public:
    EnergyLedger() = default;
    EnergyLedger(double thresholded_pJ, double exponential_pJ);

    void record_spike(int chip, int core, SomaModel model);
    uint64_t count(int chip, int core, SomaModel model) const;
    uint64_t total_count(SomaModel model) const;
    double energy_pJ() const;
    double thresholded_pJ() const { return thresholded_pJ_; }
    double exponential_pJ() const { return exponential_pJ_; }
    const std::map<std::pair<int, int>, std::pair<uint64_t, uint64_t>> &counts() const
    {
        return counts_;
    }

private:
    double thresholded_pJ_ = 150.0;
    double exponential_pJ_ = 300.0;
    // (chip, core) -> (thresholded, exponential)
    std::map<std::pair<int, int>, std::pair<uint64_t, uint64_t>> counts_;
};

} // namespace spikechip

#endif
