// monitor.cpp

#include <cmath>

#include "spikechip/monitor.hpp"

int64_t spikechip::sadc_counts(
        const MonitorTap &tap, const double mean_current, const double window)
{
    if (!(tap.gain > 0.0))
    {
        throw ConfigError("sADC gain must be positive");
    }
    return std::llround(tap.gain * std::max(mean_current, 0.0) * std::max(window, 0.0));
}

int64_t spikechip::sadc_counts(
        const MonitorTap &tap, const std::span<const double> trace, const double window)
{
    double mean = 0.0;
    if (trace.size() == 1)
    {
        mean = trace[0];
    }
    else if (trace.size() > 1)
    {
        double acc = 0.0;
        for (std::size_t i = 1; i < trace.size(); ++i)
        {
            acc += 0.5 * (trace[i - 1] + trace[i]);
        }
        mean = acc / static_cast<double>(trace.size() - 1);
    }
    return sadc_counts(tap, mean, window);
}

spikechip::EnergyLedger::EnergyLedger(const double thresholded_pJ, const double exponential_pJ)
    : thresholded_pJ_(thresholded_pJ), exponential_pJ_(exponential_pJ)
{
}

void spikechip::EnergyLedger::record_spike(const int chip, const int core, const SomaModel model)
{
    auto &c = counts_[{chip, core}];
    if (model == SomaModel::thresholded)
    {
        ++c.first;
    }
    else
    {
        ++c.second;
    }
}

uint64_t spikechip::EnergyLedger::count(const int chip, const int core, const SomaModel model) const
{
    const auto it = counts_.find({chip, core});
    if (it == counts_.end())
    {
        return 0;
    }
    return model == SomaModel::thresholded ? it->second.first : it->second.second;
}

uint64_t spikechip::EnergyLedger::total_count(const SomaModel model) const
{
    uint64_t n = 0;
    for (const auto &[key, c] : counts_)
    {
        n += model == SomaModel::thresholded ? c.first : c.second;
    }
    return n;
}

double spikechip::EnergyLedger::energy_pJ() const
{
    return static_cast<double>(total_count(SomaModel::thresholded)) * thresholded_pJ_ +
            static_cast<double>(total_count(SomaModel::exponential)) * exponential_pJ_;
}
