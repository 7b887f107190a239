// mismatch.hpp - reproducible device mismatch
//
// Every instance (bias or capacitance of one neuron or synapse) draws a
// lognormal factor with median 1 from a hash of (seed, instance path). The
// class is the last path component, e.g. "chip0/core1/n42/syn7/dly2".
#ifndef SPIKECHIP_MISMATCH_HPP
#define SPIKECHIP_MISMATCH_HPP

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "spikechip/chip_config.hpp"

namespace spikechip
{

// FNV-1a over the bytes, seeded.
uint64_t fnv1a64(std::string_view bytes, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t splitmix64(uint64_t x);

// sigma of the underlying normal for a lognormal with the given CV.
double lognormal_sigma(double cv);
double standard_normal_cdf(double z);
// CDF of the median-1 lognormal with parameter sigma.
double lognormal_cdf(double x, double sigma);

class MismatchModel
{
public:
    MismatchModel() = default;
    MismatchModel(uint64_t seed, std::map<std::string, double> cv, bool enabled = true);
    explicit MismatchModel(const MismatchConfig &cfg);

    double sample(std::string_view path) const;
    double cv(const std::string &cls) const;
    bool enabled() const { return enabled_; }
    uint64_t seed() const { return seed_; }
    // Unknown classes seen so far, one warning each.
    std::vector<std::string> warnings() const;

private:
    uint64_t seed_ = 1;
    std::map<std::string, double> cv_;
    bool enabled_ = false;
    mutable std::set<std::string> unknown_;
};

double sample_mismatch(const MismatchModel &model, std::string_view instance_path);

} // namespace spikechip

#endif
