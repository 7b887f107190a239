// mismatch.cpp

#include <cmath>
#include <numbers>

#include "spikechip/mismatch.hpp"

uint64_t spikechip::fnv1a64(const std::string_view bytes, const uint64_t seed)
{
    uint64_t h = seed;
    for (const char c : bytes)
    {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t spikechip::splitmix64(uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double spikechip::lognormal_sigma(const double cv)
{
    return std::sqrt(std::log1p(cv * cv));
}

double spikechip::standard_normal_cdf(const double z)
{
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double spikechip::lognormal_cdf(const double x, const double sigma)
{
    if (!(x > 0.0))
    {
        return 0.0;
    }
    if (sigma == 0.0)
    {
        return x >= 1.0 ? 1.0 : 0.0;
    }
    return standard_normal_cdf(std::log(x) / sigma);
}

spikechip::MismatchModel::MismatchModel(
        const uint64_t seed, std::map<std::string, double> cv, const bool enabled)
    : seed_(seed), cv_(std::move(cv)), enabled_(enabled)
{
}

spikechip::MismatchModel::MismatchModel(const MismatchConfig &cfg)
    : MismatchModel(cfg.seed, cfg.cv, cfg.enabled)
{
}

double spikechip::MismatchModel::cv(const std::string &cls) const
{
    const auto it = cv_.find(cls);
    return it == cv_.end() ? 0.0 : it->second;
}

std::vector<std::string> spikechip::MismatchModel::warnings() const
{
    std::vector<std::string> out;
    for (const auto &cls : unknown_)
    {
        out.push_back("unknown mismatch class '" + cls + "', factor 1.0 used");
    }
    return out;
}

double spikechip::MismatchModel::sample(const std::string_view path) const
{
    if (!enabled_)
    {
        return 1.0;
    }
    const auto slash = path.rfind('/');
    const std::string cls(slash == std::string_view::npos ? path : path.substr(slash + 1));
    const auto it = cv_.find(cls);
    if (it == cv_.end())
    {
        unknown_.insert(cls);
        return 1.0;
    }
    if (it->second == 0.0)
    {
        return 1.0;
    }
    // Box-Muller on two uniforms derived from the path hash
    const uint64_t h = splitmix64(fnv1a64(path) ^ splitmix64(seed_));
    const uint64_t h2 = splitmix64(h);
    const double u1 = (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return std::exp(lognormal_sigma(it->second) * z);
}

double spikechip::sample_mismatch(const MismatchModel &model, const std::string_view path)
{
    return model.sample(path);
}
