// sensor.cpp

#include <algorithm>

#include "spikechip/params.hpp"
#include "spikechip/sensor.hpp"

spikechip::SensorGeometry spikechip::sensor_preset(const std::string &name)
{
    if (name == "346x260")
    {
        return {346, 260};
    }
    if (name == "240x180")
    {
        return {240, 180};
    }
    if (name == "128x128")
    {
        return {128, 128};
    }
    throw ConfigError("unknown sensor preset '" + name + "'");
}

namespace
{

bool valid_pool(const int f)
{
    return f == 1 || f == 2 || f == 4 || f == 8;
}

} // namespace

void spikechip::SensorPipelineConfig::validate() const
{
    if (geometry.width < 1 || geometry.height < 1 ||
            geometry.width > max_sensor_coordinate + 1 ||
            geometry.height > max_sensor_coordinate + 1)
    {
        throw ConfigError("sensor geometry must lie within 512x512");
    }
    if (static_cast<int>(pixel_filter.size()) > max_filtered_pixels)
    {
        throw ConfigError("pixel filter holds at most 64 addresses");
    }
    if (!valid_pool(pool_x) || !valid_pool(pool_y))
    {
        throw ConfigError("pooling factors must be 1, 2, 4 or 8");
    }
    if (cut_w < 1 || cut_h < 1 || cut_w > max_patch_size || cut_h > max_patch_size)
    {
        throw ConfigError("patch size must lie within 1x1 and 64x64");
    }
    if (cut_x < 0 || cut_y < 0)
    {
        throw ConfigError("patch origin must be non-negative");
    }
    if (duplicate_to == Direction::local)
    {
        throw ConfigError("duplication target must be a neighbour direction");
    }
    const std::size_t expected =
            static_cast<std::size_t>(cut_w * cut_h) * (polarity_split ? 2U : 1U);
    if (mapping.size() != expected)
    {
        throw ConfigError("mapping table has " + std::to_string(mapping.size()) +
                " entries, expected " + std::to_string(expected));
    }
    for (const auto &e : mapping)
    {
        if (e.has_value())
        {
            e->validate();
        }
    }
}

const std::optional<spikechip::SramEntry> *spikechip::SensorPipelineConfig::lookup(
        const int patch_x, const int patch_y, const bool pol) const
{
    const std::size_t base = polarity_split && pol ?
            static_cast<std::size_t>(cut_w * cut_h) :
            0U;
    const std::size_t idx = base + static_cast<std::size_t>(patch_y * cut_w + patch_x);
    if (idx >= mapping.size())
    {
        return nullptr;
    }
    return &mapping[idx];
}

std::vector<std::optional<spikechip::SramEntry>> spikechip::identity_mapping(
        const int w, const int h, const uint8_t cores, const int dx, const int dy)
{
    std::vector<std::optional<SramEntry>> table(static_cast<std::size_t>(w * h));
    for (int y = 0; y < h; ++y)
    {
        for (int x = 0; x < w; ++x)
        {
            const int tag = y * max_patch_size + x;
            if (tag <= 0x7FF)
            {
                table[y * w + x] = SramEntry{static_cast<uint16_t>(tag), dx, dy, cores};
            }
        }
    }
    return table;
}

const char *spikechip::sensor_outcome_name(const SensorOutcome o)
{
    switch (o)
    {
    case SensorOutcome::mapped:
        return "mapped";
    case SensorOutcome::duplicated_and_mapped:
        return "duplicated_and_mapped";
    case SensorOutcome::dropped_geometry:
        return "dropped_geometry";
    case SensorOutcome::dropped_filter:
        return "dropped_filter";
    case SensorOutcome::dropped_cut:
        return "dropped_cut";
    case SensorOutcome::dropped_polarity:
        return "dropped_polarity";
    case SensorOutcome::dropped_unmapped:
        return "dropped_unmapped";
    }
    return "?";
}

void spikechip::SensorCounters::record(const SensorResult &r)
{
    ++input;
    if (r.duplicate_word.has_value())
    {
        ++duplicates_emitted;
    }
    switch (r.outcome)
    {
    case SensorOutcome::mapped:
        ++mapped;
        break;
    case SensorOutcome::duplicated_and_mapped:
        ++duplicated_and_mapped;
        break;
    case SensorOutcome::dropped_geometry:
        ++dropped_geometry;
        break;
    case SensorOutcome::dropped_filter:
        ++dropped_filter;
        break;
    case SensorOutcome::dropped_cut:
        ++dropped_cut;
        break;
    case SensorOutcome::dropped_polarity:
        ++dropped_polarity;
        break;
    case SensorOutcome::dropped_unmapped:
        ++dropped_unmapped;
        break;
    }
}

uint64_t spikechip::SensorCounters::accounted() const
{
    return mapped + duplicated_and_mapped + dropped_geometry + dropped_filter +
            dropped_cut + dropped_polarity + dropped_unmapped;
}

uint32_t spikechip::sensor_source_map(const int patch_x, const int patch_y,
        const bool pol, const SensorPipelineConfig &cfg)
{
    const auto *entry = cfg.lookup(patch_x, patch_y, pol);
    if (entry == nullptr || !entry->has_value())
    {
        throw ConfigError("no mapping for patch pixel (" + std::to_string(patch_x) +
                ", " + std::to_string(patch_y) + ")");
    }
    const SramEntry &e = **entry;
    return encode_word(InterNeuronEvent::make(e.tag, e.dx, e.dy, e.cores));
}

spikechip::SensorResult spikechip::process_sensor_event(
        const SensorEvent &ev, const SensorPipelineConfig &cfg)
{
    SensorResult r;
    if (ev.x >= cfg.geometry.width || ev.y >= cfg.geometry.height)
    {
        r.outcome = SensorOutcome::dropped_geometry;
        return r;
    }
    const PixelAddress px{ev.x, ev.y};
    if (std::find(cfg.pixel_filter.begin(), cfg.pixel_filter.end(), px) !=
            cfg.pixel_filter.end())
    {
        r.outcome = SensorOutcome::dropped_filter;
        return r;
    }
    if (cfg.duplicate_to.has_value())
    {
        SensorEvent copy = ev;
        int dx = 0;
        int dy = 0;
        switch (*cfg.duplicate_to)
        {
        case Direction::west:
            dx = -1;
            break;
        case Direction::east:
            dx = 1;
            break;
        case Direction::south:
            dy = -1;
            break;
        case Direction::north:
            dy = 1;
            break;
        case Direction::local:
            break;
        }
        copy.dx = encode_displacement(dx, 2);
        copy.dy = encode_displacement(dy, 2);
        r.duplicate_word = encode_word(copy);
    }
    const int px_pooled = ev.x / cfg.pool_x;
    const int py_pooled = ev.y / cfg.pool_y;
    const int patch_x = px_pooled - cfg.cut_x;
    const int patch_y = py_pooled - cfg.cut_y;
    if (patch_x < 0 || patch_y < 0 || patch_x >= cfg.cut_w || patch_y >= cfg.cut_h)
    {
        r.outcome = SensorOutcome::dropped_cut;
        return r;
    }
    if ((cfg.polarity == PolarityMode::on_only && !ev.pol) ||
            (cfg.polarity == PolarityMode::off_only && ev.pol))
    {
        r.outcome = SensorOutcome::dropped_polarity;
        return r;
    }
    const auto *entry = cfg.lookup(patch_x, patch_y, ev.pol);
    if (entry == nullptr || !entry->has_value())
    {
        r.outcome = SensorOutcome::dropped_unmapped;
        return r;
    }
    r.mapped_word = sensor_source_map(patch_x, patch_y, ev.pol, cfg);
    r.outcome = r.duplicate_word.has_value() ? SensorOutcome::duplicated_and_mapped :
                                               SensorOutcome::mapped;
    return r;
}
