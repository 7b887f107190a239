// sensor.hpp - 2D sensor event pre-processor
//
// Stages, in order: pixel filter, duplication to a neighbour chip, sum
// pooling, patch cutting, polarity filter and source mapping into
// inter-neuron words.
#ifndef SPIKECHIP_SENSOR_HPP
#define SPIKECHIP_SENSOR_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spikechip/routing.hpp"

namespace spikechip
{

constexpr int max_filtered_pixels = 64;
constexpr int max_patch_size = 64;
constexpr int max_sensor_coordinate = 511;

enum class PolarityMode : uint8_t
{
    both,
    on_only,
    off_only,
};

struct PixelAddress
{
    uint16_t x = 0;
    uint16_t y = 0;
    bool operator==(const PixelAddress &) const = default;
};

struct SensorGeometry
{
    int width = 128;
    int height = 128;
    bool operator==(const SensorGeometry &) const = default;
};

// Named presets: "346x260", "240x180", "128x128".
SensorGeometry sensor_preset(const std::string &name);

struct SensorPipelineConfig
{
    SensorGeometry geometry{};
    std::vector<PixelAddress> pixel_filter;
    std::optional<Direction> duplicate_to;
    int pool_x = 1;
    int pool_y = 1;
    int cut_x = 0;
    int cut_y = 0;
    int cut_w = max_patch_size;
    int cut_h = max_patch_size;
    PolarityMode polarity = PolarityMode::both;
    // Row-major cut_w * cut_h entries; with polarity_split the on (pol=1)
    // table follows the off table.
    bool polarity_split = false;
    std::vector<std::optional<SramEntry>> mapping;

    void validate() const;
    const std::optional<SramEntry> *lookup(int patch_x, int patch_y, bool pol) const;
    bool operator==(const SensorPipelineConfig &) const = default;
};

// tag = patch_y * 64 + patch_x; pixels whose tag would exceed 11 bits are
// left unmapped.
std::vector<std::optional<SramEntry>> identity_mapping(
        int w, int h, uint8_t cores, int dx = 0, int dy = 0);

enum class SensorOutcome : uint8_t
{
    mapped,
    duplicated_and_mapped,
    dropped_geometry,
    dropped_filter,
    dropped_cut,
    dropped_polarity,
    dropped_unmapped,
};

const char *sensor_outcome_name(SensorOutcome o);

struct SensorResult
{
    SensorOutcome outcome = SensorOutcome::mapped;
    std::optional<uint32_t> mapped_word;
    std::optional<uint32_t> duplicate_word;
};

struct SensorCounters
{
    uint64_t input = 0;
    uint64_t mapped = 0;
    uint64_t duplicated_and_mapped = 0;
    uint64_t duplicates_emitted = 0;
    uint64_t dropped_geometry = 0;
    uint64_t dropped_filter = 0;
    uint64_t dropped_cut = 0;
    uint64_t dropped_polarity = 0;
    uint64_t dropped_unmapped = 0;

    void record(const SensorResult &r);
    uint64_t accounted() const;
};

SensorResult process_sensor_event(const SensorEvent &ev, const SensorPipelineConfig &cfg);

uint32_t sensor_source_map(int patch_x, int patch_y, bool pol,
        const SensorPipelineConfig &cfg);

} // namespace spikechip

#endif
