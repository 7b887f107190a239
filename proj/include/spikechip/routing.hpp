// routing.hpp - digital event fabric
//
// 24-bit AER word codec, per-neuron source-mapping SRAMs, top-level grid
// routing, core broadcast with CAM matching, and dendrite multiplexing.
//
// Word layout (bit 23 selects the format):
//   inter-neuron: 0 | tag[22:12] | dy[11:8] | dx[7:4] | cores[3:0]
//   sensor:       1 | pol[22] | y[21:13] | x[12:4] | dy[3:2] | dx[1:0]
// Displacements are sign-magnitude (MSB = sign).
#ifndef SPIKECHIP_ROUTING_HPP
#define SPIKECHIP_ROUTING_HPP

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace spikechip
{

class EncodingError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

constexpr uint32_t word_mask = 0xFFFFFFU;
constexpr int max_displacement = 7;
constexpr int cores_per_chip = 4;
constexpr int neurons_per_core = 256;
constexpr int sram_entries = 4;

// Sign-magnitude helpers; code width is 4 (inter-neuron) or 2 (sensor) bits.
uint8_t encode_displacement(int value, int bits);
int decode_displacement(uint8_t code, int bits);

struct InterNeuronEvent
{
    uint16_t tag = 0;
    uint8_t dy = 0; // raw 4-bit codes
    uint8_t dx = 0;
    uint8_t cores = 0;

    int dx_value() const { return decode_displacement(dx, 4); }
    int dy_value() const { return decode_displacement(dy, 4); }
    static InterNeuronEvent make(uint16_t tag, int dx, int dy, uint8_t cores);
    bool operator==(const InterNeuronEvent &) const = default;
};

struct SensorEvent
{
    bool pol = false;
    uint16_t y = 0;
    uint16_t x = 0;
    uint8_t dy = 0; // raw 2-bit codes
    uint8_t dx = 0;

    int dx_value() const { return decode_displacement(dx, 2); }
    int dy_value() const { return decode_displacement(dy, 2); }
    bool operator==(const SensorEvent &) const = default;
};

using AerEvent = std::variant<InterNeuronEvent, SensorEvent>;

uint32_t encode_word(const AerEvent &event);
AerEvent decode_word(uint32_t raw);
bool is_sensor_word(uint32_t raw);

struct SramEntry
{
    uint16_t tag = 0;
    int dx = 0;
    int dy = 0;
    uint8_t cores = 0;

    void validate() const;
    bool operator==(const SramEntry &) const = default;
};

std::vector<uint32_t> fan_out(std::span<const SramEntry, sram_entries> srams);

enum class Direction : uint8_t
{
    local,
    west,
    east,
    south,
    north,
};

const char *direction_name(Direction d);

Direction route_decision(int dx, int dy);

struct Displacement
{
    int dx = 0;
    int dy = 0;
};

// Displacement carried by the word after one hop in the decided direction.
Displacement forward_displacement(int dx, int dy);

struct SynapseRef
{
    uint16_t neuron = 0;
    uint8_t synapse = 0;
    bool operator==(const SynapseRef &) const = default;
};

// Tag -> matching synapses of one core.
class CamIndex
{
public:
    void clear();
    void add(uint16_t tag, SynapseRef ref);
    void finalize();
    std::span<const SynapseRef> matches(uint16_t tag) const;
    std::size_t entry_count() const { return refs_.size(); }

private:
    std::vector<std::pair<uint16_t, SynapseRef>> pending_;
    std::vector<SynapseRef> refs_;
    std::array<uint32_t, 2049> offsets_{};
};

std::vector<SynapseRef> core_broadcast(const CamIndex &core, uint16_t tag);

int mux_soma_of(int neuron_index, bool de_mux);

struct ChipCoord
{
    int x = 0;
    int y = 0;
    bool operator==(const ChipCoord &) const = default;
};

struct RouteResult
{
    bool delivered = false;
    ChipCoord destination{};
    int hops = 0;
    uint32_t word = 0; // as seen by the destination chip
    std::vector<Direction> path;
};

// Rectangular grid of chips connected to their four neighbours.
class ChipGrid
{
public:
    ChipGrid(int width, int height);
    int width() const { return width_; }
    int height() const { return height_; }
    bool contains(ChipCoord c) const;
    RouteResult route(ChipCoord source, uint32_t word);
    // Events transmitted on each chip's outgoing link, index [chip][dir-1].
    uint64_t link_count(ChipCoord chip, Direction dir) const;
    uint64_t dropped() const { return dropped_; }

private:
    int width_;
    int height_;
    std::vector<std::array<uint64_t, 4>> link_counts_;
    uint64_t dropped_ = 0;
};

} // namespace spikechip

#endif
