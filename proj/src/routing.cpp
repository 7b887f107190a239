// routing.cpp

#include <algorithm>
#include <cstdlib>

#include "spikechip/routing.hpp"

uint8_t spikechip::encode_displacement(const int value, const int bits)
{
    const int magnitude_bits = bits - 1;
    const int limit = (1 << magnitude_bits) - 1;
    if (std::abs(value) > limit)
    {
        throw EncodingError("displacement " + std::to_string(value) +
                " does not fit in " + std::to_string(bits) + " bits");
    }
    const uint8_t sign = value < 0 ? static_cast<uint8_t>(1U << magnitude_bits) : 0U;
    return static_cast<uint8_t>(sign | static_cast<uint8_t>(std::abs(value)));
}

int spikechip::decode_displacement(const uint8_t code, const int bits)
{
    const int magnitude_bits = bits - 1;
    const int magnitude = code & ((1 << magnitude_bits) - 1);
    const bool negative = (code >> magnitude_bits) & 1U;
    return negative ? -magnitude : magnitude;
}

spikechip::InterNeuronEvent spikechip::InterNeuronEvent::make(
        const uint16_t tag, const int dx, const int dy, const uint8_t cores)
{
    return InterNeuronEvent{tag, encode_displacement(dy, 4),
            encode_displacement(dx, 4), cores};
}

uint32_t spikechip::encode_word(const AerEvent &event)
{
    if (const auto *n = std::get_if<InterNeuronEvent>(&event))
    {
        if (n->tag > 0x7FFU || n->dy > 0xFU || n->dx > 0xFU || n->cores > 0xFU)
        {
            throw EncodingError("inter-neuron event field overflow");
        }
        return (static_cast<uint32_t>(n->tag) << 12) |
                (static_cast<uint32_t>(n->dy) << 8) |
                (static_cast<uint32_t>(n->dx) << 4) | n->cores;
    }
    const auto &s = std::get<SensorEvent>(event);
    if (s.y > 0x1FFU || s.x > 0x1FFU || s.dy > 0x3U || s.dx > 0x3U)
    {
        throw EncodingError("sensor event field overflow");
    }
    return (1U << 23) | (static_cast<uint32_t>(s.pol) << 22) |
            (static_cast<uint32_t>(s.y) << 13) |
            (static_cast<uint32_t>(s.x) << 4) |
            (static_cast<uint32_t>(s.dy) << 2) | s.dx;
}

bool spikechip::is_sensor_word(const uint32_t raw)
{
    return (raw >> 23) & 1U;
}

spikechip::AerEvent spikechip::decode_word(const uint32_t raw)
{
    if (raw > word_mask)
    {
        throw EncodingError("AER word wider than 24 bits");
    }
    if (is_sensor_word(raw))
    {
        SensorEvent s;
        s.pol = (raw >> 22) & 1U;
        s.y = static_cast<uint16_t>((raw >> 13) & 0x1FFU);
        s.x = static_cast<uint16_t>((raw >> 4) & 0x1FFU);
        s.dy = static_cast<uint8_t>((raw >> 2) & 0x3U);
        s.dx = static_cast<uint8_t>(raw & 0x3U);
        return s;
    }
    InterNeuronEvent n;
    n.tag = static_cast<uint16_t>((raw >> 12) & 0x7FFU);
    n.dy = static_cast<uint8_t>((raw >> 8) & 0xFU);
    n.dx = static_cast<uint8_t>((raw >> 4) & 0xFU);
    n.cores = static_cast<uint8_t>(raw & 0xFU);
    return n;
}

void spikechip::SramEntry::validate() const
{
    if (tag > 0x7FFU)
    {
        throw EncodingError("SRAM tag " + std::to_string(tag) +
                " does not fit in 11 bits");
    }
    if (std::abs(dx) > max_displacement || std::abs(dy) > max_displacement)
    {
        throw EncodingError("SRAM displacement (" + std::to_string(dx) + ", " +
                std::to_string(dy) + ") outside [-7, 7]");
    }
    if (cores > 0xFU)
    {
        throw EncodingError("SRAM core mask wider than 4 bits");
    }
}

std::vector<uint32_t> spikechip::fan_out(
        const std::span<const SramEntry, sram_entries> srams)
{
    std::vector<uint32_t> words;
    for (const SramEntry &e : srams)
    {
        if (e.cores == 0)
        {
            continue;
        }
        words.push_back(encode_word(InterNeuronEvent::make(e.tag, e.dx, e.dy, e.cores)));
    }
    return words;
}

const char *spikechip::direction_name(const Direction d)
{
    switch (d)
    {
    case Direction::local:
        return "local";
    case Direction::west:
        return "west";
    case Direction::east:
        return "east";
    case Direction::south:
        return "south";
    case Direction::north:
        return "north";
    }
    return "?";
}

spikechip::Direction spikechip::route_decision(const int dx, const int dy)
{
    if (dx < 0)
    {
        return Direction::west;
    }
    if (dx > 0)
    {
        return Direction::east;
    }
    if (dy < 0)
    {
        return Direction::south;
    }
    if (dy > 0)
    {
        return Direction::north;
    }
    return Direction::local;
}

spikechip::Displacement spikechip::forward_displacement(const int dx, const int dy)
{
    switch (route_decision(dx, dy))
    {
    case Direction::west:
        return {dx + 1, dy};
    case Direction::east:
        return {dx - 1, dy};
    case Direction::south:
        return {dx, dy + 1};
    case Direction::north:
        return {dx, dy - 1};
    case Direction::local:
        break;
    }
    return {dx, dy};
}

void spikechip::CamIndex::clear()
{
    pending_.clear();
    refs_.clear();
    offsets_.fill(0);
}

void spikechip::CamIndex::add(const uint16_t tag, const SynapseRef ref)
{
    pending_.emplace_back(tag, ref);
}

void spikechip::CamIndex::finalize()
{
    // Counting sort keeps (neuron, synapse) insertion order within a tag
    std::array<uint32_t, 2049> counts{};
    for (const auto &[tag, ref] : pending_)
    {
        ++counts[tag + 1];
    }
    for (std::size_t i = 1; i < counts.size(); ++i)
    {
        counts[i] += counts[i - 1];
    }
    offsets_ = counts;
    refs_.assign(pending_.size(), SynapseRef{});
    for (const auto &[tag, ref] : pending_)
    {
        refs_[counts[tag]++] = ref;
    }
    pending_.clear();
}

std::span<const spikechip::SynapseRef> spikechip::CamIndex::matches(
        const uint16_t tag) const
{
    if (tag > 0x7FFU || refs_.empty())
    {
        return {};
    }
    return std::span<const SynapseRef>(refs_).subspan(
            offsets_[tag], offsets_[tag + 1] - offsets_[tag]);
}

std::vector<spikechip::SynapseRef> spikechip::core_broadcast(
        const CamIndex &core, const uint16_t tag)
{
    const auto m = core.matches(tag);
    return {m.begin(), m.end()};
}

int spikechip::mux_soma_of(const int neuron_index, const bool de_mux)
{
    if (neuron_index < 0 || neuron_index >= neurons_per_core)
    {
        throw EncodingError("neuron index " + std::to_string(neuron_index) +
                " outside [0, 255]");
    }
    if (!de_mux)
    {
        return neuron_index;
    }
    const int row = neuron_index / 16;
    const int col = neuron_index % 16;
    return (row - row % 2) * 16 + (col - col % 2);
}

spikechip::ChipGrid::ChipGrid(const int width, const int height)
        : width_(width)
        , height_(height)
        , link_counts_(static_cast<std::size_t>(std::max(width * height, 0)))
{
    if (width <= 0 || height <= 0)
    {
        throw EncodingError("chip grid dimensions must be positive");
    }
}

bool spikechip::ChipGrid::contains(const ChipCoord c) const
{
    return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_;
}

uint64_t spikechip::ChipGrid::link_count(const ChipCoord chip, const Direction dir) const
{
    if (!contains(chip) || dir == Direction::local)
    {
        return 0;
    }
    return link_counts_[chip.y * width_ + chip.x][static_cast<int>(dir) - 1];
}

spikechip::RouteResult spikechip::ChipGrid::route(
        const ChipCoord source, const uint32_t word)
{
    RouteResult r;
    r.destination = source;
    r.word = word;
    const bool sensor = is_sensor_word(word);
    AerEvent ev = decode_word(word);
    int dx = 0;
    int dy = 0;
    if (sensor)
    {
        dx = std::get<SensorEvent>(ev).dx_value();
        dy = std::get<SensorEvent>(ev).dy_value();
    }
    else
    {
        dx = std::get<InterNeuronEvent>(ev).dx_value();
        dy = std::get<InterNeuronEvent>(ev).dy_value();
    }
    ChipCoord at = source;
    while (true)
    {
        const Direction dir = route_decision(dx, dy);
        if (dir == Direction::local)
        {
            break;
        }
        ChipCoord next = at;
        switch (dir)
        {
        case Direction::west:
            --next.x;
            break;
        case Direction::east:
            ++next.x;
            break;
        case Direction::south:
            --next.y;
            break;
        case Direction::north:
            ++next.y;
            break;
        case Direction::local:
            break;
        }
        ++link_counts_[at.y * width_ + at.x][static_cast<int>(dir) - 1];
        r.path.push_back(dir);
        ++r.hops;
        if (!contains(next))
        {
            ++dropped_;
            r.delivered = false;
            r.destination = next;
            return r;
        }
        const Displacement d = forward_displacement(dx, dy);
        dx = d.dx;
        dy = d.dy;
        at = next;
    }
    if (sensor)
    {
        auto &s = std::get<SensorEvent>(ev);
        if (r.hops > 0)
        {
            s.dx = encode_displacement(dx, 2);
            s.dy = encode_displacement(dy, 2);
        }
    }
    else
    {
        auto &n = std::get<InterNeuronEvent>(ev);
        if (r.hops > 0)
        {
            n.dx = encode_displacement(dx, 4);
            n.dy = encode_displacement(dy, 4);
        }
    }
    r.word = encode_word(ev);
    r.destination = at;
    r.delivered = true;
    return r;
}
