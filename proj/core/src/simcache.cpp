#include "ms/simcache.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <unordered_map>

namespace ms {

void CacheLevelConfig::validate(const std::string& name) const {
    if (line_bytes != kLineBytes)
        throw ConfigError(name + ": line size is fixed at 64 bytes");
    if (capacity_bytes <= 0 || associativity <= 0 ||
        capacity_bytes % (static_cast<std::int64_t>(associativity) * line_bytes) != 0)
        throw ConfigError(name + ": capacity must be sets*associativity*64 with integer sets");
}

void PrefetcherConfig::validate() const {
    if (max_streams < 1) throw ConfigError("prefetcher needs at least one stream");
    if (degree > distance) throw ConfigError("prefetch degree must not exceed distance");
}

void MachineModel::validate() const {
    l1.validate("L1");
    l2.validate("L2");
    l3.validate("L3");
    prefetcher.validate();
    if (memory_latency <= 0 || bandwidth_bytes_per_cycle <= 0 || issue_width <= 0)
        throw ConfigError("memory latency, bandwidth and issue width must be positive");
    if (write_buffer_entries < 1) throw ConfigError("write buffer needs at least one entry");
}

std::int64_t set_index(std::uint64_t address, const CacheLevelConfig& cfg) {
    return static_cast<std::int64_t>(address / static_cast<std::uint64_t>(cfg.line_bytes)) %
           cfg.sets();
}

const std::vector<std::string>& MachineModel::preset_names() {
    static const std::vector<std::string> names = {"coffee-lake", "cascade-lake", "zen2",
                                                   "desk-scale"};
    return names;
}

MachineModel MachineModel::preset(const std::string& name) {
    MachineModel m;
    m.name = name;
    if (name == "coffee-lake") {
        m.l1 = {32 * 1024, 8, kLineBytes, 4, 10};
        m.l2 = {256 * 1024, 4, kLineBytes, 12, 16};
        m.l3 = {12 * 1024 * 1024, 16, kLineBytes, 40, 32};
        m.memory_latency = 300;
        m.bandwidth_bytes_per_cycle = 6.6;
        m.frequency_ghz = 3.2;
    } else if (name == "cascade-lake") {
        m.l1 = {32 * 1024, 8, kLineBytes, 4, 10};
        m.l2 = {1024 * 1024, 16, kLineBytes, 14, 16};
        m.l3 = {17301504, 11, kLineBytes, 44, 32}; // 16.5 MiB, 11-way
        m.memory_latency = 300;
        m.bandwidth_bytes_per_cycle = 8.0;
        m.frequency_ghz = 2.4;
    } else if (name == "zen2") {
        m.l1 = {32 * 1024, 8, kLineBytes, 4, 10};
        m.l2 = {512 * 1024, 8, kLineBytes, 12, 16};
        m.l3 = {16 * 1024 * 1024, 16, kLineBytes, 39, 32};
        m.memory_latency = 300;
        m.bandwidth_bytes_per_cycle = 9.1;
        m.frequency_ghz = 2.8;
    } else if (name == "desk-scale") {
        // Shrunken hierarchy: collision and prefetch effects reproduce on
        // 16 MiB arrays in sub-second runs. Set spans stay powers of two at
        // L1/L2 while L3 keeps the non-power-of-two set count quirk.
        m.l1 = {8 * 1024, 4, kLineBytes, 4, 10};
        m.l2 = {32 * 1024, 1, kLineBytes, 12, 16};
        m.l3 = {1536 * 1024, 16, kLineBytes, 40, 32};
        m.memory_latency = 300;
        m.bandwidth_bytes_per_cycle = 10.0;
        m.frequency_ghz = 3.2;
    } else {
        throw NotFoundError("unknown machine preset '" + name +
                            "'; valid: coffee-lake cascade-lake zen2 desk-scale");
    }
    m.nt_partial_penalty = m.memory_latency / 2;
    m.validate();
    return m;
}

double SimStats::throughput_gibs(const MachineModel& m) const {
    if (total_cycles <= 0) return 0.0;
    double bytes_per_cycle = static_cast<double>(demand_bytes) / total_cycles;
    return bytes_per_cycle * m.frequency_ghz * 1e9 / (1024.0 * 1024.0 * 1024.0);
}

// ---------------------------------------------------------------------------
// Write-combining buffer.

std::optional<WriteBuffer::Retirement> WriteBuffer::step(std::uint64_t address,
                                                         std::uint32_t size) {
    std::uint64_t line = address / kLineBytes;
    std::uint64_t off = address % kLineBytes;
    std::uint64_t bits;
    if (size >= 64)
        bits = ~0ull;
    else
        bits = ((1ull << size) - 1) << std::min<std::uint64_t>(off, 64 - size);
    for (auto& e : entries_) {
        if (e.line == line) {
            e.mask |= bits;
            e.stamp = ++clock_;
            ++merges;
            return std::nullopt;
        }
    }
    std::optional<Retirement> evicted;
    if (static_cast<int>(entries_.size()) >= capacity_) {
        size_t victim = 0;
        for (size_t i = 1; i < entries_.size(); ++i)
            if (entries_[i].stamp < entries_[victim].stamp) victim = i;
        evicted = Retirement{entries_[victim].line, entries_[victim].mask == ~0ull};
        entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(victim));
    }
    entries_.push_back(Entry{line, bits, ++clock_});
    return evicted;
}

std::vector<WriteBuffer::Retirement> WriteBuffer::flush() {
    std::vector<Retirement> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back({e.line, e.mask == ~0ull});
    entries_.clear();
    return out;
}

// ---------------------------------------------------------------------------
// Simulation proper.

namespace {

constexpr int kLevelL2 = 2;
constexpr int kLevelL3 = 3;
constexpr int kLevelMem = 4;

constexpr std::uint16_t kFillL1 = 1;
constexpr std::uint16_t kFillL2 = 2;
constexpr std::uint16_t kFillL3 = 4;
constexpr std::uint16_t kFillPrefetch = 8;
constexpr std::uint16_t kFillDirty = 16;
constexpr std::uint16_t kBusRelease = 32; // frees an outstanding-prefetch slot

struct Line {
    std::int64_t tag = -1;
    std::uint64_t stamp = 0;
    bool dirty = false;
    bool prefetched = false;
    bool used = false;
};

struct CacheArray {
    std::int64_t sets = 1;
    int assoc = 1;
    std::vector<Line> lines;

    void init(const CacheLevelConfig& cfg) {
        sets = cfg.sets();
        assoc = cfg.associativity;
        lines.assign(static_cast<size_t>(sets * assoc), Line{});
    }
    Line* find(std::int64_t tag) {
        size_t base = static_cast<size_t>((tag % sets) * assoc);
        for (int w = 0; w < assoc; ++w)
            if (lines[base + static_cast<size_t>(w)].tag == tag)
                return &lines[base + static_cast<size_t>(w)];
        return nullptr;
    }
    // Inserts, returning the evicted line when one falls out.
    std::optional<Line> insert(std::int64_t tag, std::uint64_t stamp, bool dirty,
                               bool prefetched) {
        size_t base = static_cast<size_t>((tag % sets) * assoc);
        Line* slot = nullptr;
        Line* empty = nullptr;
        for (int w = 0; w < assoc; ++w) {
            Line& l = lines[base + static_cast<size_t>(w)];
            if (l.tag == tag) { slot = &l; break; }
            if (l.tag < 0 && !empty) empty = &l;
        }
        std::optional<Line> evicted;
        bool was_same = slot != nullptr;
        if (!slot) slot = empty;
        if (!slot) {
            slot = &lines[base];
            for (int w = 1; w < assoc; ++w) {
                Line& l = lines[base + static_cast<size_t>(w)];
                if (l.stamp < slot->stamp) slot = &l;
            }
            evicted = *slot;
        }
        *slot = Line{tag, stamp, dirty || (was_same && slot->dirty),
                     prefetched || (was_same && slot->prefetched),
                     was_same && slot->used};
        return evicted;
    }
};

struct Fill {
    std::int64_t tick;
    std::int64_t line;
    std::uint16_t flags;
    int slot = -1;
    std::uint32_t gen = 0;
    bool operator>(const Fill& o) const { return tick > o.tick; }
};

struct Stream {
    std::int64_t last = -1000;
    std::int64_t next_pf = 0;
    int conf = 0;
    int inflight = 0;
    std::uint64_t stamp = 0;
    std::uint32_t gen = 0;
};

struct WindowEntry {
    std::int64_t tick;
    int level;
    bool operator>(const WindowEntry& o) const { return tick > o.tick; }
};

struct Sim {
    const MachineModel& m;
    SimStats stats;

    std::int64_t now = 0;
    std::int64_t mem_free = 0;
    std::uint64_t lru_clock = 0;

    std::int64_t memlat_ticks, l2lat_ticks, l3lat_ticks, line_ticks, penalty_ticks;
    int window_cap;

    CacheArray l1c, l2c, l3c;
    std::unordered_map<std::int64_t, std::int64_t> demand_inflight; // line -> tick
    struct PfEntry { std::int64_t tick; int slot; std::uint32_t gen; };
    std::unordered_map<std::int64_t, PfEntry> pf_inflight;
    int pf_outstanding = 0;
    std::priority_queue<Fill, std::vector<Fill>, std::greater<Fill>> fills;
    // Outstanding demand misses (L1 fill buffers). A new miss waits for the
    // earliest-completing entry when all buffers are busy.
    std::priority_queue<WindowEntry, std::vector<WindowEntry>, std::greater<WindowEntry>> window;
    std::vector<Stream> streams;
    WriteBuffer wbuf;
    std::uint64_t stall_ticks[3] = {0, 0, 0}; // L2, L3, Mem

    explicit Sim(const MachineModel& machine)
        : m(machine), wbuf(machine.write_buffer_entries) {
        m.validate();
        memlat_ticks = static_cast<std::int64_t>(m.memory_latency) * m.issue_width;
        l2lat_ticks = static_cast<std::int64_t>(m.l2.hit_latency) * m.issue_width;
        l3lat_ticks = static_cast<std::int64_t>(m.l3.hit_latency) * m.issue_width;
        line_ticks = std::llround(kLineBytes / m.bandwidth_bytes_per_cycle *
                                  static_cast<double>(m.issue_width));
        line_ticks = std::max<std::int64_t>(line_ticks, 1);
        penalty_ticks = static_cast<std::int64_t>(m.nt_partial_penalty) * m.issue_width;
        window_cap = std::max(1, m.l1.mshr_entries);
        l1c.init(m.l1);
        l2c.init(m.l2);
        l3c.init(m.l3);
        streams.assign(static_cast<size_t>(m.prefetcher.max_streams), Stream{});
    }

    bool fills_l2() const { return m.prefetcher.fill != PrefetchFill::L3; }
    bool fills_l3() const { return m.prefetcher.fill != PrefetchFill::L2; }

    void mature(std::int64_t upto) {
        while (!fills.empty() && fills.top().tick <= upto) {
            Fill f = fills.top();
            fills.pop();
            if (f.flags & kBusRelease) {
                --pf_outstanding;
                if (f.slot >= 0) {
                    Stream& s = streams[static_cast<size_t>(f.slot)];
                    if (s.gen == f.gen && s.inflight > 0) --s.inflight;
                }
                continue;
            }
            if (f.flags & kFillPrefetch) {
                pf_inflight.erase(f.line);
                Stream& s = streams[static_cast<size_t>(f.slot)];
                bool live = s.gen == f.gen;
                if (f.flags & kFillL3) {
                    install(l3c, f.line, false, true);
                    ++stats.l3.prefetch_fills;
                }
                if (f.flags & kFillL2) {
                    install(l2c, f.line, false, true);
                    ++stats.l2.prefetch_fills;
                }
                // a live stream keeps running ahead without waiting for the
                // next demand miss
                if (live && s.conf >= m.prefetcher.train_threshold)
                    trigger(s, f.slot, s.last);
            } else {
                demand_inflight.erase(f.line);
                bool dirty = f.flags & kFillDirty;
                if (f.flags & kFillL3) install(l3c, f.line, false, false);
                if (f.flags & kFillL2) install(l2c, f.line, false, false);
                if (f.flags & kFillL1) install(l1c, f.line, dirty, false);
            }
        }
    }

    void install(CacheArray& c, std::int64_t line, bool dirty, bool prefetched) {
        auto evicted = c.insert(line, ++lru_clock, dirty, prefetched);
        if (!evicted || evicted->tag < 0 || !evicted->dirty) return;
        if (&c == &l1c) {
            if (Line* l = l2c.find(evicted->tag)) l->dirty = true;
            else if (Line* l3 = l3c.find(evicted->tag)) l3->dirty = true;
        } else if (&c == &l2c) {
            if (Line* l = l3c.find(evicted->tag)) l->dirty = true;
            else writeback();
        } else {
            writeback();
        }
    }

    void writeback() {
        stats.bytes_writeback += kLineBytes;
        mem_free = std::max(mem_free, now) + line_ticks;
    }

    void window_push(std::int64_t completion, int level) {
        while (!window.empty() && window.top().tick <= now) window.pop();
        if (static_cast<int>(window.size()) >= window_cap) {
            WindowEntry soonest = window.top();
            window.pop();
            if (soonest.tick > now) {
                stall_ticks[soonest.level - kLevelL2] +=
                    static_cast<std::uint64_t>(soonest.tick - now);
                now = soonest.tick;
                mature(now);
            }
            while (!window.empty() && window.top().tick <= now) window.pop();
        }
        window.push({completion, level});
    }

    // Issue one prefetch for line P on behalf of stream s. The global cap
    // bounds requests waiting on the bus; the per-stream window (degree) is
    // released only when the fill lands, throttling how far a single stream
    // can run ahead within one memory round trip.
    void issue_prefetch(Stream& s, int slot, std::int64_t line) {
        std::uint16_t flags = kFillPrefetch;
        if (fills_l2()) flags |= kFillL2;
        if (fills_l3()) flags |= kFillL3;
        std::int64_t completion;
        if (l3c.find(line) && fills_l2()) {
            completion = now + l3lat_ticks; // refill L2 out of L3
            flags = kFillPrefetch | kFillL2;
            fills.push(Fill{completion, line, kBusRelease, slot, s.gen});
        } else {
            std::int64_t start = std::max(now, mem_free);
            completion = start + memlat_ticks;
            mem_free = start + line_ticks;
            stats.bytes_from_memory += kLineBytes;
            ++stats.l3.prefetch_fetches;
            fills.push(Fill{start + line_ticks, line, kBusRelease, slot, s.gen});
        }
        pf_inflight[line] = PfEntry{completion, slot, s.gen};
        ++pf_outstanding;
        ++s.inflight;
        ++stats.prefetches_issued;
        fills.push(Fill{completion, line, flags, slot, s.gen});
    }

    void trigger(Stream& s, int slot, std::int64_t trigger_line) {
        // The frontier never falls behind the demand point and never runs
        // more than `distance` lines ahead of it.
        s.next_pf = std::max(s.next_pf, trigger_line + 1);
        while (s.inflight < m.prefetcher.degree &&
               pf_outstanding < m.prefetcher.outstanding_cap &&
               s.next_pf <= trigger_line + m.prefetcher.distance) {
            std::int64_t p = s.next_pf;
            bool covered = pf_inflight.count(p) || demand_inflight.count(p) ||
                           (fills_l2() ? l2c.find(p) != nullptr : l3c.find(p) != nullptr);
            ++s.next_pf;
            if (!covered) issue_prefetch(s, slot, p);
        }
    }

    void train(std::int64_t line) {
        if (!m.prefetcher.enabled) return;
        for (size_t i = 0; i < streams.size(); ++i) {
            if (streams[i].last == line) {
                streams[i].stamp = ++lru_clock;
                return;
            }
        }
        for (size_t i = 0; i < streams.size(); ++i) {
            Stream& s = streams[i];
            if (s.last + 1 == line) {
                s.last = line;
                ++s.conf;
                s.stamp = ++lru_clock;
                if (s.conf >= m.prefetcher.train_threshold)
                    trigger(s, static_cast<int>(i), line);
                return;
            }
        }
        size_t victim = 0;
        for (size_t i = 1; i < streams.size(); ++i)
            if (streams[i].stamp < streams[victim].stamp) victim = i;
        Stream& s = streams[victim];
        ++s.gen;
        s.last = line;
        s.next_pf = line + 2;
        s.conf = 1;
        s.inflight = 0;
        s.stamp = ++lru_clock;
    }

    // Returns true when the access hits L1 (or an in-flight demand fill).
    bool probe(std::int64_t line, bool is_write) {
        if (Line* l = l1c.find(line)) {
            l->stamp = ++lru_clock;
            if (is_write) l->dirty = true;
            return true;
        }
        if (auto it = demand_inflight.find(line); it != demand_inflight.end()) {
            ++stats.fill_buffer_merges;
            if (is_write) mark_inflight_dirty(line);
            return true;
        }

        std::int64_t completion;
        int level;
        if (auto pf = pf_inflight.find(line); pf != pf_inflight.end()) {
            // Prefetched but not yet arrived: merge with the in-flight fill.
            ++stats.l2.demand_misses;
            if (fills_l2()) ++stats.l2.prefetch_late;
            else ++stats.l3.prefetch_late;
            completion = pf->second.tick;
            level = kLevelMem;
            fills.push(Fill{completion, line,
                            static_cast<std::uint16_t>(kFillL1 | (is_write ? kFillDirty : 0)),
                            -1, 0});
            demand_inflight[line] = completion;
        } else if (Line* l2 = l2c.find(line)) {
            ++stats.l2.hits;
            l2->stamp = ++lru_clock;
            if (l2->prefetched && !l2->used) {
                l2->used = true;
                ++stats.l2.prefetch_useful;
            }
            completion = now + l2lat_ticks;
            level = kLevelL2;
            fills.push(Fill{completion, line,
                            static_cast<std::uint16_t>(kFillL1 | (is_write ? kFillDirty : 0)),
                            -1, 0});
            demand_inflight[line] = completion;
        } else {
            ++stats.l2.demand_misses;
            if (Line* l3 = l3c.find(line)) {
                ++stats.l3.hits;
                l3->stamp = ++lru_clock;
                if (l3->prefetched && !l3->used) {
                    l3->used = true;
                    ++stats.l3.prefetch_useful;
                }
                completion = now + l3lat_ticks;
                level = kLevelL3;
                fills.push(Fill{completion, line,
                                static_cast<std::uint16_t>(kFillL1 | kFillL2 |
                                                           (is_write ? kFillDirty : 0)),
                                -1, 0});
                demand_inflight[line] = completion;
            } else {
                ++stats.l3.demand_misses;
                std::int64_t start = std::max(now, mem_free);
                completion = start + memlat_ticks;
                mem_free = start + line_ticks;
                stats.bytes_from_memory += kLineBytes;
                level = kLevelMem;
                fills.push(Fill{completion, line,
                                static_cast<std::uint16_t>(kFillL1 | kFillL2 | kFillL3 |
                                                           (is_write ? kFillDirty : 0)),
                                -1, 0});
                demand_inflight[line] = completion;
            }
        }
        window_push(completion, level);
        train(line);
        return false;
    }

    void mark_inflight_dirty(std::int64_t line) {
        // The line will arrive; remember the write by patching the fill.
        // Cheap approach: install dirty on arrival via a zero-latency fill.
        fills.push(Fill{demand_inflight[line], line, kFillL1 | kFillDirty, -1, 0});
    }

    void retire_nt(const WriteBuffer::Retirement& r) {
        mem_free = std::max(mem_free, now) + line_ticks + (r.full ? 0 : penalty_ticks);
        stats.bytes_from_memory += kLineBytes;
        if (r.full) ++stats.wb_full_retirements;
        else ++stats.wb_partial_flushes;
    }

    void access(const AccessEvent& e) {
        now += 1;
        mature(now);
        if (e.kind == EventKind::NTWrite) {
            ++stats.nt_writes;
            stats.demand_bytes += e.size;
            if (auto r = wbuf.step(e.address, e.size)) retire_nt(*r);
            return;
        }
        ++stats.demand_accesses;
        stats.demand_bytes += e.size;
        bool is_write = e.kind == EventKind::Write;
        std::int64_t first = static_cast<std::int64_t>(e.address / kLineBytes);
        std::int64_t last = static_cast<std::int64_t>((e.address + e.size - 1) / kLineBytes);
        bool all_hit = true;
        for (std::int64_t line = first; line <= last; ++line)
            if (!probe(line, is_write)) all_hit = false;
        if (all_hit) ++stats.l1.hits;
        else ++stats.l1.demand_misses;
    }

    void finish() {
        stats.wb_merges = wbuf.merges;
        for (const auto& r : wbuf.flush()) retire_nt(r);
        while (!window.empty()) {
            WindowEntry soonest = window.top();
            window.pop();
            if (soonest.tick > now) {
                stall_ticks[soonest.level - kLevelL2] +=
                    static_cast<std::uint64_t>(soonest.tick - now);
                now = soonest.tick;
            }
        }
        if (mem_free > now) {
            stall_ticks[kLevelMem - kLevelL2] += static_cast<std::uint64_t>(mem_free - now);
            now = mem_free;
        }
        mature(now);
        double iw = static_cast<double>(m.issue_width);
        stats.total_cycles = static_cast<double>(now) / iw;
        stats.stall_l2 = static_cast<double>(stall_ticks[0]) / iw;
        stats.stall_l3 = static_cast<double>(stall_ticks[1]) / iw;
        stats.stall_mem = static_cast<double>(stall_ticks[2]) / iw;
    }
};

} // namespace

SimStats simulate(const AccessTrace& trace, const MachineModel& machine) {
    Sim sim(machine);
    trace.for_each([&](const AccessEvent& e) { sim.access(e); });
    sim.finish();
    return sim.stats;
}

} // namespace ms
