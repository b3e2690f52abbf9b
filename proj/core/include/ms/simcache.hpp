#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ms/trace.hpp"

namespace ms {

struct CacheLevelConfig {
    std::int64_t capacity_bytes = 0;
    int associativity = 1;
    int line_bytes = kLineBytes; // fixed 64
    int hit_latency = 1;         // cycles
    int mshr_entries = 10;       // L1: bounds overlapped demand misses

    std::int64_t sets() const { return capacity_bytes / (associativity * line_bytes); }
    std::int64_t set_span() const { return sets() * line_bytes; }
    void validate(const std::string& name) const;
};

// Which levels a completed prefetch fills.
enum class PrefetchFill { L2, L3, Both };

struct PrefetcherConfig {
    bool enabled = true;
    int max_streams = 16;
    int train_threshold = 2; // confirmations before issuing
    int degree = 2;          // prefetches per triggering access (and per-stream in flight)
    int distance = 16;       // max lines ahead of the trigger
    PrefetchFill fill = PrefetchFill::Both;
    int outstanding_cap = 16;
    void validate() const;
};

struct MachineModel {
    std::string name = "custom";
    CacheLevelConfig l1, l2, l3;
    int memory_latency = 300;             // cycles
    double bandwidth_bytes_per_cycle = 4.5;
    int issue_width = 2;                  // memory ops per cycle
    int write_buffer_entries = 10;        // nt write-combining buffers
    int nt_partial_penalty = 150;         // cycles added per partial-line flush
    double frequency_ghz = 3.2;           // for GiB/s conversion only
    PrefetcherConfig prefetcher;

    void validate() const;
    // coffee-lake, cascade-lake, zen2, desk-scale
    static MachineModel preset(const std::string& name);
    static const std::vector<std::string>& preset_names();
};

std::int64_t set_index(std::uint64_t address, const CacheLevelConfig& cfg);

struct LevelStats {
    std::uint64_t hits = 0;
    std::uint64_t demand_misses = 0;
    std::uint64_t prefetch_fetches = 0; // memory fetches issued by the prefetcher
    std::uint64_t prefetch_fills = 0;
    std::uint64_t prefetch_useful = 0;
    std::uint64_t prefetch_late = 0;
    std::uint64_t misses_total() const { return demand_misses + prefetch_fetches; }
    double hit_ratio() const {
        std::uint64_t d = hits + demand_misses;
        return d ? static_cast<double>(hits) / static_cast<double>(d) : 0.0;
    }
};

struct SimStats {
    LevelStats l1, l2, l3;
    std::uint64_t demand_accesses = 0; // reads + regular writes (nt bypasses)
    std::uint64_t nt_writes = 0;
    std::uint64_t fill_buffer_merges = 0; // demand hits on in-flight demand lines

    double stall_l2 = 0, stall_l3 = 0, stall_mem = 0; // cycles
    double total_cycles = 0;
    std::uint64_t bytes_from_memory = 0; // 64 * (L3 misses + nt retirements)
    std::uint64_t bytes_writeback = 0;   // dirty L3 evictions
    std::uint64_t demand_bytes = 0;      // sum of demand event sizes

    std::uint64_t wb_merges = 0;
    std::uint64_t wb_full_retirements = 0;
    std::uint64_t wb_partial_flushes = 0;

    std::uint64_t prefetches_issued = 0;

    double stall_cycles() const { return stall_l2 + stall_l3 + stall_mem; }
    double partial_flush_ratio() const {
        std::uint64_t t = wb_full_retirements + wb_partial_flushes;
        return t ? static_cast<double>(wb_partial_flushes) / static_cast<double>(t) : 0.0;
    }
    // Demand traffic per cycle, scaled to GiB/s at the model frequency.
    double throughput_gibs(const MachineModel& m) const;
};

// Deterministic trace-driven simulation of the three-level hierarchy, the
// stream prefetcher and the nt write-combining buffer.
SimStats simulate(const AccessTrace& trace, const MachineModel& machine);

// ---------------------------------------------------------------------------
// The nt write-combining buffer, exposed for direct unit testing.

class WriteBuffer {
public:
    struct Retirement {
        std::uint64_t line;
        bool full; // all 64 bytes were written before eviction
    };

    explicit WriteBuffer(int entries) : capacity_(entries) {}

    // Merges the write into an open line buffer, or allocates one, evicting
    // the least recently used buffer when full. Returns the eviction.
    std::optional<Retirement> step(std::uint64_t address, std::uint32_t size);
    std::vector<Retirement> flush();

    std::uint64_t merges = 0;

private:
    struct Entry {
        std::uint64_t line;
        std::uint64_t mask; // byte-present bitmap
        std::uint64_t stamp;
    };
    int capacity_;
    std::uint64_t clock_ = 0;
    std::vector<Entry> entries_;
};

} // namespace ms
