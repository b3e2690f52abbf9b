#pragma once

#include <string>
#include <vector>

#include "ms/simcache.hpp"
#include "ms/transform.hpp"

namespace ms {

struct CollisionLevelReport {
    std::string level; // "l1", "l2", "l3"
    std::int64_t distinct_sets = 0;
    std::int64_t sets = 0;
    int associativity = 0;
    bool conflict = false;
};

struct CollisionReport {
    std::int64_t array_bytes = 0;
    int stride_unrolls = 1;
    std::vector<CollisionLevelReport> levels;
    const CollisionLevelReport& level(const std::string& name) const;
};

// Where the n concurrent stride heads land at iteration zero: same-set
// placement with more strides than ways flags a conflict.
CollisionReport predict_collisions(std::int64_t array_bytes, int n,
                                   const MachineModel& machine);

// Largest multiple of the configuration step granule (n*p*32 bytes) below
// 0.95x the power-of-two size; keeps trip counts integral for every micro
// configuration while breaking the same-set placement.
std::int64_t non_pow2_sibling(std::int64_t pow2_bytes, const StridingConfig& config);

// ---------------------------------------------------------------------------

struct SweepRow {
    std::string kernel;
    int n = 1, p = 1;
    Arrangement arrangement = Arrangement::Grouped;
    AccessClass access_class = AccessClass::Aligned;
    std::string preset;
    bool prefetch = true;
    std::int64_t array_bytes = 0; // critical array
    bool ok = false;
    std::string error;
    SimStats stats;
    double throughput_gibs = 0.0;
};

struct SweepRequest {
    std::string kernel;
    std::vector<StridingConfig> configs;
    MachineModel machine;
    bool prefetch_enabled = true;
    Extents extents;
    int jobs = 1;
};

// One simulation per configuration; rows that fail divisibility or register
// feasibility come back with their error instead of aborting the sweep. The
// hardware warm-up/median protocol collapses to a single measured pass
// (deterministic simulator), recorded in the report metadata.
std::vector<SweepRow> run_sweep(const SweepRequest& request);

// Extents for a kernel scaled so the critical array is close to size_bytes
// (0 keeps the catalog defaults). Deterministic and granule-aligned.
Extents resolve_extents(const KernelSpec& spec, std::int64_t size_bytes);

// CSV columns: kernel,n,p,arrangement,class,preset,prefetcher,array_bytes,
// l1_hit,l2_hit,l3_hit,stall_cycles,total_cycles,bytes_mem,throughput_gibs,
// error. Hit ratios carry six decimal places. Byte-stable across runs.
std::string report_csv(const std::vector<SweepRow>& rows);

// JSON report embedding the full machine model echo and schema version.
std::string report_json(const std::vector<SweepRow>& rows, const MachineModel& machine);
std::vector<SweepRow> rows_from_json(const std::string& json_text);

std::string stats_json(const SimStats& stats, const MachineModel& machine,
                       const SweepRow& row);
std::string collision_table(const std::vector<CollisionReport>& reports);

} // namespace ms
