#include "ms/analysis.hpp"

#include <atomic>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "ms/catalog.hpp"
#include "ms/interp.hpp"

namespace ms {

using nlohmann::json;

const CollisionLevelReport& CollisionReport::level(const std::string& name) const {
    for (const auto& l : levels)
        if (l.level == name) return l;
    throw NotFoundError("no level '" + name + "' in collision report");
}

CollisionReport predict_collisions(std::int64_t array_bytes, int n,
                                   const MachineModel& machine) {
    if (n < 1) throw ConfigError("stride count must be >= 1");
    CollisionReport rep;
    rep.array_bytes = array_bytes;
    rep.stride_unrolls = n;
    std::int64_t spacing = array_bytes / n;
    auto eval = [&](const std::string& name, const CacheLevelConfig& cfg) {
        std::set<std::int64_t> distinct;
        for (int s = 0; s < n; ++s)
            distinct.insert(set_index(static_cast<std::uint64_t>(s) *
                                          static_cast<std::uint64_t>(spacing),
                                      cfg));
        CollisionLevelReport lr;
        lr.level = name;
        lr.distinct_sets = static_cast<std::int64_t>(distinct.size());
        lr.sets = cfg.sets();
        lr.associativity = cfg.associativity;
        lr.conflict = lr.distinct_sets < n && n >= cfg.associativity;
        rep.levels.push_back(lr);
    };
    eval("l1", machine.l1);
    eval("l2", machine.l2);
    eval("l3", machine.l3);
    return rep;
}

std::int64_t non_pow2_sibling(std::int64_t pow2_bytes, const StridingConfig& config) {
    std::int64_t granule =
        static_cast<std::int64_t>(config.stride_unrolls) * config.portion_unrolls * kVectorBytes;
    std::int64_t limit = static_cast<std::int64_t>(0.95 * static_cast<double>(pow2_bytes));
    std::int64_t k = limit / granule;
    if (k < 1) throw ConfigError("power-of-two size too small for the step granule");
    return k * granule;
}

// ---------------------------------------------------------------------------

Extents resolve_extents(const KernelSpec& spec, std::int64_t size_bytes) {
    if (size_bytes <= 0) return spec.default_extents;
    Extents ext = spec.default_extents;
    if (ext.size() == 1) {
        // 1-D: words rounded down to a 1024-word granule so every micro
        // configuration (n*p == 32) divides evenly.
        std::int64_t words = size_bytes / kElemBytes;
        std::int64_t granule = 1024;
        std::int64_t v = std::max<std::int64_t>(granule, words / granule * granule);
        ext.begin()->second = v;
        return ext;
    }
    // Multi-loop kernels: a short 384-element contiguous axis keeps the
    // re-swept side vectors L1-resident (as they are at hardware scale) while
    // the stride axis carries the footprint; both stay divisibility-rich.
    TransformPlan plan = select_critical_access(spec);
    const std::string contig_sym = spec.loops[spec.loop_position(plan.contiguous_axis)]
                                       .bound_symbol;
    std::int64_t contig = 192;
    ext[contig_sym] = contig;
    // remaining extent symbols share the leftover factor
    std::vector<std::string> others;
    for (const auto& l : spec.loops)
        if (l.bound_symbol != contig_sym) others.push_back(l.bound_symbol);
    std::int64_t rows = size_bytes / kElemBytes / contig;
    for (size_t i = 0; i + 1 < others.size(); ++i) ext[others[i]] = 4; // embed loops stay small
    std::int64_t embed = 1;
    for (size_t i = 0; i + 1 < others.size(); ++i) embed *= 4;
    if (!others.empty()) {
        std::int64_t v = std::max<std::int64_t>(48, rows / embed / 48 * 48);
        ext[others.back()] = v;
    }
    return ext;
}

std::vector<SweepRow> run_sweep(const SweepRequest& request) {
    KernelSpec spec = catalog_lookup(request.kernel);
    MachineModel machine = request.machine;
    machine.prefetcher.enabled = request.prefetch_enabled;

    std::vector<SweepRow> rows(request.configs.size());
    std::atomic<size_t> cursor{0};
    auto worker = [&]() {
        for (;;) {
            size_t i = cursor.fetch_add(1);
            if (i >= request.configs.size()) return;
            const StridingConfig& cfg = request.configs[i];
            SweepRow& row = rows[i];
            row.kernel = request.kernel;
            row.n = cfg.stride_unrolls;
            row.p = cfg.portion_unrolls;
            row.arrangement = cfg.arrangement;
            row.preset = machine.name;
            row.prefetch = request.prefetch_enabled;
            try {
                UnrolledKernel uk = transform_kernel(spec, cfg, request.extents);
                row.access_class = uk.access_class;
                const ArrayRef* crit = spec.find_ref(uk.plan.critical_array);
                row.array_bytes = crit->element_count(request.extents) * crit->elem_bytes;
                VectorProgram prog = lower(uk);
                AccessTrace trace = gen_trace(prog);
                row.stats = simulate(trace, machine);
                row.throughput_gibs = row.stats.throughput_gibs(machine);
                row.ok = true;
            } catch (const Error& e) {
                row.ok = false;
                row.error = e.what();
                row.access_class = cfg.access_class;
            }
        }
    };
    int jobs = std::max(1, request.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return rows;
}

// ---------------------------------------------------------------------------

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fixed1(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

json machine_to_json(const MachineModel& m) {
    auto level = [](const CacheLevelConfig& c) {
        return json{{"capacity_bytes", c.capacity_bytes},
                    {"associativity", c.associativity},
                    {"line_bytes", c.line_bytes},
                    {"hit_latency", c.hit_latency},
                    {"mshr_entries", c.mshr_entries}};
    };
    const char* fill = m.prefetcher.fill == PrefetchFill::L2
                           ? "l2"
                           : (m.prefetcher.fill == PrefetchFill::L3 ? "l3" : "both");
    return json{{"name", m.name},
                {"l1", level(m.l1)},
                {"l2", level(m.l2)},
                {"l3", level(m.l3)},
                {"memory_latency", m.memory_latency},
                {"bandwidth_bytes_per_cycle", m.bandwidth_bytes_per_cycle},
                {"issue_width", m.issue_width},
                {"write_buffer_entries", m.write_buffer_entries},
                {"nt_partial_penalty", m.nt_partial_penalty},
                {"frequency_ghz", m.frequency_ghz},
                {"prefetcher",
                 json{{"enabled", m.prefetcher.enabled},
                      {"max_streams", m.prefetcher.max_streams},
                      {"train_threshold", m.prefetcher.train_threshold},
                      {"degree", m.prefetcher.degree},
                      {"distance", m.prefetcher.distance},
                      {"fill", fill},
                      {"outstanding_cap", m.prefetcher.outstanding_cap}}}};
}

json level_stats_json(const LevelStats& s) {
    return json{{"hits", s.hits},
                {"demand_misses", s.demand_misses},
                {"prefetch_fetches", s.prefetch_fetches},
                {"prefetch_fills", s.prefetch_fills},
                {"prefetch_useful", s.prefetch_useful},
                {"prefetch_late", s.prefetch_late},
                {"hit_ratio", s.hit_ratio()}};
}

json stats_to_json(const SimStats& s) {
    return json{{"l1", level_stats_json(s.l1)},
                {"l2", level_stats_json(s.l2)},
                {"l3", level_stats_json(s.l3)},
                {"demand_accesses", s.demand_accesses},
                {"nt_writes", s.nt_writes},
                {"fill_buffer_merges", s.fill_buffer_merges},
                {"stall_l2", s.stall_l2},
                {"stall_l3", s.stall_l3},
                {"stall_mem", s.stall_mem},
                {"stall_cycles", s.stall_cycles()},
                {"total_cycles", s.total_cycles},
                {"bytes_from_memory", s.bytes_from_memory},
                {"bytes_writeback", s.bytes_writeback},
                {"demand_bytes", s.demand_bytes},
                {"wb_merges", s.wb_merges},
                {"wb_full_retirements", s.wb_full_retirements},
                {"wb_partial_flushes", s.wb_partial_flushes},
                {"prefetches_issued", s.prefetches_issued}};
}

void stats_from_json(const json& j, SimStats& s) {
    auto level = [](const json& lj, LevelStats& ls) {
        ls.hits = lj.at("hits");
        ls.demand_misses = lj.at("demand_misses");
        ls.prefetch_fetches = lj.at("prefetch_fetches");
        ls.prefetch_fills = lj.at("prefetch_fills");
        ls.prefetch_useful = lj.at("prefetch_useful");
        ls.prefetch_late = lj.at("prefetch_late");
    };
    level(j.at("l1"), s.l1);
    level(j.at("l2"), s.l2);
    level(j.at("l3"), s.l3);
    s.demand_accesses = j.at("demand_accesses");
    s.nt_writes = j.at("nt_writes");
    s.fill_buffer_merges = j.at("fill_buffer_merges");
    s.stall_l2 = j.at("stall_l2");
    s.stall_l3 = j.at("stall_l3");
    s.stall_mem = j.at("stall_mem");
    s.total_cycles = j.at("total_cycles");
    s.bytes_from_memory = j.at("bytes_from_memory");
    s.bytes_writeback = j.at("bytes_writeback");
    s.demand_bytes = j.at("demand_bytes");
    s.wb_merges = j.at("wb_merges");
    s.wb_full_retirements = j.at("wb_full_retirements");
    s.wb_partial_flushes = j.at("wb_partial_flushes");
    s.prefetches_issued = j.at("prefetches_issued");
}

json row_to_json(const SweepRow& r) {
    json j{{"kernel", r.kernel},
           {"n", r.n},
           {"p", r.p},
           {"arrangement", to_string(r.arrangement)},
           {"class", to_string(r.access_class)},
           {"preset", r.preset},
           {"prefetcher", r.prefetch},
           {"array_bytes", r.array_bytes},
           {"ok", r.ok},
           {"throughput_gibs", r.throughput_gibs}};
    if (r.ok) j["stats"] = stats_to_json(r.stats);
    else j["error"] = r.error;
    return j;
}

Arrangement arrangement_from(const std::string& s) {
    if (s == "grouped") return Arrangement::Grouped;
    if (s == "interleaved") return Arrangement::Interleaved;
    throw ConfigError("unknown arrangement '" + s + "'");
}

AccessClass class_from(const std::string& s) {
    if (s == "aligned") return AccessClass::Aligned;
    if (s == "unaligned") return AccessClass::Unaligned;
    if (s == "nt") return AccessClass::NonTemporal;
    throw ConfigError("unknown access class '" + s + "'");
}

SweepRow row_from_json(const json& j) {
    SweepRow r;
    r.kernel = j.at("kernel");
    r.n = j.at("n");
    r.p = j.at("p");
    r.arrangement = arrangement_from(j.at("arrangement"));
    r.access_class = class_from(j.at("class"));
    r.preset = j.at("preset");
    r.prefetch = j.at("prefetcher");
    r.array_bytes = j.at("array_bytes");
    r.ok = j.at("ok");
    r.throughput_gibs = j.at("throughput_gibs");
    if (r.ok) stats_from_json(j.at("stats"), r.stats);
    else r.error = j.at("error");
    return r;
}

} // namespace

std::string report_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "kernel,n,p,arrangement,class,preset,prefetcher,array_bytes,"
          "l1_hit,l2_hit,l3_hit,stall_cycles,total_cycles,bytes_mem,throughput_gibs,"
          "error\n";
    for (const auto& r : rows) {
        os << r.kernel << ',' << r.n << ',' << r.p << ',' << to_string(r.arrangement)
           << ',' << to_string(r.access_class) << ',' << r.preset << ','
           << (r.prefetch ? "on" : "off") << ',' << r.array_bytes << ',';
        if (r.ok) {
            os << fixed6(r.stats.l1.hit_ratio()) << ',' << fixed6(r.stats.l2.hit_ratio())
               << ',' << fixed6(r.stats.l3.hit_ratio()) << ','
               << fixed1(r.stats.stall_cycles()) << ',' << fixed1(r.stats.total_cycles)
               << ',' << r.stats.bytes_from_memory << ',' << fixed6(r.throughput_gibs)
               << ',';
        } else {
            os << ",,,,,,,";
        }
        std::string err = r.error;
        for (auto& c : err)
            if (c == ',' || c == '\n') c = ';';
        os << err << '\n';
    }
    return os.str();
}

std::string report_json(const std::vector<SweepRow>& rows, const MachineModel& machine) {
    json j;
    j["schema_version"] = 1;
    j["machine"] = machine_to_json(machine);
    j["protocol"] = {{"warmup_passes", 0},
                     {"measured_passes", 1},
                     {"note", "deterministic simulation: the two warm-up runs and the "
                              "median of five collapse to a single measured pass"}};
    j["rows"] = json::array();
    for (const auto& r : rows) j["rows"].push_back(row_to_json(r));
    return j.dump(2) + "\n";
}

std::vector<SweepRow> rows_from_json(const std::string& text) {
    json j = json::parse(text);
    std::vector<SweepRow> rows;
    for (const auto& rj : j.at("rows")) rows.push_back(row_from_json(rj));
    return rows;
}

std::string stats_json(const SimStats& stats, const MachineModel& machine,
                       const SweepRow& row) {
    json j;
    j["schema_version"] = 1;
    j["machine"] = machine_to_json(machine);
    j["protocol"] = {{"warmup_passes", 0},
                     {"measured_passes", 1},
                     {"note", "deterministic simulation: the two warm-up runs and the "
                              "median of five collapse to a single measured pass"}};
    j["row"] = row_to_json(row);
    j["stats"] = stats_to_json(stats);
    return j.dump(2) + "\n";
}

std::string collision_table(const std::vector<CollisionReport>& reports) {
    std::ostringstream os;
    os << "array_bytes,n,level,distinct_sets,sets,associativity,conflict\n";
    for (const auto& rep : reports)
        for (const auto& l : rep.levels)
            os << rep.array_bytes << ',' << rep.stride_unrolls << ',' << l.level << ','
               << l.distinct_sets << ',' << l.sets << ',' << l.associativity << ','
               << (l.conflict ? "yes" : "no") << '\n';
    return os.str();
}

} // namespace ms
