#include "doctest.h"

#include <regex>
#include <set>

#include "ms/analysis.hpp"
#include "ms/catalog.hpp"

using namespace ms;

TEST_CASE("collision prediction on coffee lake at 2 GiB") {
    MachineModel cl = MachineModel::preset("coffee-lake");
    std::int64_t two_gib = std::int64_t{2} << 30;
    CollisionReport r = predict_collisions(two_gib, 8, cl);
    CHECK(r.level("l1").distinct_sets == 1);
    CHECK(r.level("l1").conflict); // 8 strides >= 8 ways in one set
    CHECK(r.level("l2").distinct_sets == 1);
    CHECK(r.level("l2").conflict); // 8 > 4-way
    // Coffee Lake's L3 has a non-power-of-two set count: heads spread
    CHECK(r.level("l3").distinct_sets > 1);

    StridingConfig cfg;
    cfg.stride_unrolls = 8;
    cfg.portion_unrolls = 4;
    CollisionReport s = predict_collisions(non_pow2_sibling(two_gib, cfg), 8, cl);
    CHECK(s.level("l2").distinct_sets == 8);
    CHECK(!s.level("l2").conflict);

    CollisionReport one = predict_collisions(two_gib, 1, cl);
    CHECK(one.level("l1").distinct_sets == 1);
    CHECK(!one.level("l1").conflict); // a single stride conflicts with nothing
    CHECK(!one.level("l2").conflict);
}

TEST_CASE("the non-power-of-two sibling keeps every micro trip integral") {
    for (int n : {1, 2, 4, 8, 16, 32}) {
        StridingConfig cfg;
        cfg.stride_unrolls = n;
        cfg.portion_unrolls = 32 / n;
        std::int64_t sz = non_pow2_sibling(16 << 20, cfg);
        CHECK(sz % (static_cast<std::int64_t>(n) * cfg.portion_unrolls * 32) == 0);
        CHECK(sz < 16 * 1024 * 1024 * 0.95 + 1024);
        // all micro configurations share one granule, hence one size
        CHECK(sz == non_pow2_sibling(16 << 20, cfg));
    }
}

TEST_CASE("micro sweep produces one row per divisor of 32") {
    SweepRequest req;
    req.kernel = "micro-read";
    req.machine = MachineModel::preset("desk-scale");
    req.extents = {{"NX", non_pow2_sibling(2 << 20, StridingConfig{1, 32}) / 4}};
    req.configs = enumerate_configs(50, true);
    auto rows = run_sweep(req);
    REQUIRE(rows.size() == 6);
    std::vector<int> ns;
    for (const auto& r : rows) {
        CHECK(r.ok);
        ns.push_back(r.n);
        CHECK(r.array_bytes == req.extents["NX"] * 4);
    }
    CHECK(ns == std::vector<int>{1, 2, 4, 8, 16, 32});
}

TEST_CASE("sweeps are deterministic byte for byte, serial or parallel") {
    SweepRequest req;
    req.kernel = "micro-copy";
    req.machine = MachineModel::preset("desk-scale");
    req.extents = {{"NX", non_pow2_sibling(2 << 20, StridingConfig{1, 32}) / 4}};
    req.configs = enumerate_configs(50, true);
    req.jobs = 1;
    std::string a = report_csv(run_sweep(req));
    req.jobs = 4;
    std::string b = report_csv(run_sweep(req));
    req.jobs = 4;
    std::string c = report_csv(run_sweep(req));
    CHECK(a == b);
    CHECK(b == c);
}

TEST_CASE("failed rows carry their error instead of vanishing") {
    SweepRequest req;
    req.kernel = "mxv";
    req.machine = MachineModel::preset("desk-scale");
    req.extents = {{"N", 48}, {"M", 192}};
    req.configs = enumerate_configs(50, false); // many divisibility failures
    auto rows = run_sweep(req);
    CHECK(rows.size() == req.configs.size());
    size_t ok = 0, failed = 0;
    for (const auto& r : rows) {
        if (r.ok) ++ok;
        else {
            ++failed;
            CHECK(!r.error.empty());
        }
    }
    CHECK(ok > 0);
    CHECK(failed > 0);
    std::string csv = report_csv(rows);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(rows.size()) + 1);
}

TEST_CASE("CSV formatting contract") {
    SweepRequest req;
    req.kernel = "micro-read";
    req.machine = MachineModel::preset("desk-scale");
    req.extents = {{"NX", non_pow2_sibling(2 << 20, StridingConfig{1, 32}) / 4}};
    req.configs = {StridingConfig{16, 2}};
    auto rows = run_sweep(req);
    std::string csv = report_csv(rows);
    // header + one row
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    CHECK(csv.rfind("kernel,n,p,arrangement,class,preset,prefetcher,array_bytes,"
                    "l1_hit,l2_hit,l3_hit,stall_cycles,total_cycles,bytes_mem,"
                    "throughput_gibs,error\n", 0) == 0);
    // hit ratios have six decimal places
    std::regex six(R"(,0\.500000,)");
    CHECK(std::regex_search(csv, six));
}

TEST_CASE("JSON report round-trips to identical rows") {
    SweepRequest req;
    req.kernel = "micro-write";
    req.machine = MachineModel::preset("desk-scale");
    req.extents = {{"NX", non_pow2_sibling(2 << 20, StridingConfig{1, 32}) / 4}};
    req.configs = enumerate_configs(50, true);
    auto rows = run_sweep(req);
    std::string json = report_json(rows, req.machine);
    CHECK(json.find("\"schema_version\": 1") != std::string::npos);
    CHECK(json.find("\"machine\"") != std::string::npos);
    CHECK(json.find("\"max_streams\": 16") != std::string::npos);
    auto back = rows_from_json(json);
    REQUIRE(back.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].kernel == rows[i].kernel);
        CHECK(back[i].n == rows[i].n);
        CHECK(back[i].p == rows[i].p);
        CHECK(back[i].ok == rows[i].ok);
        CHECK(back[i].throughput_gibs == rows[i].throughput_gibs);
        CHECK(back[i].stats.total_cycles == rows[i].stats.total_cycles);
        CHECK(back[i].stats.l1.hits == rows[i].stats.l1.hits);
        CHECK(back[i].stats.bytes_from_memory == rows[i].stats.bytes_from_memory);
    }
}

TEST_CASE("conflict prediction links to simulated misses at the flagged level") {
    MachineModel desk = MachineModel::preset("desk-scale");
    std::int64_t pow2 = 8 << 20;
    StridingConfig cfg;
    cfg.stride_unrolls = 8;
    cfg.portion_unrolls = 4;
    std::int64_t sib = non_pow2_sibling(pow2, cfg);
    CollisionReport cp = predict_collisions(pow2, 8, desk);
    CollisionReport cs = predict_collisions(sib, 8, desk);
    REQUIRE(cp.level("l2").conflict);
    REQUIRE(!cs.level("l2").conflict);

    auto sim = [&](std::int64_t bytes) {
        UnrolledKernel uk =
            transform_kernel(catalog_lookup("micro-read"), cfg, {{"NX", bytes / 4}});
        return simulate(gen_trace(lower(uk)), desk);
    };
    SimStats a = sim(pow2);
    SimStats b = sim(sib);
    double per_a = static_cast<double>(a.l2.demand_misses) / static_cast<double>(pow2);
    double per_b = static_cast<double>(b.l2.demand_misses) / static_cast<double>(sib);
    CHECK(per_a > per_b); // strictly more misses at the conflicted level
}

TEST_CASE("resolved extents honor granules and the size target") {
    KernelSpec micro = catalog_lookup("micro-read");
    Extents e = resolve_extents(micro, 16 << 20);
    CHECK(e["NX"] % 1024 == 0);
    CHECK(e["NX"] * 4 <= 16 << 20);

    KernelSpec mxv = catalog_lookup("mxv");
    Extents m = resolve_extents(mxv, 4 << 20);
    CHECK(m["M"] == 192);
    CHECK(m["N"] % 48 == 0);
    CHECK(m["N"] * m["M"] * 4 <= 4 << 20);

    // defaults pass through
    CHECK(resolve_extents(mxv, 0) == mxv.default_extents);
}

TEST_CASE("collision table lists both regimes") {
    MachineModel desk = MachineModel::preset("desk-scale");
    std::vector<CollisionReport> reports;
    for (int n : {1, 8}) {
        StridingConfig cfg;
        cfg.stride_unrolls = n;
        cfg.portion_unrolls = 32 / n;
        reports.push_back(predict_collisions(std::int64_t{2} << 30, n, desk));
        reports.push_back(
            predict_collisions(non_pow2_sibling(std::int64_t{2} << 30, cfg), n, desk));
    }
    std::string t = collision_table(reports);
    CHECK(t.rfind("array_bytes,n,level,distinct_sets,sets,associativity,conflict\n", 0) == 0);
    CHECK(std::count(t.begin(), t.end(), '\n') == 1 + 3 * 4);
}
