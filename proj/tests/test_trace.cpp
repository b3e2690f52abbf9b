#include "doctest.h"

#include <map>
#include <random>
#include <set>
#include <sstream>

#include "ms/catalog.hpp"
#include "ms/trace.hpp"

using namespace ms;

namespace {

AccessTrace trace_of(const std::string& kernel, int n, int p, Extents ext,
                     Arrangement arr = Arrangement::Grouped, bool elim = false) {
    StridingConfig cfg;
    cfg.stride_unrolls = n;
    cfg.portion_unrolls = p;
    cfg.arrangement = arr;
    cfg.eliminate_redundant = elim;
    UnrolledKernel uk = transform_kernel(catalog_lookup(kernel), cfg, ext);
    return gen_trace(lower(uk));
}

UnrolledKernel unrolled(const std::string& kernel, int n, int p, Extents ext,
                        Arrangement arr = Arrangement::Grouped, bool elim = false) {
    StridingConfig cfg;
    cfg.stride_unrolls = n;
    cfg.portion_unrolls = p;
    cfg.arrangement = arr;
    cfg.eliminate_redundant = elim;
    return transform_kernel(catalog_lookup(kernel), cfg, ext);
}

} // namespace

TEST_CASE("micro-read n=1 covers 64 KiB as one ascending sequence") {
    AccessTrace t = trace_of("micro-read", 1, 32, {{"NX", 16384}});
    auto events = t.collect();
    REQUIRE(events.size() == 2048);
    std::uint64_t base = t.layout.at("x").base;
    for (size_t i = 0; i < events.size(); ++i) {
        REQUIRE(events[i].address == base + 32 * i);
        REQUIRE(events[i].kind == EventKind::Read);
        REQUIRE(events[i].size == 32);
        REQUIRE(events[i].index == i);
    }
}

TEST_CASE("micro-read n=2 interleaves two half-array progressions") {
    AccessTrace t = trace_of("micro-read", 2, 16, {{"NX", 16384}});
    auto events = t.collect();
    REQUIRE(events.size() == 2048);
    std::uint64_t base = t.layout.at("x").base;
    CHECK(events[0].address == base);
    CHECK(events[16].address == base + 32768);
    CHECK(events[1].address == base + 32);
    // same touched set as n=1
    std::set<std::uint64_t> addrs;
    for (const auto& e : events) addrs.insert(e.address);
    CHECK(addrs.size() == 2048);
}

TEST_CASE("micro-copy alternates read and write progressions") {
    AccessTrace t = trace_of("micro-copy", 1, 32, {{"NX", 8192}});
    auto events = t.collect();
    REQUIRE(events.size() == 2048);
    for (size_t i = 0; i < events.size(); i += 2) {
        CHECK(events[i].kind == EventKind::Read);
        CHECK(events[i + 1].kind == EventKind::Write);
    }
}

TEST_CASE("event counts follow the trip structure") {
    for (int n : {1, 4, 32}) {
        AccessTrace t = trace_of("micro-read", n, 32 / n, {{"NX", 32768}});
        CHECK(t.event_count() == 32768 / 8); // one vector event per 8 floats
        CHECK(t.event_count() ==
              static_cast<std::int64_t>(t.program.body.size()) * t.program.inner_trip());
    }
}

TEST_CASE("traces are deterministic") {
    AccessTrace a = trace_of("bicg", 2, 2, {{"N", 8}, {"M", 64}});
    AccessTrace b = trace_of("bicg", 2, 2, {{"N", 8}, {"M", 64}});
    auto ea = a.collect(), eb = b.collect();
    REQUIRE(ea.size() == eb.size());
    for (size_t i = 0; i < ea.size(); ++i) {
        CHECK(ea[i].address == eb[i].address);
        CHECK(ea[i].kind == eb[i].kind);
    }
}

TEST_CASE("portion count changes ordering, never the touched set") {
    auto touched = [&](int n, int p) {
        std::set<std::pair<std::uint64_t, int>> s;
        trace_of("mxv", n, p, {{"N", 16}, {"M", 192}}).for_each([&](const AccessEvent& e) {
            s.insert({e.address, static_cast<int>(e.kind)});
        });
        return s;
    };
    CHECK(touched(2, 1) == touched(2, 4));
    CHECK(touched(2, 2) == touched(2, 8));
}

TEST_CASE("binary export writes 9-byte records") {
    AccessTrace t = trace_of("micro-write", 4, 8, {{"NX", 2048}});
    std::ostringstream os;
    t.export_binary(os);
    std::string data = os.str();
    REQUIRE(data.size() == static_cast<size_t>(t.event_count()) * 9);
    // first record: address of the first event, kind byte = write
    auto events = t.collect();
    std::uint64_t addr = 0;
    for (int i = 0; i < 8; ++i)
        addr |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[i])) << (8 * i);
    CHECK(addr == events[0].address);
    CHECK(data[8] == 1);
}

TEST_CASE("census: mxv n=4 shows five load streams and one load/store stream") {
    Census c = stream_census(trace_of("mxv", 4, 2, {{"N", 16}, {"M", 192}}));
    CHECK(c.totals.loads == 5);      // n rows of A + B
    CHECK(c.totals.stores == 0);
    CHECK(c.totals.load_stores == 1); // C
}

TEST_CASE("census: bicg n=2 shows 4 loads, 1 store, 1 load/store") {
    Census c = stream_census(trace_of("bicg", 2, 2, {{"N", 16}, {"M", 192}}));
    CHECK(c.totals.loads == 4);       // 2xA + p + r
    CHECK(c.totals.stores == 1);      // q
    CHECK(c.totals.load_stores == 1); // s
}

TEST_CASE("census: micro-write n=8 shows eight write streams") {
    Census c = stream_census(trace_of("micro-write", 8, 4, {{"NX", 65536}}));
    CHECK(c.totals.loads == 0);
    CHECK(c.totals.stores == 8);
    CHECK(c.totals.load_stores == 0);
}

TEST_CASE("census matches the catalog signature for every kernel") {
    for (const auto& name : catalog_names()) {
        KernelSpec spec = catalog_lookup(name);
        for (int n : {1, 2, 4, 8}) {
            int p = spec.micro ? 32 / n : 2;
            Extents ext = spec.default_extents;
            if (name == "doitgen") ext["R"] = 1; // isolated form: no re-sweep rewinds
            AccessTrace t;
            try {
                t = trace_of(name, n, p, ext);
            } catch (const Error&) {
                continue; // infeasible or indivisible configuration
            }
            Census c = stream_census(t);
            INFO(name << " n=" << n);
            CHECK(c.totals.loads == spec.signature.loads.eval(n));
            CHECK(c.totals.stores == spec.signature.stores.eval(n));
            CHECK(c.totals.load_stores == spec.signature.load_stores.eval(n));
        }
    }
}

TEST_CASE("coverage accepts every feasible catalog configuration") {
    for (const auto& name : catalog_names()) {
        KernelSpec spec = catalog_lookup(name);
        for (int n : {1, 2, 4}) {
            int p = spec.micro ? 32 / n : 2;
            UnrolledKernel uk;
            try {
                uk = unrolled(name, n, p, spec.default_extents);
            } catch (const Error&) {
                continue;
            }
            CoverageReport rep = check_coverage(gen_trace(lower(uk)), uk);
            INFO(name << " n=" << n << ": " << rep.detail);
            CHECK(rep.ok);
        }
    }
}

TEST_CASE("coverage holds over randomized valid extents") {
    std::mt19937 rng(0xC0FFEE);
    const std::vector<std::string> names = catalog_names();
    for (int iter = 0; iter < 60; ++iter) {
        const std::string& name = names[rng() % names.size()];
        KernelSpec spec = catalog_lookup(name);
        int n = 1 << (rng() % 4);           // 1..8
        int p = spec.micro ? 32 / n : static_cast<int>(1 + rng() % 4);
        bool elim = rng() % 2;
        Arrangement arr = rng() % 2 ? Arrangement::Grouped : Arrangement::Interleaved;
        Extents ext = spec.default_extents;
        // randomize extents on the valid lattice
        for (auto& [sym, v] : ext) {
            if (sym == "R") v = 1 + static_cast<std::int64_t>(rng() % 3);
            else v = (1 + static_cast<std::int64_t>(rng() % 4)) * 8 * n * p;
        }
        UnrolledKernel uk;
        try {
            uk = unrolled(name, n, p, ext, arr, elim);
        } catch (const Error&) {
            continue;
        }
        CoverageReport rep = check_coverage(gen_trace(lower(uk)), uk);
        INFO(name << " n=" << n << " p=" << p << " elim=" << elim << ": " << rep.detail);
        CHECK(rep.ok);
    }
}

TEST_CASE("unaligned micro classes shift every address by four bytes") {
    StridingConfig cfg;
    cfg.stride_unrolls = 2;
    cfg.portion_unrolls = 16;
    cfg.access_class = AccessClass::Unaligned;
    UnrolledKernel uk = transform_kernel(catalog_lookup("micro-read"), cfg, {{"NX", 4096}});
    AccessTrace t = gen_trace(lower(uk));
    t.for_each([&](const AccessEvent& e) { REQUIRE(e.address % 32 == 4); });
    CoverageReport rep = check_coverage(t, uk);
    CHECK(rep.ok);
}

TEST_CASE("overlapping layouts are rejected") {
    UnrolledKernel uk = unrolled("micro-copy", 1, 32, {{"NX", 1024}});
    VectorProgram prog = lower(uk);
    Layout bad;
    bad.arrays["x"] = {0, 4096};
    bad.arrays["y"] = {2048, 4096};
    bad.span = 8192;
    CHECK_THROWS_AS(gen_trace(prog, bad), LayoutError);
}
