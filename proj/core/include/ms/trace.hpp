#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ms/codegen.hpp"
#include "ms/ir.hpp"

namespace ms {

enum class EventKind : std::uint8_t { Read = 0, Write = 1, NTWrite = 2 };

struct AccessEvent {
    std::uint64_t address = 0;
    EventKind kind = EventKind::Read;
    std::uint32_t size = kVectorBytes; // 32 for vector ops, 4 for scalar tails
    std::uint64_t index = 0;           // monotone issue counter
};

// The ordered byte-address stream a program presents to the memory system.
// Events are regenerated on demand (deterministic), so GiB-scale traces never
// materialize in memory.
struct AccessTrace {
    VectorProgram program;
    Layout layout;

    std::int64_t event_count() const { return program.total_events(); }

    template <typename F>
    void for_each(F&& fn) const {
        std::vector<std::int64_t> base(program.bases.size());
        for (size_t b = 0; b < program.bases.size(); ++b)
            base[b] = layout.at(program.bases[b]).base;
        std::uint64_t index = 0;
        auto emit_section = [&](const std::vector<VectorInstr>& instrs) {
            for (const auto& i : instrs) {
                bool rd = is_memory_read(i.op);
                bool wr = is_memory_write(i.op);
                if (!rd && !wr) continue;
                AccessEvent e;
                e.address = static_cast<std::uint64_t>(base[static_cast<size_t>(i.base)] + i.imm);
                bool scalar = i.op == Opcode::VBroadcastMem || i.op == Opcode::SLoad ||
                              i.op == Opcode::SStore;
                e.size = scalar ? 4 : kVectorBytes;
                e.kind = rd ? EventKind::Read
                            : (i.op == Opcode::VStoreNT ? EventKind::NTWrite : EventKind::Write);
                e.index = index++;
                fn(e);
            }
        };
        auto run_level = [&](auto&& self, size_t l) -> void {
            const ProgramLevel& lv = program.levels[l];
            for (std::int64_t t = 0; t < lv.trip; ++t) {
                emit_section(lv.pre);
                if (l + 1 == program.levels.size())
                    emit_section(program.body);
                else
                    self(self, l + 1);
                emit_section(lv.post);
                for (const auto& [b, step] : lv.steps) base[static_cast<size_t>(b)] += step;
            }
        };
        run_level(run_level, 0);
    }

    std::vector<AccessEvent> collect() const;
    // Little-endian records of 8-byte address + 1-byte kind, streamed.
    void export_binary(std::ostream& os) const;
};

// 2 MiB base alignment stands in for huge pages; virtual addresses are
// physical (identity mapping).
inline constexpr std::int64_t kTraceAlignment = 2 * 1024 * 1024;

AccessTrace gen_trace(const VectorProgram& prog, const Layout& layout);
AccessTrace gen_trace(const VectorProgram& prog); // default placement

// ---------------------------------------------------------------------------
// Stream census: decomposes the trace into constant-stride line streams.

struct StreamRun {
    std::string region;
    bool store = false;           // nt-writes census as stores
    std::uint64_t start = 0;      // first byte address observed
    std::int64_t stride = kLineBytes;
    std::int64_t lines = 1;
    std::uint64_t first_event = 0, last_event = 0;
};

struct CensusCounts {
    int loads = 0;
    int stores = 0;
    int load_stores = 0;
};

struct Census {
    std::vector<StreamRun> runs;
    std::map<std::string, CensusCounts> per_region;
    CensusCounts totals;
};

// Line-granular greedy decomposition. Same-line repeats and one-line-back
// stencil taps fold into their run; concurrent streams are the maximum
// number of simultaneously live runs per (region, kind). A region whose
// load and store streams pair up counts them as load/store streams.
Census stream_census(const AccessTrace& trace);

// ---------------------------------------------------------------------------
// Coverage: the trace must touch exactly the words the scalar reference
// touches, with multiplicities that match the schedule semantics.

struct CoverageReport {
    bool ok = true;
    std::string detail;
};

CoverageReport check_coverage(const AccessTrace& trace, const UnrolledKernel& uk);

} // namespace ms
