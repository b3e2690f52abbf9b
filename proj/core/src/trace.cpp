#include "ms/trace.hpp"

#include "ms/interp.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>

namespace ms {

std::vector<AccessEvent> AccessTrace::collect() const {
    std::vector<AccessEvent> out;
    out.reserve(static_cast<size_t>(std::min<std::int64_t>(event_count(), 1 << 22)));
    for_each([&](const AccessEvent& e) { out.push_back(e); });
    return out;
}

void AccessTrace::export_binary(std::ostream& os) const {
    for_each([&](const AccessEvent& e) {
        std::uint64_t a = e.address;
        char rec[9];
        for (int i = 0; i < 8; ++i) rec[i] = static_cast<char>((a >> (8 * i)) & 0xff);
        rec[8] = static_cast<char>(e.kind);
        os.write(rec, 9);
    });
}

AccessTrace gen_trace(const VectorProgram& prog, const Layout& layout) {
    // Regions must not overlap.
    std::vector<std::pair<std::int64_t, std::int64_t>> spans;
    for (const auto& name : prog.bases) {
        const Placement& p = layout.at(name);
        spans.emplace_back(p.base, p.base + p.bytes);
    }
    std::sort(spans.begin(), spans.end());
    for (size_t i = 1; i < spans.size(); ++i)
        if (spans[i].first < spans[i - 1].second)
            throw LayoutError("overlapping layout regions");
    return AccessTrace{prog, layout};
}

AccessTrace gen_trace(const VectorProgram& prog) {
    return gen_trace(prog, program_layout(prog, kTraceAlignment));
}

// ---------------------------------------------------------------------------

namespace {

struct OpenRun {
    std::int64_t last_line;
    StreamRun run;
};

struct PartitionState {
    std::vector<OpenRun> open;
    std::vector<StreamRun> closed;
};

} // namespace

Census stream_census(const AccessTrace& trace) {
    // Partition key: (region, is_store).
    std::map<std::pair<std::string, bool>, PartitionState> parts;

    // A live stream is touched at least once per loop iteration; runs idle
    // for longer than that are finished streams (the array was re-swept) and
    // must not absorb later events.
    std::int64_t per_iter = 0;
    for (const auto& i : trace.program.body)
        per_iter += is_memory_read(i.op) || is_memory_write(i.op);
    const std::uint64_t expiry = 2 * static_cast<std::uint64_t>(per_iter) + 16;

    trace.for_each([&](const AccessEvent& e) {
        const std::string* region = trace.layout.region_of(static_cast<std::int64_t>(e.address));
        if (!region) throw LayoutError("trace event outside every region");
        bool store = e.kind != EventKind::Read;
        auto& part = parts[{*region, store}];
        std::int64_t line = static_cast<std::int64_t>(e.address / kLineBytes);

        for (size_t i = part.open.size(); i-- > 0;) {
            if (part.open[i].run.last_event + expiry < e.index) {
                part.closed.push_back(part.open[i].run);
                part.open.erase(part.open.begin() + static_cast<std::ptrdiff_t>(i));
            }
        }
        for (auto& o : part.open) {
            if (o.last_line == line) {
                o.run.last_event = e.index; // same-line repeat
                return;
            }
            if (o.last_line + 1 == line) {
                o.last_line = line;
                o.run.lines += 1;
                o.run.last_event = e.index;
                return;
            }
        }
        // stencil back-taps trail at most one line behind a run head
        for (auto& o : part.open) {
            if (o.last_line - 1 == line) {
                o.run.last_event = e.index;
                return;
            }
        }
        OpenRun o;
        o.last_line = line;
        o.run.region = *region;
        o.run.store = store;
        o.run.start = e.address;
        o.run.lines = 1;
        o.run.first_event = o.run.last_event = e.index;
        part.open.push_back(std::move(o));
    });

    Census census;
    for (auto& [key, part] : parts) {
        for (const auto& o : part.open) part.closed.push_back(o.run);
        // Concurrent stream count: maximum overlap of run live intervals.
        std::vector<std::pair<std::uint64_t, int>> points;
        for (const auto& run : part.closed) {
            points.emplace_back(run.first_event, +1);
            points.emplace_back(run.last_event + 1, -1);
            census.runs.push_back(run);
        }
        std::sort(points.begin(), points.end());
        int live = 0, peak = 0;
        for (const auto& [idx, delta] : points) {
            live += delta;
            peak = std::max(peak, live);
        }
        if (key.second)
            census.per_region[key.first].stores = peak;
        else
            census.per_region[key.first].loads = peak;
    }

    for (auto& [region, counts] : census.per_region) {
        int ls = std::min(counts.loads, counts.stores);
        counts.load_stores = ls;
        counts.loads -= ls;
        counts.stores -= ls;
        census.totals.loads += counts.loads;
        census.totals.stores += counts.stores;
        census.totals.load_stores += counts.load_stores;
    }
    return census;
}

// ---------------------------------------------------------------------------

namespace {

std::string word_set_mismatch(const std::string& array, const char* kind,
                              const std::map<std::int64_t, std::int64_t>& oracle,
                              const std::map<std::int64_t, std::int64_t>& trace) {
    std::ostringstream os;
    os << array << " " << kind << ": ";
    for (const auto& [w, c] : trace)
        if (!oracle.count(w)) {
            os << "trace touches word " << w << " the reference never touches";
            return os.str();
        }
    for (const auto& [w, c] : oracle)
        if (!trace.count(w)) {
            os << "reference touches word " << w << " the trace misses";
            return os.str();
        }
    return "";
}

} // namespace

CoverageReport check_coverage(const AccessTrace& trace, const UnrolledKernel& uk) {
    const KernelSpec& spec = uk.spec;
    // Oracle side: scalar reference touch histogram (layout-independent).
    Layout oracle_layout = Layout::contiguous(spec, uk.extents, kLineBytes);
    std::vector<std::uint8_t> image(static_cast<size_t>(oracle_layout.span), 0);
    TouchRecorder touches;
    run_reference(spec, uk.extents, oracle_layout, image, &touches);

    // Trace side: per (array, kind) word histograms.
    std::int64_t shift_words =
        (!spec.class_fixed && uk.access_class == AccessClass::Unaligned) ? 1 : 0;
    std::map<std::string, std::map<TouchKind, std::map<std::int64_t, std::int64_t>>> seen;
    trace.for_each([&](const AccessEvent& e) {
        const std::string* region = trace.layout.region_of(static_cast<std::int64_t>(e.address));
        if (!region) throw LayoutError("trace event outside every region");
        const Placement& p = trace.layout.at(*region);
        std::int64_t word =
            (static_cast<std::int64_t>(e.address) - p.base) / 4 - shift_words;
        TouchKind k = e.kind == EventKind::Read ? TouchKind::Load : TouchKind::Store;
        auto& hist = seen[*region][k];
        for (std::uint32_t w = 0; w < e.size / 4; ++w) ++hist[word + w];
    });

    // Which arrays admit an exact multiplicity check: every reference to them
    // is a full vector access (uses the contiguous axis) and they are not a
    // fused accumulator destination.
    auto vector_only = [&](const std::string& array) {
        for (const auto& st : spec.statements) {
            if (st.kind == StmtKind::StoreConst && st.dest->array == array &&
                !st.dest->uses(uk.plan.contiguous_axis))
                return false; // fused zero-init
            for (const ArrayRef* r : st.refs())
                if (r->array == array && !r->uses(uk.plan.contiguous_axis)) return false;
        }
        return true;
    };

    CoverageReport rep;
    auto fail = [&](std::string msg) {
        rep.ok = false;
        rep.detail = std::move(msg);
    };

    for (const auto& name : spec.array_names()) {
        auto& oracle_hists = touches.touches[name];
        auto& trace_hists = seen[name];
        for (TouchKind k : {TouchKind::Load, TouchKind::Store}) {
            const char* kname = k == TouchKind::Load ? "loads" : "stores";
            auto& oracle = oracle_hists[k];
            auto& got = trace_hists[k];
            if (oracle.empty() && got.empty()) continue;
            if (k == TouchKind::Load && got.empty()) continue; // fused accumulator dest
            std::string msg = word_set_mismatch(name, kname, oracle, got);
            if (!msg.empty()) { fail(msg); return rep; }
            if (vector_only(name)) {
                for (const auto& [w, c] : got) {
                    std::int64_t want = oracle.at(w);
                    if (!uk.eliminated && c != want) {
                        fail(name + std::string(" ") + kname + ": word " + std::to_string(w) +
                             " touched " + std::to_string(c) + "x, reference says " +
                             std::to_string(want) + "x");
                        return rep;
                    }
                    if (uk.eliminated && (c < 1 || c > want)) {
                        fail(name + std::string(" ") + kname + ": word " + std::to_string(w) +
                             " touched " + std::to_string(c) +
                             "x after elimination, reference bound " + std::to_string(want));
                        return rep;
                    }
                }
            }
        }
    }
    return rep;
}

} // namespace ms
