#include "ms/transform.hpp"

#include <algorithm>
#include <cassert>
#include <map>
#include <set>
#include <sstream>

namespace ms {

const char* to_string(Arrangement a) {
    return a == Arrangement::Grouped ? "grouped" : "interleaved";
}

const char* to_string(AccessClass c) {
    switch (c) {
    case AccessClass::Aligned: return "aligned";
    case AccessClass::Unaligned: return "unaligned";
    case AccessClass::NonTemporal: return "nt";
    }
    return "?";
}

void StridingConfig::validate(bool micro) const {
    if (stride_unrolls < 1 || portion_unrolls < 1)
        throw ConfigError("stride and portion unroll counts must be >= 1");
    if (micro) {
        if (total_unrolls() != kMicroSlots)
            throw ConfigError("micro-benchmark configurations need n*p == 32");
    } else if (total_unrolls() > 50) {
        throw ConfigError("kernel sweeps cap the total unroll count at 50");
    }
}

// ---------------------------------------------------------------------------
// Critical access selection.

namespace {

struct Candidate {
    const ArrayRef* ref;
    VarId last_var;
    size_t order; // first occurrence
};

// Last index variable when the trailing index is a simple v+const expression.
std::optional<VarId> trailing_var(const ArrayRef& r) {
    if (r.indices.empty()) return std::nullopt;
    const AffineIndex& last = r.indices.back();
    if (last.terms.size() != 1 || last.terms[0].second != 1) return std::nullopt;
    return last.terms[0].first;
}

} // namespace

TransformPlan select_critical_access(const KernelSpec& spec) {
    std::vector<Candidate> candidates;
    std::vector<const ArrayRef*> all;
    for (const auto& st : spec.statements)
        for (const ArrayRef* r : st.refs())
            all.push_back(r);
    for (size_t i = 0; i < all.size(); ++i)
        if (auto v = trailing_var(*all[i]))
            candidates.push_back({all[i], *v, i});

    auto qualifies = [&](const Candidate& c) {
        for (const ArrayRef* r : all)
            for (size_t d = 0; d + 1 < r->indices.size(); ++d)
                if (r->indices[d].uses(c.last_var)) return false;
        return true;
    };

    const Candidate* best = nullptr;
    for (const auto& c : candidates) {
        if (!qualifies(c)) continue;
        if (!best) { best = &c; continue; }
        size_t bd = best->ref->dims.size(), cd = c.ref->dims.size();
        if (cd != bd) { if (cd > bd) best = &c; continue; }
        std::int64_t be = best->ref->element_count(spec.default_extents);
        std::int64_t ce = c.ref->element_count(spec.default_extents);
        if (ce != be) { if (ce > be) best = &c; continue; }
        // remaining tie: keep first occurrence
    }
    if (!best) {
        // Report the leading highest-dimensionality candidate: vectorizing it
        // would gather from non-adjacent locations.
        const Candidate* offender = nullptr;
        for (const auto& c : candidates)
            if (!offender || c.ref->dims.size() > offender->ref->dims.size())
                offender = &c;
        std::string name = offender ? offender->ref->array : "<none>";
        throw GatherRequiredError(
            "gather-required: no access in '" + spec.name +
                "' has a last index variable used exclusively as a last dimension (offending access: " +
                name + ")",
            name);
    }

    TransformPlan plan;
    plan.critical_array = best->ref->array;
    plan.contiguous_axis = best->last_var;
    plan.interchange = spec.loops.back().var != best->last_var;
    plan.blocking = spec.loops.size() == 1;
    return plan;
}

KernelSpec apply_interchange(const KernelSpec& spec, const TransformPlan& plan) {
    if (!spec.dependency_free)
        throw ConfigError("loop interchange requires a dependency-free kernel");
    KernelSpec out = spec;
    if (!plan.interchange) return out;
    std::vector<Loop> loops;
    Loop inner{};
    bool found = false;
    for (const auto& l : spec.loops) {
        if (l.var == plan.contiguous_axis) { inner = l; found = true; }
        else loops.push_back(l);
    }
    if (!found) throw ConfigError("contiguous axis is not a loop variable");
    loops.push_back(inner);
    out.loops = std::move(loops);
    return out;
}

KernelSpec apply_blocking(const KernelSpec& spec, const TransformPlan& plan, int n,
                          const Extents& ext) {
    if (spec.loops.size() != 1 || !plan.blocking)
        throw ConfigError("loop blocking applies to 1-D traversals only");
    std::int64_t extent = Dim{spec.loops[0].bound_symbol, 0}.value(ext);
    if (n < 1) throw ConfigError("partition count must be >= 1");
    if (extent % n != 0) {
        std::int64_t suggested = extent / n * n;
        std::ostringstream os;
        os << "extent " << extent << " does not split into " << n
           << " equal partitions; largest divisible extent is " << suggested;
        throw DivisibilityError(os.str(), suggested);
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Instantiation.

namespace {

std::int64_t dim_stride(const ArrayRef& r, size_t d, const Extents& ext) {
    std::int64_t s = 1;
    for (size_t i = d + 1; i < r.dims.size(); ++i) s *= r.dims[i].value(ext);
    return s;
}

std::int64_t lin_coeff(const ArrayRef& r, VarId v, const Extents& ext) {
    std::int64_t c = 0;
    for (size_t d = 0; d < r.indices.size(); ++d)
        c += r.indices[d].coeff(v) * dim_stride(r, d, ext);
    return c;
}

std::int64_t lin_const(const ArrayRef& r, const Extents& ext) {
    std::int64_t c = 0;
    for (size_t d = 0; d < r.indices.size(); ++d)
        c += r.indices[d].constant * dim_stride(r, d, ext);
    return c;
}

struct Builder {
    const KernelSpec& spec;
    const TransformPlan& plan;
    const StridingConfig& config;
    const Extents& ext;
    UnrolledKernel uk;

    VarId contig;
    VarId stride_var = -1;     // multi-loop kernels
    std::int64_t partition = 0; // blocked 1-D: elements per stride
    std::int64_t displacement = 0;
    std::map<float, int> imm_values;

    int new_val() { return uk.num_values++; }

    int imm(float v) {
        auto it = imm_values.find(v);
        if (it != imm_values.end()) return it->second;
        int id = new_val();
        uk.prologue.push_back(VOp{VOpKind::BcastImm, id, -1, -1, -1, -1, v, {}});
        imm_values[v] = id;
        return id;
    }

    std::int64_t stride_elems(const ArrayRef& r) const {
        if (spec.loops.size() == 1) return lin_coeff(r, contig, ext) * partition;
        return lin_coeff(r, stride_var, ext);
    }

    VMem mem(const ArrayRef& r, int s, int k, bool scalar = false) const {
        std::int64_t elems = lin_const(r, ext) + stride_elems(r) * s +
                             lin_coeff(r, contig, ext) * kLanes * k;
        std::int64_t off = elems * r.elem_bytes + displacement;
        if (off < 0 || off > kImmMax)
            throw ImmediateOverflowError("offset " + std::to_string(off) + " on " +
                                         r.array + " exceeds the signed 32-bit immediate");
        return VMem{r.array, off, scalar};
    }

    // Vector load or scalar broadcast of a term factor, emitted into `out`.
    int factor(std::vector<VOp>& out, const ArrayRef& r, int s, int k) {
        int id = new_val();
        if (r.uses(contig)) {
            if (lin_coeff(r, contig, ext) != 1)
                throw ConfigError("contiguous axis must index " + r.array + " unit-stride");
            out.push_back(VOp{VOpKind::Load, id, -1, -1, -1, -1, 0, mem(r, s, k)});
        } else {
            out.push_back(VOp{VOpKind::BcastMem, id, -1, -1, -1, -1, 0, mem(r, s, k, true)});
        }
        return id;
    }

    void emit_slot(std::vector<VOp>& out, const Statement& st, int s, int k,
                   int acc_base) {
        switch (st.kind) {
        case StmtKind::LoadSink: {
            const ArrayRef& r = *st.terms.at(0).a;
            out.push_back(VOp{VOpKind::LoadSink, new_val(), -1, -1, -1, -1, 0, mem(r, s, k)});
            return;
        }
        case StmtKind::StoreConst: {
            int v = imm(st.imm);
            out.push_back(VOp{VOpKind::Store, -1, v, -1, -1, -1, 0, mem(*st.dest, s, k)});
            return;
        }
        case StmtKind::Assign: break;
        }

        bool reduction = st.accumulate && !st.dest->uses(contig);
        if (reduction) {
            int acc = acc_base + s;
            for (const auto& t : st.terms) {
                if (t.a && t.b) {
                    int va = factor(out, *t.a, s, k);
                    int vb = factor(out, *t.b, s, k);
                    out.push_back(VOp{VOpKind::AccFma, -1, va, vb, -1, acc, 0, {}});
                } else if (t.coeff && t.a) {
                    int vc = imm(*t.coeff);
                    int va = factor(out, *t.a, s, k);
                    out.push_back(VOp{VOpKind::AccFma, -1, vc, va, -1, acc, 0, {}});
                } else if (t.a) {
                    int va = factor(out, *t.a, s, k);
                    out.push_back(VOp{VOpKind::AccAdd, -1, va, -1, -1, acc, 0, {}});
                }
            }
            return;
        }

        int cur = -1;
        if (st.accumulate)
            cur = factor(out, *st.dest, s, k); // load-modify-store destination
        for (const auto& t : st.terms) {
            if (t.a && t.b) {
                int va = factor(out, *t.a, s, k);
                int vb = factor(out, *t.b, s, k);
                if (cur < 0) {
                    cur = new_val();
                    out.push_back(VOp{VOpKind::Mul, cur, va, vb, -1, -1, 0, {}});
                } else {
                    int nv = new_val();
                    out.push_back(VOp{VOpKind::Fma, nv, va, vb, cur, -1, 0, {}});
                    cur = nv;
                }
            } else if (t.coeff && t.a) {
                int vc = imm(*t.coeff);
                int va = factor(out, *t.a, s, k);
                if (cur < 0) {
                    cur = new_val();
                    out.push_back(VOp{VOpKind::Mul, cur, vc, va, -1, -1, 0, {}});
                } else {
                    int nv = new_val();
                    out.push_back(VOp{VOpKind::Fma, nv, vc, va, cur, -1, 0, {}});
                    cur = nv;
                }
            } else if (t.a) {
                int va = factor(out, *t.a, s, k);
                if (cur < 0) {
                    cur = va;
                } else {
                    int nv = new_val();
                    out.push_back(VOp{VOpKind::Add, nv, cur, va, -1, -1, 0, {}});
                    cur = nv;
                }
            } else if (t.coeff) {
                int vc = imm(*t.coeff);
                if (cur < 0) {
                    cur = vc;
                } else {
                    int nv = new_val();
                    out.push_back(VOp{VOpKind::Add, nv, cur, vc, -1, -1, 0, {}});
                    cur = nv;
                }
            }
        }
        out.push_back(VOp{VOpKind::Store, -1, cur, -1, -1, -1, 0, mem(*st.dest, s, k)});
    }
};

DivisibilityError divisibility(const std::string& what, std::int64_t extent,
                               std::int64_t granule) {
    std::int64_t suggested = extent / granule * granule;
    std::ostringstream os;
    os << what << ": extent " << extent << " is not a multiple of " << granule
       << "; largest divisible extent is " << suggested;
    return DivisibilityError(os.str(), suggested);
}

} // namespace

int UnrolledKernel::body_memory_ops() const {
    int c = 0;
    for (const auto& op : body)
        switch (op.kind) {
        case VOpKind::Load:
        case VOpKind::LoadSink:
        case VOpKind::BcastMem:
        case VOpKind::Store:
            ++c;
            break;
        default:
            break;
        }
    return c;
}

UnrolledKernel instantiate(const KernelSpec& spec, const TransformPlan& plan,
                           const StridingConfig& config, const Extents& ext) {
    config.validate(spec.micro.has_value());
    if (!spec.dependency_free)
        throw ConfigError("multi-striding requires a dependency-free kernel");
    if (spec.loops.back().var != plan.contiguous_axis)
        throw ConfigError("contiguous axis must be the innermost loop (apply interchange first)");

    Builder b{spec, plan, config, ext, {}, 0, -1, 0, 0, {}};
    b.uk.spec = spec;
    b.uk.plan = plan;
    b.uk.config = config;
    b.uk.extents = ext;
    b.uk.access_class = spec.class_fixed ? spec.access_class : config.access_class;
    if (spec.class_fixed && config.access_class != spec.access_class &&
        config.access_class != AccessClass::Aligned)
        throw ConfigError("kernel '" + spec.name + "' fixes its access class to " +
                          std::string(to_string(spec.access_class)));
    b.displacement =
        (!spec.class_fixed && b.uk.access_class == AccessClass::Unaligned) ? 4 : 0;
    b.contig = plan.contiguous_axis;

    const int n = config.stride_unrolls;
    const int p = config.portion_unrolls;
    const size_t K = spec.loops.size();

    // Loop skeleton and per-level trips.
    if (K == 1) {
        std::int64_t extent = Dim{spec.loops[0].bound_symbol, 0}.value(ext);
        if (extent % n != 0)
            throw divisibility("stride partitioning of '" + spec.name + "'", extent, n);
        b.partition = extent / n;
        if (b.partition % (kLanes * p) != 0)
            throw divisibility("portion unroll of '" + spec.name + "'", extent,
                               static_cast<std::int64_t>(n) * kLanes * p);
        ULevel inner;
        inner.trip = b.partition / (kLanes * p);
        inner.var_name = spec.loops[0].var_name;
        b.uk.levels.push_back(std::move(inner));
    } else {
        b.stride_var = spec.loops[K - 2].var;
        std::int64_t sa = Dim{spec.loops[K - 2].bound_symbol, 0}.value(ext);
        std::int64_t cc = Dim{spec.loops[K - 1].bound_symbol, 0}.value(ext);
        if (sa % n != 0)
            throw divisibility("stride unroll of '" + spec.name + "'", sa, n);
        if (cc % (kLanes * p) != 0)
            throw divisibility("portion unroll of '" + spec.name + "'", cc,
                               static_cast<std::int64_t>(kLanes) * p);
        for (size_t l = 0; l + 2 < K; ++l) {
            ULevel lv;
            lv.trip = Dim{spec.loops[l].bound_symbol, 0}.value(ext);
            lv.var_name = spec.loops[l].var_name;
            b.uk.levels.push_back(std::move(lv));
        }
        ULevel stride_level;
        stride_level.trip = sa / n;
        stride_level.var_name = spec.loops[K - 2].var_name;
        b.uk.levels.push_back(std::move(stride_level));
        ULevel inner;
        inner.trip = cc / (kLanes * p);
        inner.var_name = spec.loops[K - 1].var_name;
        b.uk.levels.push_back(std::move(inner));
    }

    // Statement roles.
    auto depths = spec.statement_depths();
    const int inner_depth = static_cast<int>(K) - 1;
    struct Reduction { size_t stmt; int acc_base; bool zero_init; };
    std::vector<Reduction> reductions;
    std::vector<size_t> body_stmts;
    std::vector<size_t> fused_inits;
    for (size_t i = 0; i < spec.statements.size(); ++i) {
        const Statement& st = spec.statements[i];
        if (depths[i] == inner_depth) {
            body_stmts.push_back(i);
            if (st.kind == StmtKind::Assign && st.accumulate && !st.dest->uses(b.contig)) {
                if (K == 1)
                    throw ConfigError("reduction over the only loop of '" + spec.name +
                                      "' is not multi-stridable");
                reductions.push_back({i, b.uk.num_accs, false});
                b.uk.num_accs += n;
            }
            continue;
        }
        // Shallow statements: only zero-initializations that fuse with a
        // reduction accumulator are supported.
        if (st.kind == StmtKind::StoreConst && st.imm == 0.0f) {
            fused_inits.push_back(i);
            continue;
        }
        throw ConfigError("statement outside the innermost loop of '" + spec.name +
                          "' cannot be unrolled");
    }
    for (size_t i : fused_inits) {
        const Statement& init = spec.statements[i];
        bool matched = false;
        for (auto& red : reductions) {
            const Statement& r = spec.statements[red.stmt];
            if (r.dest->array == init.dest->array && r.dest->indices == init.dest->indices) {
                red.zero_init = true;
                matched = true;
            }
        }
        if (!matched)
            throw ConfigError("initialization of '" + init.dest->array +
                              "' has no matching accumulation to fuse with");
    }

    // Schedule: slots in arrangement order, statements in program order.
    auto acc_base_of = [&](size_t stmt) {
        for (const auto& r : reductions)
            if (r.stmt == stmt) return r.acc_base;
        return -1;
    };
    auto emit_all = [&](int s, int k) {
        for (size_t i : body_stmts)
            b.emit_slot(b.uk.body, spec.statements[i], s, k, acc_base_of(i));
    };
    if (config.arrangement == Arrangement::Grouped) {
        for (int s = 0; s < n; ++s)
            for (int k = 0; k < p; ++k) emit_all(s, k);
    } else {
        for (int k = 0; k < p; ++k)
            for (int s = 0; s < n; ++s) emit_all(s, k);
    }

    // Accumulator management around the inner loop.
    if (!reductions.empty()) {
        ULevel& stride_level = b.uk.levels[b.uk.levels.size() - 2];
        for (const auto& red : reductions)
            for (int s = 0; s < n; ++s)
                stride_level.pre.push_back(
                    VOp{VOpKind::AccZero, -1, -1, -1, -1, red.acc_base + s, 0, {}});
        for (const auto& red : reductions) {
            const Statement& st = spec.statements[red.stmt];
            for (int s = 0; s < n; ++s) {
                VMem m = b.mem(*st.dest, s, 0, true);
                stride_level.post.push_back(VOp{red.zero_init ? VOpKind::HsumStore
                                                              : VOpKind::HsumAddStore,
                                                -1, -1, -1, -1, red.acc_base + s, 0, m});
            }
        }
    }

    // Per-array, per-level base stepping.
    std::vector<std::string> arrays = spec.array_names();
    for (const auto& name : arrays) {
        const ArrayRef* r = spec.find_ref(name);
        std::int64_t inner_step = lin_coeff(*r, b.contig, ext) * r->elem_bytes * kLanes * p;
        std::int64_t full_child = b.uk.levels.back().trip * inner_step;
        b.uk.levels.back().steps[name] = inner_step;
        if (K >= 2) {
            // stride level
            std::int64_t desired = lin_coeff(*r, b.stride_var, ext) * r->elem_bytes * n;
            std::int64_t applied = desired - full_child;
            b.uk.levels[b.uk.levels.size() - 2].steps[name] = applied;
            full_child = b.uk.levels[b.uk.levels.size() - 2].trip * desired;
            for (size_t l = K - 2; l-- > 0;) {
                std::int64_t want = lin_coeff(*r, spec.loops[l].var, ext) * r->elem_bytes;
                std::int64_t app = want - full_child;
                b.uk.levels[l].steps[name] = app;
                full_child = b.uk.levels[l].trip * want;
            }
        }
        for (const auto& lv : b.uk.levels) {
            std::int64_t st = lv.steps.at(name);
            if (st > kImmMax || st < -kImmMax)
                throw ImmediateOverflowError("base step for " + name +
                                             " exceeds the signed 32-bit immediate");
        }
        std::int64_t bytes = r->element_count(ext) * r->elem_bytes + b.displacement;
        b.uk.array_sizes.emplace_back(name, bytes);
    }

    UnrolledKernel uk = std::move(b.uk);
    if (config.eliminate_redundant) {
        EliminationResult res = eliminate_redundant(uk);
        if (!res.kernel)
            throw RegisterPressureError(
                "configuration n=" + std::to_string(n) + " p=" + std::to_string(p) +
                    " of '" + spec.name + "' needs " + std::to_string(res.max_live) +
                    " live vector registers (budget " +
                    std::to_string(kVectorRegisters) + "); excluded as infeasible",
                res.max_live);
        uk = std::move(*res.kernel);
    } else {
        RegisterPlan rp = plan_registers(uk);
        if (!rp.feasible)
            throw RegisterPressureError(
                "configuration n=" + std::to_string(n) + " p=" + std::to_string(p) +
                    " of '" + spec.name + "' needs " + std::to_string(rp.max_live) +
                    " live vector registers (budget " + std::to_string(rp.budget) +
                    "); excluded as infeasible",
                rp.max_live);
    }
    return uk;
}

// ---------------------------------------------------------------------------
// Redundancy elimination.

EliminationResult eliminate_redundant(const UnrolledKernel& in) {
    UnrolledKernel uk = in;
    EliminationResult result;

    // Alias map for dropped values.
    std::vector<int> alias(static_cast<size_t>(uk.num_values), -1);
    auto resolve = [&](int v) {
        while (v >= 0 && alias[static_cast<size_t>(v)] >= 0) v = alias[static_cast<size_t>(v)];
        return v;
    };

    // Hoist loop-invariant scalar broadcasts out of the body. Their offsets
    // depend only on the stride slot, so they are invariant in the inner loop.
    std::vector<VOp>* hoist_target = nullptr;
    if (uk.levels.size() >= 2)
        hoist_target = &uk.levels[uk.levels.size() - 2].pre;
    else
        hoist_target = &uk.prologue;
    std::map<VMem, int> bcasts;
    for (auto& op : *hoist_target)
        if (op.kind == VOpKind::BcastMem) bcasts[op.mem] = op.dst;

    std::vector<VOp> body;
    std::vector<char> live;
    body.reserve(uk.body.size());
    std::map<VMem, int> loc_value;     // forwarding map
    std::map<VMem, size_t> last_store; // index into `body`

    for (const auto& src_op : uk.body) {
        VOp op = src_op;
        op.a = resolve(op.a);
        op.b = resolve(op.b);
        op.c = resolve(op.c);
        switch (op.kind) {
        case VOpKind::BcastMem: {
            auto it = bcasts.find(op.mem);
            if (it != bcasts.end()) {
                alias[static_cast<size_t>(op.dst)] = it->second;
            } else {
                hoist_target->push_back(op);
                bcasts[op.mem] = op.dst;
            }
            ++result.hoisted_broadcasts;
            continue;
        }
        case VOpKind::Load: {
            auto it = loc_value.find(op.mem);
            if (it != loc_value.end()) {
                alias[static_cast<size_t>(op.dst)] = it->second;
                ++result.removed_loads;
                continue;
            }
            loc_value[op.mem] = op.dst;
            break;
        }
        case VOpKind::Store: {
            loc_value[op.mem] = op.a;
            auto it = last_store.find(op.mem);
            if (it != last_store.end()) {
                // the earlier store is dead: a later one overwrites it
                live[it->second] = 0;
                ++result.removed_stores;
            }
            last_store[op.mem] = body.size();
            break;
        }
        default:
            break;
        }
        body.push_back(op);
        live.push_back(1);
    }
    uk.body.clear();
    for (size_t i = 0; i < body.size(); ++i)
        if (live[i]) uk.body.push_back(body[i]);

    // Fix aliases in accumulator finalization (none reference body temps) and
    // in hoisted ops (already resolved at emission).
    uk.eliminated = true;

    RegisterPlan rp = plan_registers(uk);
    result.max_live = rp.max_live;
    if (rp.feasible) result.kernel = std::move(uk);
    return result;
}

// ---------------------------------------------------------------------------
// Register planning: persistent values first, body temps via a free stack.

RegisterPlan plan_registers(const UnrolledKernel& uk) {
    RegisterPlan plan;
    plan.budget = uk.eliminated ? kVectorRegisters : kVectorRegisters - 1;
    plan.value_reg.assign(static_cast<size_t>(uk.num_values), -1);
    plan.acc_reg.assign(static_cast<size_t>(uk.num_accs), -1);

    int next = 0;
    auto persist = [&](const std::vector<VOp>& ops) {
        for (const auto& op : ops)
            if (op.dst >= 0 && plan.value_reg[static_cast<size_t>(op.dst)] < 0)
                plan.value_reg[static_cast<size_t>(op.dst)] = next++;
    };
    persist(uk.prologue);
    for (const auto& lv : uk.levels) persist(lv.pre);
    for (int a = 0; a < uk.num_accs; ++a) plan.acc_reg[static_cast<size_t>(a)] = next++;
    const int persistent = next;

    // Reduction tails need scalar temporaries.
    int post_temps = 0;
    for (const auto& lv : uk.levels)
        for (const auto& op : lv.post) {
            if (op.kind == VOpKind::HsumAddStore) post_temps = std::max(post_temps, 2);
            if (op.kind == VOpKind::HsumStore) post_temps = std::max(post_temps, 1);
        }

    // Last use of every body value.
    std::vector<int> last_use(static_cast<size_t>(uk.num_values), -1);
    for (size_t i = 0; i < uk.body.size(); ++i) {
        const VOp& op = uk.body[i];
        for (int v : {op.a, op.b, op.c})
            if (v >= 0) last_use[static_cast<size_t>(v)] = static_cast<int>(i);
    }

    int max_live = persistent;
    int in_use = 0;
    std::vector<int> free_stack; // virtual registers beyond budget still tracked
    int high_water = persistent;
    for (size_t i = 0; i < uk.body.size(); ++i) {
        const VOp& op = uk.body[i];
        // release dying operands first so the destination can reuse them
        for (int v : {op.c, op.b, op.a}) {
            if (v < 0) continue;
            int r = plan.value_reg[static_cast<size_t>(v)];
            if (r >= persistent && last_use[static_cast<size_t>(v)] == static_cast<int>(i)) {
                // avoid double-free when an operand repeats
                if (std::find(free_stack.begin(), free_stack.end(), r) == free_stack.end()) {
                    free_stack.push_back(r);
                    --in_use;
                }
            }
        }
        if (op.dst >= 0 && plan.value_reg[static_cast<size_t>(op.dst)] < 0) {
            int r;
            if (!free_stack.empty()) {
                r = free_stack.back();
                free_stack.pop_back();
            } else {
                r = high_water++;
            }
            plan.value_reg[static_cast<size_t>(op.dst)] = r;
            ++in_use;
            max_live = std::max(max_live, persistent + in_use);
            // values with no later use (sink loads) die at their definition
            if (last_use[static_cast<size_t>(op.dst)] <= static_cast<int>(i)) {
                free_stack.push_back(r);
                --in_use;
            }
        }
    }
    max_live = std::max(max_live, persistent + post_temps);
    plan.max_live = max_live;
    plan.feasible = max_live <= plan.budget;
    if (post_temps >= 1) plan.scratch0 = persistent;
    if (post_temps >= 2) plan.scratch1 = persistent + 1;
    return plan;
}

// ---------------------------------------------------------------------------

UnrolledKernel transform_kernel(const KernelSpec& spec, const StridingConfig& config,
                                const Extents& ext) {
    TransformPlan plan = select_critical_access(spec);
    KernelSpec shaped = plan.interchange ? apply_interchange(spec, plan) : spec;
    if (plan.blocking)
        shaped = apply_blocking(shaped, plan, config.stride_unrolls, ext);
    return instantiate(shaped, plan, config, ext);
}

std::vector<StridingConfig> enumerate_configs(int total_unroll_budget, bool micro) {
    std::vector<StridingConfig> out;
    if (micro) {
        for (int n = 1; n <= kMicroSlots; ++n)
            if (kMicroSlots % n == 0) {
                StridingConfig c;
                c.stride_unrolls = n;
                c.portion_unrolls = kMicroSlots / n;
                out.push_back(c);
            }
        return out;
    }
    for (int total = 1; total <= total_unroll_budget; ++total)
        for (int n = 1; n <= total; ++n)
            if (total % n == 0) {
                StridingConfig c;
                c.stride_unrolls = n;
                c.portion_unrolls = total / n;
                out.push_back(c);
            }
    return out;
}

} // namespace ms
