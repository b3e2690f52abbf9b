#include "ms/ir.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

namespace ms {

std::int64_t Dim::value(const Extents& e) const {
    if (symbol.empty()) return offset;
    auto it = e.find(symbol);
    if (it == e.end()) throw ConfigError("unbound extent symbol '" + symbol + "'");
    return it->second + offset;
}

std::string Dim::str() const {
    if (symbol.empty()) return std::to_string(offset);
    if (offset == 0) return symbol;
    return symbol + (offset > 0 ? "+" : "") + std::to_string(offset);
}

std::int64_t AffineIndex::eval(const std::vector<std::int64_t>& vars) const {
    std::int64_t v = constant;
    for (const auto& [var, c] : terms) v += c * vars.at(static_cast<size_t>(var));
    return v;
}

std::int64_t AffineIndex::coeff(VarId v) const {
    for (const auto& [var, c] : terms)
        if (var == v) return c;
    return 0;
}

bool AffineIndex::uses(VarId v) const { return coeff(v) != 0; }

std::int64_t ArrayRef::linear_index(const std::vector<std::int64_t>& vars,
                                    const Extents& ext) const {
    std::int64_t idx = 0;
    for (size_t d = 0; d < dims.size(); ++d) {
        idx = idx * dims[d].value(ext) + indices[d].eval(vars);
    }
    return idx;
}

std::int64_t ArrayRef::element_count(const Extents& ext) const {
    std::int64_t n = 1;
    for (const auto& d : dims) n *= d.value(ext);
    return n;
}

bool ArrayRef::uses(VarId v) const {
    return std::any_of(indices.begin(), indices.end(),
                       [v](const AffineIndex& i) { return i.uses(v); });
}

std::string ArrayRef::str() const {
    std::ostringstream os;
    os << array;
    for (const auto& i : indices) {
        os << '[';
        bool first = true;
        for (const auto& [var, c] : i.terms) {
            if (!first) os << '+';
            if (c != 1) os << c << '*';
            os << "v" << var;
            first = false;
        }
        if (i.constant != 0 || first) {
            if (!first) os << '+';
            os << i.constant;
        }
        os << ']';
    }
    return os.str();
}

std::vector<ArrayRef*> Statement::refs() {
    std::vector<ArrayRef*> out;
    if (dest) out.push_back(&*dest);
    for (auto& t : terms) {
        if (t.a) out.push_back(&*t.a);
        if (t.b) out.push_back(&*t.b);
    }
    return out;
}

std::vector<const ArrayRef*> Statement::refs() const {
    std::vector<const ArrayRef*> out;
    if (dest) out.push_back(&*dest);
    for (const auto& t : terms) {
        if (t.a) out.push_back(&*t.a);
        if (t.b) out.push_back(&*t.b);
    }
    return out;
}

int KernelSpec::loop_position(VarId v) const {
    for (size_t i = 0; i < loops.size(); ++i)
        if (loops[i].var == v) return static_cast<int>(i);
    throw ConfigError("unknown loop variable in kernel '" + name + "'");
}

std::vector<int> KernelSpec::statement_depths() const {
    std::vector<int> depths;
    depths.reserve(statements.size());
    for (const auto& st : statements) {
        int depth = -1;
        for (const ArrayRef* r : st.refs())
            for (const auto& idx : r->indices)
                for (const auto& [var, c] : idx.terms)
                    if (c != 0) depth = std::max(depth, loop_position(var));
        depths.push_back(depth);
    }
    return depths;
}

const ArrayRef* KernelSpec::find_ref(const std::string& array) const {
    for (const auto& st : statements)
        for (const ArrayRef* r : st.refs())
            if (r->array == array) return r;
    return nullptr;
}

std::vector<std::string> KernelSpec::array_names() const {
    std::vector<std::string> names;
    for (const auto& st : statements)
        for (const ArrayRef* r : st.refs())
            if (std::find(names.begin(), names.end(), r->array) == names.end())
                names.push_back(r->array);
    return names;
}

void KernelSpec::validate() const {
    if (kVectorBytes != 32)
        throw ConfigError("vector width is fixed at 32 bytes");
    for (const auto& st : statements) {
        for (const ArrayRef* r : st.refs()) {
            if (r->elem_bytes != kElemBytes)
                throw ConfigError("element type is fixed at 4-byte float in '" + name + "'");
            if (r->indices.size() != r->dims.size())
                throw ConfigError("index/dim arity mismatch on " + r->str());
        }
        if (st.kind == StmtKind::Assign && !st.dest)
            throw ConfigError("assign statement without destination in '" + name + "'");
    }
    // Offsets must stay within a signed 32-bit immediate once scaled; checked
    // against the default extents here, re-checked at instantiation extents.
    for (const auto& st : statements) {
        for (const ArrayRef* r : st.refs()) {
            std::int64_t bytes = r->element_count(default_extents) *
                                 static_cast<std::int64_t>(r->elem_bytes);
            if (bytes > kImmMax)
                throw ImmediateOverflowError("default extents of " + r->array +
                                             " exceed the signed 32-bit immediate range");
        }
    }
}

// ---------------------------------------------------------------------------

Layout Layout::contiguous(const KernelSpec& spec, const Extents& ext,
                          std::int64_t alignment) {
    std::vector<std::pair<std::string, std::int64_t>> sized;
    for (const auto& name : spec.array_names()) {
        const ArrayRef* r = spec.find_ref(name);
        sized.emplace_back(name, r->element_count(ext) * r->elem_bytes);
    }
    return contiguous(sized, alignment);
}

Layout Layout::contiguous(const std::vector<std::pair<std::string, std::int64_t>>& sized,
                          std::int64_t alignment) {
    Layout l;
    std::int64_t cursor = 0;
    for (const auto& [name, bytes] : sized) {
        if (bytes <= 0) throw LayoutError("array '" + name + "' has no extent");
        if (l.arrays.count(name)) throw LayoutError("duplicate array '" + name + "'");
        cursor = (cursor + alignment - 1) / alignment * alignment;
        l.arrays[name] = Placement{cursor, bytes};
        cursor += bytes;
    }
    l.span = cursor;
    return l;
}

const Placement& Layout::at(const std::string& array) const {
    auto it = arrays.find(array);
    if (it == arrays.end()) throw LayoutError("array '" + array + "' not in layout");
    return it->second;
}

const std::string* Layout::region_of(std::int64_t addr) const {
    for (const auto& [name, p] : arrays)
        if (addr >= p.base && addr < p.base + p.bytes) return &name;
    return nullptr;
}

void TouchRecorder::record(const std::string& array, TouchKind k, std::int64_t word) {
    ++touches[array][k][word];
}

// ---------------------------------------------------------------------------
// Scalar reference executor.

namespace {

struct RefCtx {
    const KernelSpec& spec;
    const Extents& ext;
    const Layout& layout;
    std::vector<std::uint8_t>& image;
    TouchRecorder* touches;
    std::vector<std::int64_t> vars;

    float* elem(const ArrayRef& r, TouchKind k) {
        std::int64_t idx = r.linear_index(vars, ext);
        std::int64_t count = r.element_count(ext);
        if (idx < 0 || idx >= count)
            throw LayoutError("reference execution out of bounds on " + r.str());
        const Placement& p = layout.at(r.array);
        if (touches) touches->record(r.array, k, idx);
        return reinterpret_cast<float*>(image.data() + p.base) + idx;
    }

    float load(const ArrayRef& r) { return *elem(r, TouchKind::Load); }

    float eval_term(const Term& t) {
        if (t.a && t.b) return std::fma(load(*t.a), load(*t.b), 0.0f);
        if (t.coeff && t.a) return *t.coeff * load(*t.a);
        if (t.a) return load(*t.a);
        return t.coeff.value_or(0.0f);
    }

    void run_statement(const Statement& st) {
        switch (st.kind) {
        case StmtKind::StoreConst:
            *elem(*st.dest, TouchKind::Store) = st.imm;
            break;
        case StmtKind::LoadSink:
            for (const auto& t : st.terms)
                if (t.a) (void)load(*t.a);
            break;
        case StmtKind::Assign: {
            float acc = 0.0f;
            if (st.accumulate) acc = load(*st.dest);
            for (const auto& t : st.terms) {
                if (t.a && t.b)
                    acc = std::fma(load(*t.a), load(*t.b), acc);
                else if (t.coeff && t.a)
                    acc = std::fma(*t.coeff, load(*t.a), acc);
                else if (t.a)
                    acc += load(*t.a);
                else
                    acc += t.coeff.value_or(0.0f);
            }
            *elem(*st.dest, TouchKind::Store) = acc;
            break;
        }
        }
    }
};

void run_level(RefCtx& ctx, const std::vector<int>& depths, size_t level) {
    const auto& loops = ctx.spec.loops;
    if (level == loops.size()) return;
    std::int64_t bound = Dim{loops[level].bound_symbol, 0}.value(ctx.ext);
    for (std::int64_t v = 0; v < bound; ++v) {
        ctx.vars[static_cast<size_t>(loops[level].var)] = v;
        for (size_t s = 0; s < ctx.spec.statements.size(); ++s)
            if (depths[s] == static_cast<int>(level))
                ctx.run_statement(ctx.spec.statements[s]);
        run_level(ctx, depths, level + 1);
    }
}

} // namespace

void run_reference(const KernelSpec& spec, const Extents& ext, const Layout& layout,
                   std::vector<std::uint8_t>& image, TouchRecorder* touches) {
    if (static_cast<std::int64_t>(image.size()) < layout.span)
        throw LayoutError("image smaller than layout span");
    size_t max_var = 0;
    for (const auto& l : spec.loops) max_var = std::max(max_var, static_cast<size_t>(l.var));
    RefCtx ctx{spec, ext, layout, image, touches, std::vector<std::int64_t>(max_var + 1, 0)};
    auto depths = spec.statement_depths();
    // Statements with no loop variables (depth -1) execute once up front.
    for (size_t s = 0; s < spec.statements.size(); ++s)
        if (depths[s] < 0) ctx.run_statement(spec.statements[s]);
    run_level(ctx, depths, 0);
}

// ---------------------------------------------------------------------------
// Dependence checker.

std::string DependenceWitness::describe() const {
    std::ostringstream os;
    os << array << "[" << element << "] written at (";
    for (size_t i = 0; i < iter_a.size(); ++i) os << (i ? "," : "") << iter_a[i];
    os << ") and touched at (";
    for (size_t i = 0; i < iter_b.size(); ++i) os << (i ? "," : "") << iter_b[i];
    os << ")";
    return os.str();
}

namespace {

struct Access {
    size_t stmt;
    std::vector<std::int64_t> iter; // values of all loop vars (unused = 0)
    std::string array;
    std::int64_t element;
    bool write;
    bool accumulate_self; // dest of an accumulate statement (also read)
};

} // namespace

DependenceResult check_dependency_free(const KernelSpec& spec, const Extents& ext) {
    for (const auto& l : spec.loops)
        if (Dim{l.bound_symbol, 0}.value(ext) > 32)
            throw ConfigError("dependence check extents must be <= 32 per dim");

    // Enumerate every statement instance and its memory accesses.
    size_t max_var = 0;
    for (const auto& l : spec.loops) max_var = std::max(max_var, static_cast<size_t>(l.var));
    std::vector<std::int64_t> vars(max_var + 1, 0);
    auto depths = spec.statement_depths();

    std::vector<Access> accesses;
    // Map from (array, element) -> indices into `accesses` to avoid O(n^2).
    std::map<std::pair<std::string, std::int64_t>, std::vector<size_t>> by_loc;

    std::function<void(size_t)> walk = [&](size_t level) {
        for (size_t s = 0; s < spec.statements.size(); ++s) {
            if (depths[s] != static_cast<int>(level) - 1) continue;
            const Statement& st = spec.statements[s];
            auto emit = [&](const ArrayRef& r, bool write, bool acc_self) {
                Access a{s, vars, r.array, r.linear_index(vars, ext), write, acc_self};
                by_loc[{a.array, a.element}].push_back(accesses.size());
                accesses.push_back(std::move(a));
            };
            if (st.dest) emit(*st.dest, true, st.accumulate);
            if (st.kind != StmtKind::StoreConst)
                for (const auto& t : st.terms) {
                    if (t.a) emit(*t.a, false, false);
                    if (t.b) emit(*t.b, false, false);
                }
        }
        if (level == spec.loops.size()) return;
        std::int64_t bound = Dim{spec.loops[level].bound_symbol, 0}.value(ext);
        for (std::int64_t v = 0; v < bound; ++v) {
            vars[static_cast<size_t>(spec.loops[level].var)] = v;
            walk(level + 1);
        }
        vars[static_cast<size_t>(spec.loops[level].var)] = 0;
    };
    walk(0);

    bool reassociation = false;
    for (const auto& [loc, ids] : by_loc) {
        bool any_write = false;
        for (size_t id : ids)
            if (accesses[id].write) { any_write = true; break; }
        if (!any_write || ids.size() < 2) continue;
        for (size_t i = 0; i < ids.size(); ++i) {
            const Access& a = accesses[ids[i]];
            if (!a.write) continue;
            for (size_t j = 0; j < ids.size(); ++j) {
                if (i == j) continue;
                const Access& b = accesses[ids[j]];
                if (a.iter == b.iter) {
                    // Same full iteration point: program order among the
                    // slots of one unrolled iteration is preserved.
                    continue;
                }
                if (a.stmt == b.stmt && a.accumulate_self && b.accumulate_self) {
                    // dest += ... across iterations: reassociation, permitted
                    // by the dependency-free flag.
                    reassociation = true;
                    continue;
                }
                // Shared loop variables equal => instances belong to the same
                // iteration of every loop that multi-striding reorders.
                bool shared_equal = true;
                for (const auto& l : spec.loops) {
                    auto uses = [&](const Access& x) {
                        const Statement& st = spec.statements[x.stmt];
                        for (const ArrayRef* r : st.refs())
                            if (r->uses(l.var)) return true;
                        return false;
                    };
                    if (uses(a) && uses(b) &&
                        a.iter[static_cast<size_t>(l.var)] != b.iter[static_cast<size_t>(l.var)]) {
                        shared_equal = false;
                        break;
                    }
                }
                if (shared_equal) continue;
                DependenceResult res;
                res.dependency_free = false;
                res.witness = DependenceWitness{a.iter, b.iter, loc.first, loc.second};
                return res;
            }
        }
    }

    DependenceResult res;
    res.dependency_free = true;
    res.reassociation_only = reassociation;
    return res;
}

} // namespace ms
