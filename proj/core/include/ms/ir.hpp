#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ms/errors.hpp"

namespace ms {

// Fixed machine parameters. Element type is single-precision float and the
// vector unit is 8 lanes wide (AVX2 ymm); other widths are rejected at
// construction time.
inline constexpr int kElemBytes = 4;
inline constexpr int kLanes = 8;
inline constexpr int kVectorBytes = kLanes * kElemBytes; // 32
inline constexpr int kLineBytes = 64;
inline constexpr int kVectorRegisters = 16;
inline constexpr std::int64_t kImmMax = INT32_MAX;

using VarId = int;
using Extents = std::map<std::string, std::int64_t>;

// Array extent in elements: value = bind[symbol] + offset. The offset
// carries stencil halos, e.g. N+2 for a padded image.
struct Dim {
    std::string symbol;
    std::int64_t offset = 0;

    std::int64_t value(const Extents& e) const;
    std::string str() const;
    bool operator==(const Dim&) const = default;
};

// Affine expression over loop variables, in element units.
struct AffineIndex {
    std::vector<std::pair<VarId, std::int64_t>> terms;
    std::int64_t constant = 0;

    std::int64_t eval(const std::vector<std::int64_t>& vars) const;
    std::int64_t coeff(VarId v) const;
    bool uses(VarId v) const;
    bool operator==(const AffineIndex&) const = default;
};

enum class AccessMode { Read, Write, ReadWrite };

struct ArrayRef {
    std::string array;
    int elem_bytes = kElemBytes;
    std::vector<Dim> dims;          // extents, element units
    std::vector<AffineIndex> indices; // one per dim
    AccessMode mode = AccessMode::Read;

    // Flattened element index under row-major layout.
    std::int64_t linear_index(const std::vector<std::int64_t>& vars,
                              const Extents& ext) const;
    std::int64_t element_count(const Extents& ext) const;
    bool uses(VarId v) const;
    std::string str() const;
};

struct Loop {
    VarId var = 0;
    std::string bound_symbol; // iterates [0, bind[bound_symbol])
    std::string var_name;     // for diagnostics: "i", "j", ...
};

// One multiply-add style term: coeff * ref, ref alone, or a bare immediate.
struct Term {
    std::optional<float> coeff;    // immediate coefficient
    std::optional<ArrayRef> a;     // first factor
    std::optional<ArrayRef> b;     // second factor (a*b product terms)
};

enum class StmtKind {
    Assign,     // dest = sum of terms (accumulate=false) or dest += sum (true)
    StoreConst, // dest = imm
    LoadSink,   // evaluate loads, discard (micro-read slots)
};

struct Statement {
    StmtKind kind = StmtKind::Assign;
    std::optional<ArrayRef> dest;
    bool accumulate = false;
    std::vector<Term> terms;
    float imm = 0.0f; // StoreConst value

    // Loops (by nest position) whose variables this statement references.
    std::vector<ArrayRef*> refs(); // dest + all term refs
    std::vector<const ArrayRef*> refs() const;
};

enum class AccessClass { Aligned, Unaligned, NonTemporal };

enum class MicrobenchKind { Read, Write, Copy };

// First-degree polynomial in the stride-unroll count n; evaluates the
// expected number of concurrent streams of one kind.
struct StreamCountFormula {
    int n_coeff = 0;
    int constant = 0;
    int eval(int n) const { return n_coeff * n + constant; }
};

struct StrideSignature {
    StreamCountFormula loads;
    StreamCountFormula stores;
    StreamCountFormula load_stores;
};

struct KernelSpec {
    std::string name;
    std::vector<Loop> loops;            // outermost first, step 1
    std::vector<Statement> statements;
    bool dependency_free = false;
    AccessClass access_class = AccessClass::Aligned; // forced class, micro may override
    bool class_fixed = false;             // stencils: padding forces unaligned
    std::optional<MicrobenchKind> micro;  // 32-slot micro-benchmark body
    Extents default_extents;
    StrideSignature signature;            // expected stream census vs n

    int loop_position(VarId v) const;      // index into loops
    std::vector<int> statement_depths() const; // deepest loop index per statement
    const ArrayRef* find_ref(const std::string& array) const;
    std::vector<std::string> array_names() const; // layout order: first occurrence
    void validate() const;                // construction invariants
};

// ---------------------------------------------------------------------------
// Scalar reference execution (the oracle side of the pipeline).

// Flat byte image plus array placement used by both the reference executor
// and the vector interpreter.
struct Placement {
    std::int64_t base = 0;  // bytes
    std::int64_t bytes = 0;
};

struct Layout {
    std::map<std::string, Placement> arrays;
    std::int64_t span = 0;

    // Arrays placed in `order`, ascending, each base aligned to `alignment`.
    static Layout contiguous(const KernelSpec& spec, const Extents& ext,
                             std::int64_t alignment);
    static Layout contiguous(const std::vector<std::pair<std::string, std::int64_t>>& sized,
                             std::int64_t alignment);
    const Placement& at(const std::string& array) const;
    // Region lookup by absolute byte address; nullptr when out of range.
    const std::string* region_of(std::int64_t addr) const;
};

// Word-granular touch accounting: per (array, kind) a histogram of 4-byte
// word indices. Used by the coverage oracle.
enum class TouchKind { Load, Store };
struct TouchRecorder {
    // touches[array][kind][word index] = count
    std::map<std::string, std::map<TouchKind, std::map<std::int64_t, std::int64_t>>> touches;
    void record(const std::string& array, TouchKind k, std::int64_t word);
};

// Executes the kernel literally: nested loops in declared order, statements at
// their nesting depth, fused multiply-add per term. Memory image is a float
// view over layout-placed arrays.
void run_reference(const KernelSpec& spec, const Extents& ext,
                   const Layout& layout, std::vector<std::uint8_t>& image,
                   TouchRecorder* touches = nullptr);

// ---------------------------------------------------------------------------
// Dependence checking.

struct DependenceWitness {
    std::vector<std::int64_t> iter_a; // full iteration vectors
    std::vector<std::int64_t> iter_b;
    std::string array;
    std::int64_t element = 0; // linear element index
    std::string describe() const;
};

struct DependenceResult {
    bool dependency_free = true;
    std::optional<DependenceWitness> witness;
    // Reductions (dest += ...) are reorderable only up to reassociation;
    // noted so callers know exact FP equality is not guaranteed.
    bool reassociation_only = false;
};

// Exhaustive small-instance checker. Extents must be small (<= 32 per dim).
DependenceResult check_dependency_free(const KernelSpec& spec, const Extents& ext);

} // namespace ms
