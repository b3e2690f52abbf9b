#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ms/catalog.hpp"
#include "ms/ir.hpp"

namespace ms {

enum class Arrangement { Grouped, Interleaved };

const char* to_string(Arrangement a);
const char* to_string(AccessClass c);

// One point of the configuration space: n concurrent strides, each advancing
// p vectors per loop iteration.
struct StridingConfig {
    int stride_unrolls = 1;  // n
    int portion_unrolls = 1; // p
    Arrangement arrangement = Arrangement::Grouped;
    AccessClass access_class = AccessClass::Aligned;
    bool eliminate_redundant = false;

    int total_unrolls() const { return stride_unrolls * portion_unrolls; }
    void validate(bool micro) const;
};

struct TransformPlan {
    std::string critical_array;
    VarId contiguous_axis = 0;
    bool interchange = false;
    bool blocking = false; // 1-D traversals distribute strides by blocking
    int vector_lanes = kLanes;
};

// Picks the critical memory access: highest dimensionality whose last index
// variable is used exclusively as a last dimension. Ties break on element
// count at default extents, then first occurrence.
TransformPlan select_critical_access(const KernelSpec& spec);

// Permutes the loop order so the contiguous axis is innermost.
KernelSpec apply_interchange(const KernelSpec& spec, const TransformPlan& plan);

// Validates that a 1-D traversal splits into n equal partitions and tags the
// spec. Raises DivisibilityError carrying the largest valid extent otherwise.
KernelSpec apply_blocking(const KernelSpec& spec, const TransformPlan& plan, int n,
                          const Extents& ext);

// ---------------------------------------------------------------------------
// Fully unrolled schedule in virtual-register form.

enum class VOpKind {
    Load,         // dst = 32-byte vector load
    LoadSink,     // vector load, value discarded
    BcastMem,     // dst = broadcast of a 4-byte scalar load
    BcastImm,     // dst = broadcast of an immediate
    Mul,          // dst = a * b
    Add,          // dst = a + b
    Fma,          // dst = a * b + c (single rounding)
    Store,        // store(mem, a)
    AccZero,      // acc = 0
    AccFma,       // acc += a * b
    AccAdd,       // acc += a
    HsumStore,    // scalar store: mem4 = lane-sum(acc); zero-init fused dest
    HsumAddStore, // scalar read-modify-write: mem4 += lane-sum(acc)
};

struct VMem {
    std::string array;
    std::int64_t offset = 0; // bytes, relative to the array's rolling base
    bool scalar = false;     // 4-byte access
    bool operator==(const VMem&) const = default;
    auto operator<=>(const VMem&) const = default;
};

struct VOp {
    VOpKind kind;
    int dst = -1;
    int a = -1, b = -1, c = -1; // value operands
    int acc = -1;
    float imm = 0.0f;
    VMem mem;
};

struct ULevel {
    std::int64_t trip = 1;
    std::string var_name;
    std::vector<VOp> pre;  // per iteration, before the child loop
    std::vector<VOp> post; // per iteration, after the child loop
    // Per-array byte adjustment applied to the rolling base at the end of
    // each iteration of this level.
    std::map<std::string, std::int64_t> steps;
};

struct UnrolledKernel {
    KernelSpec spec; // post-interchange form
    TransformPlan plan;
    StridingConfig config;
    Extents extents;
    AccessClass access_class = AccessClass::Aligned; // resolved

    std::vector<VOp> prologue;  // loop-invariant setup (immediate broadcasts)
    std::vector<ULevel> levels; // outermost first; innermost runs `body`
    std::vector<VOp> body;      // schedule slots in arrangement order
    int num_values = 0;
    int num_accs = 0;
    bool eliminated = false;

    // Arrays with their byte sizes at these extents (layout/order contract).
    std::vector<std::pair<std::string, std::int64_t>> array_sizes;
    std::int64_t inner_trip() const { return levels.back().trip; }
    int body_memory_ops() const;
};

// Register pressure report for a schedule.
struct RegisterPlan {
    bool feasible = false;
    int max_live = 0;
    int budget = 0;
    // value id -> register (persistent values first, temps round-robin)
    std::vector<int> value_reg;
    std::vector<int> acc_reg;
    int scratch0 = -1, scratch1 = -1; // reduction-tail scalar temps
};

RegisterPlan plan_registers(const UnrolledKernel& uk);

// Produces the unrolled schedule. The kernel must already be in contiguous-
// axis-innermost form (apply_interchange). Raises DivisibilityError,
// ImmediateOverflowError, or RegisterPressureError (the latter only when
// config.eliminate_redundant is set).
UnrolledKernel instantiate(const KernelSpec& spec, const TransformPlan& plan,
                           const StridingConfig& config, const Extents& ext);

struct EliminationResult {
    std::optional<UnrolledKernel> kernel; // empty when register-infeasible
    int max_live = 0;
    int removed_loads = 0;       // duplicate vector loads collapsed
    int removed_stores = 0;      // dead intermediate stores dropped
    int hoisted_broadcasts = 0;  // per-slot broadcasts folded into the loop head
};

// Collapses duplicate loads, forwards stored values, drops dead intermediate
// stores and hoists loop-invariant broadcasts. Infeasible schedules (> 16
// live vector registers) come back as a value, never a fault.
EliminationResult eliminate_redundant(const UnrolledKernel& uk);

// select -> interchange -> (blocking) -> instantiate, the whole methodology.
UnrolledKernel transform_kernel(const KernelSpec& spec, const StridingConfig& config,
                                const Extents& ext);

// All (n, p) configuration points: micro mode needs n*p == 32 exactly, kernel
// sweeps take every pair with n*p <= budget.
std::vector<StridingConfig> enumerate_configs(int total_unroll_budget = 50,
                                              bool micro = false);

} // namespace ms
