#pragma once

#include <string>
#include <vector>

#include "ms/transform.hpp"

namespace ms {

// Abstract vector-ISA opcodes. Memory opcodes use base+imm addressing only.
// The scalar tail (broadcast, lane reduction, 4-byte load/add/store) carries
// the per-row finalization of reduction kernels.
enum class Opcode {
    VLoadAligned,   // vmovaps mem -> ymm
    VLoadUnaligned, // vmovups
    VLoadNT,        // vmovntdqa
    VStoreAligned,  // vmovaps ymm -> mem
    VStoreUnaligned,
    VStoreNT,       // vmovntps
    VBroadcastMem,  // vbroadcastss mem4 -> ymm
    VBroadcastImm,  // materialized without memory traffic
    VZero,          // vxorps
    VFma,           // dst = src0*src1 + src2
    VAdd,
    VMul,
    VReduceAdd,     // dst(lane 0) = horizontal sum of src0
    SLoad,          // movss mem4 -> xmm
    SAdd,           // dst = src0 + src1 (lane 0)
    SStore,         // movss xmm -> mem4
    RegAddImm,      // base += imm
    CmpBranch,      // loop back-edge
    Fence,          // mfence
};

bool is_memory_read(Opcode op);
bool is_memory_write(Opcode op);

struct VectorInstr {
    Opcode op;
    int dst = -1;          // vector register id, [0, 16)
    int src0 = -1, src1 = -1, src2 = -1;
    int base = -1;         // index into VectorProgram::bases
    std::int64_t imm = 0;  // byte offset / step, signed 32-bit checked
    float fimm = 0.0f;
};

struct ProgramLevel {
    std::int64_t trip = 1;
    std::string var_name;
    std::vector<VectorInstr> pre;  // per iteration, before the child loop
    std::vector<VectorInstr> post; // per iteration, after the child loop
    // (base index, byte step) applied at the end of each iteration.
    std::vector<std::pair<int, std::int64_t>> steps;
};

struct VectorProgram {
    std::string symbol;
    // Provenance echo.
    std::string kernel;
    StridingConfig config;
    Extents extents;
    AccessClass access_class = AccessClass::Aligned;

    std::vector<std::string> bases; // argument order: one base register per array
    std::vector<std::pair<std::string, std::int64_t>> array_sizes; // bytes, base order
    std::vector<VectorInstr> prologue; // register setup, no memory traffic
    std::vector<ProgramLevel> levels;  // outermost first; innermost runs `body`
    std::vector<VectorInstr> body;
    VectorInstr fence{Opcode::Fence};

    std::int64_t inner_trip() const { return levels.back().trip; }
    int base_index(const std::string& array) const;
    // Memory operations per body iteration (loads + stores + broadcasts).
    int body_memory_ops() const;
    // Body instructions as rendered: memory ops + arithmetic + one
    // reg-add-imm per stepped base + the cmp-branch.
    int body_instruction_count() const;
    std::int64_t total_events() const; // memory events over the entire run
    void validate() const;
};

// Deterministic lowering of a register-feasible schedule.
VectorProgram lower(const UnrolledKernel& uk);

std::string program_symbol(const UnrolledKernel& uk);

} // namespace ms
