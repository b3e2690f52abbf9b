#include "ms/codegen.hpp"

#include <algorithm>
#include <sstream>

namespace ms {

bool is_memory_read(Opcode op) {
    switch (op) {
    case Opcode::VLoadAligned:
    case Opcode::VLoadUnaligned:
    case Opcode::VLoadNT:
    case Opcode::VBroadcastMem:
    case Opcode::SLoad:
        return true;
    default:
        return false;
    }
}

bool is_memory_write(Opcode op) {
    switch (op) {
    case Opcode::VStoreAligned:
    case Opcode::VStoreUnaligned:
    case Opcode::VStoreNT:
    case Opcode::SStore:
        return true;
    default:
        return false;
    }
}

int VectorProgram::base_index(const std::string& array) const {
    for (size_t i = 0; i < bases.size(); ++i)
        if (bases[i] == array) return static_cast<int>(i);
    throw ConfigError("array '" + array + "' has no base register");
}

int VectorProgram::body_memory_ops() const {
    int c = 0;
    for (const auto& i : body)
        if (is_memory_read(i.op) || is_memory_write(i.op)) ++c;
    return c;
}

int VectorProgram::body_instruction_count() const {
    return static_cast<int>(body.size() + levels.back().steps.size()) + 1;
}

std::int64_t VectorProgram::total_events() const {
    auto count_mem = [](const std::vector<VectorInstr>& v) {
        std::int64_t c = 0;
        for (const auto& i : v)
            if (is_memory_read(i.op) || is_memory_write(i.op)) ++c;
        // scalar read-modify-write tails issue a load and a store
        return c;
    };
    std::int64_t events = 0;
    for (size_t l = levels.size(); l-- > 0;) {
        events = levels[l].trip *
                 (count_mem(levels[l].pre) + (l + 1 == levels.size() ? count_mem(body) : events) +
                  count_mem(levels[l].post));
    }
    return events;
}

void VectorProgram::validate() const {
    if (fence.op != Opcode::Fence)
        throw ConfigError("program must end in exactly one fence");
    auto check = [&](const VectorInstr& i) {
        if (is_memory_read(i.op) || is_memory_write(i.op)) {
            if (i.base < 0 || i.base >= static_cast<int>(bases.size()))
                throw ConfigError("memory instruction without a base register");
            if (i.imm < 0 || i.imm > kImmMax)
                throw ImmediateOverflowError("immediate outside signed 32-bit range");
        }
        for (int r : {i.dst, i.src0, i.src1, i.src2})
            if (r >= kVectorRegisters)
                throw ConfigError("vector register id out of range");
    };
    for (const auto& i : prologue) check(i);
    for (const auto& l : levels) {
        for (const auto& i : l.pre) check(i);
        for (const auto& i : l.post) check(i);
        for (const auto& [b, step] : l.steps)
            if (step > kImmMax || step < -kImmMax)
                throw ImmediateOverflowError("base step outside signed 32-bit range");
    }
    for (const auto& i : body) check(i);
}

std::string program_symbol(const UnrolledKernel& uk) {
    std::string name = uk.spec.name;
    std::replace(name.begin(), name.end(), '-', '_');
    std::ostringstream os;
    os << "ms_" << name << "_" << uk.config.stride_unrolls << "x"
       << uk.config.portion_unrolls << "_" << to_string(uk.access_class) << "_"
       << to_string(uk.config.arrangement);
    return os.str();
}

namespace {

struct Lowerer {
    const UnrolledKernel& uk;
    const RegisterPlan& plan;
    VectorProgram prog;

    Opcode load_op() const {
        switch (uk.access_class) {
        case AccessClass::Aligned: return Opcode::VLoadAligned;
        case AccessClass::Unaligned: return Opcode::VLoadUnaligned;
        case AccessClass::NonTemporal: return Opcode::VLoadNT;
        }
        return Opcode::VLoadAligned;
    }
    Opcode store_op() const {
        switch (uk.access_class) {
        case AccessClass::Aligned: return Opcode::VStoreAligned;
        case AccessClass::Unaligned: return Opcode::VStoreUnaligned;
        case AccessClass::NonTemporal: return Opcode::VStoreNT;
        }
        return Opcode::VStoreAligned;
    }

    int reg(int value) const {
        int r = plan.value_reg.at(static_cast<size_t>(value));
        if (r < 0 || r >= plan.budget)
            throw ConfigError("internal: register allocation failed during lowering");
        return r;
    }
    int areg(int acc) const { return plan.acc_reg.at(static_cast<size_t>(acc)); }

    void emit(std::vector<VectorInstr>& out, const VOp& op) {
        switch (op.kind) {
        case VOpKind::Load:
            out.push_back({load_op(), reg(op.dst), -1, -1, -1,
                           prog.base_index(op.mem.array), op.mem.offset});
            break;
        case VOpKind::LoadSink:
            out.push_back({load_op(), plan.value_reg[static_cast<size_t>(op.dst)], -1, -1,
                           -1, prog.base_index(op.mem.array), op.mem.offset});
            break;
        case VOpKind::BcastMem:
            out.push_back({Opcode::VBroadcastMem, reg(op.dst), -1, -1, -1,
                           prog.base_index(op.mem.array), op.mem.offset});
            break;
        case VOpKind::BcastImm:
            out.push_back({Opcode::VBroadcastImm, reg(op.dst), -1, -1, -1, -1, 0, op.imm});
            break;
        case VOpKind::Mul:
            out.push_back({Opcode::VMul, reg(op.dst), reg(op.a), reg(op.b)});
            break;
        case VOpKind::Add:
            out.push_back({Opcode::VAdd, reg(op.dst), reg(op.a), reg(op.b)});
            break;
        case VOpKind::Fma:
            out.push_back({Opcode::VFma, reg(op.dst), reg(op.a), reg(op.b), reg(op.c)});
            break;
        case VOpKind::Store:
            out.push_back({store_op(), -1, reg(op.a), -1, -1,
                           prog.base_index(op.mem.array), op.mem.offset});
            break;
        case VOpKind::AccZero:
            out.push_back({Opcode::VZero, areg(op.acc)});
            break;
        case VOpKind::AccFma:
            out.push_back({Opcode::VFma, areg(op.acc), reg(op.a), reg(op.b), areg(op.acc)});
            break;
        case VOpKind::AccAdd:
            out.push_back({Opcode::VAdd, areg(op.acc), areg(op.acc), reg(op.a)});
            break;
        case VOpKind::HsumStore: {
            int t = plan.scratch0;
            int bi = prog.base_index(op.mem.array);
            out.push_back({Opcode::VReduceAdd, t, areg(op.acc)});
            out.push_back({Opcode::SStore, -1, t, -1, -1, bi, op.mem.offset});
            break;
        }
        case VOpKind::HsumAddStore: {
            int t = plan.scratch0, u = plan.scratch1;
            int bi = prog.base_index(op.mem.array);
            out.push_back({Opcode::VReduceAdd, t, areg(op.acc)});
            out.push_back({Opcode::SLoad, u, -1, -1, -1, bi, op.mem.offset});
            out.push_back({Opcode::SAdd, t, t, u});
            out.push_back({Opcode::SStore, -1, t, -1, -1, bi, op.mem.offset});
            break;
        }
        }
    }
};

} // namespace

VectorProgram lower(const UnrolledKernel& uk) {
    RegisterPlan plan = plan_registers(uk);
    if (!plan.feasible)
        throw ConfigError("internal: lowering a register-infeasible schedule (live " +
                          std::to_string(plan.max_live) + ")");
    Lowerer lw{uk, plan, {}};
    lw.prog.kernel = uk.spec.name;
    lw.prog.config = uk.config;
    lw.prog.extents = uk.extents;
    lw.prog.access_class = uk.access_class;
    lw.prog.symbol = program_symbol(uk);
    for (const auto& [name, bytes] : uk.array_sizes) {
        lw.prog.bases.push_back(name);
        lw.prog.array_sizes.emplace_back(name, bytes);
    }
    for (const auto& op : uk.prologue) lw.emit(lw.prog.prologue, op);
    for (const auto& lv : uk.levels) {
        ProgramLevel pl;
        pl.trip = lv.trip;
        pl.var_name = lv.var_name;
        for (const auto& op : lv.pre) lw.emit(pl.pre, op);
        for (const auto& op : lv.post) lw.emit(pl.post, op);
        for (const auto& [array, step] : lv.steps)
            if (step != 0) pl.steps.emplace_back(lw.prog.base_index(array), step);
        lw.prog.levels.push_back(std::move(pl));
    }
    for (const auto& op : uk.body) lw.emit(lw.prog.body, op);
    lw.prog.validate();
    return lw.prog;
}

} // namespace ms
