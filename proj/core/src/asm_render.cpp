#include "ms/asm_render.hpp"

#include <cstring>
#include <sstream>

namespace ms {

namespace {

const char* kIntArgRegs[6] = {"%rdi", "%rsi", "%rdx", "%rcx", "%r8", "%r9"};
const char* kIntArgRegsIntel[6] = {"rdi", "rsi", "rdx", "rcx", "r8", "r9"};
const char* kCounterRegs[3] = {"%rax", "%r10", "%r11"};
const char* kCounterRegsIntel[3] = {"rax", "r10", "r11"};

struct Renderer {
    const VectorProgram& prog;
    AsmSyntax syntax;
    std::ostringstream out;
    std::vector<std::string> base_loc;    // operand text per base register
    std::vector<std::string> trip_loc;    // operand text per level (outermost first)

    bool att() const { return syntax == AsmSyntax::GasAtt; }

    std::string ymm(int r) const {
        return (att() ? "%ymm" : "ymm") + std::to_string(r);
    }
    std::string xmm(int r) const {
        return (att() ? "%xmm" : "xmm") + std::to_string(r);
    }

    std::string memop(int base, std::int64_t off) const {
        if (att()) {
            if (off == 0) return "(" + base_loc[static_cast<size_t>(base)] + ")";
            return std::to_string(off) + "(" + base_loc[static_cast<size_t>(base)] + ")";
        }
        std::string b = base_loc[static_cast<size_t>(base)];
        if (off == 0) return "[" + b + "]";
        return "[" + b + (off > 0 ? "+" : "") + std::to_string(off) + "]";
    }

    void ins(const std::string& mnemonic, std::initializer_list<std::string> ops_att) {
        out << "\t" << mnemonic;
        bool first = true;
        if (att()) {
            for (const auto& o : ops_att) {
                out << (first ? "\t" : ", ") << o;
                first = false;
            }
        } else {
            // Intel syntax reverses the operand order.
            std::vector<std::string> v(ops_att);
            for (auto it = v.rbegin(); it != v.rend(); ++it) {
                out << (first ? "\t" : ", ") << *it;
                first = false;
            }
        }
        out << "\n";
    }

    void emit(const VectorInstr& i) {
        switch (i.op) {
        case Opcode::VLoadAligned:
            ins("vmovaps", {memop(i.base, i.imm), ymm(i.dst)});
            break;
        case Opcode::VLoadUnaligned:
            ins("vmovups", {memop(i.base, i.imm), ymm(i.dst)});
            break;
        case Opcode::VLoadNT:
            ins("vmovntdqa", {memop(i.base, i.imm), ymm(i.dst)});
            break;
        case Opcode::VStoreAligned:
            ins("vmovaps", {ymm(i.src0), memop(i.base, i.imm)});
            break;
        case Opcode::VStoreUnaligned:
            ins("vmovups", {ymm(i.src0), memop(i.base, i.imm)});
            break;
        case Opcode::VStoreNT:
            ins("vmovntps", {ymm(i.src0), memop(i.base, i.imm)});
            break;
        case Opcode::VBroadcastMem:
            ins("vbroadcastss", {memop(i.base, i.imm), ymm(i.dst)});
            break;
        case Opcode::VBroadcastImm: {
            std::uint32_t bits;
            std::memcpy(&bits, &i.fimm, sizeof(bits));
            if (att()) {
                out << "\tmovl\t$0x" << std::hex << bits << std::dec << ", %eax\n";
                ins("vmovd", {"%eax", xmm(i.dst)});
                ins("vbroadcastss", {xmm(i.dst), ymm(i.dst)});
            } else {
                out << "\tmov\teax, 0x" << std::hex << bits << std::dec << "\n";
                ins("vmovd", {"eax", xmm(i.dst)});
                ins("vbroadcastss", {xmm(i.dst), ymm(i.dst)});
            }
            break;
        }
        case Opcode::VZero:
            ins("vxorps", {ymm(i.dst), ymm(i.dst), ymm(i.dst)});
            break;
        case Opcode::VFma:
            // dst = src0*src1 + src2, picking the form whose implicit
            // operand matches the destination register.
            if (i.dst == i.src2) {
                ins("vfmadd231ps", {ymm(i.src0), ymm(i.src1), ymm(i.dst)});
            } else if (i.dst == i.src0) {
                ins("vfmadd132ps", {ymm(i.src1), ymm(i.src2), ymm(i.dst)});
            } else if (i.dst == i.src1) {
                ins("vfmadd132ps", {ymm(i.src0), ymm(i.src2), ymm(i.dst)});
            } else {
                ins("vmovaps", {ymm(i.src2), ymm(i.dst)});
                ins("vfmadd231ps", {ymm(i.src0), ymm(i.src1), ymm(i.dst)});
            }
            break;
        case Opcode::VAdd:
            ins("vaddps", {ymm(i.src1), ymm(i.src0), ymm(i.dst)});
            break;
        case Opcode::VMul:
            ins("vmulps", {ymm(i.src1), ymm(i.src0), ymm(i.dst)});
            break;
        case Opcode::VReduceAdd:
            // lane sum of src0 into lane 0 of dst (dst must differ from src0)
            ins("vextractf128", {att() ? "$1" : "1", ymm(i.src0), xmm(i.dst)});
            ins("vaddps", {xmm(i.src0), xmm(i.dst), xmm(i.dst)});
            ins("vhaddps", {xmm(i.dst), xmm(i.dst), xmm(i.dst)});
            ins("vhaddps", {xmm(i.dst), xmm(i.dst), xmm(i.dst)});
            break;
        case Opcode::SLoad:
            ins("vmovss", {memop(i.base, i.imm), xmm(i.dst)});
            break;
        case Opcode::SAdd:
            ins("vaddss", {xmm(i.src1), xmm(i.src0), xmm(i.dst)});
            break;
        case Opcode::SStore:
            ins("vmovss", {xmm(i.src0), memop(i.base, i.imm)});
            break;
        case Opcode::RegAddImm:
            if (att())
                out << "\taddq\t$" << i.imm << ", " << base_loc[static_cast<size_t>(i.base)] << "\n";
            else
                out << "\tadd\t" << base_loc[static_cast<size_t>(i.base)] << ", " << i.imm << "\n";
            break;
        case Opcode::CmpBranch:
        case Opcode::Fence:
            break; // rendered structurally
        }
    }

    void level(size_t l) {
        const ProgramLevel& lv = prog.levels[l];
        std::string counter = att() ? kCounterRegs[l] : kCounterRegsIntel[l];
        std::string label = ".L" + prog.symbol + "_" + std::to_string(l);
        if (att())
            out << "\tmovq\t" << trip_loc[l] << ", " << counter << "\n";
        else
            out << "\tmov\t" << counter << ", " << trip_loc[l] << "\n";
        out << label << ":\n";
        for (const auto& i : lv.pre) emit(i);
        if (l + 1 == prog.levels.size()) {
            for (const auto& i : prog.body) emit(i);
        } else {
            level(l + 1);
        }
        for (const auto& i : lv.post) emit(i);
        for (const auto& [b, step] : lv.steps)
            emit(VectorInstr{Opcode::RegAddImm, -1, -1, -1, -1, b, step});
        if (att()) {
            out << "\tdecq\t" << counter << "\n";
            out << "\tjnz\t" << label << "\n";
        } else {
            out << "\tdec\t" << counter << "\n";
            out << "\tjnz\t" << label << "\n";
        }
    }
};

} // namespace

std::string run_protocol_note() {
    return "measurement protocol: two warm-up executions, then time 10 executions\n"
           "and take the median over 5 such runs; the trailing mfence orders all\n"
           "loads and stores before timing stops";
}

std::string render_asm(const VectorProgram& prog, AsmSyntax syntax,
                       const std::string& header_note) {
    Renderer r{prog, syntax, {}, {}, {}};
    const size_t nbases = prog.bases.size();
    const size_t nlevels = prog.levels.size();
    if (nlevels > 3)
        throw ConfigError("renderer supports at most three loop levels");

    // Argument placement: bases first, then trips (innermost loop first).
    auto arg_loc = [&](size_t idx, bool keep_reg) -> std::string {
        if (idx < 6) return syntax == AsmSyntax::GasAtt ? kIntArgRegs[idx] : kIntArgRegsIntel[idx];
        std::int64_t off = 8 * static_cast<std::int64_t>(idx - 6) + 8;
        (void)keep_reg;
        if (syntax == AsmSyntax::GasAtt) return std::to_string(off) + "(%rsp)";
        return "qword ptr [rsp+" + std::to_string(off) + "]";
    };
    for (size_t b = 0; b < nbases; ++b) {
        if (b >= 6) throw ConfigError("more than six array base registers");
        r.base_loc.push_back(arg_loc(b, true));
    }
    r.trip_loc.resize(nlevels);
    for (size_t l = 0; l < nlevels; ++l) {
        size_t arg = nbases + (nlevels - 1 - l); // innermost first
        r.trip_loc[l] = arg_loc(arg, false);
    }

    std::ostringstream& out = r.out;
    out << "# " << prog.symbol << ": " << prog.kernel << " n=" << prog.config.stride_unrolls
        << " p=" << prog.config.portion_unrolls << " "
        << to_string(prog.config.arrangement) << " " << to_string(prog.access_class)
        << "\n";
    out << "# arguments: ";
    for (size_t b = 0; b < nbases; ++b)
        out << (b ? ", " : "") << "float* " << prog.bases[b];
    for (size_t l = 0; l < nlevels; ++l)
        out << ", int64 trip_" << prog.levels[nlevels - 1 - l].var_name;
    out << "\n";
    if (!header_note.empty()) {
        std::istringstream lines(header_note);
        std::string line;
        while (std::getline(lines, line)) out << "# " << line << "\n";
    }
    if (syntax == AsmSyntax::Intel) out << "\t.intel_syntax noprefix\n";
    out << "\t.text\n";
    out << "\t.globl\t" << prog.symbol << "\n";
    out << "\t.type\t" << prog.symbol << ", @function\n";
    out << prog.symbol << ":\n";
    for (const auto& i : prog.prologue) r.emit(i);
    r.level(0);
    out << "\tmfence\n";
    out << "\tret\n";
    out << "\t.size\t" << prog.symbol << ", .-" << prog.symbol << "\n";
    if (syntax == AsmSyntax::Intel) out << "\t.att_syntax prefix\n";
    out << "\t.section\t.note.GNU-stack,\"\",@progbits\n";
    return out.str();
}

} // namespace ms
