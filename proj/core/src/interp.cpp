#include "ms/interp.hpp"

#include <array>
#include <cmath>
#include <cstring>

namespace ms {

Layout program_layout(const VectorProgram& prog, std::int64_t alignment) {
    return Layout::contiguous(prog.array_sizes, alignment);
}

namespace {

using Lanes = std::array<float, kLanes>;

struct Machine {
    const VectorProgram& prog;
    const Layout& layout;
    std::vector<std::uint8_t>& image;
    std::array<Lanes, kVectorRegisters> regs{};
    std::vector<std::int64_t> base; // rolling base per array, absolute bytes
    std::vector<std::int64_t> lo, hi;
    std::int64_t instr_index = 0;

    Machine(const VectorProgram& p, const Layout& l, std::vector<std::uint8_t>& img)
        : prog(p), layout(l), image(img) {
        for (const auto& name : p.bases) {
            const Placement& pl = l.at(name);
            base.push_back(pl.base);
            lo.push_back(pl.base);
            hi.push_back(pl.base + pl.bytes);
        }
    }

    float* mem(const VectorInstr& i, std::int64_t bytes) {
        std::int64_t addr = base[static_cast<size_t>(i.base)] + i.imm;
        if (addr < lo[static_cast<size_t>(i.base)] ||
            addr + bytes > hi[static_cast<size_t>(i.base)])
            throw InterpFault("out-of-bounds access to '" +
                                  prog.bases[static_cast<size_t>(i.base)] +
                                  "' at instruction " + std::to_string(instr_index) +
                                  ", address " + std::to_string(addr),
                              instr_index, addr);
        return reinterpret_cast<float*>(image.data() + addr);
    }

    void exec(const VectorInstr& i) {
        ++instr_index;
        switch (i.op) {
        case Opcode::VLoadAligned:
        case Opcode::VLoadUnaligned:
        case Opcode::VLoadNT: {
            float* p = mem(i, kVectorBytes);
            std::memcpy(regs[static_cast<size_t>(i.dst)].data(), p, kVectorBytes);
            break;
        }
        case Opcode::VStoreAligned:
        case Opcode::VStoreUnaligned:
        case Opcode::VStoreNT: {
            float* p = mem(i, kVectorBytes);
            std::memcpy(p, regs[static_cast<size_t>(i.src0)].data(), kVectorBytes);
            break;
        }
        case Opcode::VBroadcastMem: {
            float v = *mem(i, 4);
            regs[static_cast<size_t>(i.dst)].fill(v);
            break;
        }
        case Opcode::VBroadcastImm:
            regs[static_cast<size_t>(i.dst)].fill(i.fimm);
            break;
        case Opcode::VZero:
            regs[static_cast<size_t>(i.dst)].fill(0.0f);
            break;
        case Opcode::VFma: {
            const Lanes& a = regs[static_cast<size_t>(i.src0)];
            const Lanes& b = regs[static_cast<size_t>(i.src1)];
            const Lanes& c = regs[static_cast<size_t>(i.src2)];
            Lanes& d = regs[static_cast<size_t>(i.dst)];
            for (int l = 0; l < kLanes; ++l) d[l] = std::fma(a[l], b[l], c[l]);
            break;
        }
        case Opcode::VAdd: {
            const Lanes& a = regs[static_cast<size_t>(i.src0)];
            const Lanes& b = regs[static_cast<size_t>(i.src1)];
            Lanes& d = regs[static_cast<size_t>(i.dst)];
            for (int l = 0; l < kLanes; ++l) d[l] = a[l] + b[l];
            break;
        }
        case Opcode::VMul: {
            const Lanes& a = regs[static_cast<size_t>(i.src0)];
            const Lanes& b = regs[static_cast<size_t>(i.src1)];
            Lanes& d = regs[static_cast<size_t>(i.dst)];
            for (int l = 0; l < kLanes; ++l) d[l] = a[l] * b[l];
            break;
        }
        case Opcode::VReduceAdd: {
            // Matches the rendered extract/add/hadd/hadd sequence.
            const Lanes& s = regs[static_cast<size_t>(i.src0)];
            float t0 = s[0] + s[4], t1 = s[1] + s[5], t2 = s[2] + s[6], t3 = s[3] + s[7];
            float u0 = t0 + t1, u1 = t2 + t3;
            Lanes& d = regs[static_cast<size_t>(i.dst)];
            d.fill(0.0f);
            d[0] = u0 + u1;
            break;
        }
        case Opcode::SLoad: {
            float v = *mem(i, 4);
            Lanes& d = regs[static_cast<size_t>(i.dst)];
            d.fill(0.0f);
            d[0] = v;
            break;
        }
        case Opcode::SAdd: {
            float v = regs[static_cast<size_t>(i.src0)][0] + regs[static_cast<size_t>(i.src1)][0];
            Lanes& d = regs[static_cast<size_t>(i.dst)];
            d.fill(0.0f);
            d[0] = v;
            break;
        }
        case Opcode::SStore:
            *mem(i, 4) = regs[static_cast<size_t>(i.src0)][0];
            break;
        case Opcode::RegAddImm:
        case Opcode::CmpBranch:
        case Opcode::Fence:
            break;
        }
    }

    void run_level(size_t l) {
        const ProgramLevel& lv = prog.levels[l];
        for (std::int64_t t = 0; t < lv.trip; ++t) {
            for (const auto& i : lv.pre) exec(i);
            if (l + 1 == prog.levels.size()) {
                for (const auto& i : prog.body) exec(i);
            } else {
                run_level(l + 1);
            }
            for (const auto& i : lv.post) exec(i);
            for (const auto& [b, step] : lv.steps) base[static_cast<size_t>(b)] += step;
        }
    }
};

} // namespace

void interpret(const VectorProgram& prog, const Layout& layout,
               std::vector<std::uint8_t>& image) {
    if (static_cast<std::int64_t>(image.size()) < layout.span)
        throw LayoutError("image smaller than layout span");
    Machine m(prog, layout, image);
    for (const auto& i : prog.prologue) m.exec(i);
    m.run_level(0);
}

} // namespace ms
