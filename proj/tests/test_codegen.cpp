#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <unistd.h>

#include "ms/asm_render.hpp"
#include "ms/catalog.hpp"
#include "ms/interp.hpp"

using namespace ms;

namespace {

UnrolledKernel make(const std::string& kernel, int n, int p, Extents ext,
                    Arrangement arr = Arrangement::Grouped, bool elim = false) {
    StridingConfig cfg;
    cfg.stride_unrolls = n;
    cfg.portion_unrolls = p;
    cfg.arrangement = arr;
    cfg.eliminate_redundant = elim;
    return transform_kernel(catalog_lookup(kernel), cfg, ext);
}

int count_op(const std::vector<VectorInstr>& v, Opcode op) {
    int c = 0;
    for (const auto& i : v) c += i.op == op;
    return c;
}

void fill_random(std::vector<std::uint8_t>& img, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    float* f = reinterpret_cast<float*>(img.data());
    for (size_t i = 0; i < img.size() / 4; ++i) f[i] = dist(rng);
}

// Scalar reference next to the vector interpreter on identical inputs;
// returns the worst |got-want| (absolute or relative, whichever is smaller).
double compare_against_reference(const UnrolledKernel& uk, const VectorProgram& prog) {
    Layout vl = program_layout(prog, kLineBytes);
    std::vector<std::uint8_t> vimg(static_cast<size_t>(vl.span), 0);
    fill_random(vimg, 12345);
    Layout rl = Layout::contiguous(uk.spec, uk.extents, kLineBytes);
    std::vector<std::uint8_t> rimg(static_cast<size_t>(rl.span), 0);
    for (const auto& name : uk.spec.array_names()) {
        const Placement& pv = vl.at(name);
        const Placement& pr = rl.at(name);
        std::int64_t bytes = std::min(pv.bytes, pr.bytes);
        std::copy(vimg.begin() + pv.base, vimg.begin() + pv.base + bytes,
                  rimg.begin() + pr.base);
    }
    interpret(prog, vl, vimg);
    run_reference(uk.spec, uk.extents, rl, rimg);
    double worst = 0;
    for (const auto& name : uk.spec.array_names()) {
        const Placement& pv = vl.at(name);
        const Placement& pr = rl.at(name);
        std::int64_t words = std::min(pv.bytes, pr.bytes) / 4;
        const float* got = reinterpret_cast<const float*>(vimg.data() + pv.base);
        const float* want = reinterpret_cast<const float*>(rimg.data() + pr.base);
        for (std::int64_t w = 0; w < words; ++w) {
            double d = std::abs(static_cast<double>(got[w]) - want[w]);
            double rel = d / std::max(1e-30, std::abs(static_cast<double>(want[w])));
            worst = std::max(worst, std::min(d, rel));
        }
    }
    return worst;
}

bool assembles(const std::string& text) {
    char src[] = "/tmp/ms_asm_XXXXXX";
    int fd = mkstemp(src);
    REQUIRE(fd >= 0);
    {
        std::ofstream f(src);
        f << text;
    }
    close(fd);
    std::string cmd = "as --64 -o /dev/null " + std::string(src) + " 2>/dev/null";
    int rc = std::system(cmd.c_str());
    std::remove(src);
    return rc == 0;
}

} // namespace

TEST_CASE("micro-read n=2 p=16 lowers to the documented body") {
    UnrolledKernel uk = make("micro-read", 2, 16, {{"NX", 16384}}); // 64 KiB
    VectorProgram prog = lower(uk);
    REQUIRE(prog.body.size() == 32);
    const std::int64_t half = 32768;
    for (int i = 0; i < 16; ++i) {
        CHECK(prog.body[static_cast<size_t>(i)].op == Opcode::VLoadAligned);
        CHECK(prog.body[static_cast<size_t>(i)].imm == 32 * i);
        CHECK(prog.body[static_cast<size_t>(16 + i)].imm == half + 32 * i);
    }
    REQUIRE(prog.levels.size() == 1);
    REQUIRE(prog.levels[0].steps.size() == 1);
    CHECK(prog.levels[0].steps[0].second == 512);
    CHECK(prog.body_instruction_count() == 32 + 1 + 1);
}

TEST_CASE("eliminated transposed MxV lowers to 8 loads, 6 fmas, 2 stores") {
    UnrolledKernel uk = make("gemvermxv1", 3, 2, {{"N", 16}, {"M", 48}},
                             Arrangement::Interleaved, true);
    VectorProgram prog = lower(uk);
    CHECK(count_op(prog.body, Opcode::VLoadAligned) == 8); // 6 of A + 2 of C
    CHECK(count_op(prog.body, Opcode::VFma) == 6);
    CHECK(count_op(prog.body, Opcode::VStoreAligned) == 2);
    REQUIRE(prog.levels.size() == 2);
    CHECK(count_op(prog.levels[0].pre, Opcode::VBroadcastMem) == 3);
}

TEST_CASE("writeback n=1 p=1 is the minimal copy loop") {
    UnrolledKernel uk = make("writeback", 1, 1, {{"NX", 512}});
    VectorProgram prog = lower(uk);
    CHECK(count_op(prog.body, Opcode::VLoadAligned) == 1);
    CHECK(count_op(prog.body, Opcode::VStoreAligned) == 1);
    REQUIRE(prog.levels.size() == 1);
    CHECK(prog.levels[0].steps.size() == 2); // one reg-add-imm per base
    for (const auto& [b, step] : prog.levels[0].steps) CHECK(step == 32);
    CHECK(prog.body_instruction_count() == 2 + 2 + 1);
}

TEST_CASE("micro bodies keep the isolation property across configurations") {
    for (int n : {1, 2, 4, 8, 16, 32}) {
        UnrolledKernel uk = make("micro-read", n, 32 / n, {{"NX", 32768}});
        VectorProgram prog = lower(uk);
        INFO("n=" << n);
        CHECK(prog.body_memory_ops() == 32);
        CHECK(prog.body_instruction_count() == 32 + 1 + 1);
        UnrolledKernel w = make("micro-write", n, 32 / n, {{"NX", 32768}});
        CHECK(lower(w).body_memory_ops() == 32);
        UnrolledKernel c = make("micro-copy", n, 32 / n, {{"NX", 32768}});
        VectorProgram cp = lower(c);
        CHECK(cp.body_memory_ops() == 64); // 32 copy slots, each a load + store
        CHECK(cp.body_instruction_count() == 64 + 2 + 1);
    }
}

TEST_CASE("renderer emits the documented mnemonics") {
    VectorProgram prog;
    prog.symbol = "ms_fixture";
    prog.kernel = "fixture";
    prog.bases = {"a", "b"};
    prog.array_sizes = {{"a", 4096}, {"b", 4096}};
    ProgramLevel lv;
    lv.trip = 4;
    lv.var_name = "i";
    lv.steps = {{0, 32}, {1, 32}};
    prog.levels.push_back(lv);
    prog.body = {
        VectorInstr{Opcode::VLoadAligned, 3, -1, -1, -1, 0, 64},
        VectorInstr{Opcode::VStoreNT, -1, 0, -1, -1, 1, 0},
    };
    std::string text = render_asm(prog);
    CHECK(text.find("vmovaps\t64(%rdi), %ymm3") != std::string::npos);
    CHECK(text.find("vmovntps\t%ymm0, (%rsi)") != std::string::npos);
    CHECK(text.find("mfence") != std::string::npos);
    CHECK(text.find(".globl\tms_fixture") != std::string::npos);
    CHECK(assembles(text));
}

TEST_CASE("rendered programs assemble under GNU as") {
    for (const char* kernel : {"mxv", "bicg", "conv", "micro-copy"}) {
        KernelSpec spec = catalog_lookup(kernel);
        int n = 2, p = 2;
        Extents ext = spec.default_extents;
        if (spec.micro) p = 16;
        UnrolledKernel uk = make(kernel, n, p, ext);
        std::string text = render_asm(lower(uk), AsmSyntax::GasAtt, run_protocol_note());
        INFO(kernel);
        CHECK(assembles(text));
        std::string intel = render_asm(lower(uk), AsmSyntax::Intel);
        CHECK(assembles(intel));
    }
}

TEST_CASE("renderer keeps symbol naming stable") {
    UnrolledKernel uk = make("micro-read", 16, 2, {{"NX", 32768}});
    CHECK(program_symbol(uk) == "ms_micro_read_16x2_aligned_grouped");
    std::string text = render_asm(lower(uk));
    CHECK(text.find("ms_micro_read_16x2_aligned_grouped:") != std::string::npos);
}

TEST_CASE("interpreting micro-copy copies the region byte for byte") {
    UnrolledKernel uk = make("micro-copy", 4, 8, {{"NX", 1024}}); // 4 KiB
    VectorProgram prog = lower(uk);
    Layout layout = program_layout(prog, kLineBytes);
    std::vector<std::uint8_t> img(static_cast<size_t>(layout.span), 0);
    fill_random(img, 777);
    std::vector<std::uint8_t> before = img;
    interpret(prog, layout, img);
    const Placement& x = layout.at("x");
    const Placement& y = layout.at("y");
    for (std::int64_t i = 0; i < x.bytes; ++i) {
        REQUIRE(img[static_cast<size_t>(y.base + i)] ==
                before[static_cast<size_t>(x.base + i)]);
    }
}

TEST_CASE("interpreting init stores the constant everywhere") {
    UnrolledKernel uk = make("init", 4, 2, {{"NX", 1024}});
    VectorProgram prog = lower(uk);
    Layout layout = program_layout(prog, kLineBytes);
    std::vector<std::uint8_t> img(static_cast<size_t>(layout.span), 0);
    interpret(prog, layout, img);
    const float* x = reinterpret_cast<const float*>(img.data() + layout.at("x").base);
    for (int i = 0; i < 1024; ++i) REQUIRE(x[i] == 1.0f);
}

TEST_CASE("gemvermxv1 n=3 p=2 matches the scalar reference within 1e-5") {
    UnrolledKernel uk = make("gemvermxv1", 3, 2, {{"N", 16}, {"M", 48}},
                             Arrangement::Interleaved, true);
    VectorProgram prog = lower(uk);
    CHECK(compare_against_reference(uk, prog) <= 1e-5);
}

TEST_CASE("stencils match the scalar reference exactly") {
    UnrolledKernel uk = make("conv", 2, 2, {{"N", 8}, {"M", 64}});
    CHECK(compare_against_reference(uk, lower(uk)) == 0.0);
    UnrolledKernel j = make("jacobi2d", 2, 2, {{"N", 8}, {"M", 64}});
    CHECK(compare_against_reference(j, lower(j)) == 0.0);
}

TEST_CASE("interpreter reports out-of-bounds faults with index and address") {
    VectorProgram prog;
    prog.symbol = "ms_oob";
    prog.kernel = "oob";
    prog.bases = {"a"};
    prog.array_sizes = {{"a", 64}};
    ProgramLevel lv;
    lv.trip = 1;
    prog.levels.push_back(lv);
    prog.body = {VectorInstr{Opcode::VLoadAligned, 0, -1, -1, -1, 0, 48}};
    Layout layout = program_layout(prog, kLineBytes);
    std::vector<std::uint8_t> img(static_cast<size_t>(layout.span), 0);
    try {
        interpret(prog, layout, img);
        FAIL("expected InterpFault");
    } catch (const InterpFault& f) {
        CHECK(f.instr_index() == 1);
        CHECK(f.address() == 48);
    }
}

TEST_CASE("program validation enforces the fence and register bounds") {
    UnrolledKernel uk = make("micro-read", 1, 32, {{"NX", 8192}});
    VectorProgram prog = lower(uk);
    CHECK(prog.fence.op == Opcode::Fence);
    CHECK_NOTHROW(prog.validate());
    prog.body[0].dst = 17;
    CHECK_THROWS_AS(prog.validate(), ConfigError);
}

TEST_CASE("rendered text reassembles to the expected instruction count") {
    // cmp-branch materializes as dec+jnz; the loop setup is one mov per level
    UnrolledKernel uk = make("micro-read", 4, 8, {{"NX", 8192}});
    VectorProgram prog = lower(uk);
    std::string text = render_asm(prog);
    char src[] = "/tmp/ms_objd_XXXXXX";
    int fd = mkstemp(src);
    REQUIRE(fd >= 0);
    {
        std::ofstream f(src);
        f << text;
    }
    close(fd);
    std::string obj = std::string(src) + ".o";
    REQUIRE(std::system(("as --64 -o " + obj + " " + src).c_str()) == 0);
    std::string cmd =
        "objdump -d --no-show-raw-insn " + obj + " | grep -cE '^\\s+[0-9a-f]+:' ";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    int count = 0;
    REQUIRE(fscanf(pipe, "%d", &count) == 1);
    pclose(pipe);
    std::remove(src);
    std::remove(obj.c_str());
    // 32 loads + 1 base step + dec + jnz + counter mov + mfence + ret
    CHECK(count == 32 + 1 + 2 + 1 + 2);

    // distinct configurations render distinct text
    UnrolledKernel other = make("micro-read", 8, 4, {{"NX", 8192}});
    CHECK(render_asm(lower(other)) != text);
}
