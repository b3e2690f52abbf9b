#include "ms/catalog.hpp"

#include <sstream>

namespace ms {

namespace {

// Shorthand builders for catalog entries.
AffineIndex ix(VarId v, std::int64_t c = 0) { return AffineIndex{{{v, 1}}, c}; }

ArrayRef ref1(std::string name, Dim d0, AffineIndex i0, AccessMode m) {
    return ArrayRef{std::move(name), kElemBytes, {std::move(d0)}, {std::move(i0)}, m};
}

ArrayRef ref2(std::string name, Dim d0, Dim d1, AffineIndex i0, AffineIndex i1, AccessMode m) {
    return ArrayRef{std::move(name), kElemBytes,
                    {std::move(d0), std::move(d1)},
                    {std::move(i0), std::move(i1)}, m};
}

Term mul(ArrayRef a, ArrayRef b) { return Term{std::nullopt, std::move(a), std::move(b)}; }
Term scaled(float c, ArrayRef a) { return Term{c, std::move(a), std::nullopt}; }
Term plain(ArrayRef a) { return Term{std::nullopt, std::move(a), std::nullopt}; }

Statement assign(ArrayRef dest, bool accumulate, std::vector<Term> terms) {
    Statement st;
    st.kind = StmtKind::Assign;
    st.dest = std::move(dest);
    st.dest->mode = accumulate ? AccessMode::ReadWrite : AccessMode::Write;
    st.accumulate = accumulate;
    st.terms = std::move(terms);
    return st;
}

Statement store_const(ArrayRef dest, float imm) {
    Statement st;
    st.kind = StmtKind::StoreConst;
    st.dest = std::move(dest);
    st.dest->mode = AccessMode::Write;
    st.imm = imm;
    return st;
}

Statement load_sink(ArrayRef src) {
    Statement st;
    st.kind = StmtKind::LoadSink;
    st.terms = {plain(std::move(src))};
    return st;
}

StrideSignature sig(StreamCountFormula l, StreamCountFormula s, StreamCountFormula ls) {
    return StrideSignature{l, s, ls};
}
constexpr StreamCountFormula N1{1, 0};   // n
constexpr StreamCountFormula Np1{1, 1};  // n+1
constexpr StreamCountFormula Np2{1, 2};  // n+2
constexpr StreamCountFormula C0{0, 0};
constexpr StreamCountFormula C1{0, 1};
constexpr StreamCountFormula C4{0, 4};

// Loop variables: catalog kernels use at most three.
constexpr VarId I = 0, J = 1, K2 = 2;

KernelSpec make_mxv(const std::string& name, const std::string& mat,
                    const std::string& vec, const std::string& out) {
    // out[i] += mat[i][j] * vec[j]
    KernelSpec k;
    k.name = name;
    k.loops = {{I, "N", "i"}, {J, "M", "j"}};
    k.statements = {assign(ref1(out, {"N"}, ix(I), AccessMode::ReadWrite), true,
                           {mul(ref2(mat, {"N"}, {"M"}, ix(I), ix(J), AccessMode::Read),
                                ref1(vec, {"M"}, ix(J), AccessMode::Read))})};
    k.dependency_free = true;
    k.default_extents = {{"N", 48}, {"M", 192}};
    k.signature = sig(Np1, C0, C1);
    return k;
}

KernelSpec make_bicg() {
    // for i: q[i] = 0; for j: { s[j] += r[i]*A[i][j]; q[i] += A[i][j]*p[j]; }
    KernelSpec k;
    k.name = "bicg";
    k.loops = {{I, "N", "i"}, {J, "M", "j"}};
    k.statements = {
        store_const(ref1("q", {"N"}, ix(I), AccessMode::Write), 0.0f),
        assign(ref1("s", {"M"}, ix(J), AccessMode::ReadWrite), true,
               {mul(ref1("r", {"N"}, ix(I), AccessMode::Read),
                    ref2("A", {"N"}, {"M"}, ix(I), ix(J), AccessMode::Read))}),
        assign(ref1("q", {"N"}, ix(I), AccessMode::ReadWrite), true,
               {mul(ref2("A", {"N"}, {"M"}, ix(I), ix(J), AccessMode::Read),
                    ref1("p", {"M"}, ix(J), AccessMode::Read))}),
    };
    k.dependency_free = true;
    k.default_extents = {{"N", 48}, {"M", 192}};
    k.signature = sig(Np2, C1, C1);
    return k;
}

KernelSpec make_gemvermxv1() {
    // Transposed MxV: C[i] += A[j][i] * B[j], i outer then j inner.
    KernelSpec k;
    k.name = "gemvermxv1";
    k.loops = {{I, "N", "i"}, {J, "M", "j"}};
    k.statements = {assign(ref1("C", {"N"}, ix(I), AccessMode::ReadWrite), true,
                           {mul(ref2("A", {"M"}, {"N"}, ix(J), ix(I), AccessMode::Read),
                                ref1("B", {"M"}, ix(J), AccessMode::Read))})};
    k.dependency_free = true;
    k.default_extents = {{"N", 192}, {"M", 48}};
    k.signature = sig(Np1, C0, C1);
    return k;
}

KernelSpec make_gemverouter() {
    // A[i][j] += u1[i]*v1[j] + u2[i]*v2[j]
    KernelSpec k;
    k.name = "gemverouter";
    k.loops = {{I, "N", "i"}, {J, "M", "j"}};
    k.statements = {assign(ref2("A", {"N"}, {"M"}, ix(I), ix(J), AccessMode::ReadWrite), true,
                           {mul(ref1("u1", {"N"}, ix(I), AccessMode::Read),
                                ref1("v1", {"M"}, ix(J), AccessMode::Read)),
                            mul(ref1("u2", {"N"}, ix(I), AccessMode::Read),
                                ref1("v2", {"M"}, ix(J), AccessMode::Read))})};
    k.dependency_free = true;
    k.default_extents = {{"N", 48}, {"M", 192}};
    k.signature = sig(C4, C0, N1);
    return k;
}

KernelSpec make_gemversum() {
    // x[i] += z[i]; 1-D, distributed over strides by loop blocking.
    KernelSpec k;
    k.name = "gemversum";
    k.loops = {{I, "NX", "i"}};
    k.statements = {assign(ref1("x", {"NX"}, ix(I), AccessMode::ReadWrite), true,
                           {plain(ref1("z", {"NX"}, ix(I), AccessMode::Read))})};
    k.dependency_free = true;
    k.default_extents = {{"NX", 4608}};
    k.signature = sig(N1, C0, N1);
    return k;
}

KernelSpec make_conv() {
    // 3x3 convolution over a one-element halo; weights are immediates.
    KernelSpec k;
    k.name = "conv";
    k.loops = {{I, "N", "i"}, {J, "M", "j"}};
    const float w[3][3] = {{1.f / 16, 2.f / 16, 1.f / 16},
                           {2.f / 16, 4.f / 16, 2.f / 16},
                           {1.f / 16, 2.f / 16, 1.f / 16}};
    std::vector<Term> taps;
    for (int di = 0; di < 3; ++di)
        for (int dj = 0; dj < 3; ++dj)
            taps.push_back(scaled(w[di][dj],
                                  ref2("in", {"N", 2}, {"M", 2}, ix(I, di), ix(J, dj),
                                       AccessMode::Read)));
    k.statements = {assign(ref2("out", {"N"}, {"M"}, ix(I), ix(J), AccessMode::Write),
                           false, std::move(taps))};
    k.dependency_free = true;
    k.access_class = AccessClass::Unaligned;
    k.class_fixed = true;
    k.default_extents = {{"N", 48}, {"M", 192}};
    k.signature = sig(Np2, N1, C0);
    return k;
}

KernelSpec make_jacobi2d() {
    // 5-point stencil, one-element halo, single sweep (writeback isolated away).
    KernelSpec k;
    k.name = "jacobi2d";
    k.loops = {{I, "N", "i"}, {J, "M", "j"}};
    auto a = [&](std::int64_t di, std::int64_t dj) {
        return scaled(0.2f, ref2("A", {"N", 2}, {"M", 2}, ix(I, di), ix(J, dj),
                                 AccessMode::Read));
    };
    k.statements = {assign(ref2("B", {"N"}, {"M"}, ix(I), ix(J), AccessMode::Write), false,
                           {a(1, 1), a(1, 0), a(1, 2), a(0, 1), a(2, 1)})};
    k.dependency_free = true;
    k.access_class = AccessClass::Unaligned;
    k.class_fixed = true;
    k.default_extents = {{"N", 48}, {"M", 192}};
    k.signature = sig(Np2, N1, C0);
    return k;
}

KernelSpec make_doitgen() {
    // Batched contraction: sum[r][p] += A[r][s] * C4[s][p]. The embedded r
    // loop stays; interchange later moves p innermost.
    KernelSpec k;
    k.name = "doitgen";
    k.loops = {{I, "R", "r"}, {J, "NP", "p"}, {K2, "NS", "s"}};
    k.statements = {assign(ref2("sum", {"R"}, {"NP"}, ix(I), ix(J), AccessMode::ReadWrite), true,
                           {mul(ref2("A", {"R"}, {"NS"}, ix(I), ix(K2), AccessMode::Read),
                                ref2("C4", {"NS"}, {"NP"}, ix(K2), ix(J), AccessMode::Read))})};
    k.dependency_free = true;
    k.default_extents = {{"R", 4}, {"NS", 48}, {"NP", 192}};
    k.signature = sig(Np1, C0, C1);
    return k;
}

KernelSpec make_init() {
    KernelSpec k;
    k.name = "init";
    k.loops = {{I, "NX", "i"}};
    k.statements = {store_const(ref1("x", {"NX"}, ix(I), AccessMode::Write), 1.0f)};
    k.dependency_free = true;
    k.default_extents = {{"NX", 4608}};
    k.signature = sig(C0, N1, C0);
    return k;
}

KernelSpec make_writeback() {
    KernelSpec k;
    k.name = "writeback";
    k.loops = {{I, "NX", "i"}};
    k.statements = {assign(ref1("B", {"NX"}, ix(I), AccessMode::Write), false,
                           {plain(ref1("A", {"NX"}, ix(I), AccessMode::Read))})};
    k.dependency_free = true;
    k.default_extents = {{"NX", 4608}};
    k.signature = sig(N1, N1, C0);
    return k;
}

KernelSpec make_micro(MicrobenchKind kind) {
    KernelSpec k;
    k.loops = {{I, "NX", "i"}};
    switch (kind) {
    case MicrobenchKind::Read:
        k.name = "micro-read";
        k.statements = {load_sink(ref1("x", {"NX"}, ix(I), AccessMode::Read))};
        k.signature = sig(N1, C0, C0);
        break;
    case MicrobenchKind::Write:
        k.name = "micro-write";
        k.statements = {store_const(ref1("x", {"NX"}, ix(I), AccessMode::Write), 1.0f)};
        k.signature = sig(C0, N1, C0);
        break;
    case MicrobenchKind::Copy:
        k.name = "micro-copy";
        k.statements = {assign(ref1("y", {"NX"}, ix(I), AccessMode::Write), false,
                               {plain(ref1("x", {"NX"}, ix(I), AccessMode::Read))})};
        k.signature = sig(N1, N1, C0);
        break;
    }
    k.dependency_free = true;
    k.micro = kind;
    k.default_extents = {{"NX", 4608}};
    return k;
}

} // namespace

const std::vector<std::string>& catalog_names() {
    static const std::vector<std::string> names = {
        "bicg",      "conv",       "doitgen",   "gemverouter", "gemvermxv1",
        "gemversum", "gemvermxv2", "jacobi2d",  "mxv",         "init",
        "writeback", "micro-read", "micro-write", "micro-copy"};
    return names;
}

KernelSpec catalog_lookup(const std::string& name) {
    KernelSpec k;
    if (name == "bicg") k = make_bicg();
    else if (name == "conv") k = make_conv();
    else if (name == "doitgen") k = make_doitgen();
    else if (name == "gemverouter") k = make_gemverouter();
    else if (name == "gemvermxv1") k = make_gemvermxv1();
    else if (name == "gemversum") k = make_gemversum();
    else if (name == "gemvermxv2") k = make_mxv("gemvermxv2", "A2", "x2", "w");
    else if (name == "jacobi2d") k = make_jacobi2d();
    else if (name == "mxv") k = make_mxv("mxv", "A", "B", "C");
    else if (name == "init") k = make_init();
    else if (name == "writeback") k = make_writeback();
    else if (name == "micro-read") k = make_micro(MicrobenchKind::Read);
    else if (name == "micro-write") k = make_micro(MicrobenchKind::Write);
    else if (name == "micro-copy") k = make_micro(MicrobenchKind::Copy);
    else {
        std::ostringstream os;
        os << "unknown kernel '" << name << "'; valid names:";
        for (const auto& n : catalog_names()) os << " " << n;
        throw NotFoundError(os.str());
    }
    k.validate();
    return k;
}

void MicrobenchSpec::validate(int stride_unrolls) const {
    if (unroll_slots != kMicroSlots)
        throw ConfigError("micro-benchmarks use exactly 32 loop body unrolls");
    if (stride_unrolls < 1 || kMicroSlots % stride_unrolls != 0)
        throw ConfigError("stride count must divide the 32 unroll slots");
}

} // namespace ms
