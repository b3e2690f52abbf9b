#include "doctest.h"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <sys/wait.h>

namespace {

std::string binary() {
    const char* env = std::getenv("MSTRIDE_BIN");
    REQUIRE(env != nullptr);
    return env;
}

struct CmdResult {
    int status;
    std::string out;
};

CmdResult run(const std::string& args) {
    std::string cmd = binary() + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    std::array<char, 4096> buf;
    size_t got;
    while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), got);
    int rc = pclose(pipe);
    return {WEXITSTATUS(rc), out};
}

} // namespace

TEST_CASE("list shows kernels and presets") {
    CmdResult r = run("list");
    CHECK(r.status == 0);
    CHECK(r.out.find("gemvermxv1") != std::string::npos);
    CHECK(r.out.find("micro-copy") != std::string::npos);
    CHECK(r.out.find("desk-scale") != std::string::npos);
    CHECK(r.out.find("coffee-lake") != std::string::npos);
}

TEST_CASE("gen emits assembly with the run protocol note") {
    CmdResult r = run("gen --kernel micro-read --n 4 --size 1048576");
    CHECK(r.status == 0);
    CHECK(r.out.find("ms_micro_read_4x8_aligned_grouped") != std::string::npos);
    CHECK(r.out.find("vmovaps") != std::string::npos);
    CHECK(r.out.find("mfence") != std::string::npos);
    CHECK(r.out.find("warm-up") != std::string::npos);
    CHECK(r.out.find("median") != std::string::npos);
}

TEST_CASE("gen rejects infeasible configurations with a nonzero exit") {
    CmdResult r = run("gen --kernel mxv --n 18 --p 1 --size 0");
    CHECK(r.status != 0);
    CmdResult bad = run("gen --kernel nonsense --n 1");
    CHECK(bad.status != 0);
}

TEST_CASE("check validates oracle equivalence end to end") {
    CHECK(run("check --kernel mxv --n 4 --p 2").status == 0);
    CHECK(run("check --kernel conv --n 2 --p 2").status == 0);
    CHECK(run("check --kernel gemvermxv1 --n 3 --p 2 --eliminate "
              "--arrangement interleaved").status == 0);
    CHECK(run("check --kernel micro-copy --n 8").status == 0);
}

TEST_CASE("simulate emits a stats JSON with the machine echo") {
    CmdResult r = run("simulate --kernel micro-copy --n 8 --size 2097152");
    CHECK(r.status == 0);
    CHECK(r.out.find("\"schema_version\": 1") != std::string::npos);
    CHECK(r.out.find("\"machine\"") != std::string::npos);
    CHECK(r.out.find("\"bandwidth_bytes_per_cycle\"") != std::string::npos);
    CHECK(r.out.find("\"stats\"") != std::string::npos);
    CHECK(r.out.find("\"wb_merges\"") != std::string::npos);
}

TEST_CASE("sweep writes the CSV schema") {
    CmdResult r = run("sweep --kernel micro-read --preset desk-scale --size 2097152 --jobs 2");
    CHECK(r.status == 0);
    CHECK(r.out.rfind("kernel,n,p,arrangement,class,preset", 0) == 0);
    // 6 rows + header
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 7);
    CHECK(r.out.find("micro-read,16,2,grouped,aligned,desk-scale,on") != std::string::npos);
}

TEST_CASE("collide prints both size regimes across stride counts") {
    CmdResult r = run("collide --preset coffee-lake --size 2147483648");
    CHECK(r.status == 0);
    CHECK(r.out.rfind("array_bytes,n,level,", 0) == 0);
    CHECK(r.out.find("2147483648,8,l2,1,1024,4,yes") != std::string::npos);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1 + 6 * 2 * 3);
}

TEST_CASE("dump-config echoes back losslessly through a config file") {
    CmdResult first = run("simulate --kernel micro-read --n 16 --size 4194304 "
                          "--no-prefetch --arrangement interleaved --dump-config");
    REQUIRE(first.status == 0);
    CHECK(first.out.find("command = simulate") != std::string::npos);
    CHECK(first.out.find("n = 16") != std::string::npos);
    CHECK(first.out.find("prefetch = off") != std::string::npos);

    char path[] = "/tmp/ms_cfg_XXXXXX";
    int fd = mkstemp(path);
    REQUIRE(fd >= 0);
    {
        std::ofstream f(path);
        f << first.out;
    }
    close(fd);
    CmdResult second = run(std::string("simulate --config ") + path + " --dump-config");
    std::remove(path);
    CHECK(second.status == 0);
    CHECK(second.out == first.out);
}
