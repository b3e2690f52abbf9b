// mstride: transform kernels to multi-strided form, emit AVX2 assembly and
// run the trace-driven memory-system simulator.

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "ms/analysis.hpp"
#include "ms/asm_render.hpp"
#include "ms/catalog.hpp"
#include "ms/interp.hpp"
#include "ms/machine_file.hpp"

namespace {

using namespace ms;

struct RunConfig {
    std::string command;
    std::string kernel;
    int n = 1;
    int p = 1;
    std::string arrangement = "grouped";
    std::string access_class = "aligned";
    bool eliminate = false;
    std::int64_t size = 0; // 0: kernel defaults
    std::string preset = "desk-scale";
    std::string machine_file;
    bool prefetch = true;
    std::string out = "-";
    std::string json_out;
    std::string trace_out;
    int jobs = static_cast<int>(std::thread::hardware_concurrency());
    int budget = 50;
    bool intel = false;
};

std::string dump_run_config(const RunConfig& rc) {
    std::ostringstream os;
    os << "[run]\n";
    os << "command = " << rc.command << "\n";
    os << "kernel = " << rc.kernel << "\n";
    os << "out = " << rc.out << "\n";
    os << "json_out = " << rc.json_out << "\n";
    os << "trace_out = " << rc.trace_out << "\n";
    os << "jobs = " << rc.jobs << "\n";
    os << "budget = " << rc.budget << "\n";
    os << "intel = " << (rc.intel ? "true" : "false") << "\n";
    os << "[config]\n";
    os << "n = " << rc.n << "\n";
    os << "p = " << rc.p << "\n";
    os << "arrangement = " << rc.arrangement << "\n";
    os << "class = " << rc.access_class << "\n";
    os << "eliminate = " << (rc.eliminate ? "true" : "false") << "\n";
    os << "[target]\n";
    os << "size = " << rc.size << "\n";
    os << "preset = " << rc.preset << "\n";
    os << "machine_file = " << rc.machine_file << "\n";
    os << "prefetch = " << (rc.prefetch ? "on" : "off") << "\n";
    return os.str();
}

void parse_run_config_text(const std::string& text, RunConfig& rc) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            size_t b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == '[') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config file: expected key=value, got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        auto on = [&] { return val == "true" || val == "on" || val == "1"; };
        if (key == "command") rc.command = val;
        else if (key == "kernel") rc.kernel = val;
        else if (key == "out") rc.out = val;
        else if (key == "json_out") rc.json_out = val;
        else if (key == "trace_out") rc.trace_out = val;
        else if (key == "jobs") rc.jobs = std::stoi(val);
        else if (key == "budget") rc.budget = std::stoi(val);
        else if (key == "intel") rc.intel = on();
        else if (key == "n") rc.n = std::stoi(val);
        else if (key == "p") rc.p = std::stoi(val);
        else if (key == "arrangement") rc.arrangement = val;
        else if (key == "class") rc.access_class = val;
        else if (key == "eliminate") rc.eliminate = on();
        else if (key == "size") rc.size = std::stoll(val);
        else if (key == "preset") rc.preset = val;
        else if (key == "machine_file") rc.machine_file = val;
        else if (key == "prefetch") rc.prefetch = on();
        else throw ConfigError("config file: unknown key '" + key + "'");
    }
}

Arrangement parse_arrangement(const std::string& s) {
    if (s == "grouped") return Arrangement::Grouped;
    if (s == "interleaved") return Arrangement::Interleaved;
    throw ConfigError("--arrangement must be grouped or interleaved");
}

AccessClass parse_class(const std::string& s) {
    if (s == "aligned") return AccessClass::Aligned;
    if (s == "unaligned") return AccessClass::Unaligned;
    if (s == "nt") return AccessClass::NonTemporal;
    throw ConfigError("--class must be aligned, unaligned or nt");
}

StridingConfig striding_config(const RunConfig& rc) {
    StridingConfig cfg;
    cfg.stride_unrolls = rc.n;
    cfg.portion_unrolls = rc.p;
    cfg.arrangement = parse_arrangement(rc.arrangement);
    cfg.access_class = parse_class(rc.access_class);
    cfg.eliminate_redundant = rc.eliminate;
    return cfg;
}

MachineModel machine_for(const RunConfig& rc) {
    MachineModel m = rc.machine_file.empty() ? MachineModel::preset(rc.preset)
                                             : load_machine_file(rc.machine_file);
    m.prefetcher.enabled = rc.prefetch;
    return m;
}

void write_output(const RunConfig& rc, const std::string& text) {
    if (rc.out == "-" || rc.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(rc.out, std::ios::binary);
    if (!f) throw ConfigError("cannot open output file '" + rc.out + "'");
    f << text;
}

// For micro kernels the portion count is implied by the 32-slot budget when
// the user gives only n.
void normalize_micro(const KernelSpec& spec, RunConfig& rc, bool p_given) {
    if (spec.micro && !p_given) {
        if (kMicroSlots % rc.n != 0)
            throw ConfigError("micro-benchmark stride count must divide 32");
        rc.p = kMicroSlots / rc.n;
    }
}

int cmd_list() {
    std::cout << "kernels:\n";
    for (const auto& k : catalog_names()) std::cout << "  " << k << "\n";
    std::cout << "machine presets:\n";
    for (const auto& p : MachineModel::preset_names()) std::cout << "  " << p << "\n";
    return 0;
}

int cmd_gen(const RunConfig& rc) {
    KernelSpec spec = catalog_lookup(rc.kernel);
    Extents ext = resolve_extents(spec, rc.size);
    UnrolledKernel uk = transform_kernel(spec, striding_config(rc), ext);
    VectorProgram prog = lower(uk);
    std::ostringstream note;
    note << run_protocol_note() << "\n";
    note << "extents:";
    for (const auto& [k, v] : ext) note << " " << k << "=" << v;
    std::string text =
        render_asm(prog, rc.intel ? AsmSyntax::Intel : AsmSyntax::GasAtt, note.str());
    write_output(rc, text);
    std::cerr << "generated " << prog.symbol << " (" << prog.body_memory_ops()
              << " memory ops per iteration)\n";
    return 0;
}

int cmd_check(const RunConfig& rc) {
    KernelSpec spec = catalog_lookup(rc.kernel);
    Extents ext = rc.size ? resolve_extents(spec, rc.size) : spec.default_extents;
    UnrolledKernel uk = transform_kernel(spec, striding_config(rc), ext);
    VectorProgram prog = lower(uk);

    // Vector execution against the scalar reference on identical inputs.
    Layout layout = program_layout(prog, kLineBytes);
    std::vector<std::uint8_t> vec_img(static_cast<size_t>(layout.span), 0);
    std::uint32_t seed = 0x9e3779b9u;
    for (size_t i = 0; i < vec_img.size() / 4; ++i) {
        seed = seed * 1664525u + 1013904223u;
        float f = static_cast<float>((seed >> 8) & 0xffff) / 65536.0f - 0.5f;
        reinterpret_cast<float*>(vec_img.data())[i] = f;
    }
    Layout ref_layout = Layout::contiguous(spec, ext, kLineBytes);
    std::vector<std::uint8_t> ref_img(static_cast<size_t>(ref_layout.span), 0);
    for (const auto& name : spec.array_names()) {
        const Placement& pv = layout.at(name);
        const Placement& pr = ref_layout.at(name);
        std::int64_t bytes = std::min(pv.bytes, pr.bytes);
        std::copy(vec_img.begin() + pv.base, vec_img.begin() + pv.base + bytes,
                  ref_img.begin() + pr.base);
    }
    interpret(prog, layout, vec_img);
    run_reference(spec, ext, ref_layout, ref_img);

    bool exact = true;
    for (const auto& st : spec.statements)
        for (const auto& t : st.terms)
            if (t.b || t.coeff) exact = false; // arithmetic kernels reassociate
    double tol = exact ? 0.0 : 1e-5;
    double worst = 0.0;
    for (const auto& name : spec.array_names()) {
        const Placement& pv = layout.at(name);
        const Placement& pr = ref_layout.at(name);
        std::int64_t words = std::min(pv.bytes, pr.bytes) / 4;
        const float* got = reinterpret_cast<const float*>(vec_img.data() + pv.base);
        const float* want = reinterpret_cast<const float*>(ref_img.data() + pr.base);
        for (std::int64_t w = 0; w < words; ++w) {
            double d = std::abs(static_cast<double>(got[w]) - want[w]);
            double rel = d / std::max(1e-30, std::abs(static_cast<double>(want[w])));
            worst = std::max(worst, std::min(d, rel));
        }
    }
    AccessTrace trace = gen_trace(prog);
    CoverageReport cov = check_coverage(trace, uk);

    bool ok = worst <= tol && cov.ok;
    std::cerr << (worst <= tol ? "PASS" : "FAIL") << " oracle equivalence (worst error "
              << worst << ", tolerance " << tol << ")\n";
    std::cerr << (cov.ok ? "PASS" : "FAIL") << " trace coverage"
              << (cov.ok ? "" : ": " + cov.detail) << "\n";
    return ok ? 0 : 1;
}

SweepRow simulate_row(const RunConfig& rc, const MachineModel& machine) {
    KernelSpec spec = catalog_lookup(rc.kernel);
    Extents ext = resolve_extents(spec, rc.size);
    StridingConfig cfg = striding_config(rc);
    SweepRow row;
    row.kernel = rc.kernel;
    row.n = cfg.stride_unrolls;
    row.p = cfg.portion_unrolls;
    row.arrangement = cfg.arrangement;
    row.preset = machine.name;
    row.prefetch = machine.prefetcher.enabled;
    UnrolledKernel uk = transform_kernel(spec, cfg, ext);
    row.access_class = uk.access_class;
    const ArrayRef* crit = spec.find_ref(uk.plan.critical_array);
    row.array_bytes = crit->element_count(ext) * crit->elem_bytes;
    VectorProgram prog = lower(uk);
    AccessTrace trace = gen_trace(prog);
    if (!rc.trace_out.empty()) {
        std::ofstream f(rc.trace_out, std::ios::binary);
        if (!f) throw ConfigError("cannot open trace file '" + rc.trace_out + "'");
        trace.export_binary(f);
    }
    row.stats = simulate(trace, machine);
    row.throughput_gibs = row.stats.throughput_gibs(machine);
    row.ok = true;
    return row;
}

int cmd_simulate(const RunConfig& rc) {
    MachineModel machine = machine_for(rc);
    SweepRow row = simulate_row(rc, machine);
    write_output(rc, stats_json(row.stats, machine, row));
    std::cerr << "simulated " << rc.kernel << " n=" << row.n << " p=" << row.p << ": "
              << row.throughput_gibs << " GiB/s, l1/l2/l3 hit "
              << row.stats.l1.hit_ratio() << "/" << row.stats.l2.hit_ratio() << "/"
              << row.stats.l3.hit_ratio() << "\n";
    return 0;
}

int cmd_sweep(const RunConfig& rc) {
    KernelSpec spec = catalog_lookup(rc.kernel);
    SweepRequest req;
    req.kernel = rc.kernel;
    req.machine = machine_for(rc);
    req.prefetch_enabled = rc.prefetch;
    req.extents = resolve_extents(spec, rc.size);
    req.jobs = std::max(1, rc.jobs);
    req.configs = enumerate_configs(rc.budget, spec.micro.has_value());
    for (auto& c : req.configs) {
        c.arrangement = parse_arrangement(rc.arrangement);
        c.access_class = parse_class(rc.access_class);
        c.eliminate_redundant = rc.eliminate;
    }
    std::vector<SweepRow> rows = run_sweep(req);
    write_output(rc, report_csv(rows));
    if (!rc.json_out.empty()) {
        std::ofstream f(rc.json_out, std::ios::binary);
        if (!f) throw ConfigError("cannot open json file '" + rc.json_out + "'");
        f << report_json(rows, req.machine);
    }
    size_t ok = 0;
    for (const auto& r : rows) ok += r.ok;
    std::cerr << "sweep: " << ok << "/" << rows.size() << " configurations simulated\n";
    return 0;
}

int cmd_collide(const RunConfig& rc) {
    MachineModel machine = machine_for(rc);
    std::int64_t pow2 = rc.size ? rc.size : (std::int64_t{2} << 30);
    if (pow2 & (pow2 - 1))
        throw ConfigError("--size must be a power of two for collide");
    std::vector<CollisionReport> reports;
    for (int n : {1, 2, 4, 8, 16, 32}) {
        StridingConfig cfg;
        cfg.stride_unrolls = n;
        cfg.portion_unrolls = kMicroSlots / n;
        reports.push_back(predict_collisions(pow2, n, machine));
        reports.push_back(predict_collisions(non_pow2_sibling(pow2, cfg), n, machine));
    }
    write_output(rc, collision_table(reports));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-strided kernel generator and memory-system simulator"};
    app.require_subcommand(1);

    RunConfig rc;
    bool dump_config = false;
    std::string config_file;

    app.add_option("--config", config_file, "key=value config file (flags override)");
    app.add_flag("--dump-config", dump_config, "echo the resolved configuration and exit");

    auto add_common = [&](CLI::App* cmd, bool needs_kernel) {
        cmd->fallthrough(); // global --config/--dump-config stay reachable
        if (needs_kernel)
            cmd->add_option("--kernel", rc.kernel, "kernel name (see `mstride list`)");
        cmd->add_option("--n", rc.n, "stride unrolls");
        auto* p_opt = cmd->add_option("--p", rc.p, "portion unrolls");
        cmd->add_option("--arrangement", rc.arrangement, "grouped|interleaved");
        cmd->add_option("--class", rc.access_class, "aligned|unaligned|nt");
        cmd->add_flag("--eliminate", rc.eliminate, "eliminate redundant loads/stores");
        cmd->add_option("--size", rc.size, "array size in bytes (0 = kernel defaults)");
        cmd->add_option("--preset", rc.preset, "machine preset");
        cmd->add_option("--machine", rc.machine_file, "machine model file");
        cmd->add_flag("--no-prefetch", [&](std::int64_t) { rc.prefetch = false; },
                      "disable the hardware prefetcher model");
        cmd->add_option("--out", rc.out, "output path ('-' = stdout)");
        cmd->add_option("--jobs", rc.jobs, "parallel sweep workers");
        return p_opt;
    };

    auto* list_cmd = app.add_subcommand("list", "list kernels and machine presets");
    list_cmd->fallthrough();
    auto* gen_cmd = app.add_subcommand("gen", "emit multi-strided assembly");
    auto* gp = add_common(gen_cmd, true);
    gen_cmd->add_flag("--intel", rc.intel, "Intel assembler syntax");
    auto* check_cmd = app.add_subcommand("check", "oracle equivalence at desk extents");
    auto* cp = add_common(check_cmd, true);
    auto* sim_cmd = app.add_subcommand("simulate", "simulate one configuration");
    auto* sp = add_common(sim_cmd, true);
    sim_cmd->add_option("--trace-out", rc.trace_out, "export the binary access trace");
    auto* sweep_cmd = app.add_subcommand("sweep", "sweep striding configurations");
    add_common(sweep_cmd, true);
    sweep_cmd->add_option("--budget", rc.budget, "total unroll budget (kernel sweeps)");
    sweep_cmd->add_option("--json", rc.json_out, "also write the JSON report here");
    auto* collide_cmd = app.add_subcommand("collide", "predict cache-set collisions");
    add_common(collide_cmd, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_file.empty()) {
            std::ifstream f(config_file);
            if (!f) throw ms::ConfigError("cannot open config file '" + config_file + "'");
            std::ostringstream buf;
            buf << f.rdbuf();
            RunConfig from_file;
            parse_run_config_text(buf.str(), from_file);
            // The file provides the base; flags that differ from their
            // defaults were given explicitly and win.
            RunConfig merged = from_file;
            RunConfig defaults;
            auto pick = [](auto flag_val, auto def_val, auto file_val) {
                return flag_val == def_val ? file_val : flag_val;
            };
            merged.command = rc.command;
            merged.kernel = pick(rc.kernel, defaults.kernel, from_file.kernel);
            merged.n = pick(rc.n, defaults.n, from_file.n);
            merged.p = pick(rc.p, defaults.p, from_file.p);
            merged.arrangement = pick(rc.arrangement, defaults.arrangement, from_file.arrangement);
            merged.access_class = pick(rc.access_class, defaults.access_class, from_file.access_class);
            merged.eliminate = rc.eliminate || from_file.eliminate;
            merged.size = pick(rc.size, defaults.size, from_file.size);
            merged.preset = pick(rc.preset, defaults.preset, from_file.preset);
            merged.machine_file = pick(rc.machine_file, defaults.machine_file, from_file.machine_file);
            merged.prefetch = rc.prefetch && from_file.prefetch;
            merged.out = pick(rc.out, defaults.out, from_file.out);
            merged.json_out = pick(rc.json_out, defaults.json_out, from_file.json_out);
            merged.trace_out = pick(rc.trace_out, defaults.trace_out, from_file.trace_out);
            merged.jobs = pick(rc.jobs, defaults.jobs, from_file.jobs);
            merged.budget = pick(rc.budget, defaults.budget, from_file.budget);
            merged.intel = rc.intel || from_file.intel;
            rc = merged;
        }

        auto run = [&](const std::string& name) {
            rc.command = name;
            KernelSpec spec{};
            bool have_kernel = !rc.kernel.empty();
            bool p_given = false;
            if (name == "gen") p_given = gp->count() > 0;
            if (name == "check") p_given = cp->count() > 0;
            if (name == "simulate") p_given = sp->count() > 0;
            if (have_kernel) {
                spec = catalog_lookup(rc.kernel);
                normalize_micro(spec, rc, p_given);
            }
            if (dump_config) {
                std::cout << dump_run_config(rc);
                return 0;
            }
            if (name == "list") return cmd_list();
            if (name == "gen") return cmd_gen(rc);
            if (name == "check") return cmd_check(rc);
            if (name == "simulate") return cmd_simulate(rc);
            if (name == "sweep") return cmd_sweep(rc);
            if (name == "collide") return cmd_collide(rc);
            return 2;
        };
        if (list_cmd->parsed()) return run("list");
        if (gen_cmd->parsed()) return run("gen");
        if (check_cmd->parsed()) return run("check");
        if (sim_cmd->parsed()) return run("simulate");
        if (sweep_cmd->parsed()) return run("sweep");
        if (collide_cmd->parsed()) return run("collide");
    } catch (const ms::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
