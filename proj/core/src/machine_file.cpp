#include "ms/machine_file.hpp"

#include <fstream>
#include <sstream>

namespace ms {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

} // namespace

MachineModel parse_machine(const std::string& text) {
    MachineModel m;
    m.name = "custom";
    std::istringstream in(text);
    std::string line, section;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = t.substr(1, t.size() - 2);
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("machine file: expected key=value, got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        auto as_i64 = [&]() { return std::stoll(val); };
        auto as_int = [&]() { return std::stoi(val); };
        auto as_dbl = [&]() { return std::stod(val); };
        auto as_bool = [&]() {
            if (val == "true" || val == "1" || val == "on") return true;
            if (val == "false" || val == "0" || val == "off") return false;
            throw ConfigError("machine file: bad boolean '" + val + "'");
        };
        CacheLevelConfig* lvl = nullptr;
        if (section == "l1") lvl = &m.l1;
        else if (section == "l2") lvl = &m.l2;
        else if (section == "l3") lvl = &m.l3;
        if (lvl) {
            if (key == "capacity_bytes") lvl->capacity_bytes = as_i64();
            else if (key == "associativity") lvl->associativity = as_int();
            else if (key == "hit_latency") lvl->hit_latency = as_int();
            else if (key == "mshr_entries") lvl->mshr_entries = as_int();
            else throw ConfigError("machine file: unknown key '" + key + "' in [" + section + "]");
        } else if (section == "prefetcher") {
            if (key == "enabled") m.prefetcher.enabled = as_bool();
            else if (key == "max_streams") m.prefetcher.max_streams = as_int();
            else if (key == "train_threshold") m.prefetcher.train_threshold = as_int();
            else if (key == "degree") m.prefetcher.degree = as_int();
            else if (key == "distance") m.prefetcher.distance = as_int();
            else if (key == "outstanding_cap") m.prefetcher.outstanding_cap = as_int();
            else if (key == "fill") {
                if (val == "l2") m.prefetcher.fill = PrefetchFill::L2;
                else if (val == "l3") m.prefetcher.fill = PrefetchFill::L3;
                else if (val == "both") m.prefetcher.fill = PrefetchFill::Both;
                else throw ConfigError("machine file: bad fill level '" + val + "'");
            } else throw ConfigError("machine file: unknown key '" + key + "' in [prefetcher]");
        } else if (section == "machine" || section.empty()) {
            if (key == "name") m.name = val;
            else if (key == "memory_latency") m.memory_latency = as_int();
            else if (key == "bandwidth_bytes_per_cycle") m.bandwidth_bytes_per_cycle = as_dbl();
            else if (key == "issue_width") m.issue_width = as_int();
            else if (key == "write_buffer_entries") m.write_buffer_entries = as_int();
            else if (key == "nt_partial_penalty") m.nt_partial_penalty = as_int();
            else if (key == "frequency_ghz") m.frequency_ghz = as_dbl();
            else throw ConfigError("machine file: unknown key '" + key + "' in [machine]");
        } else {
            throw ConfigError("machine file: unknown section [" + section + "]");
        }
    }
    m.validate();
    return m;
}

MachineModel load_machine_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open machine file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_machine(buf.str());
}

std::string serialize_machine(const MachineModel& m) {
    std::ostringstream os;
    os << "[machine]\n";
    os << "name = " << m.name << "\n";
    os << "memory_latency = " << m.memory_latency << "\n";
    os << "bandwidth_bytes_per_cycle = " << m.bandwidth_bytes_per_cycle << "\n";
    os << "issue_width = " << m.issue_width << "\n";
    os << "write_buffer_entries = " << m.write_buffer_entries << "\n";
    os << "nt_partial_penalty = " << m.nt_partial_penalty << "\n";
    os << "frequency_ghz = " << m.frequency_ghz << "\n";
    auto level = [&](const char* name, const CacheLevelConfig& c) {
        os << "[" << name << "]\n";
        os << "capacity_bytes = " << c.capacity_bytes << "\n";
        os << "associativity = " << c.associativity << "\n";
        os << "hit_latency = " << c.hit_latency << "\n";
        os << "mshr_entries = " << c.mshr_entries << "\n";
    };
    level("l1", m.l1);
    level("l2", m.l2);
    level("l3", m.l3);
    os << "[prefetcher]\n";
    os << "enabled = " << (m.prefetcher.enabled ? "true" : "false") << "\n";
    os << "max_streams = " << m.prefetcher.max_streams << "\n";
    os << "train_threshold = " << m.prefetcher.train_threshold << "\n";
    os << "degree = " << m.prefetcher.degree << "\n";
    os << "distance = " << m.prefetcher.distance << "\n";
    os << "fill = "
       << (m.prefetcher.fill == PrefetchFill::L2
               ? "l2"
               : (m.prefetcher.fill == PrefetchFill::L3 ? "l3" : "both"))
       << "\n";
    os << "outstanding_cap = " << m.prefetcher.outstanding_cap << "\n";
    return os.str();
}

} // namespace ms
