#pragma once

#include <string>

#include "ms/simcache.hpp"

namespace ms {

// Flat key=value machine description with [machine]/[l1]/[l2]/[l3]/[prefetcher]
// sections. Serialization round-trips losslessly.
MachineModel parse_machine(const std::string& text);
MachineModel load_machine_file(const std::string& path);
std::string serialize_machine(const MachineModel& m);

} // namespace ms
