#pragma once

#include <string>
#include <vector>

#include "ms/ir.hpp"

namespace ms {

// Stable CLI-visible kernel identifiers.
const std::vector<std::string>& catalog_names();

// Returns the IR for a named kernel. Unknown names raise NotFoundError
// listing the valid identifiers.
KernelSpec catalog_lookup(const std::string& name);

// Fixed slot budget of the data-movement micro-benchmarks.
inline constexpr int kMicroSlots = 32;

struct MicrobenchSpec {
    MicrobenchKind kind = MicrobenchKind::Read;
    AccessClass access_class = AccessClass::Aligned;
    // grouped: all portion slots of one stride are adjacent; interleaved:
    // round-robin across strides per offset.
    bool interleaved = false;
    int unroll_slots = kMicroSlots;
    std::int64_t array_bytes = 0;

    void validate(int stride_unrolls) const;
};

} // namespace ms
