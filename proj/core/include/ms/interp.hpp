#pragma once

#include <cstdint>
#include <vector>

#include "ms/codegen.hpp"
#include "ms/ir.hpp"

namespace ms {

class InterpFault : public Error {
public:
    InterpFault(const std::string& what, std::int64_t instr_index, std::int64_t address)
        : Error(what), instr_index_(instr_index), address_(address) {}
    std::int64_t instr_index() const { return instr_index_; }
    std::int64_t address() const { return address_; }

private:
    std::int64_t instr_index_;
    std::int64_t address_;
};

// Executes the program over a flat byte image with 8-lane float semantics;
// fma is fused (single rounding). Correctness only, no timing.
void interpret(const VectorProgram& prog, const Layout& layout,
               std::vector<std::uint8_t>& image);

// Layout helper shared by interpreter/trace consumers: arrays in program
// base order at the given alignment (64 for desk images, 2 MiB for traces).
Layout program_layout(const VectorProgram& prog, std::int64_t alignment);

} // namespace ms
