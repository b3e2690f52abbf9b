#pragma once

#include <string>

#include "ms/codegen.hpp"

namespace ms {

enum class AsmSyntax { GasAtt, Intel };

// Renders the program as assembler text. System V AMD64 calling convention:
// one array base pointer per integer argument register (layout order), then
// the trip counts, innermost loop first; arguments beyond six on the stack.
// The epilogue is mfence + ret.
std::string render_asm(const VectorProgram& prog, AsmSyntax syntax = AsmSyntax::GasAtt,
                       const std::string& header_note = "");

// The measurement recipe the emitted kernels are meant to run under.
std::string run_protocol_note();

} // namespace ms
