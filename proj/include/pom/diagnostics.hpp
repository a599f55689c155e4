#pragma once

#include <cstdint>
#include <string_view>

namespace pom::diag {

/// Number of mixing rows (or attention rows) that had no visible context token
/// and therefore produced a zero state. Process-wide and thread-safe.
std::uint64_t empty_row_warnings();
void note_empty_rows(std::uint64_t count);
void reset_warnings();

/// Deliberate defects that the self-check commands must detect. Used by
/// mutation tests; never enabled in normal operation.
enum class Fault : std::uint8_t {
    none,
    select_sign_flip,      // negates the selection output of query row 0
    sigmoid_backward_off,  // drops the (1 - s) factor from sigmoid's derivative
};

void inject_fault(Fault fault);
Fault active_fault();
bool fault_active(Fault fault);
Fault parse_fault(std::string_view name);

}  // namespace pom::diag
