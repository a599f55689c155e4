#include "pom/diagnostics.hpp"

#include <atomic>
#include <stdexcept>
#include <string>

namespace pom::diag {
namespace {
std::atomic<std::uint64_t> g_empty_rows{0};
std::atomic<Fault> g_fault{Fault::none};
}  // namespace

std::uint64_t empty_row_warnings() { return g_empty_rows.load(std::memory_order_relaxed); }

void note_empty_rows(std::uint64_t count) {
    if (count > 0) {
        g_empty_rows.fetch_add(count, std::memory_order_relaxed);
    }
}

void reset_warnings() { g_empty_rows.store(0, std::memory_order_relaxed); }

void inject_fault(Fault fault) { g_fault.store(fault, std::memory_order_relaxed); }
Fault active_fault() { return g_fault.load(std::memory_order_relaxed); }
bool fault_active(Fault fault) { return active_fault() == fault; }

Fault parse_fault(std::string_view name) {
    if (name == "none") return Fault::none;
    if (name == "select_sign_flip") return Fault::select_sign_flip;
    if (name == "sigmoid_backward_off") return Fault::sigmoid_backward_off;
    throw std::invalid_argument("unknown fault '" + std::string(name) + "'");
}

}  // namespace pom::diag
