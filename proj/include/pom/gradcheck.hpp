#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "pom/tape.hpp"

namespace pom {

struct GradcheckEntry {
    std::string name;
    std::size_t elements = 0;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;
    double max_rel_error = 0.0;
    std::string worst_name;

    bool passed(double tolerance) const { return max_rel_error <= tolerance; }
};

struct GradcheckOptions {
    double step = 1e-5;
    /// Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
    /// near-zero gradients from turning round-off into large ratios.
    double floor = 1e-3;
};

/// Compares tape gradients of `loss` against central finite differences for
/// every element of every listed leaf. The tape is replayed for each probe and
/// restored afterwards.
GradcheckReport gradcheck(Tape<double>& tape, Var<double> loss,
                          const std::vector<std::pair<std::string, Var<double>>>& leaves,
                          const GradcheckOptions& options = {});

}  // namespace pom
