#include "pom/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace pom {

GradcheckReport gradcheck(Tape<double>& tape, Var<double> loss,
                          const std::vector<std::pair<std::string, Var<double>>>& leaves,
                          const GradcheckOptions& options) {
    tape.zero_grad();
    tape.backward(loss);

    GradcheckReport report;
    for (const auto& [name, leaf] : leaves) {
        const Tensor<double> original = leaf.value();
        const Tensor<double> analytic =
            tape.has_grad(leaf) ? tape.grad(leaf) : Tensor<double>::zeros(original.shape());

        GradcheckEntry entry;
        entry.name = name;
        entry.elements = original.size();
        Tensor<double> probe = original;
        for (std::size_t i = 0; i < original.size(); ++i) {
            probe[i] = original[i] + options.step;
            tape.set_value(leaf, probe);
            tape.replay();
            const double up = loss.value().item();
            probe[i] = original[i] - options.step;
            tape.set_value(leaf, probe);
            tape.replay();
            const double down = loss.value().item();
            probe[i] = original[i];

            const double numeric = (up - down) / (2.0 * options.step);
            const double a = analytic[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > entry.max_rel_error || i == 0) {
                entry.max_rel_error = std::max(entry.max_rel_error, rel);
                if (rel >= entry.max_rel_error) {
                    entry.worst_index = i;
                    entry.analytic = a;
                    entry.numeric = numeric;
                }
            }
        }
        tape.set_value(leaf, original);
        if (entry.max_rel_error >= report.max_rel_error) {
            report.max_rel_error = entry.max_rel_error;
            report.worst_name = name;
        }
        report.entries.push_back(std::move(entry));
    }
    tape.replay();
    return report;
}

}  // namespace pom
