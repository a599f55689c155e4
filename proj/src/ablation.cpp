#include "pom/ablation.hpp"

#include <iomanip>
#include <limits>
#include <ostream>

namespace pom {

std::vector<std::pair<std::size_t, std::size_t>> ablation_pairs(const AblationSettings& settings,
                                                                 const std::function<void(const std::string&)>& notice) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t k : settings.degrees) {
        if (k == 0 || settings.budget % k != 0) {
            if (notice) {
                notice("skipping degree " + std::to_string(k) + ": budget " + std::to_string(settings.budget) +
                       " is not divisible by it");
            }
            continue;
        }
        pairs.emplace_back(k, settings.budget / k);
    }
    return pairs;
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, const AblationSettings& settings,
                                      const std::function<void(const std::string&)>& notice,
                                      const std::function<void(const AblationRow&)>& on_row) {
    std::vector<AblationRow> rows;
    for (const auto& [k, e] : ablation_pairs(settings, notice)) {
        TrainConfig cfg = base;
        cfg.model.degree = k;
        cfg.model.expand = e;
        const TrainResult result = train(cfg);
        AblationRow row;
        row.degree = k;
        row.expand = e;
        row.pom_params = result.params.pom_parameter_count();
        row.final_loss = windowed_loss(result.metrics, result.metrics.size());
        row.energy_distance = evaluate_model(result.params, cfg, cfg.seed + 1).energy_distance;
        rows.push_back(row);
        if (on_row) on_row(row);
    }
    return rows;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
    os << kAblationHeader << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : rows) {
        os << r.degree << ',' << r.expand << ',' << r.pom_params << ',' << r.final_loss << ',' << r.energy_distance
           << '\n';
    }
}

}  // namespace pom
