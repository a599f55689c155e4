#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "pom/config.hpp"

// Degree ablation at a fixed per-dimension state budget k·e.
namespace pom {

struct AblationRow {
    std::size_t degree = 0;
    std::size_t expand = 0;
    std::size_t pom_params = 0;
    double final_loss = 0.0;
    double energy_distance = 0.0;
};

inline constexpr const char* kAblationHeader = "degree,expand,pom_params,final_loss,energy_distance";

/// (degree, budget / degree) for every degree that divides the budget, in
/// the given order. Indivisible degrees are reported through `notice`.
std::vector<std::pair<std::size_t, std::size_t>> ablation_pairs(const AblationSettings& settings,
                                                                 const std::function<void(const std::string&)>& notice = {});

/// Trains one model per accepted pair from `base`; final_loss is the windowed
/// loss at the last step.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const AblationSettings& settings,
                                      const std::function<void(const std::string&)>& notice = {},
                                      const std::function<void(const AblationRow&)>& on_row = {});

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

}  // namespace pom
