#include "pom/posenc.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pom {

template <typename T>
Tensor<T> sinusoidal_pe(const std::vector<std::vector<double>>& positions, std::size_t d) {
    if (positions.empty()) throw std::invalid_argument("sinusoidal_pe: no positions");
    const std::size_t axes = positions.front().size();
    if (axes < 1 || axes > 3) throw std::invalid_argument("sinusoidal_pe: 1 to 3 axes supported");
    if (d == 0 || d % (2 * axes) != 0) {
        throw std::invalid_argument("sinusoidal_pe: dimension " + std::to_string(d) + " is not divisible by " +
                                    std::to_string(2 * axes));
    }
    const std::size_t per_axis = d / axes;
    const std::size_t half = per_axis / 2;
    std::vector<double> freq(half);
    for (std::size_t f = 0; f < half; ++f) {
        freq[f] = std::pow(10000.0, -static_cast<double>(f) / static_cast<double>(half));
    }
    Tensor<T> out({positions.size(), d});
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (positions[i].size() != axes) throw std::invalid_argument("sinusoidal_pe: inconsistent coordinate count");
        T* row = out.raw() + i * d;
        for (std::size_t a = 0; a < axes; ++a) {
            for (std::size_t f = 0; f < half; ++f) {
                const double angle = positions[i][a] * freq[f];
                row[a * per_axis + f] = static_cast<T>(std::sin(angle));
                row[a * per_axis + half + f] = static_cast<T>(std::cos(angle));
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> grid_pe_2d(std::size_t h, std::size_t w, std::size_t d) {
    std::vector<std::vector<double>> pos;
    pos.reserve(h * w);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) pos.push_back({static_cast<double>(i), static_cast<double>(j)});
    return sinusoidal_pe<T>(pos, d);
}

template <typename T>
Tensor<T> grid_pe_3d(std::size_t f, std::size_t h, std::size_t w, std::size_t d) {
    std::vector<std::vector<double>> pos;
    pos.reserve(f * h * w);
    for (std::size_t t = 0; t < f; ++t)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
                pos.push_back({static_cast<double>(t), static_cast<double>(i), static_cast<double>(j)});
    return sinusoidal_pe<T>(pos, d);
}

#define POM_INSTANTIATE(T)                                                                      \
    template Tensor<T> sinusoidal_pe(const std::vector<std::vector<double>>&, std::size_t);     \
    template Tensor<T> grid_pe_2d(std::size_t, std::size_t, std::size_t);                       \
    template Tensor<T> grid_pe_3d(std::size_t, std::size_t, std::size_t, std::size_t);

POM_INSTANTIATE(float)
POM_INSTANTIATE(double)

#undef POM_INSTANTIATE

}  // namespace pom
