#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pom/gradcheck.hpp"

// Property suites behind the `check` and `gradcheck` commands. Each suite is
// seeded and deterministic; a suite reports its worst deviation and the first
// case that broke the property.
namespace pom::suites {

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::size_t cases = 0;
    double worst = 0.0;     // largest deviation seen (suite-specific meaning)
    double threshold = 0.0;
    std::string failure;    // first failing case, empty on success
    double seconds = 0.0;
};

/// Self-mixing commutes with token permutations: 200 cases, d <= 32, n <= 64.
SuiteResult equivariance(std::uint64_t seed, std::size_t cases = 200, double tol = 1e-9);

/// Token and block streaming equal the masked parallel forward for causal and
/// block-causal masks, K in {1, 2, 4, 7}, n in 8..65.
SuiteResult streaming(std::uint64_t seed, double tol = 1e-10);

/// Perturbing a context token changes exactly the outputs of queries that
/// can see it, for every mask kind.
SuiteResult masking(std::uint64_t seed, double tol = 1e-12);

/// A padded-out context token has the same effect as deleting it.
SuiteResult deletion(std::uint64_t seed, double tol = 1e-9);

/// At least `min_fraction` of random trials (d 4, n 6, k 3) are contextual mappings.
SuiteResult distinctness(std::uint64_t seed, std::size_t trials = 1000, double tol = 1e-8,
                         double min_fraction = 0.99);

/// Every suite run by `check`, in order.
std::vector<SuiteResult> run_all(std::uint64_t seed);

enum class GradModule : std::uint8_t { pom, image_block, video_block };
GradModule parse_grad_module(const std::string& s);
const char* to_string(GradModule m);

/// Analytic gradients against central differences over every parameter and input.
GradcheckReport gradcheck_module(GradModule module, std::uint64_t seed);

inline constexpr double kGradTolerance = 1e-4;

std::string format(const SuiteResult& r);

}  // namespace pom::suites
