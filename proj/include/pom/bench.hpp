#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

// Timing harness for the mixer and the attention baseline. Inputs are
// synthetic and generated once per sequence length; each measured repeat
// builds a fresh tape so forward+backward includes graph construction.
namespace pom::bench {

enum class Mechanism : std::uint8_t { pom, mha };
enum class Pass : std::uint8_t { forward, forward_backward };

const char* to_string(Mechanism m);
const char* to_string(Pass p);
Mechanism parse_mechanism(const std::string& s);
Pass parse_pass(const std::string& s);

struct BenchRecord {
    Mechanism mechanism = Mechanism::pom;
    Pass pass = Pass::forward_backward;
    std::size_t seq_len = 0;
    std::size_t batch = 0;
    std::size_t d = 0;
    std::size_t repeats = 0;
    double mean_seconds = 0.0;
    double std_seconds = 0.0;
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t n_points = 0;
};

struct BenchConfig {
    std::vector<std::size_t> seq_lens{256, 512, 1024, 2048, 4096, 8192};
    std::size_t batch = 4;
    std::size_t d = 384;
    std::size_t heads = 6;
    std::size_t degree = 2;
    std::size_t expand = 2;
    std::size_t repeats = 100;
    std::size_t warmup = 3;
    std::uint64_t seed = 0;
};

inline constexpr const char* kCsvHeader = "mechanism,pass,seq_len,batch,d,repeats,mean_seconds,std_seconds";

/// Times one configuration. Throws if repeats < 10 or warmup < 3.
BenchRecord run_one(Mechanism mechanism, Pass pass, std::size_t seq_len, const BenchConfig& config);

/// Sweeps config.seq_lens (ascending, at least 4 values). `progress`, when
/// set, is called after each record.
std::vector<BenchRecord> run_sweep(Mechanism mechanism, Pass pass, const BenchConfig& config,
                                   const std::function<void(const BenchRecord&)>& progress = {});

/// Least squares of log(mean_seconds) on log(seq_len).
SlopeFit fit_loglog(const std::vector<BenchRecord>& records);

/// Smallest sequence length at which `mha` is slower than `pom` (same pass).
std::optional<std::size_t> crossover(const std::vector<BenchRecord>& pom, const std::vector<BenchRecord>& mha);

void write_csv(std::ostream& os, const std::vector<BenchRecord>& records);
std::vector<BenchRecord> read_csv(std::istream& is);

/// Slope windows the complexity claim is held to.
inline constexpr double kPomSlopeMin = 0.8;
inline constexpr double kPomSlopeMax = 1.3;
inline constexpr double kMhaSlopeMin = 1.7;

}  // namespace pom::bench
