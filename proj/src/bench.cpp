#include "pom/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "pom/attention.hpp"
#include "pom/mixer.hpp"
#include "pom/ops.hpp"

namespace pom::bench {

const char* to_string(Mechanism m) { return m == Mechanism::pom ? "pom" : "mha"; }
const char* to_string(Pass p) { return p == Pass::forward ? "forward" : "forward_backward"; }

Mechanism parse_mechanism(const std::string& s) {
    if (s == "pom") return Mechanism::pom;
    if (s == "mha") return Mechanism::mha;
    throw std::invalid_argument("unknown mechanism '" + s + "' (expected pom or mha)");
}

Pass parse_pass(const std::string& s) {
    if (s == "forward" || s == "fwd") return Pass::forward;
    if (s == "forward_backward" || s == "fwd_bwd") return Pass::forward_backward;
    throw std::invalid_argument("unknown pass '" + s + "' (expected forward or forward_backward)");
}

namespace {

using Clock = std::chrono::steady_clock;

double tick_seconds() {
    return static_cast<double>(Clock::period::num) / static_cast<double>(Clock::period::den);
}

// One unit of work for the given mechanism and pass, closed over fixed inputs.
std::function<void()> make_workload(Mechanism mechanism, Pass pass, std::size_t n, const BenchConfig& cfg) {
    Rng rng(cfg.seed ^ (n * 0x9E3779B97F4A7C15ull));
    auto x = std::make_shared<Tensor<float>>(rng.normal_tensor<float>({cfg.batch, n, cfg.d}));
    if (mechanism == Mechanism::pom) {
        PoMConfig pc;
        pc.dim = cfg.d;
        pc.degree = cfg.degree;
        pc.expand = cfg.expand;
        auto params = std::make_shared<PoMParams<float>>(init_pom<float>(pc, rng));
        if (pass == Pass::forward) {
            return [x, params] { (void)pom_forward(*x, static_cast<const Tensor<float>*>(nullptr), *params); };
        }
        return [x, params] {
            Tape<float> tape;
            ParamScope<float> scope(tape);
            Var<float> out = pom_forward<float>(scope, tape.constant(*x), std::nullopt, *params);
            tape.backward(ops::mean(out));
        };
    }
    auto params = std::make_shared<MHAParams<float>>(init_mha<float>(cfg.d, cfg.heads, rng));
    if (pass == Pass::forward) {
        return [x, params] { (void)mha_forward(*x, static_cast<const Tensor<float>*>(nullptr), *params); };
    }
    return [x, params] {
        Tape<float> tape;
        ParamScope<float> scope(tape);
        Var<float> out = mha_forward<float>(scope, tape.constant(*x), std::nullopt, *params);
        tape.backward(ops::mean(out));
    };
}

}  // namespace

BenchRecord run_one(Mechanism mechanism, Pass pass, std::size_t seq_len, const BenchConfig& cfg) {
    if (cfg.repeats < 10) throw std::invalid_argument("bench: at least 10 measured repeats are required");
    if (cfg.warmup < 3) throw std::invalid_argument("bench: at least 3 warmup iterations are required");
    const auto work = make_workload(mechanism, pass, seq_len, cfg);
    double last = 0.0;
    for (std::size_t i = 0; i < cfg.warmup; ++i) {
        const auto t0 = Clock::now();
        work();
        last = std::chrono::duration<double>(Clock::now() - t0).count();
    }

    // Each sample times `inner` back-to-back iterations, enough for a sample
    // to span at least 50 clock ticks going by the last warmup.
    std::size_t inner = 1;
    const double min_span = 50.0 * tick_seconds();
    if (last < min_span) {
        inner = static_cast<std::size_t>(std::ceil(min_span / std::max(last, tick_seconds())));
    }

    std::vector<double> samples;
    samples.reserve(cfg.repeats);
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const auto t0 = Clock::now();
        for (std::size_t i = 0; i < inner; ++i) work();
        samples.push_back(std::chrono::duration<double>(Clock::now() - t0).count() / static_cast<double>(inner));
    }
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= static_cast<double>(samples.size() - 1);

    BenchRecord rec;
    rec.mechanism = mechanism;
    rec.pass = pass;
    rec.seq_len = seq_len;
    rec.batch = cfg.batch;
    rec.d = cfg.d;
    rec.repeats = cfg.repeats * inner;
    rec.mean_seconds = mean;
    rec.std_seconds = std::sqrt(var);
    return rec;
}

std::vector<BenchRecord> run_sweep(Mechanism mechanism, Pass pass, const BenchConfig& cfg,
                                   const std::function<void(const BenchRecord&)>& progress) {
    if (cfg.seq_lens.size() < 4) throw std::invalid_argument("bench: at least 4 sequence lengths are required");
    for (std::size_t i = 1; i < cfg.seq_lens.size(); ++i) {
        if (cfg.seq_lens[i] <= cfg.seq_lens[i - 1]) {
            throw std::invalid_argument("bench: sequence lengths must be strictly ascending");
        }
    }
    std::vector<BenchRecord> out;
    for (std::size_t n : cfg.seq_lens) {
        out.push_back(run_one(mechanism, pass, n, cfg));
        if (progress) progress(out.back());
    }
    return out;
}

SlopeFit fit_loglog(const std::vector<BenchRecord>& records) {
    if (records.size() < 4) throw std::invalid_argument("slope fit needs at least 4 points");
    const double m = static_cast<double>(records.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (const auto& r : records) {
        if (!(r.mean_seconds > 0.0)) throw std::invalid_argument("slope fit: mean_seconds must be positive");
        const double x = std::log(static_cast<double>(r.seq_len));
        const double y = std::log(r.mean_seconds);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    const double cov = sxy - sx * sy / m;
    const double varx = sxx - sx * sx / m;
    const double vary = syy - sy * sy / m;
    SlopeFit fit;
    fit.slope = cov / varx;
    fit.intercept = (sy - fit.slope * sx) / m;
    fit.r2 = vary > 0 ? (cov * cov) / (varx * vary) : 1.0;
    fit.n_points = records.size();
    return fit;
}

std::optional<std::size_t> crossover(const std::vector<BenchRecord>& pom, const std::vector<BenchRecord>& mha) {
    std::optional<std::size_t> best;
    for (const auto& p : pom) {
        for (const auto& a : mha) {
            if (a.seq_len == p.seq_len && a.pass == p.pass && a.mean_seconds > p.mean_seconds) {
                if (!best || p.seq_len < *best) best = p.seq_len;
            }
        }
    }
    return best;
}

void write_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
    os << kCsvHeader << '\n';
    for (const auto& r : records) {
        os << to_string(r.mechanism) << ',' << to_string(r.pass) << ',' << r.seq_len << ',' << r.batch << ',' << r.d
           << ',' << r.repeats << ',';
        std::ostringstream m, s;
        m.precision(9);
        s.precision(9);
        m << r.mean_seconds;
        s << r.std_seconds;
        os << m.str() << ',' << s.str() << '\n';
    }
}

std::vector<BenchRecord> read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kCsvHeader) {
        throw std::invalid_argument("bench CSV: missing or unexpected header");
    }
    std::vector<BenchRecord> out;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 8) throw std::invalid_argument("bench CSV line " + std::to_string(lineno) + ": expected 8 fields");
        BenchRecord r;
        r.mechanism = parse_mechanism(f[0]);
        r.pass = parse_pass(f[1]);
        r.seq_len = std::stoull(f[2]);
        r.batch = std::stoull(f[3]);
        r.d = std::stoull(f[4]);
        r.repeats = std::stoull(f[5]);
        r.mean_seconds = std::stod(f[6]);
        r.std_seconds = std::stod(f[7]);
        out.push_back(r);
    }
    return out;
}

}  // namespace pom::bench
