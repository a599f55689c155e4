#include "pom/suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pom/blocks.hpp"
#include "pom/distinctness.hpp"
#include "pom/mixer.hpp"
#include "pom/ops.hpp"
#include "pom/streaming.hpp"

namespace pom::suites {

namespace {

using Clock = std::chrono::steady_clock;

PoMParams<double> random_mixer(std::size_t d, std::size_t k, std::size_t e, Rng& rng) {
    PoMConfig cfg;
    cfg.dim = d;
    cfg.degree = k;
    cfg.expand = e;
    auto p = init_pom<double>(cfg, rng, 1.0 / std::sqrt(static_cast<double>(d)));
    p.b_poly = rng.normal_tensor<double>(p.b_poly.shape(), 0.1);
    p.b_sel = rng.normal_tensor<double>(p.b_sel.shape(), 0.1);
    p.b_out = rng.normal_tensor<double>(p.b_out.shape(), 0.1);
    return p;
}

Tensor<double> permute_tokens(const Tensor<double>& x, const std::vector<std::size_t>& perm) {
    const std::size_t nb = x.dim(0), n = x.dim(1), d = x.dim(2);
    Tensor<double> y(x.shape());
    for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t i = 0; i < n; ++i) std::copy_n(x.raw() + (b * n + perm[i]) * d, d, y.raw() + (b * n + i) * d);
    return y;
}

// Records a case; keeps the first failure message.
struct Tracker {
    SuiteResult r;
    Clock::time_point start = Clock::now();

    Tracker(std::string name, double threshold) {
        r.name = std::move(name);
        r.threshold = threshold;
        r.passed = true;
    }
    void add(double deviation, bool ok, const std::string& what) {
        ++r.cases;
        if (std::isnan(deviation) || deviation > r.worst) r.worst = deviation;
        if (!ok && r.passed) {
            r.passed = false;
            std::ostringstream os;
            os << what << ": deviation " << deviation << " > " << r.threshold;
            r.failure = os.str();
        }
    }
    void add(double deviation, const std::string& what) {
        add(deviation, deviation <= r.threshold, what);
    }
    SuiteResult done() {
        r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
        return r;
    }
};

std::string case_name(std::size_t i, std::size_t d, std::size_t n, std::size_t k) {
    return "case " + std::to_string(i) + " (d=" + std::to_string(d) + ", n=" + std::to_string(n) +
           ", k=" + std::to_string(k) + ")";
}

}  // namespace

SuiteResult equivariance(std::uint64_t seed, std::size_t cases, double tol) {
    Tracker t("equivariance", tol);
    Rng rng(seed);
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t d = 1 + rng.below(32), n = 2 + rng.below(63), k = 1 + rng.below(4);
        const auto p = random_mixer(d, k, 1 + rng.below(2), rng);
        const auto x = rng.normal_tensor<double>({1, n, d});
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        const double dev = max_abs_diff(pom_forward<double>(permute_tokens(x, perm), nullptr, p),
                                        permute_tokens(pom_forward<double>(x, nullptr, p), perm));
        t.add(dev, case_name(c, d, n, k));
    }
    return t.done();
}

SuiteResult streaming(std::uint64_t seed, double tol) {
    Tracker t("streaming", tol);
    Rng rng(seed);
    const auto p = random_mixer(6, 3, 2, rng);
    for (std::size_t n = 8; n <= 65; ++n) {
        const auto x = rng.normal_tensor<double>({2, n, 6});
        t.add(max_abs_diff(stream_tokens(x, p), pom_forward<double>(x, nullptr, p, MaskSpec::causal())),
              "token stream vs causal, n=" + std::to_string(n));
        for (std::size_t K : {1, 2, 4, 7}) {
            t.add(max_abs_diff(stream_blocks(x, p, K), pom_forward<double>(x, nullptr, p, MaskSpec::block_causal(K))),
                  "block stream K=" + std::to_string(K) + ", n=" + std::to_string(n));
        }
    }
    return t.done();
}

SuiteResult masking(std::uint64_t seed, double tol) {
    Tracker t("masking", tol);
    Rng rng(seed);
    const std::size_t nb = 2, n = 9, d = 5;
    const auto p = random_mixer(d, 2, 2, rng);
    std::vector<int> valid(nb * n);
    for (auto& v : valid) v = rng.uniform() < 0.7 ? 1 : 0;
    valid[0] = 1;
    valid[n] = 1;
    std::vector<int> bits(nb * n * n);
    for (auto& v : bits) v = rng.uniform() < 0.5 ? 1 : 0;
    const std::vector<MaskSpec> masks{MaskSpec::none(),           MaskSpec::causal(),
                                      MaskSpec::block_causal(3),  MaskSpec::block_causal(4),
                                      MaskSpec::padding(nb, n, valid), MaskSpec::full(nb, n, n, bits)};
    const auto x = rng.normal_tensor<double>({nb, n, d});
    for (const auto& mask : masks) {
        const auto base = pom_forward<double>(x, &x, p, mask);
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t j = 0; j < n; ++j) {
                // Perturb context token j only; queries are unchanged.
                Tensor<double> xc = x;
                for (std::size_t c = 0; c < d; ++c) xc.at(b, j, c) += 1.0 + rng.normal();
                const auto out = pom_forward<double>(x, &xc, p, mask);
                for (std::size_t i = 0; i < n; ++i) {
                    double dev = 0.0;
                    for (std::size_t c = 0; c < d; ++c) dev = std::max(dev, std::abs(out.at(b, i, c) - base.at(b, i, c)));
                    const bool sees = mask.visible(b, i, j, n);
                    const std::string what = mask.describe() + ": query " + std::to_string(i) + ", context " +
                                             std::to_string(j) + (sees ? " (visible)" : " (hidden)");
                    // Hidden tokens must have no effect; visible ones must have some.
                    t.add(sees ? 0.0 : dev, sees ? dev > tol : dev <= tol, what);
                }
            }
        }
    }
    return t.done();
}

SuiteResult deletion(std::uint64_t seed, double tol) {
    Tracker t("deletion", tol);
    Rng rng(seed);
    for (std::size_t c = 0; c < 20; ++c) {
        const std::size_t d = 2 + rng.below(8), m = 1 + rng.below(6), n = 2 + rng.below(10);
        const auto p = random_mixer(d, 1 + rng.below(4), 1 + rng.below(2), rng);
        const auto xq = rng.normal_tensor<double>({1, m, d});
        const auto xc = rng.normal_tensor<double>({1, n, d});
        std::vector<int> valid(n);
        for (auto& v : valid) v = rng.uniform() < 0.6 ? 1 : 0;
        valid[rng.below(n)] = 1;
        std::vector<double> kept;
        for (std::size_t j = 0; j < n; ++j)
            if (valid[j]) kept.insert(kept.end(), xc.raw() + j * d, xc.raw() + (j + 1) * d);
        const Tensor<double> shorter({1, kept.size() / d, d}, kept);
        t.add(max_abs_diff(pom_forward<double>(xq, &xc, p, MaskSpec::padding(1, n, valid)), pom_forward<double>(xq, &shorter, p)),
              case_name(c, d, n, p.config.degree));
    }
    return t.done();
}

SuiteResult distinctness(std::uint64_t seed, std::size_t trials, double tol, double min_fraction) {
    Tracker t("distinctness", min_fraction);
    const auto summary = run_distinctness_trials(trials, 4, 6, 3, seed, tol);
    t.r.cases = summary.trials;
    t.r.worst = summary.fraction();
    if (summary.fraction() < min_fraction) {
        t.r.passed = false;
        std::ostringstream os;
        os << summary.passed << " of " << summary.trials << " trials distinct, below " << min_fraction;
        t.r.failure = os.str();
    }
    return t.done();
}

std::vector<SuiteResult> run_all(std::uint64_t seed) {
    return {equivariance(seed), streaming(seed + 1), masking(seed + 2), deletion(seed + 3), distinctness(seed + 4)};
}

GradModule parse_grad_module(const std::string& s) {
    if (s == "pom") return GradModule::pom;
    if (s == "image_block") return GradModule::image_block;
    if (s == "video_block") return GradModule::video_block;
    throw std::invalid_argument("unknown module '" + s + "' (expected pom, image_block or video_block)");
}

const char* to_string(GradModule m) {
    switch (m) {
        case GradModule::pom: return "pom";
        case GradModule::image_block: return "image_block";
        case GradModule::video_block: return "video_block";
    }
    return "?";
}

namespace {

template <typename P>
void add_leaves(std::vector<std::pair<std::string, Var<double>>>& leaves, ParamScope<double>& scope, const P& p,
                const std::string& prefix) {
    p.visit([&](const auto& name, const Tensor<double>& t) { leaves.emplace_back(prefix + name, scope.var(t)); });
}

Var<double> probe(Var<double> out, Rng& rng) {
    Var<double> r = out.tape->constant(rng.uniform_tensor<double>(out.shape(), -1.0, 1.0));
    return ops::sum(ops::mul(out, r));
}

void merge(GradcheckReport& into, const GradcheckReport& part, const std::string& tag) {
    for (auto e : part.entries) {
        e.name = tag + e.name;
        into.entries.push_back(e);
    }
    if (part.max_rel_error > into.max_rel_error || std::isnan(part.max_rel_error)) {
        into.max_rel_error = part.max_rel_error;
        into.worst_name = tag + part.worst_name;
    }
}

BlockParams<double> random_block(BlockVariant v, std::size_t d, Rng& rng) {
    BlockConfig c;
    c.variant = v;
    c.dim = d;
    c.degree = 2;
    c.expand = 1;
    c.ffw_expand = 2;
    auto p = init_block<double>(c, rng);
    p.visit([&](const std::string&, Tensor<double>& t) { t = rng.normal_tensor<double>(t.shape(), 0.4); });
    return p;
}

}  // namespace

GradcheckReport gradcheck_module(GradModule module, std::uint64_t seed) {
    Rng rng(seed);
    GradcheckReport report;
    switch (module) {
        case GradModule::pom: {
            const auto p = random_mixer(4, 3, 2, rng);
            for (const auto& mask : {MaskSpec::none(), MaskSpec::causal(), MaskSpec::block_causal(2)}) {
                Tape<double> tape;
                ParamScope<double> scope(tape);
                Var<double> x = tape.leaf(rng.uniform_tensor<double>({2, 5, 4}, -2, 2));
                Var<double> loss = probe(pom_forward<double>(scope, x, std::nullopt, p, mask), rng);
                std::vector<std::pair<std::string, Var<double>>> leaves{{"x", x}};
                add_leaves(leaves, scope, p, "");
                merge(report, gradcheck(tape, loss, leaves), mask.describe() + ":");
            }
            Tape<double> tape;
            ParamScope<double> scope(tape);
            Var<double> xq = tape.leaf(rng.uniform_tensor<double>({2, 3, 4}, -2, 2));
            Var<double> xc = tape.leaf(rng.uniform_tensor<double>({2, 4, 4}, -2, 2));
            Var<double> loss =
                probe(pom_forward<double>(scope, xq, xc, p, MaskSpec::padding(2, 4, {1, 0, 1, 1, 1, 1, 0, 1})), rng);
            std::vector<std::pair<std::string, Var<double>>> leaves{{"xq", xq}, {"xc", xc}};
            add_leaves(leaves, scope, p, "");
            merge(report, gradcheck(tape, loss, leaves), "cross:");
            break;
        }
        case GradModule::image_block: {
            const auto p = random_block(BlockVariant::image_dip, 4, rng);
            Tape<double> tape;
            ParamScope<double> scope(tape);
            Var<double> x = tape.leaf(rng.uniform_tensor<double>({2, 3, 4}, -2, 2));
            Var<double> c = tape.leaf(rng.normal_tensor<double>({2, 4}));
            Var<double> loss = probe(image_dip_block(scope, x, c, p), rng);
            std::vector<std::pair<std::string, Var<double>>> leaves{{"x", x}, {"cond", c}};
            add_leaves(leaves, scope, p, "");
            merge(report, gradcheck(tape, loss, leaves), "");
            break;
        }
        case GradModule::video_block: {
            const auto p = random_block(BlockVariant::video_dip, 4, rng);
            Tape<double> tape;
            ParamScope<double> scope(tape);
            Var<double> x = tape.leaf(rng.uniform_tensor<double>({1, 4, 4}, -2, 2));
            Var<double> tm = tape.leaf(rng.normal_tensor<double>({1, 4}));
            Var<double> text = tape.leaf(rng.normal_tensor<double>({1, 3, 4}));
            Var<double> loss = probe(
                video_dip_block(scope, x, tm, text, p, MaskSpec::padding(1, 3, {1, 0, 1}), MaskSpec::block_causal(2)),
                rng);
            std::vector<std::pair<std::string, Var<double>>> leaves{{"x", x}, {"t", tm}, {"text", text}};
            add_leaves(leaves, scope, p, "");
            merge(report, gradcheck(tape, loss, leaves), "");
            break;
        }
    }
    return report;
}

std::string format(const SuiteResult& r) {
    std::ostringstream os;
    os << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.cases << " cases, ";
    if (r.name == "distinctness") {
        os << "pass fraction " << r.worst << " (min " << r.threshold << ")";
    } else {
        os << "worst " << r.worst << " (tol " << r.threshold << ")";
    }
    os << ", " << std::fixed;
    os.precision(2);
    os << r.seconds << " s";
    if (!r.passed) os << " -- " << r.failure;
    return os.str();
}

}  // namespace pom::suites
