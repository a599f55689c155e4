// Command-line driver: property suites, gradient checks, scaling benchmarks,
// toy training, sampling and the degree ablation.
//
// Exit codes: 0 success, 1 a check or run failed, 2 usage, config or input error.

#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pom/ablation.hpp"
#include "pom/bench.hpp"
#include "pom/config.hpp"
#include "pom/diagnostics.hpp"
#include "pom/suites.hpp"
#include "pom/train.hpp"

namespace fs = std::filesystem;
using namespace pom;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

// Thrown for bad flags, unreadable inputs and invalid configurations.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string fault = "none";
};

// --seed, then POM_SEED, then `fallback`.
std::uint64_t resolve_seed(const Globals& g, std::uint64_t fallback) {
    if (g.seed) return *g.seed;
    if (const char* env = std::getenv("POM_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw UsageError(std::string("POM_SEED is not an unsigned integer: ") + env);
    }
    return fallback;
}

bool seed_given(const Globals& g) {
    const char* env = std::getenv("POM_SEED");
    return g.seed.has_value() || (env && *env);
}

std::ofstream open_output(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UsageError("cannot write " + path);
    return os;
}

RunConfig read_config(const std::string& path) {
    try {
        return load_config(path);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
}

// --- check -----------------------------------------------------------------

int cmd_check(const Globals& g) {
    const std::uint64_t seed = resolve_seed(g, 0);
    std::cout << "check (seed " << seed << ")\n";
    const auto results = suites::run_all(seed);
    const suites::SuiteResult* first_failure = nullptr;
    for (const auto& r : results) {
        std::cout << "  " << suites::format(r) << '\n';
        if (!r.passed && !first_failure) first_failure = &r;
    }
    if (first_failure) {
        std::cout << "FAILED: " << first_failure->name << " suite -- " << first_failure->failure << '\n';
        return kFailed;
    }
    std::cout << "all " << results.size() << " suites passed\n";
    return kOk;
}

// --- gradcheck -------------------------------------------------------------

int cmd_gradcheck(const Globals& g, const std::string& module_name, double tol) {
    suites::GradModule module;
    try {
        module = suites::parse_grad_module(module_name);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const std::uint64_t seed = resolve_seed(g, 0);
    const auto report = suites::gradcheck_module(module, seed);
    std::cout << "gradcheck " << suites::to_string(module) << " (seed " << seed << ")\n";
    for (const auto& e : report.entries) {
        std::cout << "  " << std::left << std::setw(32) << e.name << " elements " << std::setw(5) << e.elements
                  << " max rel error " << e.max_rel_error << '\n';
    }
    std::cout << "max relative error " << report.max_rel_error << " (threshold " << tol << ")\n";
    if (!report.passed(tol)) {
        std::cout << "FAILED: gradient of " << report.worst_name << " exceeds the threshold\n";
        return kFailed;
    }
    std::cout << "passed\n";
    return kOk;
}

// --- bench -----------------------------------------------------------------

struct BenchArgs {
    std::string mechanism = "both";
    std::string pass = "forward_backward";
    std::vector<std::size_t> seq_lens{256, 512, 1024, 2048, 4096, 8192};
    bench::BenchConfig config;
    std::string out;
    bool assert_slopes = false;
};

void print_fit(const char* label, const bench::SlopeFit& fit) {
    std::cout << label << " slope " << std::fixed << std::setprecision(3) << fit.slope << " (intercept "
              << fit.intercept << ", r2 " << fit.r2 << ", " << fit.n_points << " points)\n"
              << std::defaultfloat;
}

int cmd_bench(const Globals& g, BenchArgs args) {
    if (args.seq_lens.size() < 4 || !std::is_sorted(args.seq_lens.begin(), args.seq_lens.end()) ||
        std::adjacent_find(args.seq_lens.begin(), args.seq_lens.end()) != args.seq_lens.end()) {
        throw UsageError("--seq-lens must hold at least 4 strictly ascending values");
    }
    if (args.config.repeats < 10) throw UsageError("--repeats must be at least 10");
    if (args.config.warmup < 3) throw UsageError("--warmup must be at least 3");
    std::vector<bench::Mechanism> mechs;
    bench::Pass pass;
    try {
        pass = bench::parse_pass(args.pass);
        if (args.mechanism == "both") {
            mechs = {bench::Mechanism::pom, bench::Mechanism::mha};
        } else {
            mechs = {bench::parse_mechanism(args.mechanism)};
        }
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    args.config.seq_lens = args.seq_lens;
    args.config.seed = resolve_seed(g, 0);

    std::cout << "bench " << args.pass << ": batch " << args.config.batch << ", d " << args.config.d << ", "
              << args.config.repeats << " repeats after " << args.config.warmup << " warmups, " << g.threads
              << " thread(s)\n";
    std::vector<bench::BenchRecord> all, pom_recs, mha_recs;
    for (const auto m : mechs) {
        const auto recs = bench::run_sweep(m, pass, args.config, [](const bench::BenchRecord& r) {
            std::cout << "  " << bench::to_string(r.mechanism) << " n=" << std::setw(5) << r.seq_len << "  mean "
                      << std::scientific << std::setprecision(4) << r.mean_seconds << " s  std " << r.std_seconds
                      << std::defaultfloat << " s\n"
                      << std::flush;
        });
        (m == bench::Mechanism::pom ? pom_recs : mha_recs) = recs;
        all.insert(all.end(), recs.begin(), recs.end());
    }
    if (!args.out.empty()) {
        auto os = open_output(args.out);
        bench::write_csv(os, all);
        std::cout << "wrote " << args.out << '\n';
    }

    bool ok = true;
    if (!pom_recs.empty()) {
        const auto fit = bench::fit_loglog(pom_recs);
        print_fit("pom", fit);
        if (fit.slope < bench::kPomSlopeMin || fit.slope > bench::kPomSlopeMax) {
            ok = false;
            if (args.assert_slopes) {
                std::cout << "FAILED: pom slope outside [" << bench::kPomSlopeMin << ", " << bench::kPomSlopeMax
                          << "]\n";
            }
        }
    }
    if (!mha_recs.empty()) {
        const auto fit = bench::fit_loglog(mha_recs);
        print_fit("mha", fit);
        if (fit.slope < bench::kMhaSlopeMin) {
            ok = false;
            if (args.assert_slopes) std::cout << "FAILED: mha slope below " << bench::kMhaSlopeMin << '\n';
        }
    }
    if (!pom_recs.empty() && !mha_recs.empty()) {
        if (const auto n = bench::crossover(pom_recs, mha_recs)) {
            std::cout << "crossover: mha slower than pom from n=" << *n << '\n';
        } else {
            ok = false;
            std::cout << "no crossover in the sweep" << (args.assert_slopes ? " -- FAILED" : "") << '\n';
        }
    }
    return args.assert_slopes && !ok ? kFailed : kOk;
}

// --- train -----------------------------------------------------------------

TrainConfig train_config(const Globals& g, const std::string& path) {
    RunConfig cfg = read_config(path);
    if (seed_given(g)) cfg.train.seed = resolve_seed(g, cfg.train.seed);
    return cfg.train;
}

int cmd_train(const Globals& g, const std::string& config_path, const std::string& out_dir, bool evaluate,
              std::size_t log_every) {
    const TrainConfig cfg = train_config(g, config_path);
    fs::create_directories(out_dir);
    const std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
    const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.pom").string();
    std::cout << "training " << to_string(cfg.loss) << " on " << to_string(cfg.data.kind) << " for " << cfg.steps
              << " steps (seed " << cfg.seed << ")\n";
    TrainResult result;
    try {
        result = train(cfg, [&](const MetricRow& r) {
            if (log_every && (r.step % log_every == 0 || r.step == cfg.steps)) {
                std::cout << "  step " << std::setw(6) << r.step << "  loss " << std::setw(10) << r.loss << "  lr "
                          << r.lr << '\n'
                          << std::flush;
            }
        });
    } catch (const TrainingDiverged& e) {
        std::cout << "FAILED: " << e.what() << '\n';
        return kFailed;
    }
    {
        auto os = open_output(metrics_path);
        write_metrics_csv(os, result.metrics);
    }
    save_checkpoint(ckpt_path, make_checkpoint(result.params, cfg, cfg.steps));
    {
        auto os = open_output((fs::path(out_dir) / "config.txt").string());
        os << to_config_text(cfg);
    }
    std::cout << "loss over the first 10 steps " << windowed_loss(result.metrics, std::min<std::size_t>(10, cfg.steps))
              << ", over the last 10 " << windowed_loss(result.metrics, cfg.steps) << '\n';
    if (evaluate) {
        const auto ev = evaluate_model(result.params, cfg, cfg.seed + 1);
        std::cout << "energy distance to held-out data " << ev.energy_distance << '\n';
        for (std::size_t c = 0; c < ev.class_energy_distance.size(); ++c) {
            std::cout << "  class " << c << ": energy distance " << ev.class_energy_distance[c] << ", mean error "
                      << ev.class_mean_error[c] << '\n';
        }
    }
    std::cout << "wrote " << ckpt_path << " and " << metrics_path << '\n';
    return kOk;
}

// --- sample ----------------------------------------------------------------

struct SampleArgs {
    std::string checkpoint;
    std::string out;
    std::size_t count = 512;
    std::optional<int> label;
    bool unconditional = false;
    std::optional<double> cfg_weight;
    std::optional<std::string> method;
    std::optional<std::size_t> steps;
};

// Grid of h x w images, one pixel of padding; values in [-1, 1] map to 0..255.
void write_pgm(std::ostream& os, const Tensor<double>& x, std::size_t h, std::size_t w) {
    const std::size_t n = x.dim(0), cols = std::min<std::size_t>(n, 16), rows = (n + cols - 1) / cols;
    const std::size_t W = cols * (w + 1) + 1, H = rows * (h + 1) + 1;
    std::vector<int> img(W * H, 0);
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t r0 = (s / cols) * (h + 1) + 1, c0 = (s % cols) * (w + 1) + 1;
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const double v = std::clamp((x[s * h * w + i * w + j] + 1.0) * 0.5, 0.0, 1.0);
                img[(r0 + i) * W + c0 + j] = static_cast<int>(std::lround(v * 255.0));
            }
        }
    }
    os << "P2\n" << W << ' ' << H << "\n255\n";
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < W; ++c) os << img[r * W + c] << (c + 1 < W ? ' ' : '\n');
    }
}

int cmd_sample(const Globals& g, const SampleArgs& args) {
    Checkpoint ckpt;
    try {
        ckpt = load_checkpoint(args.checkpoint);
    } catch (const std::runtime_error& e) {
        throw UsageError(e.what());
    }
    TrainConfig cfg;
    DenoiserParams params;
    try {
        params = restore_model(ckpt, &cfg);
    } catch (const std::exception& e) {
        throw UsageError("checkpoint " + args.checkpoint + ": " + e.what());
    }
    if (args.cfg_weight) cfg.sampling.cfg_weight = *args.cfg_weight;
    if (args.steps) cfg.sampling.steps = *args.steps;
    try {
        if (args.method) cfg.sampling.method = parse_sampler_kind(*args.method);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (args.count == 0) throw UsageError("--count must be positive");
    const int null_label = params.config.null_class();
    std::vector<int> labels;
    if (args.unconditional) {
        labels.assign(args.count, null_label);
    } else if (args.label) {
        if (*args.label < 0 || *args.label >= null_label) {
            throw UsageError("--class must lie in [0, " + std::to_string(null_label - 1) + "]");
        }
        labels.assign(args.count, *args.label);
    } else {
        labels = balanced_labels(args.count, cfg.data.classes);
    }
    const std::uint64_t seed = resolve_seed(g, cfg.seed);
    Tensor<double> samples;
    try {
        samples = generate(params, cfg, labels, seed);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    auto os = open_output(args.out);
    if (cfg.data.kind == DatasetKind::mixture2d) {
        os << "x,y\n" << std::setprecision(17);
        for (std::size_t i = 0; i < samples.dim(0); ++i) os << samples[2 * i] << ',' << samples[2 * i + 1] << '\n';
    } else {
        write_pgm(os, samples, cfg.data.height(), cfg.data.width());
    }
    std::cout << "wrote " << samples.dim(0) << " samples (" << to_string(cfg.sampling.method) << ", "
              << cfg.sampling.steps << " steps, cfg weight " << cfg.sampling.cfg_weight << ") to " << args.out << '\n';
    return kOk;
}

// --- ablate ----------------------------------------------------------------

int cmd_ablate(const Globals& g, const std::string& config_path, const std::string& out) {
    RunConfig cfg = read_config(config_path);
    if (seed_given(g)) cfg.train.seed = resolve_seed(g, cfg.train.seed);
    std::cout << "degree ablation at budget k*e = " << cfg.ablation.budget << ", " << cfg.train.steps
              << " steps per row\n";
    std::vector<AblationRow> rows;
    try {
        rows = run_ablation(
            cfg.train, cfg.ablation, [](const std::string& notice) { std::cout << "  notice: " << notice << '\n'; },
            [](const AblationRow& r) {
                std::cout << "  degree " << r.degree << " expand " << std::setw(2) << r.expand << "  pom params "
                          << r.pom_params << "  final loss " << r.final_loss << "  energy distance "
                          << r.energy_distance << '\n'
                          << std::flush;
            });
    } catch (const TrainingDiverged& e) {
        std::cout << "FAILED: " << e.what() << '\n';
        return kFailed;
    }
    auto os = open_output(out);
    write_ablation_csv(os, rows);
    std::cout << "wrote " << rows.size() << " rows to " << out << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Polynomial mixer toolkit: property checks, gradient checks, benchmarks and toy diffusion runs"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Random seed (falls back to POM_SEED, then 0)");
    app.add_option("--threads", g.threads, "Worker threads for matrix products")->check(CLI::PositiveNumber);
    app.add_option("--inject-fault", g.fault)->group("");

    auto* check = app.add_subcommand("check", "Run the property suites");

    auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
    std::string module;
    double grad_tol = suites::kGradTolerance;
    grad->add_option("--module", module, "pom, image_block or video_block")->required();
    grad->add_option("--tol", grad_tol, "Maximum relative error");

    auto* bench_cmd = app.add_subcommand("bench", "Time pom and mha over a sequence-length sweep");
    BenchArgs bargs;
    bench_cmd->add_option("--mechanism", bargs.mechanism, "pom, mha or both")->capture_default_str();
    bench_cmd->add_option("--pass", bargs.pass, "forward or forward_backward")->capture_default_str();
    bench_cmd->add_option("--seq-lens", bargs.seq_lens, "Ascending token counts")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--batch", bargs.config.batch)->capture_default_str();
    bench_cmd->add_option("--d", bargs.config.d, "Model width")->capture_default_str();
    bench_cmd->add_option("--heads", bargs.config.heads, "Attention heads")->capture_default_str();
    bench_cmd->add_option("--degree", bargs.config.degree, "Mixer degree")->capture_default_str();
    bench_cmd->add_option("--expand", bargs.config.expand, "Mixer expansion")->capture_default_str();
    bench_cmd->add_option("--repeats", bargs.config.repeats, "Measured repeats (>= 10)")->capture_default_str();
    bench_cmd->add_option("--warmup", bargs.config.warmup, "Warmup iterations (>= 3)")->capture_default_str();
    bench_cmd->add_option("--out", bargs.out, "CSV output path");
    bench_cmd->add_flag("--assert", bargs.assert_slopes,
                        "Exit 1 unless the pom slope is in [0.8, 1.3], the mha slope is >= 1.7 and a crossover exists");

    auto* train_cmd = app.add_subcommand("train", "Train a toy denoiser");
    std::string config_path, out_dir = "run";
    bool no_eval = false;
    std::size_t log_every = 100;
    train_cmd->add_option("config", config_path, "Config file")->required();
    train_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
    train_cmd->add_flag("--no-eval", no_eval, "Skip the sample-quality evaluation");
    train_cmd->add_option("--log-every", log_every, "Print every N steps (0 = quiet)")->capture_default_str();

    auto* sample_cmd = app.add_subcommand("sample", "Draw samples from a trained checkpoint");
    SampleArgs sargs;
    sample_cmd->add_option("checkpoint", sargs.checkpoint, "Checkpoint file")->required();
    sample_cmd->add_option("--out", sargs.out, "Output file (CSV for 2D data, PGM for patterns)")->required();
    sample_cmd->add_option("--count", sargs.count)->capture_default_str();
    sample_cmd->add_option("--class", sargs.label, "Only this class (default: balanced over classes)");
    sample_cmd->add_flag("--unconditional", sargs.unconditional, "Use the null condition for every sample");
    sample_cmd->add_option("--cfg-weight", sargs.cfg_weight, "Guidance weight (0 = unconditional)");
    sample_cmd->add_option("--method", sargs.method, "euler, heun or ddim");
    sample_cmd->add_option("--steps", sargs.steps, "Sampler steps");

    auto* ablate_cmd = app.add_subcommand("ablate", "Degree ablation at a fixed degree*expand budget");
    std::string ablate_out = "ablation.csv";
    ablate_cmd->add_option("config", config_path, "Config file")->required();
    ablate_cmd->add_option("--out", ablate_out, "CSV output path")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }
    if (seed_opt->count() > 0) g.seed = seed_value;

    try {
        diag::inject_fault(diag::parse_fault(g.fault));
        Eigen::setNbThreads(g.threads);
        if (check->parsed()) return cmd_check(g);
        if (grad->parsed()) return cmd_gradcheck(g, module, grad_tol);
        if (bench_cmd->parsed()) return cmd_bench(g, bargs);
        if (train_cmd->parsed()) return cmd_train(g, config_path, out_dir, !no_eval, log_every);
        if (sample_cmd->parsed()) return cmd_sample(g, sargs);
        if (ablate_cmd->parsed()) return cmd_ablate(g, config_path, ablate_out);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailed;
    }
    return kUsage;
}
