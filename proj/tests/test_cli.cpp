#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

// Runs the CLI with `args`, stdout and stderr merged.
Run pom(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + POM_CLI_PATH + std::string(" ") + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / "pom_cli_test" / name;
    fs::create_directories(p.parent_path());
    return p;
}

std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string strip_timings(const std::string& s) { return std::regex_replace(s, std::regex(", [0-9.]+ s"), ""); }

fs::path write_config(const std::string& name, const std::string& text) {
    const auto p = scratch(name);
    std::ofstream(p) << text;
    return p;
}

const char* kTinyConfig =
    "# tiny run\nsteps = 15\nbatch = 16\ndim = 8\ndepth = 1\neval_samples = 256\nsample_steps = 3\n";

}  // namespace

TEST(Cli, CheckPassesOnCleanBuild) {
    const auto r = pom("check");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("all 5 suites passed"), std::string::npos);
}

TEST(Cli, CheckNamesTheBrokenSuite) {
    const auto r = pom("--inject-fault select_sign_flip check");
    EXPECT_EQ(r.code, 1) << r.out;
    EXPECT_NE(r.out.find("FAILED: equivariance suite"), std::string::npos) << r.out;
}

TEST(Cli, CheckIsDeterministicUnderSeed) {
    const auto a = pom("check --seed 7"), b = pom("--seed 7 check");
    EXPECT_EQ(a.code, 0);
    EXPECT_EQ(strip_timings(a.out), strip_timings(b.out));
    EXPECT_NE(a.out.find("seed 7"), std::string::npos);
    const auto env = pom("check", "POM_SEED=7");
    EXPECT_EQ(strip_timings(env.out), strip_timings(a.out));
}

TEST(Cli, GradcheckPassesAndCatchesBrokenBackward) {
    for (const char* m : {"pom", "image_block", "video_block"}) {
        const auto ok = pom(std::string("gradcheck --module ") + m);
        EXPECT_EQ(ok.code, 0) << ok.out;
        const auto bad = pom(std::string("--inject-fault sigmoid_backward_off gradcheck --module ") + m);
        EXPECT_EQ(bad.code, 1) << bad.out;
        EXPECT_NE(bad.out.find("FAILED: gradient of "), std::string::npos) << bad.out;
    }
    EXPECT_EQ(pom("gradcheck --module pom --seed 3").out, pom("gradcheck --module pom --seed 3").out);
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(pom("").code, 2);
    EXPECT_EQ(pom("frobnicate").code, 2);
    EXPECT_EQ(pom("gradcheck").code, 2);
    EXPECT_EQ(pom("gradcheck --module mlp").code, 2);
    EXPECT_EQ(pom("bench --seq-lens 64,32,128,256").code, 2);
    EXPECT_EQ(pom("bench --seq-lens 32,64,128").code, 2);
    EXPECT_EQ(pom("bench --repeats 5").code, 2);
    EXPECT_EQ(pom("check", "POM_SEED=abc").code, 2);
}

TEST(Cli, MissingConfigNamesThePath) {
    const auto r = pom("train /no/such/run.cfg");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("/no/such/run.cfg"), std::string::npos) << r.out;
    const auto bad = write_config("bad.cfg", "steps = 10\n\nlearning_rate = 3\n");
    const auto b = pom("train " + bad.string());
    EXPECT_EQ(b.code, 2);
    EXPECT_NE(b.out.find("line 3"), std::string::npos) << b.out;
}

TEST(Cli, BenchWritesCsvAndFits) {
    const auto csv = scratch("bench.csv");
    const auto r = pom("bench --seq-lens 16,32,64,128 --batch 1 --d 16 --heads 2 --repeats 10 --out " + csv.string());
    EXPECT_EQ(r.code, 0) << r.out;
    std::istringstream is(read(csv));
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "mechanism,pass,seq_len,batch,d,repeats,mean_seconds,std_seconds");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 8u);
    EXPECT_NE(r.out.find("pom slope"), std::string::npos);
    EXPECT_NE(r.out.find("mha slope"), std::string::npos);
}

TEST(Cli, TrainSampleRoundTrip) {
    const auto cfg = write_config("tiny.cfg", kTinyConfig);
    const auto dir = scratch("run");
    const auto r = pom("train " + cfg.string() + " --no-eval --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.out;
    const std::string metrics = read(dir / "metrics.csv");
    EXPECT_EQ(metrics.substr(0, metrics.find('\n')), "step,loss,lr,wall_ms");
    ASSERT_TRUE(fs::exists(dir / "checkpoint.pom"));

    const std::string ckpt = (dir / "checkpoint.pom").string();
    const auto guided = scratch("w0.csv"), uncond = scratch("uncond.csv");
    ASSERT_EQ(pom("sample " + ckpt + " --count 64 --cfg-weight 0 --out " + guided.string()).code, 0);
    ASSERT_EQ(pom("sample " + ckpt + " --count 64 --unconditional --out " + uncond.string()).code, 0);
    EXPECT_EQ(read(guided), read(uncond));

    const auto a = scratch("a.csv"), b = scratch("b.csv");
    ASSERT_EQ(pom("sample " + ckpt + " --count 64 --seed 5 --out " + a.string()).code, 0);
    ASSERT_EQ(pom("sample " + ckpt + " --count 64 --seed 5 --out " + b.string()).code, 0);
    EXPECT_EQ(read(a), read(b));

    const auto m = pom("sample " + ckpt + " --method ddim --out " + scratch("ddim.csv").string());
    EXPECT_EQ(m.code, 2);
    EXPECT_NE(m.out.find("ddim"), std::string::npos);
    EXPECT_EQ(pom("sample " + (dir / "missing.pom").string() + " --out x.csv").code, 2);
}

TEST(Cli, TrainingIsByteStableApartFromTimings) {
    const auto cfg = write_config("stable.cfg", kTinyConfig);
    const auto d1 = scratch("stable1"), d2 = scratch("stable2");
    ASSERT_EQ(pom("train " + cfg.string() + " --no-eval --out " + d1.string()).code, 0);
    ASSERT_EQ(pom("train " + cfg.string() + " --no-eval --out " + d2.string()).code, 0);
    EXPECT_EQ(read(d1 / "checkpoint.pom"), read(d2 / "checkpoint.pom"));
    const auto drop_wall = [](const std::string& csv) { return std::regex_replace(csv, std::regex(",[^,\n]*\n"), "\n"); };
    EXPECT_EQ(drop_wall(read(d1 / "metrics.csv")), drop_wall(read(d2 / "metrics.csv")));
}

TEST(Cli, AblateEmitsAcceptedRows) {
    const auto cfg = write_config("ablate.cfg", std::string(kTinyConfig) + "ablation_degrees = 1,2,5,6\n");
    const auto csv = scratch("ablation.csv");
    const auto r = pom("ablate " + cfg.string() + " --out " + csv.string());
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("skipping degree 5"), std::string::npos);
    std::istringstream is(read(csv));
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "degree,expand,pom_params,final_loss,energy_distance");
    std::vector<std::string> rows;
    while (std::getline(is, line)) rows.push_back(line.substr(0, line.find(',', line.find(',') + 1)));
    EXPECT_EQ(rows, (std::vector<std::string>{"1,12", "2,6", "6,2"}));
}
