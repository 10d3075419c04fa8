#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "conic_purge/io.hpp"

namespace fs = std::filesystem;
using namespace conic_purge;

namespace {

const std::string kCli = CONIC_PURGE_CLI;
const std::string kSamples = CONIC_PURGE_SAMPLES;

class Cli : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / ("conic_purge_cli_" + std::to_string(::getpid()) + "_" + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string path(const std::string& name) const { return (dir / name).string(); }

    // Runs the CLI; stdout goes to `stdout_file` in the temp dir.
    int run(const std::string& args, const std::string& stdout_file = "stdout.txt") const {
        const std::string cmd = kCli + " " + args + " > " + path(stdout_file) + " 2> " + path("stderr.txt");
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string read(const std::string& name) const {
        std::ifstream in(path(name), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    void write(const std::string& name, const std::string& text) const {
        std::ofstream(path(name), std::ios::binary) << text;
    }

    PointTable table(const std::string& name) const {
        std::ifstream in(path(name));
        return read_point_table(in);
    }

    Json json(const std::string& name) const {
        std::ifstream in(path(name));
        return parse_json(in, name);
    }
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

} // namespace

TEST_F(Cli, GenerateTypical) {
    ASSERT_EQ(run("generate " + kSamples + "/configs/typical.json -o " + path("d.csv")), 0);
    const auto t = table("d.csv");
    EXPECT_EQ(t.size(), 150u);
    EXPECT_EQ(t.detection_labels().outlier_count(), 50u);
    ASSERT_EQ(run("generate " + kSamples + "/configs/typical.json", "d2.csv"), 0);
    EXPECT_EQ(read("d.csv"), read("d2.csv"));
}

TEST_F(Cli, GenerateMinimalNoOutliers) {
    write("c.json", R"({"N":12,"M":0})");
    ASSERT_EQ(run("generate " + path("c.json") + " -o " + path("d.csv")), 0);
    const auto t = table("d.csv");
    EXPECT_EQ(t.size(), 12u);
    EXPECT_EQ(t.detection_labels().outlier_count(), 0u);
}

TEST_F(Cli, GenerateRejectsBadConfig) {
    write("c.json", R"({"N":12,"colour":"red"})");
    EXPECT_EQ(run("generate " + path("c.json")), 1);
    EXPECT_NE(read("stderr.txt").find("error:"), std::string::npos);
    write("c2.json", "{broken");
    EXPECT_EQ(run("generate " + path("c2.json")), 1);
    EXPECT_EQ(run("generate " + path("missing.json")), 1);
    EXPECT_EQ(run("generate"), 1);
}

TEST_F(Cli, NoiselessEllipseRecovered) {
    // 40 exact points on a rotated ellipse, written with full precision.
    const double cx = 1, cy = -2, a = 4, b = 1.5, th = 0.4;
    std::string csv = "x,y\n";
    for (int i = 0; i < 40; ++i) {
        const double phi = 2 * std::numbers::pi * i / 40.0;
        const double u = a * std::cos(phi), v = b * std::sin(phi);
        csv += format_number(cx + std::cos(th) * u - std::sin(th) * v) + "," +
               format_number(cy + std::sin(th) * u + std::cos(th) * v) + "\n";
    }
    write("e.csv", csv);
    ASSERT_EQ(run("detect " + path("e.csv") + " --stage both -o " + path("l.csv") + " --model-out " + path("m.json")),
              0);
    const auto labels = table("l.csv").detection_labels();
    EXPECT_EQ(labels.outlier_count(), 0u);
    const auto m = json("m.json");
    EXPECT_EQ(m["type"], "ellipse");
    EXPECT_NEAR(m["center"][0].get<double>(), cx, 1e-6);
    EXPECT_NEAR(m["center"][1].get<double>(), cy, 1e-6);
    EXPECT_NEAR(m["semi_axes"][0].get<double>(), a, 1e-6);
    EXPECT_NEAR(m["semi_axes"][1].get<double>(), b, 1e-6);
    EXPECT_NEAR(m["rotation"].get<double>(), th, 1e-6);
    const auto rec = json("stdout.txt");
    EXPECT_EQ(rec["labels"]["outliers"], 0);
}

TEST_F(Cli, DetectTypicalWithTruth) {
    ASSERT_EQ(run("generate " + kSamples + "/configs/typical.json -o " + path("d.csv")), 0);
    ASSERT_EQ(run("detect " + path("d.csv") + " --truth " + path("d.csv") + " --truth-model " + kSamples +
                  "/configs/ellipse.json"),
              0);
    const auto rec = json("stdout.txt");
    EXPECT_EQ(rec["command"], "detect");
    EXPECT_EQ(rec["input"]["rows"], 150);
    EXPECT_GE(rec["metrics"]["precision"].get<double>(), 0.9);
    EXPECT_GE(rec["metrics"]["recall"].get<double>(), 0.9);
    EXPECT_LE(rec["metrics"]["nonoverlap_ratio"].get<double>(), 0.05);
}

TEST_F(Cli, StagesCompose) {
    ASSERT_EQ(run("generate " + kSamples + "/configs/typical.json -o " + path("d.csv")), 0);
    ASSERT_EQ(run("detect " + path("d.csv") + " --stage proximity -o " + path("p.csv")), 0);
    ASSERT_EQ(run("detect " + path("p.csv") + " --stage model -o " + path("pm.csv") + " --model-out " +
                  path("pm.json")),
              0);
    ASSERT_EQ(run("detect " + path("d.csv") + " --stage both -o " + path("b.csv") + " --model-out " + path("b.json")),
              0);
    EXPECT_EQ(read("pm.csv"), read("b.csv"));
    EXPECT_EQ(read("pm.json"), read("b.json"));
    // Proximity-only output tags every row with the proximity stage.
    const auto p = table("p.csv").detection_labels();
    for (auto s : p.stages) EXPECT_EQ(s, Stage::Proximity);
    EXPECT_EQ(run("detect " + path("d.csv") + " --stage proximity --model-out " + path("x.json")), 1);
}

TEST_F(Cli, DetectIsByteDeterministic) {
    ASSERT_EQ(run("generate " + kSamples + "/configs/typical.json -o " + path("d.csv")), 0);
    const std::string args = "detect " + path("d.csv") + " --seed 7 --dump-spectrum " + path("s.csv") +
                             " --dump-eligible " + path("e.csv") + " -o " + path("l.csv") + " --model-out " +
                             path("m.json") + " --timing";
    ASSERT_EQ(run(args, "r1.txt"), 0);
    const auto s1 = read("s.csv"), e1 = read("e.csv"), l1 = read("l.csv"), m1 = read("m.json");
    ASSERT_EQ(run(args, "r2.txt"), 0);
    EXPECT_EQ(read("r1.txt"), read("r2.txt"));
    EXPECT_EQ(read("s.csv"), s1);
    EXPECT_EQ(read("e.csv"), e1);
    EXPECT_EQ(read("l.csv"), l1);
    EXPECT_EQ(read("m.json"), m1);
    EXPECT_EQ(count_lines(s1), 151u);
    EXPECT_EQ(s1.substr(0, s1.find('\n')), "index,eigenvalue");
    EXPECT_EQ(e1.substr(0, e1.find('\n')), "eigenvalue,hf_measure,flagged_count");
    EXPECT_NE(read("stderr.txt").find("ms"), std::string::npos);
}

TEST_F(Cli, DetectEllipsoid) {
    ASSERT_EQ(run("generate " + kSamples + "/configs/ellipsoid.json -o " + path("d.csv")), 0);
    ASSERT_EQ(run("detect " + path("d.csv") + " --model-out " + path("m.json")), 0);
    const auto m = json("m.json");
    EXPECT_EQ(m["type"], "ellipsoid");
    EXPECT_EQ(m["orientation"].size(), 9u);
    EXPECT_EQ(json("stdout.txt")["input"]["dimension"], 3);
}

TEST_F(Cli, Baselines) {
    ASSERT_EQ(run("generate " + kSamples + "/configs/typical.json -o " + path("d.csv")), 0);
    ASSERT_EQ(run("detect " + path("d.csv") + " --baseline ransac --k 200"), 0);
    EXPECT_EQ(json("stdout.txt")["pipeline"], "ransac");
    ASSERT_EQ(run("detect " + path("d.csv") + " --baseline no_elimination"), 0);
    EXPECT_EQ(json("stdout.txt")["labels"]["outliers"], 0);
    EXPECT_EQ(run("detect " + path("d.csv") + " --baseline magic"), 1);
}

TEST_F(Cli, NumericalFailureExitsTwo) {
    std::string csv = "x,y\n";
    for (int i = 0; i < 20; ++i) csv += "1,1\n";
    write("same.csv", csv);
    EXPECT_EQ(run("detect " + path("same.csv")), 2);
    EXPECT_NE(read("stderr.txt").find("error:"), std::string::npos);
}

TEST_F(Cli, DetectRejectsBadInput) {
    write("bad.csv", "x,y\n1,2\n3,oops\n");
    EXPECT_EQ(run("detect " + path("bad.csv")), 1);
    write("model.csv", "x,y\n1,2\n");
    EXPECT_EQ(run("detect " + path("model.csv") + " --stage model"), 1);
    EXPECT_EQ(run("detect " + path("missing.csv")), 1);
    write("ok.csv", "1,2\n3,4\n");
    EXPECT_EQ(run("detect " + path("ok.csv") + " --gamma -1"), 1);
}

TEST_F(Cli, SweepEmptyGrid) {
    write("s.json", R"({"parameter":"M","grid":[],"trials":2})");
    ASSERT_EQ(run("sweep " + path("s.json") + " -o " + path("out.csv")), 0);
    EXPECT_EQ(read("out.csv"), "param_value,pipeline,mean_error,median_error,p90_error,mean_precision,mean_recall\n");
}

TEST_F(Cli, SweepDeterministicAcrossThreads) {
    write("s.json", R"({"base":{"sigma0":0.1,"sigma1":3},"parameter":"M","grid":[10,40],"trials":3,
                        "pipelines":["two_stage","no_elimination","ransac"],"ransac":{"iterations":100},"master_seed":2})");
    ASSERT_EQ(run("sweep " + path("s.json") + " --threads 1 -o " + path("a.csv")), 0);
    ASSERT_EQ(run("sweep " + path("s.json") + " --threads 4 -o " + path("b.csv")), 0);
    EXPECT_EQ(read("a.csv"), read("b.csv"));
    EXPECT_EQ(count_lines(read("a.csv")), 7u);
}

TEST_F(Cli, SweepRejectsBadSpec) {
    write("s.json", R"({"parameter":"M","grid":[1.5]})");
    EXPECT_EQ(run("sweep " + path("s.json")), 1);
    write("s2.json", R"({"parameter":"M","grid":[10],"pipelines":["best"]})");
    EXPECT_EQ(run("sweep " + path("s2.json")), 1);
}
