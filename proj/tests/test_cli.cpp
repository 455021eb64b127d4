#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "cullkit/cullkit.hpp"

using namespace cullkit;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int status = -1;
    std::string out;
};

CliRun run(const std::string& args)
{
    const std::string cmd = std::string("'") + CULLKIT_CLI_PATH + "' " + args + " 2>/dev/null";
    CliRun r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t got = 0;
    while ((got = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
    const int st = ::pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

class TempDir {
public:
    TempDir()
    {
        static int n = 0;
        path_ = fs::temp_directory_path() / ("cullkit_cli_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
        fs::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

CameraIntrinsics camera() { return CameraIntrinsics::make(480, 480, 208, 208, 416, 416); }

/// One class, `n` images alternating train/test, predictions under pred/.
struct Dataset {
    MeshModel mesh = make_box_mesh({0.1, 0.08, 0.06}, 2);
    std::vector<Pose> gt;
    fs::path index;
};

Dataset make_dataset(const fs::path& dir, int n, std::uint64_t seed)
{
    Dataset d;
    fs::create_directories(dir / "poses");
    write_ply_ascii(d.mesh, dir / "box.ply");
    write_intrinsics(camera(), dir / "camera.txt");
    std::mt19937_64 rng(seed);
    nlohmann::json images = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
        d.gt.push_back(sample_pose(d.mesh, camera(), {}, rng));
        const std::string id = "img" + std::to_string(i);
        write_pose_annotation(d.gt.back(), dir / "poses" / (id + ".txt"));
        images.push_back({{"id", id}, {"pose", "poses/" + id + ".txt"}, {"split", i % 2 ? "test" : "train"}});
    }
    nlohmann::json j{{"version", 1},
                     {"intrinsics", "camera.txt"},
                     {"classes", {{{"id", 3}, {"name", "box"}, {"mesh", "box.ply"}, {"symmetric", false}, {"images", images}}}}};
    d.index = dir / "index.json";
    std::ofstream(d.index) << j.dump(2);
    return d;
}

void write_predictions(const Dataset& d, const fs::path& dir, double dz)
{
    fs::create_directories(dir);
    for (std::size_t i = 0; i < d.gt.size(); ++i) {
        Pose p = d.gt[i];
        p.translation.z += dz;
        write_pose_annotation(p, dir / ("img" + std::to_string(i) + ".txt"));
    }
}

} // namespace

TEST(Cli, ExitCodes)
{
    EXPECT_EQ(run("").status, 1);
    EXPECT_EQ(run("--help").status, 0);
    EXPECT_EQ(run("no-such-command").status, 1);
    EXPECT_EQ(run("simulate --out x").status, 1);
    TempDir t;
    EXPECT_EQ(run("simulate --config " + q(t.path() / "missing.toml") + " --out " + q(t.path() / "o")).status, 2);
    std::ofstream(t.path() / "bad.toml") << "trials = 0\n";
    EXPECT_EQ(run("simulate --config " + q(t.path() / "bad.toml") + " --out " + q(t.path() / "o")).status, 2);
    EXPECT_EQ(run("report --in " + q(t.path())).status, 2);
}

TEST(Cli, SimulateIsByteIdenticalAndReportRenders)
{
    TempDir t;
    const std::string cfg = q(fs::path(CULLKIT_CONFIG_DIR) / "smoke.toml");
    ASSERT_EQ(run("simulate --config " + cfg + " --out " + q(t.path() / "a") + " --threads 1").status, 0);
    ASSERT_EQ(run("--threads 3 simulate --config " + cfg + " --out " + q(t.path() / "b")).status, 0);
    ASSERT_EQ(run("simulate --config " + cfg + " --out " + q(t.path() / "c") + " --seed 99").status, 0);
    for (const char* f : {"summary.csv", "k_curve.csv", "report.json", "trials.log"}) {
        ASSERT_TRUE(fs::exists(t.path() / "a" / f)) << f;
        EXPECT_EQ(slurp(t.path() / "a" / f), slurp(t.path() / "b" / f)) << f;
    }
    EXPECT_NE(slurp(t.path() / "a" / "trials.log"), slurp(t.path() / "c" / "trials.log"));

    const CliRun r = run("report --in " + q(t.path() / "a"));
    ASSERT_EQ(r.status, 0);
    EXPECT_NE(r.out.find("summary.csv"), std::string::npos);
    EXPECT_NE(r.out.find("strategy"), std::string::npos);
    EXPECT_NE(r.out.find("ransac"), std::string::npos);
}

TEST(Cli, EvaluatePerfectPredictions)
{
    TempDir t;
    const Dataset d = make_dataset(t.path(), 8, 1);
    write_predictions(d, t.path() / "pred", 0.0);
    const CliRun r = run("evaluate --dataset " + q(d.index) + " --predictions " + q(t.path() / "pred") + " --out " +
                      q(t.path() / "rep"));
    ASSERT_EQ(r.status, 0) << r.out;
    const auto j = nlohmann::json::parse(slurp(t.path() / "rep" / "accuracy.json"));
    EXPECT_EQ(j["average"]["reproj_accuracy"].get<double>(), 100.0) << j.dump();
    EXPECT_EQ(j["average"]["addi_accuracy"].get<double>(), 100.0);
    EXPECT_EQ(j["classes"]["3"]["instances"].get<int>(), 4); // test split only
    EXPECT_TRUE(fs::exists(t.path() / "rep" / "accuracy.csv"));
    EXPECT_TRUE(fs::exists(t.path() / "rep" / "curves.csv"));

    fs::remove(t.path() / "pred" / "img3.txt");
    EXPECT_EQ(run("evaluate --dataset " + q(d.index) + " --predictions " + q(t.path() / "pred") + " --out " +
                  q(t.path() / "rep"))
                  .status,
              2);
}

TEST(Cli, CalibrateBiasThenEvaluate)
{
    TempDir t;
    const Dataset d = make_dataset(t.path(), 40, 2);
    write_predictions(d, t.path() / "pred", -0.01);
    const CliRun fit = run("calibrate-bias --dataset " + q(d.index) + " --predictions " + q(t.path() / "pred") +
                        " --bins 400 --out " + q(t.path() / "bias.json"));
    ASSERT_EQ(fit.status, 0);
    const BiasTable table = load_bias_table(t.path() / "bias.json");
    ASSERT_EQ(table.classes.count(3), 1u);
    EXPECT_NEAR(table.offset_for(3), 0.01, 1e-12);

    const std::string base = "evaluate --dataset " + q(d.index) + " --predictions " + q(t.path() / "pred");
    ASSERT_EQ(run(base + " --out " + q(t.path() / "raw")).status, 0);
    ASSERT_EQ(run(base + " --bias-table " + q(t.path() / "bias.json") + " --out " + q(t.path() / "fixed")).status, 0);
    const auto raw = nlohmann::json::parse(slurp(t.path() / "raw" / "accuracy.json"));
    const auto fixed = nlohmann::json::parse(slurp(t.path() / "fixed" / "accuracy.json"));
    EXPECT_LT(fixed["average"]["mean_addi"].get<double>(), 1e-9);
    EXPECT_GT(raw["average"]["mean_addi"].get<double>(), 0.009);
}

TEST(Cli, CullWithOracleMatchesLibrary)
{
    TempDir t;
    const Dataset d = make_dataset(t.path(), 1, 3);
    NoiseModel noise;
    noise.outlier_fraction = 0.3;
    noise.confidence_noise_sigma = 0.2;
    std::mt19937_64 rng(4);
    const SyntheticScene s = synthesize_scene(d.mesh, d.gt[0], camera(), GridSpec{}, noise, rng);
    std::ofstream(t.path() / "props.json") << proposals_to_json(s.proposals).dump();

    const CliRun r = run("cull --dataset " + q(d.index) + " --image-id img0 --proposals " + q(t.path() / "props.json") +
                      " --scorer oracle --k 10");
    ASSERT_EQ(r.status, 0);
    const auto j = nlohmann::json::parse(r.out);
    const auto kp3 = model_keypoints(d.mesh);
    const CullResult lib =
        cull_with_scorer(nullptr, d.mesh, camera(), kp3, s.proposals, 10, OracleScorer(d.mesh, d.gt[0], camera()));
    const auto& o = lib.selected.proposal.origin;
    EXPECT_EQ(j["grid"], nlohmann::json({o.scale, o.row, o.col}));
    EXPECT_NEAR(j["calibrated_confidence"].get<double>(), lib.selected.calibrated_confidence, 1e-12);
    EXPECT_EQ(j["candidates"].get<std::size_t>(), lib.candidates.size());
    EXPECT_EQ(j["scorer"], "oracle");
    for (const auto& c : lib.candidates) EXPECT_LE(c.calibrated_confidence, lib.selected.calibrated_confidence);

    EXPECT_EQ(run("cull --dataset " + q(d.index) + " --image-id nope --proposals " + q(t.path() / "props.json")).status, 2);
    EXPECT_EQ(run("cull --dataset " + q(d.index) + " --image-id img0 --proposals " + q(t.path() / "props.json") +
                  " --scorer magic")
                  .status,
              1);
}

TEST(Cli, RenderMaskMatchesLibrary)
{
    TempDir t;
    const Dataset d = make_dataset(t.path(), 1, 5);
    const CliRun r = run("render-mask --mesh " + q(t.path() / "box.ply") + " --pose " + q(t.path() / "poses" / "img0.txt") +
                      " --intrinsics " + q(t.path() / "camera.txt") + " --out " + q(t.path() / "m.pgm"));
    ASSERT_EQ(r.status, 0);
    const BinaryMask want = render_mask(load_ply(t.path() / "box.ply"), load_pose_annotation(t.path() / "poses" / "img0.txt").pose,
                                        load_intrinsics(t.path() / "camera.txt"));
    EXPECT_EQ(read_mask_pgm((t.path() / "m.pgm").string()), want);
}
