#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <unistd.h>

#include "beamcast/binary_io.hpp"
#include "beamcast/cli/checkpoint.hpp"
#include "beamcast/cli/cli.hpp"
#include "beamcast/cli/config.hpp"
#include "beamcast/errors.hpp"
#include "beamcast/harness/report.hpp"

namespace fs = std::filesystem;
using namespace beamcast;
using namespace beamcast::cli;
using beamcast::io::read_file;
using beamcast::io::write_file_atomic;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("beamcast_cli_" + std::string(info->name()) + "_" + std::to_string(getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }

    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    // 16 px images, Q = 4, plus a matching tiny model config.
    void make_tiny(const std::string& data = "data", int samples = 120)
    {
        ASSERT_EQ(run({"gen-data", "--out", path(data), "--samples", std::to_string(samples), "--seed", "5",
                       "--image-size", "16", "--num-beams", "4", "--num-antennas", "4"})
                      .code,
                  0);
    }

    std::string tiny_config(const std::string& train = R"("epochs": 3, "milestones": [2], "eval_every": 1)")
    {
        const std::string p = path("config.json");
        write_file_atomic(p, R"({"seed": 2, "model": {"image_size": 16, "conv_channels": [2, 3, 4, 6], "embed_dim": 8,
            "num_heads": 2, "cross_heads": 2, "num_beams": 4}, "train": {)" +
                                 train + "}}");
        return p;
    }

    fs::path dir_;
};

std::vector<std::uint8_t> bytes(const std::string& p) { return read_file(p); }

} // namespace

TEST_F(Cli, GenDataIsByteIdenticalAcrossRuns)
{
    for (const char* name : {"a", "b"}) {
        ASSERT_EQ(run({"gen-data", "--out", path(name), "--samples", "100", "--seed", "7", "--image-size", "16"}).code,
                  0);
    }
    EXPECT_EQ(bytes(path("a/manifest")), bytes(path("b/manifest")));
    EXPECT_EQ(bytes(path("a/samples.bin")), bytes(path("b/samples.bin")));
}

TEST_F(Cli, GenDataRecordsCodebookSize)
{
    const auto r = run({"gen-data", "--out", path("d"), "--samples", "20", "--image-size", "16", "--num-beams", "64"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(airsim::read_manifest(path("d")).num_beams, 64);
    EXPECT_NE(r.out.find("histogram"), std::string::npos);
}

TEST_F(Cli, GenDataRejectsBadInput)
{
    EXPECT_EQ(run({"gen-data", "--out", path("d"), "--samples", "0"}).code, 2);
    make_tiny("d");
    const auto again = run({"gen-data", "--out", path("d"), "--samples", "10", "--image-size", "16"});
    EXPECT_EQ(again.code, 2);
    EXPECT_NE(again.err.find("--force"), std::string::npos);
    EXPECT_EQ(run({"gen-data", "--out", path("d"), "--samples", "10", "--image-size", "16", "--force"}).code, 0);
    EXPECT_EQ(airsim::read_manifest(path("d")).n, 10U);
    const auto bad = run({"gen-data", "--out", path("e"), "--samples", "10", "--num-beams", "0"});
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.err.find("num_beams"), std::string::npos) << bad.err;
}

TEST_F(Cli, ConfigRejectsUnknownKeysAndWrongTypes)
{
    write_file_atomic(path("typo.json"), R"({"train": {"lrr": 0.1}})");
    auto r = run({"gen-data", "--out", path("d"), "--config", path("typo.json")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("train.lrr"), std::string::npos) << r.err;

    write_file_atomic(path("type.json"), R"({"model": {"num_heads": 2.5}})");
    r = run({"gen-data", "--out", path("d"), "--config", path("type.json")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("model.num_heads"), std::string::npos) << r.err;

    write_file_atomic(path("nested.json"), R"({"scene": {"camera": {"fov": 1.0}}})");
    r = run({"gen-data", "--out", path("d"), "--config", path("nested.json")});
    EXPECT_NE(r.err.find("scene.camera.fov"), std::string::npos) << r.err;

    write_file_atomic(path("broken.json"), "{");
    EXPECT_EQ(run({"gen-data", "--out", path("d"), "--config", path("broken.json")}).code, 2);
    EXPECT_FALSE(fs::exists(path("d")));
}

TEST(RunConfig, JsonRoundTrip)
{
    RunConfig c;
    c.seed = 11;
    c.model = beamnet::ModelConfig::toy();
    c.train.lr = 3e-4;
    c.train.milestones = {10};
    c.scene.camera.tilt = 0.1;
    c.radio.nlos_power_ratio = 0.25;
    c.data_dir = "x";
    const auto text = to_json(c).dump();
    const RunConfig back = parse_run_config(nlohmann::json::parse(text));
    EXPECT_EQ(to_json(back).dump(), text);
    EXPECT_TRUE(back.model == c.model);
    EXPECT_EQ(back.train.seed, 11U);
}

TEST_F(Cli, UsageErrors)
{
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({"eval", "--data", "x"}).code, 2);
    EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, TrainEmitsLoadableCheckpointAndMetrics)
{
    make_tiny();
    const auto r = run({"train", "--data", path("data"), "--config", tiny_config(), "--out", path("run")});
    ASSERT_EQ(r.code, 0) << r.err;
    const Checkpoint ckpt = load_checkpoint(path("run/checkpoint.bin"));
    EXPECT_EQ(ckpt.epoch, 3);
    EXPECT_EQ(ckpt.train.seed, 2U);
    beamnet::BeamNet<float> model(ckpt.model, 0);
    EXPECT_NO_THROW(restore_model(ckpt, model));

    const auto csv = bytes(path("run/metrics.csv"));
    const std::string text(csv.begin(), csv.end());
    EXPECT_EQ(text.rfind("epoch,lr,train_loss,top1,top3,top5\n1,", 0), 0U);
    EXPECT_NE(text.find("\n3,"), std::string::npos);
    EXPECT_TRUE(fs::exists(path("run/confusion.csv")));
    EXPECT_TRUE(fs::exists(path("run/summary.json")));
}

TEST_F(Cli, IdenticalInvocationsGiveIdenticalArtifacts)
{
    make_tiny();
    const auto cfg = tiny_config();
    for (const char* out : {"r1", "r2"}) {
        ASSERT_EQ(run({"train", "--data", path("data"), "--config", cfg, "--out", path(out)}).code, 0);
    }
    for (const char* f : {"checkpoint.bin", "metrics.csv", "summary.json", "confusion.csv"}) {
        EXPECT_EQ(bytes(path(std::string("r1/") + f)), bytes(path(std::string("r2/") + f))) << f;
    }
    ASSERT_EQ(run({"train", "--data", path("data"), "--config", cfg, "--out", path("r3"), "--seed", "9"}).code, 0);
    EXPECT_NE(bytes(path("r1/checkpoint.bin")), bytes(path("r3/checkpoint.bin")));
}

TEST_F(Cli, ResumeContinuesNumberingAndMatchesStraightRun)
{
    make_tiny();
    const auto cfg = tiny_config(R"("epochs": 4, "milestones": [1], "eval_every": 2)");
    ASSERT_EQ(run({"train", "--data", path("data"), "--config", cfg, "--out", path("straight")}).code, 0);
    ASSERT_EQ(run({"train", "--data", path("data"), "--config", cfg, "--out", path("split"), "--epochs", "2"}).code, 0);
    const auto r = run({"train", "--data", path("data"), "--resume", path("split/checkpoint.bin"), "--out",
                        path("split"), "--epochs", "4"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("resuming at epoch 3\nepoch 3/4", 0), 0U) << r.out;
    EXPECT_EQ(bytes(path("straight/checkpoint.bin")), bytes(path("split/checkpoint.bin")));
    EXPECT_EQ(bytes(path("straight/metrics.csv")), bytes(path("split/metrics.csv")));
}

TEST_F(Cli, TrainRejectsMismatchedData)
{
    make_tiny();
    write_file_atomic(path("q8.json"), R"({"model": {"image_size": 16, "conv_channels": [2, 3, 4, 6],
        "embed_dim": 8, "num_heads": 2, "cross_heads": 2, "num_beams": 8}, "train": {"epochs": 1, "milestones": []}})");
    const auto r = run({"train", "--data", path("data"), "--config", path("q8.json"), "--out", path("run")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("num_beams"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(path("run/checkpoint.bin")));
}

TEST_F(Cli, NonFiniteLossExitsThree)
{
    make_tiny();
    const auto r = run({"train", "--data", path("data"), "--config",
                        tiny_config(R"("epochs": 2, "milestones": [], "lr": 1e38)"), "--out", path("run")});
    EXPECT_EQ(r.code, 3) << r.out << r.err;
    EXPECT_NE(r.err.find("epoch"), std::string::npos);
}

TEST_F(Cli, EvalIsDeterministicAndExhaustiveKIsOne)
{
    make_tiny();
    ASSERT_EQ(run({"train", "--data", path("data"), "--config", tiny_config(), "--out", path("run")}).code, 0);
    const std::vector<std::string> args{"eval", "--checkpoint", path("run/checkpoint.bin"), "--data", path("data"),
                                        "--topk", "1,4", "--confusion-out", path("c1.csv")};
    const auto a = run(args);
    auto args2 = args;
    args2.back() = path("c2.csv");
    const auto b = run(args2);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(bytes(path("c1.csv")), bytes(path("c2.csv")));
    EXPECT_NE(a.out.find("top-4   1.0000"), std::string::npos) << a.out;
    // the checkpoint's final evaluation is the same held-out split
    EXPECT_EQ(bytes(path("run/confusion.csv")), bytes(path("c1.csv")));
}

TEST_F(Cli, EvalTopKEqualToQIsOneAtFullCodebookSize)
{
    ASSERT_EQ(run({"gen-data", "--out", path("data"), "--samples", "60", "--image-size", "16", "--num-beams", "64",
                   "--num-antennas", "16"})
                  .code,
              0);
    write_file_atomic(path("q64.json"), R"({"model": {"image_size": 16, "conv_channels": [2, 3, 4, 6],
        "embed_dim": 8, "num_heads": 2, "cross_heads": 2, "num_beams": 64}, "train": {"epochs": 1, "milestones": []}})");
    ASSERT_EQ(run({"train", "--data", path("data"), "--config", path("q64.json"), "--out", path("run")}).code, 0);
    const auto r = run({"eval", "--checkpoint", path("run/checkpoint.bin"), "--data", path("data"), "--topk", "64"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("top-64  1.0000"), std::string::npos) << r.out;
}

TEST_F(Cli, CorruptCheckpointsExitTwoWithoutOutputs)
{
    make_tiny();
    ASSERT_EQ(run({"train", "--data", path("data"), "--config", tiny_config(R"("epochs": 1, "milestones": [])"),
                   "--out", path("run")})
                  .code,
              0);
    const auto good = bytes(path("run/checkpoint.bin"));

    auto truncated = good;
    truncated.resize(good.size() / 2);
    auto bad_magic = good;
    bad_magic[0] = 'X';
    auto bad_version = good;
    bad_version[8] = 99;
    auto flipped = good;
    flipped[good.size() / 2] ^= 0x10;
    for (const auto& [name, content] : {std::pair{"truncated", truncated}, std::pair{"magic", bad_magic},
                                        std::pair{"version", bad_version}, std::pair{"flipped", flipped}}) {
        write_file_atomic(path(name), content);
        const auto r = run({"eval", "--checkpoint", path(name), "--data", path("data"), "--confusion-out",
                            path(std::string(name) + ".csv")});
        EXPECT_EQ(r.code, 2) << name;
        EXPECT_FALSE(fs::exists(path(std::string(name) + ".csv"))) << name;
        EXPECT_THROW(deserialize(content), FormatError) << name;
    }
}

TEST_F(Cli, CheckpointRoundTripIsCanonical)
{
    make_tiny();
    ASSERT_EQ(run({"train", "--data", path("data"), "--config", tiny_config(R"("epochs": 1, "milestones": [])"),
                   "--out", path("run")})
                  .code,
              0);
    const auto first = bytes(path("run/checkpoint.bin"));
    const Checkpoint c = deserialize(first);
    EXPECT_EQ(serialize(c), first);
    save_checkpoint(path("again.bin"), load_checkpoint(path("run/checkpoint.bin")));
    EXPECT_EQ(bytes(path("again.bin")), first);
}

TEST_F(Cli, SingleArmSweepMatchesTrain)
{
    make_tiny();
    const auto cfg = tiny_config(R"("epochs": 2, "milestones": [], "lr": 0.0005)");
    ASSERT_EQ(run({"train", "--data", path("data"), "--config", cfg, "--out", path("run")}).code, 0);
    const auto r = run({"sweep", "--data", path("data"), "--config", cfg, "--out", path("sweep"), "--lrs", "5e-4"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"checkpoint.bin", "metrics.csv", "summary.json", "confusion.csv"}) {
        EXPECT_EQ(bytes(path("run/") + f), bytes(path("sweep/lr_" + harness::format_number(5e-4) + "/") + f)) << f;
    }
}

TEST_F(Cli, SweepTableHasOneRowPerDistinctRate)
{
    make_tiny();
    const auto cfg = tiny_config(R"("epochs": 1, "milestones": [])");
    const auto r = run({"sweep", "--data", path("data"), "--config", cfg, "--out", path("sweep"), "--lrs",
                        "1e-3,1e-4,1e-5,1e-4", "--threads", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("duplicate learning rate"), std::string::npos);
    const auto csv = bytes(path("sweep/sweep.csv"));
    const std::string text(csv.begin(), csv.end());
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
    EXPECT_EQ(text.rfind("lr,top1,top3,status\n0.001,", 0), 0U) << text;
    for (const char* arm : {"lr_0.001", "lr_1e-04", "lr_1e-05"}) {
        EXPECT_TRUE(fs::exists(dir_ / "sweep" / arm / "checkpoint.bin")) << arm;
    }
}
