#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "latq/ar_head.hpp"
#include "latq/io.hpp"
#include "latq/npy.hpp"
#include "latq/quantizer.hpp"
#include "latq/sidecar.hpp"
#include "latq/stats.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("latq_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string file(const std::string& name) const { return (dir_ / name).string(); }

  CliResult run(const std::string& args) const {
    std::string out_path = file("_stdout"), err_path = file("_stderr");
    std::string cmd = std::string(LATQ_CLI_PATH) + " " + args + " > " + out_path +
                      " 2> " + err_path;
    int rc = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
  }

  static std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, GridPrintsClosedFormRecon) {
  CliResult r = run("grid --levels 2");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["B"].get<int>(), 2);
  EXPECT_NEAR(j["recon"][0].get<double>(), -0.7978845608028654, 1e-12);
  EXPECT_NEAR(j["recon"][1].get<double>(), 0.7978845608028654, 1e-12);
  EXPECT_EQ(j["boundaries"][0].get<std::string>(), "-inf");
  EXPECT_EQ(j["boundaries"][2].get<std::string>(), "inf");
}

TEST_F(CliTest, InvalidLevelsExitsOneWithExactMessage) {
  CliResult r = run("quantize --levels 1 --input " + file("a.npy") + " --output " +
                    file("b.npy"));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("B must be ≥ 2"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(file("b.npy")));
}

TEST_F(CliTest, UnknownFlagAndMissingSubcommandExitOne) {
  EXPECT_EQ(run("grid --bogus 3").exit_code, 1);
  EXPECT_EQ(run("").exit_code, 1);
  EXPECT_EQ(run("--help").exit_code, 0);
}

TEST_F(CliTest, MissingOrCorruptInputExitsTwo) {
  CliResult r = run("quantize --input " + file("absent.npy") + " --output " +
                    file("t.npy"));
  EXPECT_EQ(r.exit_code, 2);
  latq::atomic_write(file("garbage.npy"), "this is not an npy file at all");
  r = run("quantize --input " + file("garbage.npy") + " --output " + file("t.npy"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_FALSE(fs::exists(file("t.npy")));
}

TEST_F(CliTest, DequantizeWithoutSidecarExitsTwo) {
  latq::TokenTensor t(1, 2, 2, 2);
  latq::write_npy(file("tok.npy"), t);
  CliResult r = run("dequantize --input " + file("tok.npy") + " --output " +
                    file("rec.npy"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("sidecar"), std::string::npos);
}

TEST_F(CliTest, PipelineStatsMatchesLibraryBitExactly) {
  std::string lat = file("lat.npy"), tok = file("tok.npy"), rec = file("rec.npy");
  ASSERT_EQ(run("synth --preset independent --n 2 --height 12 --width 12 "
                "--channels 4 --seed 11 --output " +
                lat)
                .exit_code,
            0);
  ASSERT_EQ(run("quantize --input " + lat + " --levels 16 --min -4 --max 4 "
                "--output " + tok)
                .exit_code,
            0);
  ASSERT_EQ(run("dequantize --input " + tok + " --output " + rec).exit_code, 0);
  CliResult stats = run("stats --original " + lat + " --roundtrip " + rec);
  ASSERT_EQ(stats.exit_code, 0) << stats.err;

  latq::LatentTensor original = latq::read_latent(lat);
  latq::SidecarMeta meta = latq::read_sidecar(rec + ".json");
  latq::CodecReport rep =
      latq::roundtrip_report(original, latq::build_grid(meta.quantizer));
  EXPECT_EQ(stats.out, latq::report_to_json(rep));

  // Normalized-domain flag flows through identically.
  CliResult norm = run("stats --normalized --original " + lat + " --roundtrip " + rec);
  ASSERT_EQ(norm.exit_code, 0);
  latq::CodecReport nrep =
      latq::roundtrip_report(original, latq::build_grid(meta.quantizer), true);
  EXPECT_EQ(norm.out, latq::report_to_json(nrep));
}

TEST_F(CliTest, StatsRejectsUnrelatedRoundtripFile) {
  std::string lat = file("lat.npy");
  ASSERT_EQ(run("synth --n 1 --height 4 --width 4 --channels 2 --seed 2 --output " +
                lat)
                .exit_code,
            0);
  // The synth output has a sidecar, so it parses as a "round-trip" file, but
  // its values do not lie on the decoded lattice.
  CliResult r = run("stats --original " + lat + " --roundtrip " + lat);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("does not match"), std::string::npos);
}

TEST_F(CliTest, SeededRunsAreByteIdentical) {
  std::string a = file("a.npy"), b = file("b.npy");
  std::string flags = "synth --preset equicorrelated --rho 0.7 --n 2 --height 8 "
                      "--width 8 --channels 3 --seed 21 --output ";
  ASSERT_EQ(run(flags + a).exit_code, 0);
  ASSERT_EQ(run(flags + b).exit_code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_NE(slurp(a), "");
  std::string sa = slurp(a + ".json"), sb = slurp(b + ".json");
  EXPECT_EQ(sa, sb);
}

TEST_F(CliTest, OrderWritesPermutationIntoSidecar) {
  std::string lat = file("lat.npy");
  ASSERT_EQ(run("synth --preset smooth_vs_noise --n 2 --height 16 --width 16 "
                "--channels 3 --seed 7 --output " +
                lat)
                .exit_code,
            0);
  CliResult r = run("order --input " + lat + " --update-sidecar");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  auto j = nlohmann::json::parse(r.out);
  auto perm = j["permutation"].get<std::vector<int>>();
  EXPECT_EQ(perm, (std::vector<int>{0, 2, 1}));
  EXPECT_EQ(j["ratios"][1].get<double>(), 0.0);
  latq::SidecarMeta meta = latq::read_sidecar(lat + ".json");
  ASSERT_TRUE(meta.channel_order.has_value());
  EXPECT_EQ(*meta.channel_order, perm);
}

TEST_F(CliTest, TrainEvalSampleBenchRoundTrip) {
  std::string lat = file("lat.npy"), tok = file("tok.npy"), ckpt = file("head.ckpt");
  ASSERT_EQ(run("synth --preset copy_channel --n 20 --height 6 --width 6 "
                "--channels 2 --seed 3 --min -3 --max 3 --levels 8 --output " +
                lat)
                .exit_code,
            0);
  ASSERT_EQ(run("quantize --input " + lat + " --levels 8 --min -3 --max 3 "
                "--output " + tok)
                .exit_code,
            0);
  CliResult train = run("train-head --data " + tok +
                        " --context vector --steps 60 --batch 32 --d-hidden 16 "
                        "--d-embed 8 --d-ctx 8 --seed 1 --output " +
                        ckpt);
  ASSERT_EQ(train.exit_code, 0) << train.err;
  auto tj = nlohmann::json::parse(train.out);
  EXPECT_EQ(tj["steps"].get<int>(), 60);
  EXPECT_EQ(tj["losses"].size(), 60u);
  EXPECT_LT(tj["final_loss"].get<double>(), tj["initial_loss"].get<double>());

  CliResult eval = run("eval-head --ckpt " + ckpt + " --data " + tok +
                       " --context vector");
  ASSERT_EQ(eval.exit_code, 0) << eval.err;
  auto ej = nlohmann::json::parse(eval.out);
  EXPECT_EQ(ej["mode"].get<std::string>(), "autoregressive");
  EXPECT_GT(ej["nll_per_channel"].get<double>(), 0.0);
  EXPECT_DOUBLE_EQ(ej["nll_per_position"].get<double>(),
                   2.0 * ej["nll_per_channel"].get<double>());

  CliResult sample = run("sample --ckpt " + ckpt +
                         " --n 2 --height 4 --width 4 --seed 9 --output " +
                         file("gen"));
  ASSERT_EQ(sample.exit_code, 0) << sample.err;
  latq::TokenTensor gen_tok = latq::read_npy<uint16_t>(file("gen.tokens.npy"));
  EXPECT_EQ(gen_tok.shape, (latq::Shape4{2, 4, 4, 2}));
  for (uint16_t t : gen_tok.data) EXPECT_LT(t, 8);
  latq::LatentTensor gen_lat = latq::read_latent(file("gen.latents.npy"));
  EXPECT_EQ(gen_lat.shape, (latq::Shape4{2, 4, 4, 2}));
  // Sampling is deterministic per seed.
  CliResult again = run("sample --ckpt " + ckpt +
                        " --n 2 --height 4 --width 4 --seed 9 --output " +
                        file("gen2"));
  ASSERT_EQ(again.exit_code, 0);
  EXPECT_EQ(slurp(file("gen.latents.npy")), slurp(file("gen2.latents.npy")));
  EXPECT_EQ(slurp(file("gen.tokens.npy")), slurp(file("gen2.tokens.npy")));

  CliResult bench = run("bench --ckpt " + ckpt + " --runs 5 --format json");
  ASSERT_EQ(bench.exit_code, 0) << bench.err;
  auto bj = nlohmann::json::parse(bench.out);
  EXPECT_EQ(bj["runs"].get<int>(), 5);
  EXPECT_GT(bj["ms_per_token_mean"].get<double>(), 0.0);
  EXPECT_GE(bj["ms_per_token_std"].get<double>(), 0.0);
}
