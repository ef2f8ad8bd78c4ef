#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "nxnflow/cli.hpp"
#include "nxnflow/data.hpp"

using namespace nxnflow;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nxnflow");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> small_points_args(const test::TempDir& dir, const std::string& name, int steps) {
  return {"train",          "--set", "data.kind=eight_gaussians", "--set", "data.count=256",
          "--set",          "model.depth_k=2", "--set", "model.levels_l=1", "--set", "model.hidden_width=8",
          "--set",          "model.mode=rank2", "--set", "train.steps=" + std::to_string(steps),
          "--set",          "train.batch_size=16", "--seed", "3",
          "-o",             (dir / (name + ".nxnf")).string(), "--metrics", (dir / (name + ".csv")).string()};
}

}  // namespace

TEST(Cli, OneStepTrainWritesOneRowAndCheckpoint) {
  test::TempDir dir;
  const Result r = run_cli(small_points_args(dir, "a", 1));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string metrics = read_text(dir / "a.csv");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 2);
  EXPECT_TRUE(std::filesystem::exists(dir / "a.nxnf"));
}

TEST(Cli, RunsAreByteIdentical) {
  test::TempDir dir;
  ASSERT_EQ(run_cli(small_points_args(dir, "a", 5)).code, 0);
  ASSERT_EQ(run_cli(small_points_args(dir, "b", 5)).code, 0);
  EXPECT_EQ(read_file(dir / "a.nxnf"), read_file(dir / "b.nxnf"));

  const std::string ck = (dir / "a.nxnf").string();
  ASSERT_EQ(run_cli({"sample", ck, "-n", "16", "--seed", "4", "-o", (dir / "s1.csv").string()}).code, 0);
  ASSERT_EQ(run_cli({"sample", ck, "-n", "16", "--seed", "4", "-o", (dir / "s2.csv").string()}).code, 0);
  EXPECT_EQ(read_text(dir / "s1.csv"), read_text(dir / "s2.csv"));

  const std::vector<std::string> eval{"eval", ck, "--set", "data.kind=eight_gaussians", "--set", "data.count=256",
                                      "--set", "model.mode=rank2", "--seed", "5"};
  const Result e1 = run_cli(eval), e2 = run_cli(eval);
  ASSERT_EQ(e1.code, 0) << e1.err;
  EXPECT_EQ(e1.out, e2.out);
  EXPECT_NE(e1.out.find("nll_nats"), std::string::npos);
}

TEST(Cli, ZeroSamplesGivesEmptyArtifact) {
  test::TempDir dir;
  ASSERT_EQ(run_cli(small_points_args(dir, "a", 1)).code, 0);
  const Result r = run_cli({"sample", (dir / "a.nxnf").string(), "-n", "0", "-o", (dir / "s.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "s.csv"));
}

TEST(Cli, ZeroImageSamplesGivesEmptyNxni) {
  test::TempDir dir;
  const Result t = run_cli({"train", "--set", "data.kind=textures", "--set", "data.count=32", "--set",
                            "data.height=4", "--set", "data.width=4", "--set", "model.depth_k=1", "--set",
                            "model.hidden_width=4", "--set", "train.steps=1", "--set", "train.batch_size=8", "-o",
                            (dir / "i.nxnf").string(), "--metrics", (dir / "i.csv").string()});
  ASSERT_EQ(t.code, 0) << t.err;
  const Result r = run_cli({"sample", (dir / "i.nxnf").string(), "-n", "0", "-o", (dir / "s.nxni").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const ImageDataset ds = load_images(dir / "s.nxni");
  EXPECT_EQ(ds.count, 0u);
  EXPECT_EQ(ds.height, 4u);
}

TEST(Cli, BadConfigFailsClosed) {
  test::TempDir dir;
  auto args = small_points_args(dir, "a", 1);
  args.insert(args.begin() + 1, {"--set", "model.depth=3"});
  const Result r = run_cli(args);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("model.depth"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(dir / "a.nxnf"));
  EXPECT_FALSE(std::filesystem::exists(dir / "a.csv"));
}

TEST(Cli, ExitCodes) {
  test::TempDir dir;
  EXPECT_EQ(run_cli({"bogus"}).code, 2);
  EXPECT_EQ(run_cli({"sample", (dir / "none.nxnf").string(), "-o", (dir / "x.csv").string()}).code, 3);
  EXPECT_EQ(run_cli({"verify", "nonsense"}).code, 2);
  auto args = small_points_args(dir, "a", 1);
  std::replace(args.begin(), args.end(), std::string("data.kind=eight_gaussians"), std::string("data.kind=textures"));
  EXPECT_EQ(run_cli(args).code, 2);
}

TEST(Cli, VerifyWritesReport) {
  test::TempDir dir;
  const Result r = run_cli({"verify", "conv_equiv", "--seed", "1", "-o", (dir / "v.txt").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  const std::string text = read_text(dir / "v.txt");
  EXPECT_EQ(text.rfind("conv_equiv.direct_vs_shifted,PASS,", 0), 0u);
}
