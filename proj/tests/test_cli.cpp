#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "uhal/cli/commands.hpp"
#include "uhal/codec/jpeg_segments.hpp"
#include "uhal/codec/recover.hpp"
#include "uhal/data/image_io.hpp"
#include "uhal/data/synth.hpp"

namespace {

using namespace uhal;
namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// One synthetic dataset and a briefly pretrained checkpoint shared by every test.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "uhal_cli_test";
    fs::remove_all(root_);
    const auto s = cli({"synth", "--out", (root_ / "data").string(), "--count", "6", "--height", "32", "--width", "32",
                        "--mode", "detail_inject", "--strength", "0.5", "--ratios", "0.5", "0.25", "0.25", "--seed",
                        "3"});
    ASSERT_EQ(s.code, 0) << s.err;
    const auto p = cli({"pretrain", "--data", (root_ / "data").string(), "--out", (root_ / "pre").string(), "--set",
                        "epochs=20", "--set", "batch_images=3", "--set", "crop_size=32", "--set", "lr=1e-3"});
    ASSERT_EQ(p.code, 0) << p.err;
    // --embed needs a JPEG y.
    const auto y = data::read_image(root_ / "data" / "hallucinated" / "synth_0000.png");
    data::write_file(root_ / "y.jpg", data::encode_jpeg(y, 92));
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::vector<std::string> finetune_args(const fs::path& out) {
    return {"finetune",     "--checkpoint", (root_ / "pre" / "checkpoint.uhal").string(),
            "--authentic",  (root_ / "data" / "authentic" / "synth_0000.png").string(),
            "--hallucinated", (root_ / "y.jpg").string(),
            "--out",        out.string(),
            "--embed",      "--set", "iterations=60", "--set", "batch_pixels=256", "--set", "trace_every=20"};
  }

  static fs::path root_;
};

fs::path Cli::root_;

TEST_F(Cli, SynthWritesSurrogateLayout) {
  const fs::path d = root_ / "data";
  for (const char* f : {"manifest.json", "split.json", "resolved_config.json"}) EXPECT_TRUE(fs::exists(d / f)) << f;
  const auto manifest = nlohmann::json::parse(slurp(d / "manifest.json"));
  EXPECT_TRUE(manifest.at("surrogate").get<bool>());
  EXPECT_EQ(manifest.at("pairs").size(), 6u);
  const auto split = nlohmann::json::parse(slurp(d / "split.json"));
  EXPECT_EQ(split.at("train").size() + split.at("val").size() + split.at("test").size(), 6u);
}

TEST_F(Cli, PretrainWritesCheckpointAndConfig) {
  EXPECT_TRUE(fs::exists(root_ / "pre" / "checkpoint.uhal"));
  EXPECT_TRUE(fs::exists(root_ / "pre" / "loss.csv"));
  const auto cfg = nlohmann::json::parse(slurp(root_ / "pre" / "resolved_config.json"));
  EXPECT_EQ(cfg.at("command"), "pretrain");
  EXPECT_EQ(cfg.at("config").at("epochs"), 20);
  EXPECT_EQ(cfg.at("config").at("crop_size"), 32);
}

TEST_F(Cli, FinetuneEmbedRecoverMatchesInProcess) {
  const fs::path out = root_ / "ft";
  const auto f = cli(finetune_args(out));
  ASSERT_EQ(f.code, 0) << f.err;
  ASSERT_TRUE(fs::exists(out / "y.uhal"));
  ASSERT_TRUE(fs::exists(out / "y.jpg"));
  EXPECT_TRUE(fs::exists(out / "trace.csv"));
  EXPECT_TRUE(fs::exists(out / "resolved_config.json"));

  const auto r = cli({"recover", "--in", (out / "y.jpg").string(), "--out", (out / "xhat.png").string()});
  ASSERT_EQ(r.code, 0) << r.err;

  const auto jpg = data::read_file(out / "y.jpg");
  const auto container = codec::jpeg_extract(jpg);
  EXPECT_EQ(container, data::read_file(out / "y.uhal"));
  const auto y = data::read_image(out / "y.jpg");
  EXPECT_TRUE(y == data::read_image(root_ / "y.jpg"));
  const auto xhat = codec::recover(y, container);
  EXPECT_EQ(data::encode_png(xhat), data::read_file(out / "xhat.png"));
}

TEST_F(Cli, HeadOnlyContainerNeedsCheckpoint) {
  const fs::path out = root_ / "ft_head";
  auto args = finetune_args(out);
  args.push_back("--no-encoder");
  ASSERT_EQ(cli(args).code, 0);
  const auto without = cli({"recover", "--in", (out / "y.jpg").string(), "--out", (out / "a.png").string()});
  EXPECT_EQ(without.code, 3) << without.err;
  const auto with = cli({"recover", "--in", (out / "y.jpg").string(), "--out", (out / "b.png").string(),
                         "--checkpoint", (root_ / "pre" / "checkpoint.uhal").string()});
  EXPECT_EQ(with.code, 0) << with.err;
}

TEST_F(Cli, SidecarEmbedCommand) {
  const fs::path out = root_ / "ft";
  if (!fs::exists(out / "y.uhal")) {
    ASSERT_EQ(cli(finetune_args(out)).code, 0);
  }
  const auto e = cli({"embed", "--jpeg", (root_ / "y.jpg").string(), "--container", (out / "y.uhal").string(), "--out",
                      (root_ / "re.jpg").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(codec::jpeg_extract(data::read_file(root_ / "re.jpg")), data::read_file(out / "y.uhal"));
  const auto s = cli({"recover", "--in", (root_ / "y.jpg").string(), "--container", (out / "y.uhal").string(), "--out",
                      (root_ / "side.png").string()});
  EXPECT_EQ(s.code, 0) << s.err;
}

TEST_F(Cli, RecoverWithoutMetadataExits3) {
  const auto r = cli({"recover", "--in", (root_ / "y.jpg").string(), "--out", (root_ / "none.png").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("metadata not found"), std::string::npos) << r.err;
}

TEST_F(Cli, EvalAndCompareWriteTables) {
  const auto e = cli({"eval", "--checkpoint", (root_ / "pre" / "checkpoint.uhal").string(), "--data",
                      (root_ / "data").string(), "--out", (root_ / "eval").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  const std::string psnr = slurp(root_ / "eval" / "psnr.csv");
  EXPECT_EQ(psnr.rfind("id,psnr_y,psnr_zero_shot\n", 0), 0u);
  EXPECT_NE(psnr.find("\nmean,"), std::string::npos);

  const auto c = cli({"compare", "--checkpoint", (root_ / "pre" / "checkpoint.uhal").string(), "--data",
                      (root_ / "data").string(), "--out", (root_ / "cmp").string(), "--budget-iters", "20", "--methods",
                      "ours", "nerf_pe", "--set", "batch_pixels=128", "--set", "trace_every=10"});
  ASSERT_EQ(c.code, 0) << c.err;
  std::istringstream summary(slurp(root_ / "cmp" / "compare.csv"));
  std::string line;
  std::getline(summary, line);
  EXPECT_EQ(line, "method,budget_iters,budget_s,psnr,psnr_zero_shot,psnr_y,images");
  std::size_t rows = 0;
  while (std::getline(summary, line)) ++rows;
  EXPECT_EQ(rows, 2u);
  EXPECT_TRUE(fs::exists(root_ / "cmp" / "compare_images.csv"));
}

TEST_F(Cli, ErrorsMapToExitCodes) {
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"bogus"}).code, 1);
  EXPECT_EQ(cli({"recover", "--in", "x.jpg"}).code, 1);
  const auto unknown = cli({"pretrain", "--data", (root_ / "data").string(), "--out", (root_ / "bad").string(), "--set",
                            "no_such_key=1"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("no_such_key"), std::string::npos) << unknown.err;
  EXPECT_EQ(cli({"pretrain", "--data", (root_ / "missing").string(), "--out", (root_ / "bad").string()}).code, 2);
  EXPECT_EQ(cli({"eval", "--checkpoint", (root_ / "y.jpg").string(), "--data", (root_ / "data").string(), "--out",
                 (root_ / "bad").string()})
                .code,
            3);
  EXPECT_EQ(cli({"eval", "--checkpoint", "c", "--data", "d", "--out", "o", "--split", "nope"}).code, 1);
}

TEST_F(Cli, HelpExitsZero) {
  const auto h = cli({"--help"});
  EXPECT_EQ(h.code, 0);
  EXPECT_NE(h.out.find("recover"), std::string::npos);
}

}  // namespace
