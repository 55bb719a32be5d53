#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <regex>
#include <sstream>

#include "ldct/cli.hpp"
#include "ldct/contrastive.hpp"
#include "ldct/dataset.hpp"
#include "ldct/interpret.hpp"
#include "ldct/metrics.hpp"
#include "ldct/trainer.hpp"
#include "test_util.hpp"

using namespace ldct;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_text(const fs::path& p) {
  const auto bytes = test::read_bytes(p);
  return std::string(bytes.begin(), bytes.end());
}

const std::vector<std::string> kTinyModel = {"--steps",          "1", "--batch-size",     "2", "--esau-width",
                                             "4",                "--esau-heads", "2", "--mac-width",      "4",
                                             "--local-dim",      "8", "--local-queries",  "4", "--global-queries",
                                             "4",                "--negatives",  "4"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// One small dataset and one trained run shared by the whole suite.
class CliRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new test::TempDir;
    ASSERT_EQ(invoke({"synth", "--out", data().string(), "--count", "4", "--size", "64", "--seed", "3"}).code, 0);
    const auto trained = invoke(concat({"train", "--data", data().string(), "--out", run().string()}, kTinyModel));
    ASSERT_EQ(trained.code, 0) << trained.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path root() { return dir_->path(); }
  static fs::path data() { return root() / "data"; }
  static fs::path run() { return root() / "run"; }
  static fs::path ckpt() { return run() / "final.ckpt"; }

 private:
  static test::TempDir* dir_;
};
test::TempDir* CliRun::dir_ = nullptr;

}  // namespace

TEST(Cli, SynthIsByteIdenticalAcrossRuns) {
  test::TempDir dir;
  for (const char* name : {"a", "b"})
    ASSERT_EQ(invoke({"synth", "--out", (dir.path() / name).string(), "--count", "3", "--size", "64", "--seed", "7"}).code,
              0);
  for (const auto& entry : fs::recursive_directory_iterator(dir.path() / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto twin = dir.path() / "b" / fs::relative(entry.path(), dir.path() / "a");
    EXPECT_EQ(test::read_bytes(entry.path()), test::read_bytes(twin)) << twin;
  }
  EXPECT_EQ(data::read_pairs(dir.path() / "a").size(), 3u);
}

TEST(Cli, UsageErrorsExitTwoWithOneParseableLine) {
  const std::regex line(R"(^error: code=(\d+) kind=([a-z_]+) message=[^\n]*\n$)");
  for (const auto& args : std::vector<std::vector<std::string>>{
           {}, {"frobnicate"}, {"synth", "--out", "x", "--bogus"}, {"synth"}, {"synth", "--out", "x", "--count", "0"}}) {
    const auto r = invoke(args);
    EXPECT_EQ(r.code, cli::kExitUsage);
    std::smatch m;
    ASSERT_TRUE(std::regex_match(r.err, m, line)) << r.err;
    EXPECT_EQ(m[1], "2");
  }
}

TEST(Cli, ExitCodeTable) {
  EXPECT_EQ(cli::exit_code(ErrorKind::kInvalidArgument), 2);
  EXPECT_EQ(cli::exit_code(ErrorKind::kIo), 3);
  EXPECT_EQ(cli::exit_code(ErrorKind::kConfig), 4);
  EXPECT_EQ(cli::exit_code(ErrorKind::kFormat), 5);
  EXPECT_EQ(cli::exit_code(ErrorKind::kTruncated), 5);
  EXPECT_EQ(cli::exit_code(ErrorKind::kDimension), 5);
  EXPECT_EQ(cli::exit_code(ErrorKind::kShape), 6);
  EXPECT_EQ(cli::exit_code(ErrorKind::kEmptyForeground), 6);
  EXPECT_EQ(cli::exit_code(ErrorKind::kNumerical), 7);
}

TEST(Cli, HelpListsEveryTrainingFieldWithItsDefault) {
  const auto r = invoke({"train", "--help"});
  ASSERT_EQ(r.code, 0);
  const auto defaults = nlohmann::json::parse(train::config_to_json(train::TrainConfig{}));
  for (const auto& field : train::config_field_names()) {
    std::string flag = "--" + field;
    std::replace(flag.begin(), flag.end(), '_', '-');
    const auto at = r.out.find(flag + " ");
    ASSERT_NE(at, std::string::npos) << flag;
    const auto line = r.out.substr(at, r.out.find('\n', at) - at);
    EXPECT_NE(line.find("[" + defaults[field].dump() + "]"), std::string::npos) << line;
  }
}

TEST(Cli, MissingInputsAreIoErrors) {
  test::TempDir dir;
  const auto nowhere = (dir.path() / "absent").string();
  EXPECT_EQ(invoke({"train", "--data", nowhere, "--out", (dir.path() / "r").string()}).code, cli::kExitIo);
  const auto r = invoke({"denoise", "--ckpt", nowhere, "--in", nowhere, "--out", (dir.path() / "o.slc").string()});
  EXPECT_EQ(r.code, cli::kExitIo);
  EXPECT_NE(r.err.find("kind=io"), std::string::npos) << r.err;
}

TEST_F(CliRun, ConfigErrorsExitFour) {
  test::TempDir dir;
  const auto bad = dir.path() / "bad.json";
  std::ofstream(bad) << "{\"lr_max\": ";
  auto r = invoke({"train", "--config", bad.string(), "--data", data().string(), "--out", (dir.path() / "r").string()});
  EXPECT_EQ(r.code, cli::kExitConfig) << r.err;
  EXPECT_NE(r.err.find("kind=config"), std::string::npos);

  std::ofstream(bad, std::ios::trunc) << "{\"lr_max\": 1e-4, \"unknown_field\": 1}";
  EXPECT_EQ(invoke({"train", "--config", bad.string(), "--data", data().string(), "--out", (dir.path() / "r").string()})
                .code,
            cli::kExitConfig);
  EXPECT_EQ(invoke({"train", "--data", data().string(), "--out", (dir.path() / "r").string(), "--lr-max", "fast"}).code,
            cli::kExitConfig);
  EXPECT_EQ(invoke({"train", "--data", data().string(), "--out", (dir.path() / "r").string(), "--tau", "0"}).code,
            cli::kExitConfig);
}

TEST_F(CliRun, FormatAndShapeErrors) {
  test::TempDir dir;
  const auto truncated = dir.path() / "t.ckpt";
  const auto bytes = test::read_bytes(ckpt());
  std::ofstream(truncated, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), 20);
  const auto slice = data() / "ldct" / (data::read_pairs(data()).front().name + ".slc");
  EXPECT_EQ(invoke({"denoise", "--ckpt", truncated.string(), "--in", slice.string(), "--out", "o.slc"}).code,
            cli::kExitFormat);

  // A header declaring 40×48 is rejected before any pixel is read.
  auto header = test::read_bytes(slice);
  header[4] = 40;
  header[8] = 48;
  const auto odd = dir.path() / "odd.slc";
  std::ofstream(odd, std::ios::binary).write(reinterpret_cast<const char*>(header.data()), 12);
  auto r = invoke({"denoise", "--ckpt", ckpt().string(), "--in", odd.string(), "--out", (dir.path() / "o.slc").string()});
  EXPECT_EQ(r.code, cli::kExitFormat) << r.err;
  EXPECT_NE(r.err.find("kind=dimension"), std::string::npos) << r.err;

  // A NaN pixel is a numerical error.
  auto nan_bytes = test::read_bytes(slice);
  for (std::size_t i = 12; i < 16; ++i) nan_bytes[i] = 0xFF;
  const auto nan_slice = dir.path() / "nan.slc";
  std::ofstream(nan_slice, std::ios::binary)
      .write(reinterpret_cast<const char*>(nan_bytes.data()), static_cast<std::streamsize>(nan_bytes.size()));
  EXPECT_EQ(invoke({"denoise", "--ckpt", ckpt().string(), "--in", nan_slice.string(), "--out",
                    (dir.path() / "o.slc").string()})
                .code,
            cli::kExitNumerical);

  // A pair whose slices disagree in size is a shape error.
  auto pair = data::read_pairs(data()).front();
  pair.clean = imaging::Slice(48, 48, std::vector<float>(48 * 48, 0.0f));
  data::write_pairs(dir.path() / "mixed", {pair}, 0);
  r = invoke({"eval", "--ckpt", ckpt().string(), "--data", (dir.path() / "mixed").string(), "--report",
              (dir.path() / "r.json").string()});
  EXPECT_EQ(r.code, cli::kExitData) << r.err;
  EXPECT_NE(r.err.find("kind=shape"), std::string::npos) << r.err;
}

TEST_F(CliRun, TrainWritesConfigLogAndCheckpoint) {
  for (const char* f : {"config.json", "metrics.ndjson", "final.ckpt"}) EXPECT_TRUE(fs::exists(run() / f)) << f;
  const auto cfg = train::config_from_json(read_text(run() / "config.json"));
  EXPECT_EQ(cfg.esau_width, 4u);
  EXPECT_EQ(cfg.steps, 1u);
  EXPECT_EQ(cfg.lr_max, train::TrainConfig{}.lr_max);
}

TEST_F(CliRun, DenoiseThenEvalMatchesDirectMetrics) {
  test::TempDir dir;
  const auto pair = data::read_pairs(data()).front();
  const auto one = dir.path() / "one";
  data::write_pairs(one, {pair}, 0);

  const auto denoised = dir.path() / "out.slc";
  ASSERT_EQ(invoke({"denoise", "--ckpt", ckpt().string(), "--in", (one / "ldct" / (pair.name + ".slc")).string(),
                    "--out", denoised.string()})
                .code,
            0);
  const auto report = dir.path() / "report.json";
  const auto csv = dir.path() / "report.csv";
  const auto r = invoke({"eval", "--ckpt", ckpt().string(), "--data", one.string(), "--report", report.string(), "--csv",
                         csv.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(read_text(report));
  ASSERT_EQ(j["count"], 1);

  const auto cfg = train::config_from_json(read_text(run() / "config.json"));
  const auto out = imaging::hu_window_normalize(imaging::load_slice(denoised), cfg.window());
  const auto ref = imaging::hu_window_normalize(pair.clean, cfg.window());
  // The slice file stores float32 HU; that rounding is far below 1e-6 dB.
  EXPECT_NEAR(j["images"][0]["psnr_db"].get<double>(), metrics::psnr(out, ref), 1e-6);
  EXPECT_NEAR(j["images"][0]["ssim"].get<double>(), metrics::ssim(out, ref), 1e-9);
  EXPECT_EQ(read_text(csv).rfind("PSNR [dB],RMSE [x1e-2],SSIM [%]\n", 0), 0u);
}

TEST_F(CliRun, AblationLogsNoContrastiveTerms) {
  test::TempDir dir;
  const auto r = invoke(concat({"train", "--data", data().string(), "--out", (dir.path() / "abl").string(), "--w-global",
                                "0", "--w-local", "0"},
                               kTinyModel));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("override w_global=0"), std::string::npos) << r.err;
  std::istringstream log(read_text(dir.path() / "abl" / "metrics.ndjson"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["l_global"], 0.0);
    EXPECT_EQ(j["l_local"], 0.0);
    EXPECT_DOUBLE_EQ(j["l_total"].get<double>(), contrastive::kDefaultLambda * j["l_pixel"].get<double>());
    ++rows;
  }
  EXPECT_EQ(rows, 1u);
  // The same rows stream to stdout as the run progresses.
  EXPECT_NE(r.out.find("\"l_pixel\""), std::string::npos);
}

TEST_F(CliRun, ClusterWritesLabelMapAndSidecar) {
  test::TempDir dir;
  const auto slice = data() / "ldct" / (data::read_pairs(data()).front().name + ".slc");
  const auto png = dir.path() / "labels.png";
  const auto r = invoke({"cluster", "--ckpt", ckpt().string(), "--in", slice.string(), "--k", "3", "--out", png.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto map = interpret::read_label_map(png);
  EXPECT_EQ(map.height, 64u);
  EXPECT_EQ(map.width, 64u);
  EXPECT_LE(map.k, 3u);
  const auto sidecar = nlohmann::json::parse(read_text(dir.path() / "labels.json"));
  EXPECT_EQ(sidecar["k"], 3);

  EXPECT_EQ(invoke({"cluster", "--ckpt", ckpt().string(), "--in", slice.string(), "--k", "17", "--out",
                    (dir.path() / "x.png").string()})
                .code,
            cli::kExitUsage);
}
