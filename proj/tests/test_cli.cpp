#include <gtest/gtest.h>

#include <sstream>

#include "cli.hpp"
#include "test_util.hpp"

using namespace emgsel;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "emgsel");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Prints a preset's config, shrinks its timing to 2 kHz / 4 s, and saves it.
std::filesystem::path small_config(const testutil::TempDir& dir, const std::string& preset, int posture = 0) {
  auto r = run_cli({"synth", "--preset", preset, "--posture", std::to_string(posture), "--print-config"});
  EXPECT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  j["config"]["sample_rate_hz"] = 2000;
  j["config"]["duration_s"] = 4;
  j["config"]["relaxation_s"] = 1.5;
  j["config"]["burst_start_s"] = 2;
  j["config"]["burst_len_s"] = 1;
  const auto path = dir / (preset + "-" + std::to_string(posture) + ".json");
  std::ofstream(path) << j.dump(2);
  return path;
}

std::filesystem::path make_dataset(const testutil::TempDir& dir, const std::string& preset, int trials,
                                   const std::string& seed, int posture = 0) {
  const auto cfg = small_config(dir, preset, posture);
  const auto out = dir / (preset + "-" + std::to_string(posture) + "-s" + seed);
  const auto r = run_cli({"--seed", seed, "--out", out.string(), "synth", "--config", cfg.string(), "--trials",
                          std::to_string(trials)});
  EXPECT_EQ(r.code, 0) << r.err;
  return out;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Cli, UsageErrors) {
  auto r = run_cli({"synth"});
  EXPECT_EQ(r.code, 2);
  for (const auto& n : preset_names()) EXPECT_NE(r.err.find(n), std::string::npos);
  EXPECT_EQ(run_cli({"synth", "--preset", "nope", "--print-config"}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({"search", "--data", "/nonexistent"}).code, 2);  // no --out
  testutil::TempDir d("cli-usage");
  EXPECT_EQ(run_cli({"--out", d.path().string(), "search", "--data", "/nonexistent"}).code, 3);
  EXPECT_EQ(run_cli({"train", "--data", "/x", "--kernel", "poly"}).code, 2);
}

TEST(Cli, SynthKneeLayout) {
  testutil::TempDir d("cli-knee");
  const auto data = make_dataset(d, "knee2", 2, "3");
  const auto reader = DatasetReader(data);
  EXPECT_EQ(reader.channels().size(), 3u);
  EXPECT_EQ(reader.size(), 4u);
  EXPECT_EQ(reader.channels()[0].index, 0);
  EXPECT_EQ(*reader.channels()[2].placement, "upperleg-#19");
}

TEST(Cli, PreprocessAndFeatures) {
  testutil::TempDir d("cli-pre");
  const auto data = make_dataset(d, "knee2", 2, "4");
  const auto out = d / "pre";
  auto r = run_cli({"--out", out.string(), "preprocess", "--data", data.string(), "--trial", "c00-r001"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(out / "rms" / "c00-r001.csv"));
  EXPECT_FALSE(std::filesystem::exists(out / "rms" / "c00-r000.csv"));
  const auto rms = lines(testutil::slurp(out / "rms" / "c00-r001.csv"));
  EXPECT_EQ(rms[0], "t,ch0,ch1,ch2");
  EXPECT_EQ(lines(testutil::slurp(out / "peaks.csv")).size(), 2u);

  const auto fout = d / "feat";
  EXPECT_EQ(run_cli({"--out", fout.string(), "features", "--data", data.string(), "--subset", "0,1"}).code, 2);
  r = run_cli({"--out", fout.string(), "features", "--data", data.string(), "--subset", "0,1", "--normalizer", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto f = lines(testutil::slurp(fout / "features.csv"));
  EXPECT_EQ(f.size(), 5u);
  EXPECT_EQ(f[0].substr(0, 20), "trial_id,normalizer,");
}

TEST(Cli, TrainEvalAndChannelMismatch) {
  testutil::TempDir d("cli-train");
  const auto train = make_dataset(d, "elbow4", 15, "5");
  const auto test = make_dataset(d, "elbow4", 5, "6");
  const auto mdir = d / "model";
  auto r = run_cli({"--seed", "1", "--out", mdir.string(), "train", "--data", train.string(), "--repeats", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto bundle = json::parse(testutil::slurp(mdir / "model.json"));
  EXPECT_EQ(bundle["format"], "emgsel-bundle");
  EXPECT_EQ(bundle["subset"].size(), 4u);

  const auto edir = d / "eval";
  r = run_cli({"--out", edir.string(), "eval", "--model", (mdir / "model.json").string(), "--data", test.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GE(std::stod(testutil::slurp(edir / "accuracy.txt")), 0.95);
  EXPECT_EQ(lines(testutil::slurp(edir / "confusion.csv")).size(), 5u);

  const auto knee = make_dataset(d, "knee2", 2, "7");
  r = run_cli({"eval", "--model", (mdir / "model.json").string(), "--data", knee.string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("channels"), std::string::npos);
}

TEST(Cli, SearchOutputsAndReproducibility) {
  testutil::TempDir d("cli-search");
  const auto data = make_dataset(d, "ankle3", 8, "8");
  EXPECT_EQ(run_cli({"--out", (d / "x").string(), "search", "--data", data.string(), "--max-k", "0"}).code, 2);
  EXPECT_EQ(run_cli({"--out", (d / "x").string(), "search", "--data", data.string(), "--max-k", "4"}).code, 2);

  const auto a = d / "a", b = d / "b";
  auto r = run_cli({"--seed", "2", "--out", a.string(), "search", "--data", data.string(), "--repeats", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"--seed", "2", "--jobs", "3", "--out", b.string(), "search", "--data", data.string(), "--repeats", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto res = lines(testutil::slurp(a / "results.csv"));
  EXPECT_EQ(res.size(), 1u + 7u);  // 2^3 - 1 subsets
  for (const char* f : {"results.csv", "frontier.csv", "summary.txt", "search_meta.json"})
    EXPECT_EQ(testutil::slurp(a / f), testutil::slurp(b / f)) << f;
  EXPECT_NE(r.out.find("plateau at k="), std::string::npos);
  const auto meta = json::parse(testutil::slurp(a / "search_meta.json"));
  EXPECT_EQ(meta["seed"], 2);

  r = run_cli({"--out", (d / "w").string(), "search", "--data", data.string(), "--whitelist", "0,1;2", "--repeats", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(testutil::slurp(d / "w" / "results.csv")).size(), 3u);
}

TEST(Cli, StrictNonConvergence) {
  testutil::TempDir d("cli-strict");
  const auto data = make_dataset(d, "knee2", 6, "9");
  auto r = run_cli({"--out", (d / "s").string(), "search", "--data", data.string(), "--max-iter", "1", "--repeats", "1",
                    "--strict"});
  EXPECT_EQ(r.code, 4) << r.err;
  r = run_cli({"--out", (d / "s").string(), "search", "--data", data.string(), "--max-iter", "1", "--repeats", "1"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST(Cli, CrossEvalMatrix) {
  testutil::TempDir d("cli-cross");
  std::vector<std::string> train, test;
  for (int p : {0, 90, 180}) {
    train.push_back(make_dataset(d, "fingers5-posture", 12, std::to_string(100 + p), p).string());
    test.push_back(make_dataset(d, "fingers5-posture", 6, std::to_string(200 + p), p).string());
  }
  std::vector<std::string> args{"--seed", "11", "--out", (d / "x").string(), "cross-eval", "--train"};
  args.insert(args.end(), train.begin(), train.end());
  args.push_back("--test");
  args.insert(args.end(), test.begin(), test.end());
  args.insert(args.end(), {"--repeats", "2"});
  const auto r = run_cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(testutil::slurp(d / "x" / "cross_eval.csv"));
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 1; i < 4; ++i) {
    std::vector<double> v;
    std::istringstream in(rows[i]);
    std::string cell;
    std::getline(in, cell, ',');
    while (std::getline(in, cell, ',')) v.push_back(std::stod(cell));
    ASSERT_EQ(v.size(), 3u);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_GE(v[i - 1], v[j]) << rows[i];
  }
}
