#include <gtest/gtest.h>

#include <fstream>

#include "emgsel/dataset_io.hpp"
#include "test_util.hpp"

using namespace emgsel;
using testutil::finger;
using testutil::ramp_trial;
using testutil::TempDir;

namespace {

Dataset small_dataset(std::size_t channels = 6) {
  std::vector<TrialRecord> trials;
  const Digit digits[] = {Digit::index, Digit::middle};
  for (int c = 0; c < 2; ++c)
    for (int r = 0; r < 3; ++r)
      trials.push_back(ramp_trial("c" + std::to_string(c) + "r" + std::to_string(r), finger(digits[c]), channels));
  std::vector<ChannelId> ch;
  for (std::size_t i = 0; i < channels; ++i) ch.push_back({static_cast<int>(i), "forearm-#" + std::to_string(i + 1)});
  return make_dataset(ch, trials);
}

void rewrite_manifest(const std::filesystem::path& dir, const std::function<void(nlohmann::json&)>& edit) {
  auto j = nlohmann::json::parse(testutil::slurp(dir / kManifestName));
  edit(j);
  std::ofstream(dir / kManifestName) << j.dump(2);
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(DatasetIo, RoundTripPreservesEverything) {
  TempDir dir("io");
  const auto ds = small_dataset();
  write_dataset(ds, dir.path());
  const auto back = load_dataset(dir.path());
  EXPECT_EQ(back.channels, ds.channels);
  EXPECT_EQ(back.classes, ds.classes);
  ASSERT_EQ(back.trials.size(), ds.trials.size());
  for (std::size_t i = 0; i < ds.trials.size(); ++i) {
    EXPECT_EQ(back.trials[i].trial_id, ds.trials[i].trial_id);
    EXPECT_EQ(back.trials[i].label, ds.trials[i].label);
    for (std::size_t k = 0; k < ds.trials[i].samples.data().size(); ++k)
      EXPECT_NEAR(back.trials[i].samples.data()[k], ds.trials[i].samples.data()[k],
                  1e-8 * std::abs(ds.trials[i].samples.data()[k]));
  }
}

TEST(DatasetIo, CsvHeaderAndPrecision) {
  auto t = ramp_trial("p", finger(Digit::index), 2);
  t.samples(0, 0) = 1.2345678912e-5;
  const auto csv = trial_to_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,ch0,ch1");
  EXPECT_NE(csv.find("1.23456789e-05"), std::string::npos);
}

TEST(DatasetIo, WritingTwiceGivesIdenticalBytes) {
  TempDir a("bytes-a"), b("bytes-b");
  write_dataset(small_dataset(), a.path());
  write_dataset(small_dataset(), b.path());
  EXPECT_EQ(testutil::slurp(a / kManifestName), testutil::slurp(b / kManifestName));
  EXPECT_EQ(testutil::slurp(a / "trials/c0r1.csv"), testutil::slurp(b / "trials/c0r1.csv"));
}

TEST(DatasetIo, TrialOrderFollowsManifest) {
  TempDir dir("order");
  write_dataset(small_dataset(), dir.path());
  rewrite_manifest(dir.path(), [](nlohmann::json& j) {
    auto& t = j["trials"];
    std::reverse(t.begin(), t.end());
  });
  const auto ds = load_dataset(dir.path());
  EXPECT_EQ(ds.trials.front().trial_id, "c1r2");
  EXPECT_EQ(ds.trials.back().trial_id, "c0r0");
}

TEST(DatasetIo, EmptyDirectoryHasNoManifest) {
  TempDir dir("empty");
  EXPECT_NE(error_of([&] { load_dataset(dir.path()); }).find("no manifest found"), std::string::npos);
  EXPECT_NE(error_of([&] { load_dataset(dir / "missing"); }).find("no manifest found"), std::string::npos);
}

TEST(DatasetIo, WrongChannelCountNamesTrialAndExpectation) {
  TempDir dir("chan");
  const auto six = small_dataset(6);
  write_dataset(six, dir.path());
  const auto five = ramp_trial("c0r1", finger(Digit::index), 5);
  std::ofstream(dir / "trials/c0r1.csv") << trial_to_csv(five);
  const auto msg = error_of([&] { load_dataset(dir.path()); });
  EXPECT_NE(msg.find("c0r1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("expected 6"), std::string::npos) << msg;
}

TEST(DatasetIo, DuplicateTrialIds) {
  TempDir dir("dup");
  write_dataset(small_dataset(), dir.path());
  rewrite_manifest(dir.path(), [](nlohmann::json& j) { j["trials"][1]["trial_id"] = "c0r0"; });
  EXPECT_NE(error_of([&] { load_dataset(dir.path()); }).find("duplicate trial id 'c0r0'"), std::string::npos);
}

TEST(DatasetIo, MissingTrialFile) {
  TempDir dir("missing");
  write_dataset(small_dataset(), dir.path());
  std::filesystem::remove(dir / "trials/c1r0.csv");
  const auto msg = error_of([&] { load_dataset(dir.path()); });
  EXPECT_NE(msg.find("c1r0"), std::string::npos);
  EXPECT_NE(msg.find("file"), std::string::npos);
}

TEST(DatasetIo, NonFiniteSampleNamesTrialAndField) {
  TempDir dir("nan");
  write_dataset(small_dataset(), dir.path());
  auto text = testutil::slurp(dir / "trials/c0r2.csv");
  const auto pos = text.find('\n', text.find('\n') + 1) + 1;
  const auto comma = text.find(',', pos);
  text.replace(comma + 1, text.find(',', comma + 1) - comma - 1, "nan");
  std::ofstream(dir / "trials/c0r2.csv") << text;
  const auto msg = error_of([&] { load_dataset(dir.path()); });
  EXPECT_NE(msg.find("c0r2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("samples"), std::string::npos) << msg;
}

TEST(DatasetIo, UnknownEnumTokenNamesTrialAndField) {
  TempDir dir("enum");
  write_dataset(small_dataset(), dir.path());
  rewrite_manifest(dir.path(), [](nlohmann::json& j) { j["trials"][2]["action"] = "wiggle"; });
  const auto msg = error_of([&] { load_dataset(dir.path()); });
  EXPECT_NE(msg.find("c0r2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("action"), std::string::npos) << msg;
}

TEST(DatasetIo, ReaderFiltersClasses) {
  TempDir dir("filter");
  write_dataset(small_dataset(), dir.path());
  DatasetReader r(dir.path());
  EXPECT_EQ(r.size(), 6u);
  const std::vector<ActionLabel> keep{finger(Digit::middle)};
  r.filter_classes(keep);
  EXPECT_EQ(r.size(), 3u);
  ASSERT_EQ(r.classes().size(), 1u);
  EXPECT_EQ(r.read(0).trial_id, "c1r0");
}
