#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "emgsel/core.hpp"
#include "emgsel/rng.hpp"
#include "test_util.hpp"

using namespace emgsel;
using testutil::finger;
using testutil::ramp_trial;

namespace {

Dataset four_class_dataset(int per_class, std::size_t channels = 6) {
  std::vector<TrialRecord> trials;
  const Digit digits[] = {Digit::index, Digit::middle, Digit::ring, Digit::little};
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < per_class; ++r)
      trials.push_back(ramp_trial("t" + std::to_string(c) + "_" + std::to_string(r), finger(digits[c]), channels, 50.0, 0.2));
  std::vector<ChannelId> ch;
  for (std::size_t i = 0; i < channels; ++i) ch.push_back({static_cast<int>(i), std::nullopt});
  return make_dataset(ch, trials);
}

}  // namespace

TEST(Label, RoundTripsThroughText) {
  ActionLabel l = finger(Digit::ring);
  l.posture_deg = 90;
  EXPECT_EQ(to_string(l), "upper:finger:flexion:ring@90");
  EXPECT_EQ(parse_label("upper:finger:flexion:ring@90"), l);
  ActionLabel ankle{Limb::lower, Joint::ankle, Action::inversion, std::nullopt, std::nullopt};
  EXPECT_EQ(parse_label(to_string(ankle)), ankle);
}

TEST(Label, RejectsInvalidCombinations) {
  EXPECT_THROW(parse_label("upper:elbow:flexion:index"), DataError);
  EXPECT_THROW(parse_label("upper:elbow:inversion"), DataError);
  EXPECT_THROW(parse_label("lower:knee:flexion@90"), DataError);
  EXPECT_THROW(parse_label("upper:finger:flexion:index@45"), DataError);
  EXPECT_THROW(parse_label("upper:finger:wiggle"), DataError);
  EXPECT_THROW(parse_label("upper:finger"), DataError);
  EXPECT_NO_THROW(parse_label("lower:ankle:eversion"));
}

TEST(Label, CanonicalOrderIsLexicographicOverFields) {
  std::vector<ActionLabel> labels{finger(Digit::little), finger(Digit::index), finger(Digit::index)};
  labels.push_back({Limb::lower, Joint::knee, Action::flexion, std::nullopt, std::nullopt});
  const auto classes = canonical_classes(labels);
  ASSERT_EQ(classes.size(), 3u);
  EXPECT_EQ(classes[0], finger(Digit::index));
  EXPECT_EQ(classes[1], finger(Digit::little));
  EXPECT_EQ(classes[2].limb, Limb::lower);
}

TEST(Label, WithoutPostureMatchesAcrossPostures) {
  ActionLabel a = finger(Digit::thumb), b = finger(Digit::thumb);
  a.posture_deg = 0;
  b.posture_deg = 180;
  EXPECT_NE(a, b);
  EXPECT_EQ(without_posture(a), without_posture(b));
}

TEST(Trial, SampleCountFollowsDurationAndRate) {
  EXPECT_EQ(expected_sample_count(15.0, 20000.0), 300000u);
  auto t = ramp_trial("x", finger(Digit::index), 2);
  EXPECT_NO_THROW(validate_trial(t));
  t.samples = Matrix(2, 99);
  try {
    validate_trial(t);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("samples"), std::string::npos);
  }
}

TEST(Trial, RejectsNonFiniteSamples) {
  auto t = ramp_trial("nan", finger(Digit::index), 2);
  t.samples(1, 5) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(validate_trial(t), DataError);
}

TEST(Dataset, ChannelTableRules) {
  EXPECT_THROW(validate_channels(std::vector<ChannelId>{{0, "a"}, {0, "b"}}), DataError);
  EXPECT_THROW(validate_channels(std::vector<ChannelId>{{0, "a"}, {1, "a"}}), DataError);
  EXPECT_NO_THROW(validate_channels(std::vector<ChannelId>{{0, "a"}, {1, std::nullopt}, {2, std::nullopt}}));
}

TEST(Dataset, ChannelCountMismatchNamesTrial) {
  auto ds = four_class_dataset(2);
  ds.trials[3] = ramp_trial(ds.trials[3].trial_id, ds.trials[3].label, 5, 50.0, 0.2);
  try {
    validate_dataset(ds);
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(ds.trials[3].trial_id), std::string::npos);
    EXPECT_NE(msg.find("expected 6"), std::string::npos);
  }
}

TEST(Split, SixtyPerClassGivesFortyEightTwelve) {
  const auto ds = four_class_dataset(60, 1);
  const auto [train, test] = split_dataset(ds, SplitSpec{0.8, 42, true});
  std::map<std::string, int> ntrain, ntest;
  for (const auto& t : train.trials) ++ntrain[to_string(t.label)];
  for (const auto& t : test.trials) ++ntest[to_string(t.label)];
  ASSERT_EQ(ntrain.size(), 4u);
  for (const auto& [k, v] : ntrain) EXPECT_EQ(v, 48) << k;
  for (const auto& [k, v] : ntest) EXPECT_EQ(v, 12) << k;
}

TEST(Split, IsAPartitionAndDeterministic) {
  const auto ds = four_class_dataset(7, 1);
  for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
    const auto [a_train, a_test] = split_dataset(ds, SplitSpec{0.7, seed, true});
    const auto [b_train, b_test] = split_dataset(ds, SplitSpec{0.7, seed, true});
    std::multiset<std::string> ids;
    std::vector<std::string> ta, tb;
    for (const auto& t : a_train.trials) ids.insert(t.trial_id), ta.push_back(t.trial_id);
    for (const auto& t : a_test.trials) ids.insert(t.trial_id);
    for (const auto& t : b_train.trials) tb.push_back(t.trial_id);
    EXPECT_EQ(ta, tb);
    std::multiset<std::string> expected;
    for (const auto& t : ds.trials) expected.insert(t.trial_id);
    EXPECT_EQ(ids, expected);
    // floor(0.7 * 7) = 4 per class
    EXPECT_EQ(a_train.trials.size(), 16u);
  }
}

TEST(Split, StratificationWithinOneTrialForAnyFraction) {
  for (int n : {2, 3, 5, 11, 60})
    for (double f : {0.1, 0.5, 0.8, 0.95}) {
      std::vector<int> class_of;
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < n; ++i) class_of.push_back(c);
      SplitIndices idx;
      try {
        idx = split_indices(class_of, 3, SplitSpec{f, 5, true});
      } catch (const ConfigError&) {
        EXPECT_EQ(static_cast<int>(std::floor(f * n)), 0);
        continue;
      }
      std::vector<int> per(3, 0);
      for (auto i : idx.train) ++per[static_cast<std::size_t>(class_of[i])];
      for (int c = 0; c < 3; ++c) EXPECT_LE(std::abs(per[static_cast<std::size_t>(c)] - f * n), 1.0);
    }
}

TEST(Split, Errors) {
  const auto ds = four_class_dataset(3, 1);
  EXPECT_THROW(split_dataset(ds, SplitSpec{1.0, 0, true}), ConfigError);
  EXPECT_THROW(split_dataset(ds, SplitSpec{0.0, 0, true}), ConfigError);
  auto lone = ds;
  lone.trials.erase(lone.trials.begin(), lone.trials.begin() + 2);  // one index trial left
  try {
    split_dataset(lone, SplitSpec{});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("upper:finger:flexion:index"), std::string::npos);
  }
}

TEST(SelectChannels, RestrictsRowsInOrder) {
  const auto ds = four_class_dataset(2);
  const auto sub = select_channels(ds, std::vector<int>{2, 3});
  ASSERT_EQ(sub.channel_count(), 2u);
  const auto a = ds.trials[0].channel(2);
  const auto b = sub.trials[0].channel(0);
  EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  EXPECT_EQ(sub.channels[0].index, 2);
}

TEST(SelectChannels, FullSubsetIsIdentity) {
  const auto ds = four_class_dataset(2);
  const auto sub = select_channels(ds, std::vector<int>{0, 1, 2, 3, 4, 5});
  ASSERT_EQ(sub.trials.size(), ds.trials.size());
  EXPECT_EQ(sub.channels, ds.channels);
  for (std::size_t i = 0; i < ds.trials.size(); ++i) EXPECT_EQ(sub.trials[i].samples, ds.trials[i].samples);
}

TEST(SelectChannels, RejectsBadSubsets) {
  const auto ds = four_class_dataset(2);
  EXPECT_THROW(select_channels(ds, std::vector<int>{6}), ConfigError);
  EXPECT_THROW(select_channels(ds, std::vector<int>{1, 1}), ConfigError);
  EXPECT_THROW(select_channels(ds, std::vector<int>{3, 1}), ConfigError);
  EXPECT_THROW(select_channels(ds, std::vector<int>{}), ConfigError);
}

TEST(Rng, DeterministicAndWellSpread) {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    (void)c;
  }
  Rng u(7);
  double sum = 0, sum2 = 0;
  constexpr int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = u.normal();
    sum += z;
    sum2 += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sum2 / n, 1.0, 0.02);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) ++counts[u.index(6)];
  for (int k : counts) EXPECT_NEAR(k, 10000, 400);
}

TEST(Rng, DerivedSeedsDependOnEveryKey) {
  const auto s = derive_seed(1, {2, 3});
  EXPECT_NE(s, derive_seed(1, {3, 2}));
  EXPECT_NE(s, derive_seed(2, {2, 3}));
  EXPECT_EQ(s, derive_seed(1, {2, 3}));
}
