#include "doctest.h"

#include <random>

#include "metra/core.h"

using namespace metra;

TEST_CASE("cumulative_prob sums the tail") {
  const LevelDistribution d{{0.25, 0.25, 0.25, 0.25}};
  CHECK(cumulative_prob(d, 0) == doctest::Approx(1.0));
  CHECK(cumulative_prob(d, 2) == doctest::Approx(0.5));
  CHECK(cumulative_prob(LevelDistribution::one_hot(3, 3), 3) == 1.0);
  CHECK_THROWS_AS(cumulative_prob(d, 4), RangeError);
  CHECK_THROWS_AS(cumulative_prob(d, -1), RangeError);
}

TEST_CASE("cumulative_prob is 1 at level 0 and non-increasing") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int L = 1 + trial % 8;
    LevelDistribution d{std::vector<double>(L + 1)};
    double sum = 0;
    for (double& p : d.probs) sum += (p = u(rng));
    for (double& p : d.probs) p /= sum;
    REQUIRE(d.valid());
    CHECK(cumulative_prob(d, 0) == doctest::Approx(1.0).epsilon(1e-6));
    for (int l = 1; l <= L; ++l) {
      CHECK(cumulative_prob(d, l) <= cumulative_prob(d, l - 1));
    }
  }
}

TEST_CASE("boundary_level counts leading zero layers") {
  // bit l-1 holds z^(l)
  CHECK(boundary_level({0b000, 3}) == 3);
  CHECK(boundary_level({0b101, 3}) == 0);  // z = (1,0,1)
  CHECK(boundary_level({0b010, 3}) == 1);  // z = (0,1,0)
}

TEST_CASE("boundary_level property over all states") {
  for (int L = 1; L <= 8; ++L) {
    for (std::uint32_t bits = 0; bits < (1u << L); ++bits) {
      const CrfState z{bits, L};
      const int l = boundary_level(z);
      REQUIRE(l >= 0);
      REQUIRE(l <= L);
      for (int k = 1; k <= l; ++k) CHECK_FALSE(z.bit(k));
      if (l < L) CHECK(z.bit(l + 1));
    }
  }
}

TEST_CASE("CrfParams validation and defaults") {
  const CrfParams p = CrfParams::metrical_defaults(8);
  for (int l = 1; l <= 4; ++l) {
    CHECK(p.del(l) == kInf);
    CHECK(p.ins(l) == kInf);
  }
  for (int l = 5; l <= 8; ++l) {
    CHECK(p.del(l) == 15.0);
    CHECK(p.ins(l) == 20.0);
  }
  CHECK_THROWS_AS(CrfParams::uniform(2, 0.0, 1.0), RangeError);
  CHECK_THROWS_AS(CrfParams::uniform(2, 1.0, -3.0), RangeError);

  const CrfParams upper = p.upper_levels(4);
  CHECK(upper.num_layers == 4);
  CHECK(upper.del(1) == 15.0);
  CHECK(upper.ins(4) == 20.0);
}

TEST_CASE("piano roll tracks share num_steps") {
  PianoRoll roll(4);
  roll.add_track(TrackRoll("a", 4));
  CHECK_THROWS_AS(roll.add_track(TrackRoll("b", 5)), ShapeError);
  CHECK_THROWS_AS(PianoRoll(0), RangeError);

  TrackRoll t("x", 3);
  t.set(1, 60, Cell::kHold);
  CHECK_FALSE(t.holds_are_continuations());
  t.set(0, 60, Cell::kOnset);
  CHECK(t.holds_are_continuations());
  CHECK(t.onset_count() == 1);
  CHECK_THROWS_AS(t.set(3, 0, Cell::kOnset), RangeError);
}
