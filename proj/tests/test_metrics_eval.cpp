#include <cmath>
#include <vector>

#include "doctest.h"
#include "earlycast/error.hpp"
#include "earlycast/metrics.hpp"
#include "oracles.hpp"

using namespace earlycast;

namespace {

std::optional<std::size_t> ttd_of(std::vector<double> y) { return ttd(y); }

TrialEvaluation eval(std::vector<double> trace, int label, DropKind kind = DropKind::kUnknown,
                     std::size_t contact = 0) {
  TrialEvaluation e;
  e.trace = std::move(trace);
  e.label = label;
  e.drop_kind = kind;
  e.contact_frame = contact;
  return e;
}

}  // namespace

TEST_CASE("time to decision examples") {
  CHECK(ttd_of({0.8, 0.9, 1.0}) == 1u);
  CHECK(ttd_of({0.5, 0.6, 0.8, 0.9}) == 3u);
  CHECK(ttd_of({0.8, 0.4, 0.9}) == 3u);
  CHECK_FALSE(ttd_of({0.9, 0.5}).has_value());
  CHECK(ttd_of({0.1, 0.9, 0.1}) == 3u);
  CHECK(ttd_of({0.5, 0.25}) == 2u);
  CHECK(ttd_of({0.75}) == 1u);
  CHECK_FALSE(ttd_of({0.7499}).has_value());
  CHECK(ttd_of({0.9, 0.75, 0.76}) == 1u);
  CHECK(ttd_of({0.9, 0.74, 0.75}) == 3u);
  const std::vector<double> y{0.5, 0.8, 0.9};
  CHECK(ttcd(y, 1) == 2u);
  CHECK_FALSE(ttcd(y, 0).has_value());
  CHECK_THROWS_AS(ttd(std::vector<double>{}), Error);
}

TEST_CASE("time to decision matches the brute-force definition on 10k traces") {
  Rng rng(2024);
  std::size_t defined = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto y = testing::random_trace(rng, 1 + rng.below(60));
    const int label = static_cast<int>(rng.below(2));
    const auto a = ttd(y), b = testing::brute_force_ttd(y);
    REQUIRE(a == b);
    REQUIRE(ttcd(y, label) == testing::brute_force_ttcd(y, label));
    defined += a.has_value();
  }
  CHECK(defined > 2000);
  CHECK(defined < 9000);
}

TEST_CASE("accuracy curves") {
  const std::vector<TrialEvaluation> evals{eval({0.5, 0.9, 0.2}, 1), eval({0.49, 0.3, 0.1}, 0),
                                           eval({0.8, 0.6, 0.25}, 1)};
  const auto a50 = accuracy_curve_50(evals);
  CHECK(a50.n == 3);
  CHECK(a50.correct == std::vector<std::size_t>{3, 3, 1});
  CHECK(a50.decisive == std::vector<std::size_t>{3, 3, 3});
  CHECK(a50.accuracy[2] == doctest::Approx(1.0 / 3.0));
  const auto a75 = accuracy_curve_75(evals);
  CHECK(a75.decisive == std::vector<std::size_t>{1, 1, 3});
  CHECK(a75.correct == std::vector<std::size_t>{1, 1, 1});
  CHECK(a75.accuracy[0] == doctest::Approx(1.0 / 3.0));

  const std::vector<TrialEvaluation> ragged{eval({0.5}, 1), eval({0.5, 0.5}, 1)};
  CHECK_THROWS_AS(accuracy_curve_50(ragged), ShapeError);
  CHECK_THROWS_AS(accuracy_curve_50(std::vector<TrialEvaluation>{}), Error);
}

TEST_CASE("aggregate") {
  const std::vector<TrialEvaluation> evals{
      eval({0.5, 0.8, 0.9, 0.95}, 1, DropKind::kCatch, 2),   // ttd 2, correct, early decided at 0.8
      eval({0.5, 0.6, 0.2, 0.1}, 0, DropKind::kMiss, 2),     // ttd 3, correct, early undecided
      eval({0.9, 0.9, 0.9, 0.9}, 0, DropKind::kJumpOff, 3),  // ttd 1, wrong, not in the early pool
      eval({0.5, 0.5, 0.5, 0.5}, 1, DropKind::kCatch, 4),    // undecided, early undecided
  };
  const auto r = aggregate("MTM", evals);
  CHECK(r.model == "MTM");
  CHECK(r.n == 4);
  CHECK(r.decisions.n_decisions == 3);
  CHECK(r.decisions.n_correct == 2);
  CHECK(*r.decisions.mttd_steps == doctest::Approx(2.0));
  CHECK(*r.decisions.mttcd_steps == doctest::Approx(2.5));
  CHECK(r.early_pool == 3);
  CHECK(r.early_decisive == 1);
  CHECK(r.early_correct == 1);
  CHECK(*steps_to_ms(r.decisions.mttcd_steps) == doctest::Approx(25.0));
  CHECK_FALSE(steps_to_ms(std::nullopt).has_value());

  const auto none = aggregate("X", std::vector<TrialEvaluation>{eval({0.5, 0.6}, 1)});
  CHECK_FALSE(none.decisions.mttd_steps.has_value());
  DecisionThresholds bad;
  bad.lo = 0.6;
  CHECK_THROWS_AS(aggregate("X", evals, bad), Error);
}
