#include "dynpred/dataset.hpp"

#include "dynpred/csv.hpp"
#include "dynpred/rng.hpp"
#include "dynpred/simulate.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace dynpred;
using namespace dynpred::testing;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("load_dataset parses the two-file schema") {
  const auto base = write_temp("ds_base.csv",
                               "id,event_time,event_indicator,age,sex\n"
                               "a,1.0,1,50,male\n"
                               "b,3.5,0,61,female\n"
                               "c,2.0,1,47,male\n");
  const auto lng = write_temp("ds_long.csv",
                              "id,time,y1,y2\n"
                              "a,0,1.5,2\n"
                              "a,0.5,1.9,\n"
                              "b,0,0.7,1\n"
                              "b,1.0,,3\n"
                              "c,0,2.2,0\n");
  const auto [data, report] = load_dataset(base, lng);
  CHECK(data.n() == 3);
  CHECK(data.n_longitudinal() == 2);
  // age numeric, sex one-hot with "female" as reference level
  REQUIRE(data.baseline_names.size() == 2);
  CHECK(data.baseline_names[0] == "age");
  CHECK(data.baseline_names[1] == "sex=male");
  CHECK(data.subjects[0].baseline == std::vector<double>{50.0, 1.0});
  CHECK(data.subjects[1].baseline == std::vector<double>{61.0, 0.0});
  CHECK(data.subjects[0].visit_times == std::vector<double>{0.0, 0.5});
  CHECK(is_missing(data.subjects[0].longitudinal(1, 1)));
  CHECK(report.n_retained == 3);
}

TEST_CASE("load_dataset minimal single subject") {
  const auto base = write_temp("ds1_base.csv",
                               "id,event_time,event_indicator,x\n"
                               "a,1.0,1,0.5\n");
  const auto lng = write_temp("ds1_long.csv", "id,time,y1\na,0,2.0\n");
  const auto [data, report] = load_dataset(base, lng);
  CHECK(data.n() == 1);
  CHECK(data.subjects[0].n_visits() == 1);
}

TEST_CASE("load_dataset rejects visits at or after the event time") {
  const auto base = write_temp("ds2_base.csv",
                               "id,event_time,event_indicator,x\n"
                               "a,1.5,1,0.5\n");
  const auto lng = write_temp("ds2_long.csv", "id,time,y1\na,0,2.0\na,2.0,2.5\n");
  CHECK_THROWS_WITH_AS(load_dataset(base, lng),
                       doctest::Contains("row 3"), DataError);
}

TEST_CASE("load_dataset rejects duplicate (id,time) pairs") {
  const auto base = write_temp("ds3_base.csv",
                               "id,event_time,event_indicator,x\n"
                               "a,5,1,0.5\n");
  const auto lng = write_temp("ds3_long.csv", "id,time,y1\na,0,2.0\na,0,2.5\n");
  CHECK_THROWS_AS(load_dataset(base, lng), DataError);
}

TEST_CASE("load_dataset applies the exclusion rules with a report") {
  const auto base = write_temp("ds4_base.csv",
                               "id,event_time,event_indicator,x\n"
                               "a,5,1,0.5\n"
                               "b,5,1,\n"      // missing baseline covariate
                               "c,5,0,1.0\n"   // missing longitudinal at visit 0
                               "d,5,0,1.0\n"); // no longitudinal rows at all
  const auto lng = write_temp("ds4_long.csv",
                              "id,time,y1\n"
                              "a,0,2.0\n"
                              "b,0,2.0\n"
                              "c,0,\n"
                              "c,1,3.0\n");
  const auto [data, report] = load_dataset(base, lng);
  CHECK(data.n() == 1);
  CHECK(report.excluded_missing_baseline == std::vector<std::string>{"b"});
  CHECK(report.excluded_missing_baseline_long == std::vector<std::string>{"c"});
  CHECK(report.excluded_no_baseline_visit == std::vector<std::string>{"d"});
  CHECK(report.summary().find("subjects retained: 1") != std::string::npos);
}

TEST_CASE("bundled PBC2 files load with the documented shape") {
  const auto [data, report] =
      load_dataset(std::string(DYNPRED_DATA_DIR) + "/pbc2_baseline.csv",
                   std::string(DYNPRED_DATA_DIR) + "/pbc2_longitudinal.csv");
  CHECK(report.n_read == 312);
  CHECK(data.n_baseline() == 3);        // age, sex, drug (one-hot)
  CHECK(data.n_longitudinal() == 8);
  CHECK(data.n() == 280);               // 32 excluded by the baseline rules
  int events = 0;
  for (const auto& s : data.subjects) events += s.event;
  CHECK(events > 100);
}

TEST_CASE("dataset round-trips through the canonical CSV exactly") {
  SimConfig cfg = slope_driven_config(40, 3, 7);
  cfg.censoring_rate = 0.2;
  const Dataset data = simulate_joint_data(cfg);
  const auto base = (std::filesystem::temp_directory_path() / "rt_base.csv").string();
  const auto lng = (std::filesystem::temp_directory_path() / "rt_long.csv").string();
  write_dataset(data, base, lng);
  const auto [back, report] = load_dataset(base, lng);
  REQUIRE(back.n() == data.n());
  for (int i = 0; i < data.n(); ++i) {
    const auto& a = data.subjects[static_cast<std::size_t>(i)];
    const auto& b = back.subjects[static_cast<std::size_t>(i)];
    CHECK(a.id == b.id);
    CHECK(a.event_time == b.event_time);
    CHECK(a.event == b.event);
    CHECK(a.visit_times == b.visit_times);
    CHECK(a.longitudinal == b.longitudinal);
  }
}

TEST_CASE("make_landmark_slice risk set and truncation") {
  auto d = make_dataset(
      {make_subject("1", 1.0, true, {}, {0}, {{1.0}}),
       make_subject("2", 3.0, true, {}, {0, 1, 2.4}, {{1.0}, {2.0}, {3.0}}),
       make_subject("3", 5.0, false, {}, {0, 1, 2.4}, {{1.0}, {2.0}, {3.0}})},
      0, 1);
  const auto strict = make_landmark_slice(d, 2.0, LandmarkMode::Strict);
  CHECK(strict.risk_set_ids() == std::vector<std::string>{"2", "3"});
  CHECK(strict.subjects[0].visit_times == std::vector<double>{0.0, 1.0});
  const auto relaxed = make_landmark_slice(d, 2.0, LandmarkMode::Relaxed);
  CHECK(relaxed.risk_set_ids() == strict.risk_set_ids());
  CHECK(relaxed.subjects[0].visit_times == std::vector<double>{0.0, 1.0, 2.4});

  SUBCASE("visits exactly at the landmark are kept in strict mode") {
    auto d2 = make_dataset({make_subject("1", 9.0, true, {}, {0, 2.0}, {{1.0}, {2.0}})}, 0, 1);
    const auto s = make_landmark_slice(d2, 2.0, LandmarkMode::Strict);
    CHECK(s.subjects[0].visit_times == std::vector<double>{0.0, 2.0});
  }
  SUBCASE("baseline visit survives truncation even past the landmark") {
    auto d2 = make_dataset({make_subject("1", 9.0, true, {}, {0, 5.0}, {{1.0}, {2.0}})}, 0, 1);
    const auto s = make_landmark_slice(d2, 2.0, LandmarkMode::Strict);
    CHECK(s.subjects[0].visit_times == std::vector<double>{0.0});
  }
  SUBCASE("empty risk set throws") {
    CHECK_THROWS_AS(make_landmark_slice(d, 10.0, LandmarkMode::Strict),
                    NonEstimableError);
  }
}

TEST_CASE("strict visits are a subset of relaxed visits with equal risk sets") {
  // property over simulated datasets and landmarks
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    SimConfig cfg = slope_driven_config(60, 2, seed);
    cfg.censoring_rate = 0.15;
    const Dataset data = simulate_joint_data(cfg);
    for (double l : {1.0, 2.5, 4.0}) {
      LandmarkSlice strict, relaxed;
      try {
        strict = make_landmark_slice(data, l, LandmarkMode::Strict);
        relaxed = make_landmark_slice(data, l, LandmarkMode::Relaxed);
      } catch (const NonEstimableError&) {
        continue;
      }
      REQUIRE(strict.risk_set_ids() == relaxed.risk_set_ids());
      for (int i = 0; i < strict.n(); ++i) {
        const auto& sv = strict.subjects[static_cast<std::size_t>(i)].visit_times;
        const auto& rv = relaxed.subjects[static_cast<std::size_t>(i)].visit_times;
        CHECK(sv.size() <= rv.size());
        CHECK(std::equal(sv.begin(), sv.end(), rv.begin()));
      }
    }
  }
}

TEST_CASE("align_to_grid snaps, drops, and resolves collisions") {
  auto d = make_dataset(
      {make_subject("1", 9.0, true, {}, {0, 0.48, 1.02}, {{1.0}, {2.0}, {3.0}})}, 0, 1);
  const auto slice = make_landmark_slice(d, 2.0, LandmarkMode::Strict);
  SUBCASE("snapping within tolerance") {
    const auto res = align_to_grid(slice, {0, 0.5, 1.0}, 0.1);
    CHECK(res.slice.subjects[0].visit_times == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(res.dropped_visits == 0);
  }
  SUBCASE("outside tolerance is dropped") {
    auto d2 = make_dataset({make_subject("1", 9.0, true, {}, {0, 0.7}, {{1.0}, {2.0}})}, 0, 1);
    const auto res = align_to_grid(make_landmark_slice(d2, 2.0, LandmarkMode::Strict),
                                   {0, 0.5, 1.0}, 0.1);
    CHECK(res.slice.subjects[0].visit_times == std::vector<double>{0.0});
    CHECK(res.dropped_visits == 1);
  }
  SUBCASE("later visit wins a collision") {
    auto d2 = make_dataset(
        {make_subject("1", 9.0, true, {}, {0, 0.45, 0.55}, {{1.0}, {2.0}, {3.0}})}, 0, 1);
    const auto res = align_to_grid(make_landmark_slice(d2, 2.0, LandmarkMode::Strict),
                                   {0, 0.5, 1.0}, 0.2);
    REQUIRE(res.slice.subjects[0].visit_times == std::vector<double>{0.0, 0.5});
    CHECK(res.slice.subjects[0].longitudinal(1, 0) == 3.0);  // from t = 0.55
    CHECK(res.dropped_visits == 1);
  }
  SUBCASE("default tolerance is half the smallest gap") {
    auto d2 = make_dataset({make_subject("1", 9.0, true, {}, {0, 1.2}, {{1.0}, {2.0}})}, 0, 1);
    const auto res = align_to_grid(make_landmark_slice(d2, 2.0, LandmarkMode::Strict),
                                   {0, 0.5, 2.0});  // tol 0.25; 1.2 is 0.7 from 0.5
    CHECK(res.slice.subjects[0].visit_times == std::vector<double>{0.0});
    CHECK(res.dropped_visits == 1);
  }
}

TEST_CASE("skewness transforms follow the threshold rules") {
  // exponential-ish, symmetric, and left-skewed covariates
  std::vector<SubjectRecord> subs;
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const double e = rng.exponential(1.0);
    const double s = rng.normal();
    const double left = -rng.exponential(1.0);
    subs.push_back(make_subject("s" + std::to_string(i), 10.0, true, {},
                                {0.0}, {{e, s, left}}));
  }
  auto d = make_dataset(std::move(subs), 0, 3);
  const auto slice = make_landmark_slice(d, 1.0, LandmarkMode::Strict);
  const auto spec = fit_transform_spec(slice);
  CHECK(spec.kind[0] == TransformKind::Log);
  CHECK(spec.kind[1] == TransformKind::Identity);
  CHECK(spec.kind[2] == TransformKind::Cubic);
  // log offset keeps arguments positive when min <= 0
  CHECK(spec.log_offset[0] == 0.0);

  const auto transformed = apply_transform(slice, spec);
  SUBCASE("monotone transforms preserve within-covariate rank order") {
    for (int q = 0; q < 3; ++q) {
      std::vector<std::pair<double, double>> pairs;
      for (int i = 0; i < slice.n(); ++i) {
        pairs.emplace_back(slice.subjects[static_cast<std::size_t>(i)].longitudinal(0, q),
                           transformed.subjects[static_cast<std::size_t>(i)].longitudinal(0, q));
      }
      std::sort(pairs.begin(), pairs.end());
      for (std::size_t i = 1; i < pairs.size(); ++i) {
        CHECK(pairs[i].second >= pairs[i - 1].second);
      }
    }
  }
  SUBCASE("fewer than 3 values forces identity with a warning") {
    auto tiny = make_dataset({make_subject("1", 9.0, true, {}, {0}, {{5.0}}),
                              make_subject("2", 9.0, true, {}, {0}, {{7.0}})},
                             0, 1);
    const auto tiny_spec = fit_transform_spec(make_landmark_slice(tiny, 1.0, LandmarkMode::Strict));
    CHECK(tiny_spec.kind[0] == TransformKind::Identity);
    CHECK(tiny_spec.low_count_covariates == std::vector<int>{0});
  }
}

TEST_CASE("log transform applies the 1 - min offset for non-positive values") {
  std::vector<SubjectRecord> subs;
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    subs.push_back(make_subject("s" + std::to_string(i), 10.0, true, {}, {0.0},
                                {{rng.exponential(0.5) - 0.5}}));
  }
  auto d = make_dataset(std::move(subs), 0, 1);
  const auto slice = make_landmark_slice(d, 1.0, LandmarkMode::Strict);
  const auto spec = fit_transform_spec(slice);
  REQUIRE(spec.kind[0] == TransformKind::Log);
  double min_v = 1e300;
  for (const auto& s : slice.subjects) min_v = std::min(min_v, s.longitudinal(0, 0));
  REQUIRE(min_v <= 0.0);
  CHECK(spec.log_offset[0] == doctest::Approx(1.0 - min_v));
  const auto transformed = apply_transform(slice, spec);
  for (const auto& s : transformed.subjects) CHECK(std::isfinite(s.longitudinal(0, 0)));
}
