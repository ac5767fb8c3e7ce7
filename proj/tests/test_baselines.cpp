#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "beamtrack/baselines.hpp"

using namespace beamtrack;
namespace fs = std::filesystem;

namespace {

Dataset from_beams(const std::vector<std::vector<int>>& beam_rows, int m = 3) {
  Dataset ds;
  ds.name = "b";
  auto fm = std::make_shared<FeatureMap>(1, 1, 1);
  ds.feature_store["x"] = fm;
  for (size_t i = 0; i < beam_rows.size(); ++i) {
    InstanceRecord rec;
    rec.beams = beam_rows[i];
    rec.features.assign(rec.beams.size(), "x");
    rec.labels.assign(m, 0);
    rec.user_id = 0;
    rec.t = static_cast<long>(i);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace

TEST_SUITE("baselines") {
  TEST_CASE("last_step repeats the final observation") {
    const Dataset ds = from_beams({{3, 9, 4}, {7, 7, 0}});
    const Predictions p = last_step_predict(ds, 3);
    CHECK(p == Predictions{{4, 4, 4}, {0, 0, 0}});
    CHECK_THROWS_AS(last_step_predict(ds, 0), ContractError);
  }

  TEST_CASE("linreg extrapolates exact lines") {
    // beams 2,4,6,8: slope 2, next values 10,12,14.
    CHECK(linreg_predict(from_beams({{2, 4, 6, 8}}), 3, 128) == Predictions{{10, 12, 14}});

    // Constant sequence: slope 0, repeats the level.
    CHECK(linreg_predict(from_beams({{5, 5, 5, 5}}), 2, 128) == Predictions{{5, 5}});

    // Descending line runs below zero and clamps at 0.
    CHECK(linreg_predict(from_beams({{6, 4, 2, 0}}), 3, 128) == Predictions{{0, 0, 0}});

    // Ascending line runs past the codebook and clamps at num_beams - 1.
    CHECK(linreg_predict(from_beams({{120, 124, 128}}), 2, 130) == Predictions{{129, 129}});
  }

  TEST_CASE("linreg rounds half away from zero") {
    // beams 0,1,0,2: slope 1/2, intercept 0 (exact in binary); fitted values
    // at steps 4 and 5 are 2.0 and 2.5, and the half rounds up, not to even.
    CHECK(linreg_predict(from_beams({{0, 1, 0, 2}}), 2, 128) == Predictions{{2, 3}});

    // beams 0,0,1: slope 1/2, intercept -1/6; fits 4/3 -> 1 and 11/6 -> 2.
    CHECK(linreg_predict(from_beams({{0, 0, 1}}), 2, 128) == Predictions{{1, 2}});
  }

  TEST_CASE("single-step records fall back to repetition") {
    CHECK(linreg_predict(from_beams({{9}}), 2, 128) == Predictions{{9, 9}});
  }

  TEST_CASE("beam distribution counts observed columns only") {
    const Dataset ds = from_beams({{0, 0, 1}, {1, 1, 2}});
    const BeamDistribution dist = fit_beam_distribution(ds, 4);
    REQUIRE(dist.probs.size() == 4);
    CHECK(dist.probs[0] == doctest::Approx(2.0 / 6));
    CHECK(dist.probs[1] == doctest::Approx(3.0 / 6));
    CHECK(dist.probs[2] == doctest::Approx(1.0 / 6));
    CHECK(dist.probs[3] == 0.0);
    CHECK(std::accumulate(dist.probs.begin(), dist.probs.end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-12));

    const BeamDistribution back = BeamDistribution::from_json(dist.to_json());
    CHECK(back.probs == dist.probs);

    CHECK_THROWS_AS(fit_beam_distribution(ds, 2), DataError);  // beam 2 out of range
    CHECK_THROWS_AS(fit_beam_distribution(Dataset{}, 4), ContractError);
  }

  TEST_CASE("statistical draws depend on seed and position, not record content") {
    const Dataset ds = from_beams({{0, 1, 2}, {3, 3, 3}, {1, 0, 1}});
    BeamDistribution dist;
    dist.probs = {0.25, 0.25, 0.25, 0.25};

    const Predictions a = statistical_predict(dist, ds, 3, 11);
    CHECK(a == statistical_predict(dist, ds, 3, 11));
    CHECK(a != statistical_predict(dist, ds, 3, 12));
    for (const auto& row : a)
      for (int v : row) {
        CHECK(v >= 0);
        CHECK(v < 4);
      }

    // Each position draws from its own stream, so shuffling the records
    // leaves the prediction at every position unchanged.
    Dataset perm = ds;
    std::swap(perm.records[0], perm.records[2]);
    CHECK(statistical_predict(dist, perm, 3, 11) == a);

    CHECK_THROWS_AS(statistical_predict(BeamDistribution{}, ds, 3, 11), ContractError);
  }

  TEST_CASE("degenerate distribution always returns its single beam") {
    const Dataset ds = from_beams({{0, 0, 0}});
    BeamDistribution dist;
    dist.probs = {0.0, 1.0, 0.0};
    CHECK(statistical_predict(dist, ds, 4, 3) == Predictions{{1, 1, 1, 1}});
  }

  TEST_CASE("predictions CSV round-trip") {
    const fs::path path = fs::temp_directory_path() / "beamtrack_test_preds.csv";
    const Dataset ds = from_beams({{1, 2, 3}, {4, 5, 6}});
    const Predictions p = {{10, 11, 12}, {13, 14, 15}};
    write_predictions_csv(path, ds, p);
    CHECK(read_predictions_csv(path, 3) == p);
    CHECK_THROWS_AS(read_predictions_csv(path, 4), DataError);
    fs::remove(path);
  }
}
