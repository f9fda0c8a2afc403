// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>

#include "doctest.h"
#include "mcse/fusion.h"
#include "test_util.h"

using namespace mcse;

namespace {

MaskSet scalar_set(std::vector<double> cleaned, std::optional<double> spatial = std::nullopt) {
  MaskSet s;
  for (double v : cleaned) s.cleaned.push_back(Mask::Constant(1, 1, v));
  if (spatial) s.spatial = Mask::Constant(1, 1, *spatial);
  return s;
}

MaskSet random_set(int m, std::mt19937_64& rng) {
  MaskSet s;
  for (int i = 0; i < m; ++i) s.cleaned.push_back(testing::random_mask(6, 9, rng));
  s.spatial = testing::random_mask(6, 9, rng);
  return s;
}

}  // namespace

TEST_CASE("scalar examples") {
  MaskSet s = scalar_set({0.2, 0.5, 0.4});
  CHECK(fuse_speech(s, FusionMode::kLstmOnly)(0, 0) == 0.2);
  CHECK(fuse_noise(s, FusionMode::kLstmOnly)(0, 0) == 0.5);
  CHECK(fuse_post(s, FusionMode::kLstmOnly)(0, 0) == doctest::Approx(1.1 / 3.0));
  MaskSet t = scalar_set({0.2, 0.5, 0.4}, 0.1);
  CHECK(fuse_post(t, FusionMode::kMesslLstm)(0, 0) == doctest::Approx(0.3));
  CHECK(fuse_speech(t, FusionMode::kMesslLstm)(0, 0) == 0.1);
  // The spatial mask is ignored in LSTM-only mode.
  CHECK(fuse_speech(t, FusionMode::kLstmOnly)(0, 0) == 0.2);
}

TEST_CASE("modes differ exactly where the spatial mask is the minimum") {
  std::mt19937_64 rng(1);
  MaskSet s = random_set(4, rng);
  Mask a = fuse_speech(s, FusionMode::kLstmOnly), b = fuse_speech(s, FusionMode::kMesslLstm);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const bool spatial_min = s.spatial->data()[i] < a.data()[i];
    CHECK((a.data()[i] != b.data()[i]) == spatial_min);
  }
}

TEST_CASE("ordering, permutation invariance and idempotence") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    MaskSet s = random_set(6, rng);
    for (FusionMode mode : {FusionMode::kLstmOnly, FusionMode::kMesslLstm}) {
      FusedMasks f = fuse(s, mode);
      CHECK((f.speech.array() <= f.post.array()).all());
      CHECK((f.post.array() <= f.noise.array()).all());
      MaskSet p = s;
      std::shuffle(p.cleaned.begin(), p.cleaned.end(), rng);
      FusedMasks g = fuse(p, mode);
      CHECK(g.speech == f.speech);
      CHECK(g.noise == f.noise);
      CHECK((g.post - f.post).cwiseAbs().maxCoeff() < 1e-15);
    }
  }
  MaskSet same;
  Mask one = testing::random_mask(5, 5, rng);
  same.cleaned.assign(6, one);
  same.spatial = one;
  for (FusionMode mode : {FusionMode::kLstmOnly, FusionMode::kMesslLstm}) {
    FusedMasks f = fuse(same, mode);
    CHECK(f.speech == one);
    CHECK(f.noise == one);
    CHECK((f.post - one).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("single mask fuses to itself") {
  std::mt19937_64 rng(3);
  MaskSet s;
  s.cleaned.push_back(testing::random_mask(3, 4, rng));
  FusedMasks f = fuse(s, FusionMode::kLstmOnly);
  CHECK(f.noise == s.cleaned[0]);
  CHECK(f.speech == s.cleaned[0]);
  CHECK(f.post == s.cleaned[0]);
}

TEST_CASE("channel exclusion drops cleaned masks") {
  MaskSet s = scalar_set({0.2, 0.5, 0.4}, 0.3);
  MaskSet t = s.without_channels({0});
  REQUIRE(t.cleaned.size() == 2);
  CHECK(fuse_speech(t, FusionMode::kLstmOnly)(0, 0) == 0.4);
  CHECK(t.spatial.has_value());
}

TEST_CASE("invalid sets are rejected") {
  MaskSet empty;
  CHECK_THROWS_AS(fuse_speech(empty, FusionMode::kLstmOnly), std::invalid_argument);
  CHECK_THROWS_AS(fuse_post(scalar_set({0.3}), FusionMode::kMesslLstm), std::invalid_argument);
  MaskSet ragged = scalar_set({0.3});
  ragged.cleaned.push_back(Mask::Constant(2, 1, 0.3));
  CHECK_THROWS_AS(fuse_noise(ragged, FusionMode::kLstmOnly), std::invalid_argument);
  CHECK_THROWS_AS(fuse_noise(scalar_set({1.5}), FusionMode::kLstmOnly), std::invalid_argument);
}
