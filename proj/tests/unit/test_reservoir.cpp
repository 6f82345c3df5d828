#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "ov3r/errors.hpp"
#include "ov3r/reservoir.hpp"

namespace ov3r {
namespace {

ReservoirEntry entry(std::uint32_t id, std::vector<double> key) {
  ReservoirEntry e;
  e.keyframe = id;
  e.key = std::move(key);
  return e;
}

TEST(Reservoir, FillsThenStaysBounded) {
  Reservoir r(4);
  std::mt19937_64 rng(1);
  for (std::uint32_t i = 0; i < 100; ++i) r.update(entry(i, {1.0}), rng);
  EXPECT_EQ(r.size(), 4u);
  EXPECT_EQ(r.seen(), 100u);
  EXPECT_THROW(Reservoir(0), ContractError);
}

TEST(Reservoir, ReinsertReplacesInPlace) {
  Reservoir r(4);
  std::mt19937_64 rng(1);
  r.update(entry(3, {1.0, 0.0}), rng);
  r.update(entry(3, {0.0, 1.0}), rng);
  EXPECT_EQ(r.size(), 1u);
  EXPECT_EQ(r.seen(), 1u);
  EXPECT_EQ(r.entries()[0].key[1], 1.0);
}

TEST(Reservoir, SamplingIsUniform) {
  constexpr int kTrials = 20000;
  std::vector<int> kept(20, 0);
  std::mt19937_64 rng(7);
  for (int t = 0; t < kTrials; ++t) {
    Reservoir r(5);
    for (std::uint32_t i = 0; i < 20; ++i) r.update(entry(i, {1.0}), rng);
    for (const auto& e : r.entries()) ++kept[e.keyframe];
  }
  // Each id survives with probability 5/20; 5 sigma band.
  const double p = 0.25, sd = std::sqrt(kTrials * p * (1 - p));
  for (int c : kept) EXPECT_NEAR(c, kTrials * p, 5 * sd);
}

TEST(Reservoir, RetrieveMatchesCosineRanking) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Reservoir r(64);
  std::vector<std::pair<std::uint32_t, std::vector<double>>> keys;
  for (std::uint32_t i = 0; i < 30; ++i) {
    std::vector<double> k(6);
    for (auto& v : k) v = g(rng);
    keys.emplace_back(i * 2, k);
    r.update(entry(i * 2, k), rng);
  }
  keys.emplace_back(99, keys[4].second);  // exact tie with id 8
  r.update(entry(99, keys[4].second), rng);
  std::vector<double> q(6);
  for (auto& v : q) v = g(rng);
  const auto want = oracle::cosine_ranking(keys, keys[4].second);
  const auto got = r.retrieve(keys[4].second, 5);
  EXPECT_EQ(got, std::vector<std::uint32_t>(want.begin(), want.begin() + 5));
  EXPECT_EQ(got[0], 8u);
  EXPECT_EQ(got[1], 99u);
  const auto all = r.retrieve(q, 100);
  EXPECT_EQ(all, oracle::cosine_ranking(keys, q));
}

TEST(Reservoir, EmptyRetrieveThrows) {
  Reservoir r(3);
  EXPECT_THROW(r.retrieve(std::vector<double>{1.0}, 1), ContractError);
}

TEST(Cosine, ZeroVectorScoresZero) {
  EXPECT_EQ(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}), 0.0);
  EXPECT_THROW(cosine_similarity(std::vector<double>{1}, std::vector<double>{1, 0}), ShapeError);
}

}  // namespace
}  // namespace ov3r
