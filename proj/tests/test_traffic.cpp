#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "rcnoc/traffic.hpp"

using namespace rcnoc;

TEST_CASE("bit permutation patterns match their definitions", "[traffic]") {
  std::mt19937_64 rng(1);
  CHECK(gen_destination(TrafficPattern::BitComplement, 0, 64, rng) == 63);
  CHECK(gen_destination(TrafficPattern::BitComplement, 63, 64, rng) == 0);
  // 6-bit transpose swaps the high and low halves: (hi,lo)=(3,1) -> (1,3)
  CHECK(gen_destination(TrafficPattern::Transpose, (3 << 3) | 1, 64, rng) == ((1 << 3) | 3));
  CHECK(gen_destination(TrafficPattern::BitReverse, 0b000001, 64, rng) == 0b100000);
  CHECK(gen_destination(TrafficPattern::Shuffle, 0b100001, 64, rng) == 0b000011);
  CHECK(gen_destination(TrafficPattern::Neighbor, 5, 64, rng) == 6);
  CHECK(gen_destination(TrafficPattern::Neighbor, 63, 64, rng) == 0);
  CHECK(gen_destination(TrafficPattern::Tornado, 0, 64, rng) == 31);
  // self-destinations remap to the successor
  CHECK(gen_destination(TrafficPattern::BitComplement, 34, 68, rng) != 34);
}

TEST_CASE("bit complement folds modulo node_count on non-power-of-two systems", "[traffic]") {
  std::mt19937_64 rng(1);
  // 68 nodes -> 7-bit ids; ~0 & 0x7f = 127, folded = 127 % 68 = 59
  CHECK(gen_destination(TrafficPattern::BitComplement, 0, 68, rng) == 59);
}

TEST_CASE("uniform random destinations are uniform within 3 sigma", "[traffic]") {
  const int n = 68;
  const int draws = 1000000;
  std::mt19937_64 rng = node_rng(42, 7);
  std::vector<int> hist(static_cast<size_t>(n), 0);
  for (int i = 0; i < draws; ++i) {
    NodeId d = gen_destination(TrafficPattern::UniformRandom, 10, n, rng);
    REQUIRE(d != 10);
    hist[static_cast<size_t>(d)]++;
  }
  const double p = 1.0 / (n - 1);
  const double mean = draws * p;
  const double sigma = std::sqrt(draws * p * (1 - p));
  double chi2 = 0;
  for (int d = 0; d < n; ++d) {
    if (d == 10) {
      CHECK(hist[static_cast<size_t>(d)] == 0);
      continue;
    }
    CHECK(std::abs(hist[static_cast<size_t>(d)] - mean) <= 3 * sigma);
    chi2 += (hist[static_cast<size_t>(d)] - mean) * (hist[static_cast<size_t>(d)] - mean) / mean;
  }
  // chi-square with 66 dof: mean 66, far tail bound
  CHECK(chi2 < 120.0);
}

TEST_CASE("pattern draws are pure per stream position", "[traffic]") {
  std::mt19937_64 a = node_rng(9, 3);
  std::mt19937_64 b = node_rng(9, 3);
  for (int i = 0; i < 100; ++i)
    CHECK(gen_destination(TrafficPattern::UniformRandom, 3, 68, a) ==
          gen_destination(TrafficPattern::UniformRandom, 3, 68, b));
  std::mt19937_64 c = node_rng(9, 4);
  bool all_same = true;
  std::mt19937_64 a2 = node_rng(9, 3);
  for (int i = 0; i < 100; ++i)
    if (gen_destination(TrafficPattern::UniformRandom, 3, 68, a2) !=
        gen_destination(TrafficPattern::UniformRandom, 3, 68, c))
      all_same = false;
  CHECK_FALSE(all_same);
}

TEST_CASE("injection trials follow the Bernoulli rate", "[traffic]") {
  TrafficSpec spec;
  spec.rate = 0.0;
  spec.packet_flits = 8;
  std::mt19937_64 rng = node_rng(1, 0);
  int fires = 0;
  for (int i = 0; i < 10000; ++i) fires += injection_fires(spec, rng);
  CHECK(fires == 0);

  spec.rate = 1.0;
  spec.packet_flits = 1;
  for (int i = 0; i < 10000; ++i) REQUIRE(injection_fires(spec, rng));

  // rate 0.5, 8-flit packets: expect 1e6 * 0.0625 = 62500 within 1%
  spec.rate = 0.5;
  spec.packet_flits = 8;
  std::mt19937_64 rng2 = node_rng(7, 0);
  int count = 0;
  for (int i = 0; i < 1000000; ++i) count += injection_fires(spec, rng2);
  CHECK(std::abs(count - 62500) <= 625);
}

TEST_CASE("scenario files parse src,dst,start,count records", "[traffic]") {
  std::istringstream in(
      "# adversarial pairs\n"
      "6, 29, 0, 50\n"
      "25,2,0,50\n"
      "\n"
      "1 2 10 3  # spaces work too\n");
  auto entries = parse_scenario(in);
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].src == 6);
  CHECK(entries[0].dst == 29);
  CHECK(entries[0].start_cycle == 0);
  CHECK(entries[0].count == 50);
  CHECK(entries[2].start_cycle == 10);

  std::istringstream bad("1,2\n");
  CHECK_THROWS(parse_scenario(bad));
}
