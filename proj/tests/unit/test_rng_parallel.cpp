// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cmath>
#include <set>
#include <stdexcept>

#include <doctest.h>

#include "confens/parallel.hpp"
#include "confens/rng.hpp"

using namespace confens;

TEST_CASE("counter rng follows its documented draw formula") {
  CounterRng rng(123);
  for (std::uint64_t n = 0; n < 5; ++n) {
    CHECK(rng.next_u64() == mix64(123 + (n + 1) * 0x9E3779B97F4A7C15ULL));
  }
  CHECK(rng.counter() == 5);
  CHECK(CounterRng::substream(9, "a").key() == mix64(9 ^ fnv1a64("a")));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("substreams are independent of draw order elsewhere") {
  CounterRng a = CounterRng::substream(1, "x");
  CounterRng b = CounterRng::substream(1, "y");
  const auto a0 = a.next_u64();
  b.next_u64();
  CHECK(CounterRng::substream(1, "x").next_u64() == a0);
  CHECK(CounterRng::substream(1, "x").key() != CounterRng::substream(2, "x").key());
}

TEST_CASE("variate ranges and moments") {
  CounterRng rng(77);
  double sum = 0, sq = 0;
  const int n = 20000;
  std::set<std::uint64_t> ints;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    const auto k = rng.uniform_int(7);
    CHECK(k < 7);
    ints.insert(k);
    const double z = rng.normal(2.0, 3.0);
    sum += z;
    sq += z * z;
  }
  CHECK(ints.size() == 7);
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean - 2.0) < 0.1);
  CHECK(std::abs(var - 9.0) < 0.4);
  CHECK(rng.uniform_int(1) == 0);
  CHECK(rng.uniform_int(0) == 0);
}

TEST_CASE("parallel_for visits every index exactly once") {
  for (std::size_t workers : {1, 3, 8}) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), workers, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
  }
  parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
}

TEST_CASE("parallel_for rethrows the lowest failing index") {
  for (std::size_t workers : {1, 4}) {
    try {
      parallel_for(100, workers, [](std::size_t i) {
        if (i == 17 || i == 60) throw std::runtime_error("index " + std::to_string(i));
      });
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "index 17");
    }
  }
  CHECK(resolve_workers(3) == 3);
  CHECK(resolve_workers(0) >= 1);
}
