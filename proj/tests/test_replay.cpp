#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "accmer/checkpoint.hpp"
#include "accmer/replay.hpp"
#include "accmer/rng.hpp"

using namespace accmer;

namespace {

Transition make_tr(std::uint64_t step) {
  Transition t;
  t.step = step;
  t.state = {static_cast<float>(step)};
  t.next_state = {static_cast<float>(step + 1)};
  t.obs = {0.f, 1.f};
  t.next_obs = {1.f, 0.f};
  t.actions = {0, 5};
  t.reward = static_cast<float>(step) * 0.5f;
  t.done = (step % 7 == 0);
  return t;
}

/// Brute-force ranking oracle: stable sort of (weight desc, index asc).
std::vector<std::uint32_t> top_k_oracle(const WeightTable& t, std::size_t k) {
  std::vector<std::uint32_t> idx(t.occupied());
  std::iota(idx.begin(), idx.end(), 0u);
  std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (t.weight(a) != t.weight(b)) return t.weight(a) > t.weight(b);
    return a < b;
  });
  idx.resize(k);
  return idx;
}

}  // namespace

TEST_CASE("ring overwrite is strictly oldest-first") {
  ReplayBuffer buf(4);
  WeightTable wt(4);
  for (std::uint64_t s = 0; s < 5; ++s) push(buf, wt, make_tr(s));  // a..e
  CHECK(buf.size() == 4);
  CHECK(buf[0].step == 4);  // e replaced a
  CHECK(buf[1].step == 1);
  CHECK(buf[2].step == 2);
  CHECK(buf[3].step == 3);
  CHECK(buf.write_cursor() == 1);
}

TEST_CASE("first push fills slot 0; fill saturates at capacity") {
  ReplayBuffer buf(3);
  WeightTable wt(3);
  CHECK(push(buf, wt, make_tr(0)) == 0);
  CHECK(buf.size() == 1);
  for (std::uint64_t s = 1; s < 10; ++s) push(buf, wt, make_tr(s));
  CHECK(buf.size() == 3);
  CHECK(wt.occupied() == 3);
}

TEST_CASE("pushed slots take the current maximum weight") {
  ReplayBuffer buf(4);
  WeightTable wt(4);
  push(buf, wt, make_tr(0));
  CHECK(wt.weight(0) == 1.0);  // initial weight on the first push

  const std::uint32_t idx[] = {0};
  const double w[] = {3.5};
  wt.update(idx, w);
  push(buf, wt, make_tr(1));
  CHECK(wt.weight(1) == 3.5);

  const std::uint32_t idx2[] = {0, 1};
  const double w2[] = {0.25, 0.5};
  wt.update(idx2, w2);
  push(buf, wt, make_tr(2));
  CHECK(wt.weight(2) == 0.5);
}

TEST_CASE("push bumps only the written slot's generation") {
  ReplayBuffer buf(2);
  WeightTable wt(2);
  push(buf, wt, make_tr(0));
  push(buf, wt, make_tr(1));
  push(buf, wt, make_tr(2));  // overwrites slot 0
  CHECK(wt.generation(0) == 2);
  CHECK(wt.generation(1) == 1);
}

TEST_CASE("update_weights touches exactly the named slots") {
  ReplayBuffer buf(4);
  WeightTable wt(4);
  for (std::uint64_t s = 0; s < 4; ++s) push(buf, wt, make_tr(s));

  const std::uint32_t idx[] = {2};
  const double w[] = {0.7};
  wt.update(idx, w);
  CHECK(wt.weight(0) == 1.0);
  CHECK(wt.weight(1) == 1.0);
  CHECK(wt.weight(2) == 0.7);
  CHECK(wt.weight(3) == 1.0);

  wt.update({}, {});  // no-op
  CHECK(wt.weight(2) == 0.7);

  const double neg[] = {-0.1};
  CHECK_THROWS_WITH(wt.update(idx, neg), Catch::Matchers::ContainsSubstring("negative"));
  const std::uint32_t oob[] = {9};
  const double ok[] = {0.1};
  CHECK_THROWS_AS(wt.update(oob, ok), std::out_of_range);
  CHECK_THROWS_AS(wt.update(idx, std::span<const double>{}), std::invalid_argument);
}

TEST_CASE("apply_decay scales occupied weights only") {
  ReplayBuffer buf(4);
  WeightTable wt(4);
  push(buf, wt, make_tr(0));
  push(buf, wt, make_tr(1));
  const std::uint32_t idx[] = {0, 1};
  const double w[] = {1.0, 0.5};
  wt.update(idx, w);

  wt.apply_decay(1.0);
  CHECK(wt.weight(0) == 1.0);
  CHECK(wt.weight(1) == 0.5);

  wt.apply_decay(0.8);
  CHECK(wt.weight(0) == Catch::Approx(0.8).epsilon(1e-12));
  CHECK(wt.weight(1) == Catch::Approx(0.4).epsilon(1e-12));
  CHECK(wt.weight(2) == 1.0);  // unoccupied, untouched

  CHECK_THROWS_AS(wt.apply_decay(0.0), std::invalid_argument);
  CHECK_THROWS_AS(wt.apply_decay(1.5), std::invalid_argument);
}

TEST_CASE("k repeated decays compose to gamma^k") {
  ReplayBuffer buf(2);
  WeightTable wt(2);
  push(buf, wt, make_tr(0));
  const double gamma = 0.9;
  for (int k = 0; k < 20; ++k) wt.apply_decay(gamma);
  CHECK(wt.weight(0) == Catch::Approx(std::pow(gamma, 20)).epsilon(1e-12));
}

TEST_CASE("top_k breaks ties toward the lower slot index") {
  ReplayBuffer buf(4);
  WeightTable wt(4);
  for (std::uint64_t s = 0; s < 4; ++s) push(buf, wt, make_tr(s));
  const std::uint32_t idx[] = {0, 1, 2, 3};
  const double w[] = {0.1, 0.9, 0.9, 0.2};
  wt.update(idx, w);

  CHECK(wt.top_k(2) == std::vector<std::uint32_t>{1, 2});
  CHECK(wt.top_k(0).empty());
  CHECK_THROWS_AS(wt.top_k(5), std::out_of_range);

  const double uniform[] = {0.3, 0.3, 0.3, 0.3};
  wt.update(idx, uniform);
  CHECK(wt.top_k(3) == std::vector<std::uint32_t>{0, 1, 2});
}

TEST_CASE("top_k equals the brute-force ranking on random tables") {
  RngStream rng(123, "topk");
  for (int iter = 0; iter < 40; ++iter) {
    const std::size_t d = 1 + rng.below(10000);
    const std::size_t fill = 1 + rng.below(d);
    ReplayBuffer buf(d);
    WeightTable wt(d);
    for (std::uint64_t s = 0; s < fill; ++s) push(buf, wt, make_tr(s));
    // Coarse quantization forces plenty of ties.
    std::vector<std::uint32_t> idx(fill);
    std::iota(idx.begin(), idx.end(), 0u);
    std::vector<double> w(fill);
    for (auto& x : w) x = static_cast<double>(rng.below(16)) / 8.0;
    wt.update(idx, w);

    const std::size_t k = rng.below(fill + 1);
    REQUIRE(wt.top_k(k) == top_k_oracle(wt, k));
  }
}

TEST_CASE("decay never reorders the ranking") {
  RngStream rng(321, "decay-rank");
  ReplayBuffer buf(500);
  WeightTable wt(500);
  for (std::uint64_t s = 0; s < 500; ++s) push(buf, wt, make_tr(s));
  std::vector<std::uint32_t> idx(500);
  std::iota(idx.begin(), idx.end(), 0u);
  std::vector<double> w(500);
  for (auto& x : w) x = rng.unit() * 10.0;
  wt.update(idx, w);

  const auto before = wt.top_k(500);
  wt.apply_decay(0.75);
  wt.apply_decay(0.75);
  CHECK(wt.top_k(500) == before);
}

TEST_CASE("push never decreases another slot's weight") {
  RngStream rng(777, "push-mono");
  ReplayBuffer buf(32);
  WeightTable wt(32);
  std::vector<double> snapshot;
  for (std::uint64_t s = 0; s < 200; ++s) {
    snapshot.assign(wt.weights().begin(), wt.weights().end());
    const std::size_t slot = push(buf, wt, make_tr(s));
    for (std::size_t i = 0; i < wt.capacity(); ++i) {
      if (i == slot) continue;
      REQUIRE(wt.weight(i) == snapshot[i]);
    }
    if (wt.occupied() > 0 && rng.unit() < 0.7) {
      const std::uint32_t j = static_cast<std::uint32_t>(rng.below(wt.occupied()));
      const std::uint32_t idx[] = {j};
      const double w[] = {rng.unit() * 4.0};
      wt.update(idx, w);
    }
  }
}

TEST_CASE("replay checkpoint round-trips buffer and weight table") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "accmer_replay_ckpt_test.bin").string();
  ReplayBuffer buf(8);
  WeightTable wt(8);
  for (std::uint64_t s = 0; s < 11; ++s) push(buf, wt, make_tr(s));  // wrapped
  const std::uint32_t idx[] = {1, 4};
  const double w[] = {2.25, 0.125};
  wt.update(idx, w);
  wt.apply_decay(0.9);

  save_replay_checkpoint(path, buf, wt);
  const LoadedReplay loaded = load_replay_checkpoint(path);

  REQUIRE(loaded.buffer.capacity() == buf.capacity());
  REQUIRE(loaded.buffer.size() == buf.size());
  REQUIRE(loaded.buffer.write_cursor() == buf.write_cursor());
  for (std::size_t i = 0; i < buf.size(); ++i) REQUIRE(loaded.buffer[i] == buf[i]);
  for (std::size_t i = 0; i < wt.capacity(); ++i) {
    REQUIRE(loaded.table.weight(i) == wt.weight(i));
    REQUIRE(loaded.table.generation(i) == wt.generation(i));
  }
  REQUIRE(loaded.table.occupied() == wt.occupied());
  std::filesystem::remove(path);
}

TEST_CASE("corrupt replay checkpoints are rejected") {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "accmer_replay_corrupt.bin").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "ACRPgarbage";
  }
  CHECK_THROWS_WITH(load_replay_checkpoint(path),
                    Catch::Matchers::ContainsSubstring("corrupt"));
  std::filesystem::remove(path);
}
