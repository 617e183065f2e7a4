#include <algorithm>
#include <set>

#include "deepnose/common.hpp"
#include "deepnose/data_splits.hpp"
#include "doctest.h"
#include "support/synthetic.hpp"

using namespace deepnose;

namespace {

LabelRow row_with(std::size_t n_labels, std::initializer_list<std::size_t> bits) {
  LabelRow r;
  r.labels.assign(n_labels, 0);
  for (std::size_t b : bits) r.labels[b] = 1;
  r.dataset_mask[0] = true;
  return r;
}

// 205 rows over 10 labels; label 9 has exactly five single-label positives.
LabelTable small_table() {
  LabelTable t;
  t.n_labels = 10;
  Rng rng(33);
  for (std::uint32_t i = 0; i < 200; ++i) {
    LabelRow r = row_with(10, {});
    const std::size_t n = 1 + rng.below(3);
    for (std::size_t j = 0; j < n; ++j) r.labels[rng.below(9)] = 1;
    t.rows[1000 + i] = std::move(r);
  }
  for (std::uint32_t i = 0; i < 5; ++i) t.rows[2000 + i] = row_with(10, {9});
  return t;
}

}  // namespace

TEST_CASE("stratification partitions exactly once and stays balanced") {
  const LabelTable t = small_table();
  const auto fa = iterative_stratification(t, 5, 2, 77);
  CHECK(fa.k == 5);
  CHECK(fa.assignment.size() == t.rows.size());
  for (const auto& [cid, fold] : fa.assignment) {
    CHECK(t.rows.count(cid) == 1);
    CHECK(fold < 5);
  }

  const auto folds = fa.folds();
  REQUIRE(folds.size() == 5);
  std::size_t total = 0;
  const double target = static_cast<double>(t.rows.size()) / 5.0;
  for (const auto& f : folds) {
    total += f.size();
    CHECK(std::abs(static_cast<double>(f.size()) - target) <= 0.02 * static_cast<double>(t.rows.size()) + 1.0);
    CHECK(std::is_sorted(f.begin(), f.end()));
  }
  CHECK(total == t.rows.size());
}

TEST_CASE("a label with k positives lands once per fold") {
  const LabelTable t = small_table();
  const auto fa = iterative_stratification(t, 5, 2, 77);
  std::set<std::uint32_t> folds_hit;
  for (std::uint32_t cid = 2000; cid < 2005; ++cid) folds_hit.insert(fa.fold_for(cid));
  CHECK(folds_hit.size() == 5);
}

TEST_CASE("splits are deterministic in the seed") {
  const LabelTable t = small_table();
  const auto a = iterative_stratification(t, 5, 2, 77);
  const auto b = iterative_stratification(t, 5, 2, 77);
  CHECK(a.assignment == b.assignment);
  const auto c = iterative_stratification(t, 5, 2, 78);
  CHECK(a.assignment != c.assignment);
}

TEST_CASE("order 1 and order 2 make different choices when pairs matter") {
  // rows whose single labels are balanced but whose pairs are concentrated
  LabelTable t;
  t.n_labels = 6;
  Rng rng(5);
  std::uint32_t cid = 1;
  for (std::size_t rep = 0; rep < 30; ++rep) {
    t.rows[cid++] = row_with(6, {0, 1});
    t.rows[cid++] = row_with(6, {2, 3});
    t.rows[cid++] = row_with(6, {0, 3});
    t.rows[cid++] = row_with(6, {rng.below(6)});
  }
  const auto o1 = iterative_stratification(t, 4, 1, 9);
  const auto o2 = iterative_stratification(t, 4, 2, 9);
  CHECK(o1.assignment != o2.assignment);

  // pair (0,1) spreads almost evenly under order 2
  std::array<std::size_t, 4> pair_counts{};
  for (const auto& [id, fold] : o2.assignment) {
    const auto& r = t.rows.at(id);
    if (r.labels[0] && r.labels[1]) ++pair_counts[fold];
  }
  const auto [lo, hi] = std::minmax_element(pair_counts.begin(), pair_counts.end());
  CHECK(*hi - *lo <= 1);
}

TEST_CASE("train/test views are disjoint and exhaustive") {
  const LabelTable t = small_table();
  const auto fa = iterative_stratification(t, 5, 2, 42);
  std::set<std::uint32_t> all;
  for (const auto& [cid, fold] : fa.assignment) all.insert(cid);
  for (std::size_t f = 0; f < 5; ++f) {
    const auto [train, test] = train_test_view(fa, f);
    CHECK(train.size() + test.size() == all.size());
    std::set<std::uint32_t> seen(train.begin(), train.end());
    for (std::uint32_t cid : test) CHECK(seen.insert(cid).second);
    CHECK(seen == all);
    for (std::uint32_t cid : test) CHECK(fa.fold_for(cid) == f);
  }
  CHECK_THROWS_AS(train_test_view(fa, 5), Error);
}

TEST_CASE("stratification rejects bad arguments") {
  const LabelTable t = small_table();
  CHECK_THROWS_AS(iterative_stratification(t, 1, 2, 0), Error);
  CHECK_THROWS_AS(iterative_stratification(t, 5, 3, 0), Error);
  CHECK_THROWS_AS(iterative_stratification(LabelTable{}, 5, 2, 0), Error);
  const auto fa = iterative_stratification(t, 5, 2, 0);
  CHECK_THROWS_AS(fa.fold_for(31337), Error);
}

TEST_CASE("fold json round trips") {
  const LabelTable t = small_table();
  const auto fa = iterative_stratification(t, 5, 2, 7);
  const std::string text = folds_to_json(fa);
  const auto back = folds_from_json(text);
  CHECK(back.k == fa.k);
  CHECK(back.seed == fa.seed);
  CHECK(back.order == fa.order);
  CHECK(back.assignment == fa.assignment);

  CHECK_THROWS_AS(folds_from_json("not json"), Error);
  CHECK_THROWS_AS(folds_from_json("{}"), Error);
  CHECK_THROWS_AS(folds_from_json(R"({"k":2,"seed":0,"assignment":{"x":0}})"), Error);
  CHECK_THROWS_AS(folds_from_json(R"({"k":2,"seed":0,"assignment":{"5":3}})"), Error);
}
