#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "deepnose/labels.hpp"

namespace deepnose {

struct FoldAssignment {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  int order = 2;
  std::map<std::uint32_t, std::uint32_t> assignment;  // cid -> fold in [0, k)

  std::vector<std::vector<std::uint32_t>> folds() const;
  std::uint32_t fold_for(std::uint32_t cid) const;  // DataMissing if absent
};

// Iterative stratification over the positive labels; order 2 additionally
// stratifies on label pairs co-occurring in any row.  Rows are processed
// rarest-label-first; fold choice prefers greatest per-label demand, then
// greatest remaining capacity, then a seeded draw.
FoldAssignment iterative_stratification(const LabelTable& table, std::size_t k, int order, std::uint64_t seed);

// (train cids, test cids) for one held-out fold; disjoint and exhaustive.
std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> train_test_view(const FoldAssignment& fa,
                                                                                  std::size_t test_fold);

std::string folds_to_json(const FoldAssignment& fa);
FoldAssignment folds_from_json(const std::string& text);

}  // namespace deepnose
