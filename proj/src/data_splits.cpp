#include "deepnose/data_splits.hpp"

#include <algorithm>
#include <queue>

#include "json.hpp"

#include "deepnose/common.hpp"

namespace deepnose {

std::vector<std::vector<std::uint32_t>> FoldAssignment::folds() const {
  std::vector<std::vector<std::uint32_t>> out(k);
  for (const auto& [cid, f] : assignment) out[f].push_back(cid);
  return out;
}

std::uint32_t FoldAssignment::fold_for(std::uint32_t cid) const {
  auto it = assignment.find(cid);
  if (it == assignment.end()) raise(ErrorKind::DataMissing, "cid " + std::to_string(cid) + " not in folds");
  return it->second;
}

FoldAssignment iterative_stratification(const LabelTable& table, std::size_t k, int order, std::uint64_t seed) {
  if (k < 2) raise(ErrorKind::InvalidConfig, "stratify: need at least 2 folds");
  if (order != 1 && order != 2) raise(ErrorKind::InvalidConfig, "stratify: order must be 1 or 2");
  if (table.rows.empty()) raise(ErrorKind::InvalidConfig, "stratify: empty label table");

  const std::size_t n = table.rows.size();
  std::vector<std::uint32_t> cids;
  cids.reserve(n);
  std::vector<std::vector<std::uint32_t>> positives(n);  // base label ids per row
  {
    std::size_t i = 0;
    for (const auto& [cid, row] : table.rows) {  // std::map: ascending cid
      cids.push_back(cid);
      for (std::size_t j = 0; j < row.labels.size(); ++j)
        if (row.labels[j]) positives[i].push_back(static_cast<std::uint32_t>(j));
      ++i;
    }
  }

  // Stratification targets: every positive label and, for order 2, every
  // label pair that co-occurs in some row.
  std::vector<std::vector<std::uint32_t>> targets = positives;
  std::uint32_t n_targets = static_cast<std::uint32_t>(table.n_labels);
  if (order == 2) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> pair_id;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < positives[i].size(); ++a)
        for (std::size_t b = a + 1; b < positives[i].size(); ++b)
          pair_id.try_emplace({positives[i][a], positives[i][b]}, 0);
    for (auto& [pr, id] : pair_id) id = n_targets++;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < positives[i].size(); ++a)
        for (std::size_t b = a + 1; b < positives[i].size(); ++b)
          targets[i].push_back(pair_id.at({positives[i][a], positives[i][b]}));
  }

  std::vector<std::vector<std::uint32_t>> rows_of(n_targets);
  std::vector<std::uint32_t> remaining(n_targets, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::uint32_t t : targets[i]) {
      rows_of[t].push_back(static_cast<std::uint32_t>(i));
      ++remaining[t];
    }

  // desired[f * n_targets + t]: how many more rows with target t fold f wants.
  std::vector<double> desired(static_cast<std::size_t>(k) * n_targets);
  for (std::uint32_t t = 0; t < n_targets; ++t)
    for (std::size_t f = 0; f < k; ++f)
      desired[f * n_targets + t] = static_cast<double>(remaining[t]) / static_cast<double>(k);
  std::vector<double> capacity(k, static_cast<double>(n) / static_cast<double>(k));

  Rng rng(seed);
  std::vector<std::uint32_t> fold_of(n, 0);
  std::vector<bool> assigned(n, false);

  auto pick_fold = [&](const std::vector<std::size_t>& cand) {
    if (cand.size() == 1) return cand[0];
    return cand[static_cast<std::size_t>(rng.below(cand.size()))];
  };

  auto assign = [&](std::uint32_t row, std::size_t f) {
    assigned[row] = true;
    fold_of[row] = static_cast<std::uint32_t>(f);
    capacity[f] -= 1.0;
    for (std::uint32_t t : targets[row]) {
      desired[f * n_targets + t] -= 1.0;
      --remaining[t];
    }
  };

  // min-heap of (remaining count, target id) with lazy invalidation
  using Entry = std::pair<std::uint32_t, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  for (std::uint32_t t = 0; t < n_targets; ++t)
    if (remaining[t] > 0) heap.push({remaining[t], t});

  while (!heap.empty()) {
    auto [count, t] = heap.top();
    heap.pop();
    if (remaining[t] == 0) continue;
    if (count != remaining[t]) {
      heap.push({remaining[t], t});
      continue;
    }
    for (std::uint32_t row : rows_of[t]) {
      if (assigned[row]) continue;
      std::vector<std::size_t> cand;
      double best = -1e300;
      for (std::size_t f = 0; f < k; ++f) {
        const double d = desired[f * n_targets + t];
        if (d > best + 1e-12) {
          best = d;
          cand.assign(1, f);
        } else if (d > best - 1e-12) {
          cand.push_back(f);
        }
      }
      if (cand.size() > 1) {
        std::vector<std::size_t> cap_cand;
        double best_cap = -1e300;
        for (std::size_t f : cand) {
          if (capacity[f] > best_cap + 1e-12) {
            best_cap = capacity[f];
            cap_cand.assign(1, f);
          } else if (capacity[f] > best_cap - 1e-12) {
            cap_cand.push_back(f);
          }
        }
        cand = std::move(cap_cand);
      }
      assign(row, pick_fold(cand));
      for (std::uint32_t u : targets[row])
        if (u != t && remaining[u] > 0) heap.push({remaining[u], u});
    }
  }

  // rows with no stratification targets: greatest remaining capacity
  for (std::uint32_t row = 0; row < n; ++row) {
    if (assigned[row]) continue;
    std::vector<std::size_t> cand;
    double best_cap = -1e300;
    for (std::size_t f = 0; f < k; ++f) {
      if (capacity[f] > best_cap + 1e-12) {
        best_cap = capacity[f];
        cand.assign(1, f);
      } else if (capacity[f] > best_cap - 1e-12) {
        cand.push_back(f);
      }
    }
    assign(row, pick_fold(cand));
  }

  FoldAssignment fa;
  fa.k = k;
  fa.seed = seed;
  fa.order = order;
  for (std::size_t i = 0; i < n; ++i) fa.assignment[cids[i]] = fold_of[i];
  return fa;
}

std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> train_test_view(const FoldAssignment& fa,
                                                                                  std::size_t test_fold) {
  if (test_fold >= fa.k)
    raise(ErrorKind::IndexOutOfRange,
          "test fold " + std::to_string(test_fold) + " out of range for k=" + std::to_string(fa.k));
  std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> out;
  for (const auto& [cid, f] : fa.assignment)
    (f == test_fold ? out.second : out.first).push_back(cid);
  return out;
}

std::string folds_to_json(const FoldAssignment& fa) {
  nlohmann::json j;
  j["k"] = fa.k;
  j["seed"] = fa.seed;
  j["order"] = fa.order;
  nlohmann::json a = nlohmann::json::object();
  for (const auto& [cid, f] : fa.assignment) a[std::to_string(cid)] = f;
  j["assignment"] = std::move(a);
  return j.dump(2) + "\n";
}

FoldAssignment folds_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(strip_leading_comments(text));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::MalformedRecord, std::string("folds json: ") + e.what());
  }
  FoldAssignment fa;
  try {
    fa.k = j.at("k").get<std::size_t>();
    fa.seed = j.at("seed").get<std::uint64_t>();
    fa.order = j.value("order", 2);
    for (const auto& [key, val] : j.at("assignment").items()) {
      std::size_t pos = 0;
      const unsigned long cid = std::stoul(key, &pos);
      if (pos != key.size()) raise(ErrorKind::MalformedRecord, "folds json: bad cid key '" + key + "'");
      const auto f = val.get<std::uint32_t>();
      if (f >= fa.k) raise(ErrorKind::MalformedRecord, "folds json: fold index " + std::to_string(f) + " >= k");
      fa.assignment[static_cast<std::uint32_t>(cid)] = f;
    }
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::MalformedRecord, std::string("folds json: ") + e.what());
  } catch (const std::invalid_argument&) {
    raise(ErrorKind::MalformedRecord, "folds json: non-numeric cid key");
  } catch (const std::out_of_range&) {
    raise(ErrorKind::MalformedRecord, "folds json: cid key out of range");
  }
  return fa;
}

}  // namespace deepnose
