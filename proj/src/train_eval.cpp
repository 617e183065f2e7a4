#include "deepnose/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "deepnose/voxelizer.hpp"

namespace deepnose {

void TrainConfig::validate() const {
  if (!(lr > 0)) raise(ErrorKind::InvalidConfig, "train: lr must be positive");
  if (epochs < 1) raise(ErrorKind::InvalidConfig, "train: epochs must be at least 1");
  if (batch_size < 1) raise(ErrorKind::InvalidConfig, "train: batch_size must be at least 1");
  if (seeds.empty()) raise(ErrorKind::InvalidConfig, "train: at least one seed required");
  if (!(box > 0) || !(step > 0)) raise(ErrorKind::InvalidConfig, "train: box and step must be positive");
}

namespace {

// Voxelizes a batch of molecules in parallel. Molecules are centered here.
std::vector<VoxelTensor> voxelize_batch(const std::map<std::uint32_t, Molecule>& molecules,
                                        const std::vector<std::uint32_t>& cids, const RotationGrid& grid,
                                        const TrainConfig& cfg) {
  std::vector<VoxelTensor> vox(cids.size());
  parallel_for(cids.size(), [&](std::size_t i) {
    vox[i] = voxelize(center_molecule(molecules.at(cids[i])), grid, cfg.box, cfg.step);
  });
  return vox;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TrainResult train_fold(const std::map<std::uint32_t, Molecule>& molecules, const LabelTable& labels,
                       const DescriptorVocabulary& vocab, const RotationGrid& grid, const FoldAssignment& folds,
                       std::size_t test_fold, const DeepNoseConfig& arch, const TrainConfig& cfg,
                       std::uint64_t seed, const std::function<void(std::size_t, double)>& on_epoch) {
  cfg.validate();
  arch.validate();
  if (arch.outputs != vocab.total())
    raise(ErrorKind::ConfigMismatch, "train: model has " + std::to_string(arch.outputs) +
                                         " outputs, vocabulary has " + std::to_string(vocab.total()));
  if (labels.n_labels != vocab.total())
    raise(ErrorKind::ConfigMismatch, "train: label table width does not match vocabulary");
  if (test_fold >= folds.k)
    raise(ErrorKind::IndexOutOfRange, "train: test fold " + std::to_string(test_fold) + " >= k");

  std::vector<std::uint32_t> train_cids, missing;
  for (const auto& [cid, f] : folds.assignment) {
    if (f == test_fold) continue;
    auto mit = molecules.find(cid);
    if (mit == molecules.end() || mit->second.atoms.empty() || !labels.rows.count(cid))
      missing.push_back(cid);
    else
      train_cids.push_back(cid);
  }
  if (train_cids.empty()) raise(ErrorKind::InvalidConfig, "train: no usable molecules outside the test fold");

  Rng rng(seed);
  DeepNoseModel<float> model(arch, rng.next_u64());
  AdamConfig<float> acfg;
  acfg.lr = static_cast<float>(cfg.lr);
  Adam<float> opt(model.parameters(), acfg);

  const std::size_t g = grid.size();
  const std::size_t n_labels = vocab.total();
  std::vector<double> epoch_losses;
  std::vector<std::uint32_t> order = train_cids;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0, weight_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      std::vector<std::uint32_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(start + b));
      auto vox = voxelize_batch(molecules, batch, grid, cfg);
      std::vector<const VoxelTensor*> ptrs(b);
      for (std::size_t i = 0; i < b; ++i) ptrs[i] = &vox[i];
      auto x = make_leaf(input_from_voxels<float>(ptrs));
      vox.clear();

      Tensor<float> y({b, n_labels}), m({b, n_labels});
      for (std::size_t i = 0; i < b; ++i) {
        const LabelRow& row = labels.rows.at(batch[i]);
        const auto mask = expand_mask(row, vocab);
        for (std::size_t d = 0; d < n_labels; ++d) {
          y.v[i * n_labels + d] = static_cast<float>(row.labels[d]);
          m.v[i * n_labels + d] = static_cast<float>(mask[d]);
        }
      }
      double wsum = 0;
      for (float v : m.v) wsum += v;

      auto loss = masked_bce_with_logits(model.forward(x, g, true, rng), y, m);
      loss_sum += static_cast<double>(loss->value.v[0]) * wsum;
      weight_sum += wsum;
      backward(loss, /*release_values=*/true);
      opt.step();
      opt.zero_grad();
    }
    epoch_losses.push_back(weight_sum > 0 ? loss_sum / weight_sum : 0.0);
    if (on_epoch) on_epoch(epoch, epoch_losses.back());
  }

  return TrainResult{std::move(model), std::move(epoch_losses), std::move(train_cids), std::move(missing)};
}

std::vector<std::vector<double>> ensemble_predict(std::vector<DeepNoseModel<float>>& models,
                                                  const std::vector<const Molecule*>& mols,
                                                  const RotationGrid& grid, const TrainConfig& cfg) {
  if (models.empty()) raise(ErrorKind::InvalidConfig, "ensemble: no models");
  const DeepNoseConfig& c0 = models[0].config();
  for (const auto& mo : models)
    if (!(mo.config() == c0)) raise(ErrorKind::ConfigMismatch, "ensemble: models disagree on architecture");

  NoGradGuard guard;
  Rng dummy(0);
  std::vector<std::vector<double>> out(mols.size());
  for (std::size_t i = 0; i < mols.size(); ++i) {
    VoxelTensor vox = voxelize(center_molecule(*mols[i]), grid, cfg.box, cfg.step);
    auto x = make_leaf(input_from_voxels<float>({&vox}));
    std::vector<double> acc(c0.outputs, 0.0);
    for (auto& mo : models) {
      auto z = mo.logits(mo.features(x, grid.size(), false), false, dummy);
      for (std::size_t d = 0; d < c0.outputs; ++d) {
        const double v = z->value.v[d];
        acc[d] += cfg.average_probabilities ? sigmoid(v) : v;
      }
    }
    for (double& v : acc) v /= static_cast<double>(models.size());
    out[i] = std::move(acc);
  }
  return out;
}

std::vector<double> ensemble_features(std::vector<DeepNoseModel<float>>& models, const Molecule& mol,
                                      const RotationGrid& grid, const TrainConfig& cfg) {
  if (models.empty()) raise(ErrorKind::InvalidConfig, "ensemble: no models");
  const DeepNoseConfig& c0 = models[0].config();
  for (const auto& mo : models)
    if (!(mo.config() == c0)) raise(ErrorKind::ConfigMismatch, "ensemble: models disagree on architecture");

  NoGradGuard guard;
  VoxelTensor vox = voxelize(center_molecule(mol), grid, cfg.box, cfg.step);
  auto x = make_leaf(input_from_voxels<float>({&vox}));
  std::vector<double> acc(c0.feature_dim(), 0.0);
  for (auto& mo : models) {
    auto f = mo.features(x, grid.size(), false);
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += f->value.v[d];
  }
  for (double& v : acc) v /= static_cast<double>(models.size());
  return acc;
}

std::optional<double> auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) raise(ErrorKind::ShapeMismatch, "auroc: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::size_t p = 0;
  for (std::uint8_t l : labels) p += l ? 1 : 0;
  const std::size_t q = n - p;
  if (p == 0 || q == 0) return std::nullopt;

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t)
      if (labels[idx[t]]) pos_rank_sum += midrank;
    i = j;
  }
  const double pd = static_cast<double>(p), qd = static_cast<double>(q);
  return (pos_rank_sum - pd * (pd + 1) / 2.0) / (pd * qd);
}

EvalReport dataset_report(const std::vector<std::vector<double>>& scores, const std::vector<const LabelRow*>& rows,
                          const DescriptorVocabulary& vocab) {
  if (scores.size() != rows.size()) raise(ErrorKind::ShapeMismatch, "report: scores/rows length mismatch");
  const std::size_t k = vocab.total();
  for (const auto& s : scores)
    if (s.size() != k) raise(ErrorKind::ShapeMismatch, "report: score row width mismatch");

  EvalReport rep;
  rep.descriptor_auroc.resize(k);
  parallel_for(k, [&](std::size_t d) {
    const DatasetId ds = vocab.dataset_of(d);
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i]->dataset_mask[static_cast<std::size_t>(ds)]) continue;
      s.push_back(scores[i][d]);
      y.push_back(rows[i]->labels[d]);
    }
    rep.descriptor_auroc[d] = auroc(s, y);
  });

  for (std::size_t ds = 0; ds < kDatasetCount; ++ds) {
    const auto id = static_cast<DatasetId>(ds);
    double sum = 0;
    std::size_t defined = 0, skipped = 0;
    for (std::size_t d = vocab.offset(id); d < vocab.offset(id) + vocab.block_size(id); ++d) {
      if (rep.descriptor_auroc[d]) {
        sum += *rep.descriptor_auroc[d];
        ++defined;
      } else {
        ++skipped;
      }
    }
    rep.defined[ds] = defined;
    rep.skipped[ds] = skipped;
    rep.dataset_mean[ds] = defined ? sum / static_cast<double>(defined) : std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

std::vector<double> calibrate_thresholds(const std::vector<std::vector<double>>& scores,
                                         const std::vector<const LabelRow*>& rows,
                                         const DescriptorVocabulary& vocab) {
  if (scores.size() != rows.size()) raise(ErrorKind::ShapeMismatch, "thresholds: scores/rows length mismatch");
  const std::size_t k = vocab.total();
  for (const auto& s : scores)
    if (s.size() != k) raise(ErrorKind::ShapeMismatch, "thresholds: score row width mismatch");

  std::vector<double> thresholds(k, std::numeric_limits<double>::infinity());
  parallel_for(k, [&](std::size_t d) {
    const DatasetId ds = vocab.dataset_of(d);
    std::vector<std::pair<double, std::uint8_t>> sl;
    std::size_t p = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i]->dataset_mask[static_cast<std::size_t>(ds)]) continue;
      sl.emplace_back(scores[i][d], rows[i]->labels[d]);
      p += rows[i]->labels[d] ? 1 : 0;
    }
    if (sl.empty() || p == 0) return;  // threshold stays +inf
    const std::size_t q = sl.size() - p;
    std::sort(sl.begin(), sl.end());

    // Candidates: below the lowest score, midpoints between distinct scores,
    // above the highest.  TPR/FPR are step functions changing only there.
    const double pd = static_cast<double>(p), qd = static_cast<double>(q);
    double best_t = sl.front().first - 1.0;
    double best_obj = std::numeric_limits<double>::infinity();
    auto consider = [&](double t, std::size_t pos_above, std::size_t neg_above) {
      const double tpr = static_cast<double>(pos_above) / pd;
      const double fpr = q == 0 ? 0.0 : static_cast<double>(neg_above) / qd;
      const double obj = std::abs(tpr - (1.0 - fpr));
      if (obj < best_obj) {
        best_obj = obj;
        best_t = t;
      }
    };

    consider(sl.front().first - 1.0, p, q);
    std::size_t pos_le = 0, neg_le = 0;
    std::size_t i = 0;
    while (i < sl.size()) {
      std::size_t j = i;
      while (j < sl.size() && sl[j].first == sl[i].first) {
        (sl[j].second ? pos_le : neg_le) += 1;
        ++j;
      }
      const double t = j < sl.size() ? 0.5 * (sl[i].first + sl[j].first) : sl[i].first + 1.0;
      consider(t, p - pos_le, q - neg_le);
      i = j;
    }
    thresholds[d] = best_t;
  });
  return thresholds;
}

std::vector<std::vector<std::uint8_t>> binarize(const std::vector<std::vector<double>>& scores,
                                                const std::vector<double>& thresholds) {
  std::vector<std::vector<std::uint8_t>> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != thresholds.size())
      raise(ErrorKind::ShapeMismatch, "binarize: row " + std::to_string(i) + " width " +
                                          std::to_string(scores[i].size()) + " vs " +
                                          std::to_string(thresholds.size()) + " thresholds");
    out[i].resize(thresholds.size());
    for (std::size_t d = 0; d < thresholds.size(); ++d) out[i][d] = scores[i][d] > thresholds[d] ? 1 : 0;
  }
  return out;
}

std::string metrics_csv(const std::vector<std::pair<std::size_t, EvalReport>>& fold_reports,
                        const DescriptorVocabulary& vocab) {
  std::ostringstream out;
  out << "descriptor,dataset,fold,auroc\n";
  for (const auto& [fold, rep] : fold_reports)
    for (std::size_t d = 0; d < rep.descriptor_auroc.size(); ++d) {
      out << csv_escape(vocab.name(d)) << ',' << dataset_name(vocab.dataset_of(d)) << ',' << fold << ',';
      if (rep.descriptor_auroc[d])
        out << format_double(*rep.descriptor_auroc[d]);
      else
        out << "undefined";
      out << '\n';
    }
  return out.str();
}

std::string summary_csv(const std::vector<std::pair<std::size_t, EvalReport>>& fold_reports,
                        const DescriptorVocabulary& vocab) {
  (void)vocab;
  std::ostringstream out;
  out << "dataset,mean_auroc\n";
  for (std::size_t ds = 0; ds < kDatasetCount; ++ds) {
    const auto id = static_cast<DatasetId>(ds);
    double sum = 0;
    std::size_t n = 0;
    for (const auto& [fold, rep] : fold_reports) {
      (void)fold;
      if (!std::isnan(rep.dataset_mean[ds])) {
        sum += rep.dataset_mean[ds];
        ++n;
      }
    }
    out << dataset_name(id) << ',';
    if (n)
      out << format_double(sum / static_cast<double>(n));
    else
      out << "undefined";
    out << '\n';
  }
  return out.str();
}

std::string loss_csv(const std::vector<double>& train_losses) {
  std::ostringstream out;
  out << "epoch,split,loss\n";
  for (std::size_t e = 0; e < train_losses.size(); ++e)
    out << (e + 1) << ",train," << format_double(train_losses[e]) << '\n';
  return out.str();
}

std::string thresholds_csv(const std::vector<double>& thresholds, const DescriptorVocabulary& vocab) {
  if (thresholds.size() != vocab.total())
    raise(ErrorKind::ShapeMismatch, "thresholds csv: size does not match vocabulary");
  std::ostringstream out;
  out << "descriptor,threshold\n";
  for (std::size_t d = 0; d < thresholds.size(); ++d) {
    out << csv_escape(vocab.name(d)) << ',';
    if (std::isinf(thresholds[d]))
      out << (thresholds[d] > 0 ? "inf" : "-inf");
    else
      out << format_double(thresholds[d]);
    out << '\n';
  }
  return out.str();
}

}  // namespace deepnose
