#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deepnose/data_splits.hpp"
#include "deepnose/labels.hpp"
#include "deepnose/model.hpp"
#include "deepnose/molecule.hpp"
#include "deepnose/rotation_grid.hpp"

namespace deepnose {

struct TrainConfig {
  double lr = 3e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;  // molecules per step
  std::vector<std::uint64_t> seeds = {101, 102, 103, 104, 105};
  bool average_probabilities = false;  // ensemble averages logits unless set
  bool check64 = false;                // run a 64-bit gradient check before training
  double box = 18.0;
  double step = 1.0;

  void validate() const;
};

struct TrainResult {
  DeepNoseModel<float> model;
  std::vector<double> epoch_losses;        // mask-weighted mean BCE per epoch
  std::vector<std::uint32_t> train_cids;   // molecules actually trained on
  std::vector<std::uint32_t> missing_cids; // excluded up front (no structure/labels)
};

// Trains one network on everything outside test_fold.  Deterministic for a
// fixed (seed, config, data).  Molecules without a structure or label row are
// reported in missing_cids and never seen mid-epoch.
TrainResult train_fold(const std::map<std::uint32_t, Molecule>& molecules, const LabelTable& labels,
                       const DescriptorVocabulary& vocab, const RotationGrid& grid, const FoldAssignment& folds,
                       std::size_t test_fold, const DeepNoseConfig& arch, const TrainConfig& cfg,
                       std::uint64_t seed, const std::function<void(std::size_t, double)>& on_epoch = {});

// Mean output of the ensemble (logits by default) per molecule/descriptor,
// eval mode throughout.  Models must share a config.
std::vector<std::vector<double>> ensemble_predict(std::vector<DeepNoseModel<float>>& models,
                                                  const std::vector<const Molecule*>& mols,
                                                  const RotationGrid& grid, const TrainConfig& cfg);

// Ensemble-averaged consolidated FeatureVector of one molecule.
std::vector<double> ensemble_features(std::vector<DeepNoseModel<float>>& models, const Molecule& mol,
                                      const RotationGrid& grid, const TrainConfig& cfg);

// Rank-based (Mann-Whitney) AUROC with midrank tie handling; nullopt when
// either class is empty.
std::optional<double> auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

struct EvalReport {
  std::vector<std::optional<double>> descriptor_auroc;  // vocab.total() entries
  std::array<double, kDatasetCount> dataset_mean{};     // NaN when nothing defined
  std::array<std::size_t, kDatasetCount> defined{};
  std::array<std::size_t, kDatasetCount> skipped{};     // undefined AUROCs per dataset
};

// Per-descriptor AUROC over the molecules whose mask includes the
// descriptor's dataset, plus per-dataset means over the defined entries.
EvalReport dataset_report(const std::vector<std::vector<double>>& scores, const std::vector<const LabelRow*>& rows,
                          const DescriptorVocabulary& vocab);

// Equal-error-rate thresholds per descriptor from training-set scores:
// t minimizes |TPR(t) - (1 - FPR(t))| over the midpoints of the sorted score
// grid; descriptors with no positives get +infinity.
std::vector<double> calibrate_thresholds(const std::vector<std::vector<double>>& scores,
                                         const std::vector<const LabelRow*>& rows,
                                         const DescriptorVocabulary& vocab);

// Strict comparison: score > threshold.
std::vector<std::vector<std::uint8_t>> binarize(const std::vector<std::vector<double>>& scores,
                                                const std::vector<double>& thresholds);

// CSV renderings (callers prepend provenance comments).
std::string metrics_csv(const std::vector<std::pair<std::size_t, EvalReport>>& fold_reports,
                        const DescriptorVocabulary& vocab);
std::string summary_csv(const std::vector<std::pair<std::size_t, EvalReport>>& fold_reports,
                        const DescriptorVocabulary& vocab);
std::string loss_csv(const std::vector<double>& train_losses);
std::string thresholds_csv(const std::vector<double>& thresholds, const DescriptorVocabulary& vocab);

}  // namespace deepnose
