#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deepnose/train_eval.hpp"

namespace deepnose {

struct MixturePairRecord {
  std::string dataset;
  std::string pair_id;
  std::vector<std::uint32_t> components_a, components_b;
  double perceptual_distance = 0;
};

// CSV schema: dataset,pair_id,cids_a(semicolon),cids_b(semicolon),distance
std::vector<MixturePairRecord> parse_mixture_csv(const std::string& text);

// Mean of the ensemble-averaged FeatureVectors of the components.
// DataMissing when any component molecule is absent.
std::vector<double> mixture_features(const std::vector<std::uint32_t>& cids,
                                     const std::map<std::uint32_t, Molecule>& molecules,
                                     std::vector<DeepNoseModel<float>>& models, const RotationGrid& grid,
                                     const TrainConfig& cfg);

double mixture_distance(const std::vector<double>& a, const std::vector<double>& b);

// Sample Pearson correlation; DegenerateVariance when either input is
// constant, InvalidConfig below three points.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct MixtureReport {
  struct ScoredPair {
    std::string dataset;
    std::string pair_id;
    double predicted = 0;
    double observed = 0;
  };
  std::vector<ScoredPair> scored;
  std::vector<std::pair<std::string, std::string>> unscorable;  // pair_id, reason
  std::optional<double> r;                                      // over all scored pairs
  std::string r_error;                                          // set when r is unavailable
  std::map<std::string, std::optional<double>> r_by_dataset;
  std::map<std::string, std::string> dataset_errors;
};

// Zero-shot evaluation: predicted distances between mixture feature vectors
// against the recorded perceptual distances, overall and per source dataset.
MixtureReport evaluate_mixture_datasets(const std::vector<MixturePairRecord>& records,
                                        const std::map<std::uint32_t, Molecule>& molecules,
                                        std::vector<DeepNoseModel<float>>& models, const RotationGrid& grid,
                                        const TrainConfig& cfg);

// CSV rows: dataset,pair_id,predicted,observed
std::string mixture_report_csv(const MixtureReport& report);

}  // namespace deepnose
