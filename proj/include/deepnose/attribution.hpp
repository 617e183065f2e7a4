#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepnose/labels.hpp"
#include "deepnose/train_eval.hpp"

namespace deepnose {

// Per-atom, per-descriptor occlusion contributions in [-1, 1].
struct AttributionMap {
  std::uint32_t cid = 0;
  double scale = 1.0;
  std::size_t n_atoms = 0;
  std::size_t n_outputs = 0;
  std::vector<double> values;  // [n_atoms][n_outputs]

  double at(std::size_t atom, std::size_t d) const { return values[atom * n_outputs + d]; }
};

// Removes atoms one at a time and maps the ensemble logit change through
// 2*sigmoid(scale*(z - z_occluded)) - 1.  Occluded variants keep the original
// molecule's centroid so the remaining atoms do not shift.
AttributionMap occlude_atoms(const Molecule& mol, std::vector<DeepNoseModel<float>>& models,
                             const RotationGrid& grid, const TrainConfig& cfg, double scale);

// CSV rows: atom,element,descriptor,contribution
std::string attribution_csv(const AttributionMap& map, const Molecule& mol, const DescriptorVocabulary& vocab);

}  // namespace deepnose
