#include "deepnose/attribution.hpp"

#include <cmath>
#include <sstream>

#include "deepnose/voxelizer.hpp"

namespace deepnose {

namespace {

// Ensemble logits for an already-centered molecule; no re-centering, so
// occluded variants stay aligned with the baseline raster.
std::vector<double> logits_no_recenter(const Molecule& centered, std::vector<DeepNoseModel<float>>& models,
                                       const RotationGrid& grid, const TrainConfig& cfg) {
  VoxelTensor vox = voxelize(centered, grid, cfg.box, cfg.step);
  auto x = make_leaf(input_from_voxels<float>({&vox}));
  const std::size_t k = models[0].config().outputs;
  std::vector<double> acc(k, 0.0);
  Rng dummy(0);
  for (auto& mo : models) {
    auto z = mo.logits(mo.features(x, grid.size(), false), false, dummy);
    for (std::size_t d = 0; d < k; ++d) acc[d] += z->value.v[d];
  }
  for (double& v : acc) v /= static_cast<double>(models.size());
  return acc;
}

}  // namespace

AttributionMap occlude_atoms(const Molecule& mol, std::vector<DeepNoseModel<float>>& models,
                             const RotationGrid& grid, const TrainConfig& cfg, double scale) {
  if (mol.atoms.empty()) raise(ErrorKind::EmptyMolecule, "occlusion needs at least one atom");
  if (models.empty()) raise(ErrorKind::InvalidConfig, "occlusion: no models");
  if (!(scale > 0)) raise(ErrorKind::InvalidConfig, "occlusion: scale must be positive");
  const DeepNoseConfig& c0 = models[0].config();
  for (const auto& mo : models)
    if (!(mo.config() == c0)) raise(ErrorKind::ConfigMismatch, "occlusion: models disagree on architecture");

  NoGradGuard guard;
  const Molecule centered = center_molecule(mol);
  const std::vector<double> base = logits_no_recenter(centered, models, grid, cfg);

  AttributionMap map;
  map.cid = mol.cid;
  map.scale = scale;
  map.n_atoms = mol.atoms.size();
  map.n_outputs = c0.outputs;
  map.values.assign(map.n_atoms * map.n_outputs, 0.0);

  parallel_for(map.n_atoms, [&](std::size_t a) {
    Molecule variant = centered;
    variant.atoms.erase(variant.atoms.begin() + static_cast<std::ptrdiff_t>(a));
    const std::vector<double> occluded = logits_no_recenter(variant, models, grid, cfg);
    double* row = map.values.data() + a * map.n_outputs;
    for (std::size_t d = 0; d < map.n_outputs; ++d) {
      const double delta = base[d] - occluded[d];
      row[d] = 2.0 / (1.0 + std::exp(-scale * delta)) - 1.0;
    }
  });
  return map;
}

std::string attribution_csv(const AttributionMap& map, const Molecule& mol, const DescriptorVocabulary& vocab) {
  if (map.n_atoms != mol.atoms.size())
    raise(ErrorKind::ShapeMismatch, "attribution csv: atom count mismatch");
  if (map.n_outputs != vocab.total())
    raise(ErrorKind::ShapeMismatch, "attribution csv: output count does not match vocabulary");
  std::ostringstream out;
  out << "atom,element,descriptor,contribution\n";
  for (std::size_t a = 0; a < map.n_atoms; ++a)
    for (std::size_t d = 0; d < map.n_outputs; ++d)
      out << a << ',' << element_symbol(mol.atoms[a].element) << ',' << csv_escape(vocab.name(d)) << ','
          << format_double(map.at(a, d)) << '\n';
  return out.str();
}

}  // namespace deepnose
