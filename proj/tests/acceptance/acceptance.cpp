// Acceptance gate: one line per criterion on stdout, progress on stderr.
// With no arguments all 13 criteria run in order; pass numbers to run a
// subset, e.g. `deepnose_acceptance 2 3 11`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "deepnose/attribution.hpp"
#include "deepnose/common.hpp"
#include "deepnose/data_splits.hpp"
#include "deepnose/grad_check.hpp"
#include "deepnose/mixtures.hpp"
#include "deepnose/model.hpp"
#include "deepnose/odor_space.hpp"
#include "deepnose/rotation_grid.hpp"
#include "deepnose/train_eval.hpp"
#include "deepnose/voxelizer.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace deepnose;

namespace {

struct Outcome {
  bool pass = false;
  std::string note;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
  return buf;
}

double rel_l2(const std::vector<float>& a, const std::vector<float>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (static_cast<double>(a[i]) - b[i]) * (static_cast<double>(a[i]) - b[i]);
    den += static_cast<double>(a[i]) * a[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

double rel_l2d(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += a[i] * a[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

DeepNoseConfig micro_arch(std::size_t outputs = 6) {
  DeepNoseConfig cfg;
  cfg.side = 4;
  cfg.conv_channels = {4, 4, 8, 8};
  cfg.hidden = 8;
  cfg.outputs = outputs;
  return cfg;
}

template <typename T>
Tensor<T> randn(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.v) v = static_cast<T>(scale * rng.normal());
  return t;
}

// ---------------------------------------------------------------- criterion 1

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::string worst_op;
  auto track = [&](const char* op, const GradCheckResult& r) {
    std::fprintf(stderr, "  gradcheck %-22s max rel %.3e over %zu coords\n", op, r.max_rel_error, r.checked);
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_op = op;
    }
  };
  Rng rng(20240601);

  {
    auto x = make_param(randn<double>(rng, {2, 2, 3, 4, 5}));
    auto w = make_param(randn<double>(rng, {3, 2, 3, 3, 3}, 0.3));
    auto b = make_param(randn<double>(rng, {3}, 0.1));
    const Tensor<double> lw = randn<double>(rng, {2, 3, 3, 4, 5});
    track("conv3d", grad_check([&] { return weighted_sum(conv3d(x, w, b), lw); }, {x, w, b}));
  }
  {
    auto x = make_param(randn<double>(rng, {2, 3, 4, 4, 4}));
    BatchNorm3d<double> bn(3);
    const Tensor<double> lw = randn<double>(rng, {2, 3, 4, 4, 4});
    track("batchnorm3d", grad_check([&] { return weighted_sum(bn.forward(x, true), lw); }, {x, bn.gamma, bn.beta}));
  }
  {
    auto x = make_param(randn<double>(rng, {2, 3, 4, 4, 4}));
    for (auto& v : x->value.v) v += (v >= 0 ? 0.4 : -0.4);  // stay clear of the kink
    const Tensor<double> lw = randn<double>(rng, {2, 3, 4, 4, 4});
    track("relu", grad_check([&] { return weighted_sum(relu(x), lw); }, {x}));
  }
  {
    auto x = make_param(randn<double>(rng, {2, 2, 4, 4, 4}));
    const Tensor<double> lw = randn<double>(rng, {2, 2, 2, 2, 2});
    track("maxpool3d", grad_check([&] { return weighted_sum(maxpool3d(x), lw); }, {x}, 1e-6));
    track("avgpool3d", grad_check([&] { return weighted_sum(avgpool3d(x), lw); }, {x}));
  }
  {
    auto x = make_param(randn<double>(rng, {3, 10}));
    const Tensor<double> lw = randn<double>(rng, {3, 10});
    track("dropout", grad_check(
                         [&] {
                           Rng drop(404);
                           return weighted_sum(dropout(x, 0.2, drop, true), lw);
                         },
                         {x}));
  }
  {
    auto x = make_param(randn<double>(rng, {3, 5}));
    auto w = make_param(randn<double>(rng, {4, 5}, 0.5));
    auto b = make_param(randn<double>(rng, {4}, 0.1));
    const Tensor<double> lw = randn<double>(rng, {3, 4});
    track("linear", grad_check([&] { return weighted_sum(linear(x, w, b), lw); }, {x, w, b}));
  }
  {
    auto x = make_param(randn<double>(rng, {4, 2, 3, 3, 3}));
    const Tensor<double> lw = randn<double>(rng, {2, 54});
    track("flatten+group_mean", grad_check([&] { return weighted_sum(group_mean(flatten(x), 2), lw); }, {x}));
  }
  {
    auto z = make_param(randn<double>(rng, {3, 6}));
    Tensor<double> y({3, 6}), m({3, 6});
    for (auto& v : y.v) v = static_cast<double>(rng.below(2));
    for (auto& v : m.v) v = rng.below(4) ? 1.0 : 0.0;
    track("masked_bce", grad_check([&] { return masked_bce_with_logits(z, y, m); }, {z}));
  }
  {
    // full model: forward + masked loss, gradients through every parameter
    DeepNoseModel<double> model(micro_arch(), 31);
    auto x = make_param(randn<double>(rng, {4, 6, 4, 4, 4}, 0.8));
    Tensor<double> y({2, 6}), m({2, 6});
    for (auto& v : y.v) v = static_cast<double>(rng.below(2));
    std::size_t on = 0;
    for (auto& v : m.v) {
      v = rng.below(3) ? 1.0 : 0.0;
      on += v > 0;
    }
    if (on == 0) m.v[0] = 1.0;
    auto params = model.parameters();
    params.push_back(x);
    track("full model", grad_check(
                            [&] {
                              Rng drop(77);
                              return masked_bce_with_logits(model.forward(x, 2, true, drop), y, m);
                            },
                            params));
  }

  const double dt = seconds_since(t0);
  const bool pass = worst < 1e-4 && dt < 300.0;
  return {pass, "max rel error " + fmt(worst, 3) + " (" + worst_op + "), " + fmt(dt, 3) + " s"};
}

// ---------------------------------------------------------------- criterion 2

Outcome criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240602);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(3), cin = 1 + rng.below(4), cout = 1 + rng.below(4);
    const std::size_t d = 2 + rng.below(6), h = 2 + rng.below(6), w = 2 + rng.below(6);
    const Tensor<double> x = randn<double>(rng, {n, cin, d, h, w});
    const Tensor<double> wt = randn<double>(rng, {cout, cin, 3, 3, 3}, 0.5);
    const Tensor<double> b = randn<double>(rng, {cout}, 0.2);
    NoGradGuard guard;
    const auto got = conv3d(make_leaf(x), make_leaf(wt), make_leaf(b));
    const auto want = testsup::conv3d_reference(x, wt, b);
    for (std::size_t i = 0; i < want.v.size(); ++i)
      worst = std::max(worst, std::abs(got->value.v[i] - want.v[i]));
  }
  const double dt = seconds_since(t0);
  const bool pass = worst < 1e-6 && dt < 60.0;
  return {pass, "100 shapes, max abs deviation " + fmt(worst, 3) + ", " + fmt(dt, 3) + " s"};
}

// ---------------------------------------------------------------- criterion 3

Outcome criterion3() {
  Rng rng(20240603);
  double worst = 0;
  std::size_t tied_cases = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.below(2) ? static_cast<double>(rng.below(6)) : rng.uniform(-2, 2);
      y[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    y[0] = 1;
    y[n - 1] = 0;  // both classes present
    std::vector<double> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) ++tied_cases;
    const auto got = auroc(s, y);
    const auto want = testsup::auroc_reference(s, y);
    if (!got || !want) return {false, "unexpected undefined AUROC in trial " + std::to_string(trial)};
    worst = std::max(worst, std::abs(*got - *want));
  }
  const bool pass = worst < 1e-12 && tied_cases > 300;
  return {pass, "1000 cases (" + std::to_string(tied_cases) + " with ties), max deviation " + fmt(worst, 3)};
}

// ---------------------------------------------------------------- criterion 4

Outcome criterion4() {
  const auto grid = make_grid(4, 3, 0, 500);
  Rng rng(20240604);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    DeepNoseModel<double> model(DeepNoseConfig{}, 1000 + static_cast<std::uint64_t>(trial));
    const Molecule mol = testsup::random_molecule(rng, 5 + rng.below(14), 1 + static_cast<std::uint32_t>(trial));
    VoxelTensor vox = voxelize(center_molecule(mol), grid);
    const auto base = model.extract_features(vox);

    // permute the orientation axis in place
    VoxelTensor perm = vox;
    std::vector<std::size_t> order(vox.n_orient);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t o = 0; o < order.size(); ++o)
      std::copy(vox.slab(order[o]), vox.slab(order[o]) + vox.slab_size(), perm.slab(o));
    const auto swapped = model.extract_features(perm);
    worst = std::max(worst, rel_l2d(base, swapped));
    std::fprintf(stderr, "  consolidation trial %d: rel change %.3e\n", trial, rel_l2d(base, swapped));
  }
  return {worst <= 1e-6, "20 molecules/models, worst relative change " + fmt(worst, 3)};
}

// ---------------------------------------------------------------- criterion 5

Outcome criterion5() {
  DeepNoseModel<float> model(DeepNoseConfig{}, 55);
  const std::size_t dirs[3] = {8, 16, 64}, axials[3] = {5, 10, 10};
  RotationGrid grids[3];
  for (int g = 0; g < 3; ++g) grids[g] = make_grid(dirs[g], axials[g], 0, 2000);

  Rng rng(20240605);
  double mean_err[3] = {0, 0, 0};
  for (int trial = 0; trial < 20; ++trial) {
    const Molecule mol = center_molecule(testsup::random_molecule(rng, 6 + rng.below(12), 100 + trial));
    // random rotation: uniform axis, uniform angle
    Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
    while (std::sqrt(dot(axis, axis)) < 1e-3) axis = {rng.normal(), rng.normal(), rng.normal()};
    const Mat3 r = axis_angle(normalized(axis), rng.uniform(0.3, 3.0));
    Molecule rotated = mol;
    for (auto& a : rotated.atoms) a.position = r * a.position;

    for (int g = 0; g < 3; ++g) {
      VoxelTensor va = voxelize(mol, grids[g]);
      const auto fa = model.extract_features(va);
      VoxelTensor vb = voxelize(rotated, grids[g]);
      const auto fb = model.extract_features(vb);
      mean_err[g] += rel_l2(fa, fb) / 20.0;
    }
    std::fprintf(stderr, "  rotation trial %d/20 done\n", trial + 1);
  }
  const bool pass = mean_err[0] >= mean_err[1] && mean_err[1] >= mean_err[2];
  return {pass, "mean relative change 40: " + fmt(mean_err[0], 4) + ", 160: " + fmt(mean_err[1], 4) +
                    ", 640: " + fmt(mean_err[2], 4)};
}

// ---------------------------------------------------------------- criterion 6

Outcome criterion6() {
  DeepNoseModel<float> model(DeepNoseConfig{}, 6);
  Rng rng(20240606);
  auto x = make_leaf(randn<float>(rng, {2, 6, 18, 18, 18}, 0.5));
  std::vector<std::vector<std::size_t>> shapes;
  NoGradGuard guard;
  const auto f = model.features(x, 2, false, &shapes);
  const std::vector<std::size_t> want = {2, 96, 2, 2, 2};
  bool found = false;
  for (const auto& s : shapes) found = found || s == want;
  const bool head_ok = f->value.shape == std::vector<std::size_t>{1, 96};
  return {found && head_ok, found ? "block 4 emits [96][2][2][2] per sample" : "final block shape missing"};
}

// ---------------------------------------------------------------- criterion 7

Outcome criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  auto corpus = testsup::flavornet_desk(7);
  const auto grid = make_grid(8, 5, 0, 2000);
  const auto folds = iterative_stratification(corpus.labels, 5, 2, 101);

  DeepNoseConfig arch;  // stock network, 654-wide head, flavornet block masked in
  arch.outputs = corpus.vocab.total();
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 16;
  cfg.seeds = {101};

  auto result = train_fold(corpus.molecules, corpus.labels, corpus.vocab, grid, folds, 0, arch, cfg, 101,
                           [&](std::size_t epoch, double loss) {
                             std::fprintf(stderr, "  epoch %zu/30 loss %.6f (%.0f s elapsed)\n", epoch + 1, loss,
                                          seconds_since(t0));
                           });

  bool decreasing = true;
  for (std::size_t e = 1; e < 10 && e < result.epoch_losses.size(); ++e)
    decreasing = decreasing && result.epoch_losses[e] < result.epoch_losses[e - 1];

  // held-out evaluation
  const auto [train_cids, test_cids] = train_test_view(folds, 0);
  std::vector<const Molecule*> mols;
  std::vector<const LabelRow*> rows;
  for (std::uint32_t cid : test_cids) {
    mols.push_back(&corpus.molecules.at(cid));
    rows.push_back(&corpus.labels.rows.at(cid));
  }
  std::vector<DeepNoseModel<float>> ensemble;
  ensemble.push_back(std::move(result.model));
  const auto scores = ensemble_predict(ensemble, mols, grid, cfg);
  const auto rep = dataset_report(scores, rows, corpus.vocab);
  const double mean_auroc = rep.dataset_mean[static_cast<std::size_t>(DatasetId::Flavornet)];

  const double dt = seconds_since(t0);
  const bool pass = decreasing && mean_auroc >= 0.65;
  return {pass, "held-out mean AUROC " + fmt(mean_auroc, 4) + " over " + std::to_string(test_cids.size()) +
                    " molecules, losses " + (decreasing ? "strictly decreasing" : "NOT strictly decreasing") +
                    " through epoch 10, " + fmt(dt / 3600.0, 3) + " h"};
}

// ---------------------------------------------------------------- criterion 8

Outcome criterion8() {
  // toy corpus over the full vocabulary layout, flavornet block masked out
  std::array<std::vector<std::string>, kDatasetCount> blocks;
  blocks[0] = {"a", "b"};
  blocks[3] = {"c", "d"};
  const DescriptorVocabulary vocab(blocks);

  Rng rng(20240608);
  std::map<std::uint32_t, Molecule> molecules;
  LabelTable base;
  base.n_labels = 4;
  for (std::uint32_t i = 0; i < 16; ++i) {
    const Molecule m = testsup::random_molecule(rng, 5 + rng.below(4), 300 + i);
    molecules[m.cid] = m;
    LabelRow r;
    r.labels.assign(4, 0);
    r.labels[0] = rng.below(2);
    r.labels[1] = rng.below(2);
    r.dataset_mask[0] = true;  // flavornet block absent
    base.rows[m.cid] = std::move(r);
  }
  LabelTable flipped = base;
  for (auto& [cid, row] : flipped.rows) {
    row.labels[2] ^= 1;
    row.labels[3] ^= 1;
  }

  const auto grid = make_grid(2, 2, 0, 200);
  const auto folds = iterative_stratification(base, 4, 2, 5);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.box = 4.0;
  cfg.step = 1.0;
  const auto arch = micro_arch(4);

  auto r1 = train_fold(molecules, base, vocab, grid, folds, 0, arch, cfg, 9);
  auto r2 = train_fold(molecules, flipped, vocab, grid, folds, 0, arch, cfg, 9);
  const bool identical =
      checkpoint_to_bytes(r1.model) == checkpoint_to_bytes(r2.model) && r1.epoch_losses == r2.epoch_losses;
  return {identical, identical ? "flipped masked-out labels left the step bit-identical"
                               : "masked-out labels leaked into the update"};
}

// ---------------------------------------------------------------- criterion 9

Outcome criterion9() {
  DeepNoseModel<float> model(DeepNoseConfig{}, 5);
  const auto grid = make_grid(4, 3, 0, 500);
  const Molecule mol = center_molecule(testsup::chiral_molecule());
  const Molecule mir = center_molecule(testsup::mirror_x(mol));
  VoxelTensor va = voxelize(mol, grid);
  VoxelTensor vb = voxelize(mir, grid);
  const double d = rel_l2(model.extract_features(va), model.extract_features(vb));
  return {d > 1e-3, "mirror pair relative L2 " + fmt(d, 4)};
}

// --------------------------------------------------------------- criterion 10

Outcome criterion10() {
  const auto grid = make_grid(2, 2, 0, 200);
  TrainConfig cfg;
  cfg.box = 4.0;
  cfg.step = 1.0;

  Rng rng(20240610);
  std::map<std::uint32_t, Molecule> molecules;
  for (std::uint32_t i = 0; i < 40; ++i) {
    const Molecule m = testsup::random_molecule(rng, 4 + rng.below(6), 600 + i);
    molecules[m.cid] = m;
  }

  // a briefly trained model, per the pipeline contract
  std::array<std::vector<std::string>, kDatasetCount> blocks;
  blocks[0] = {"a", "b", "c", "d", "e", "f"};
  const DescriptorVocabulary vocab(blocks);
  LabelTable labels;
  labels.n_labels = 6;
  for (const auto& [cid, m] : molecules) {
    LabelRow r;
    r.labels.assign(6, 0);
    for (std::size_t d = 0; d < 6; ++d) r.labels[d] = rng.below(2);
    r.dataset_mask[0] = true;
    labels.rows[cid] = std::move(r);
  }
  const auto folds = iterative_stratification(labels, 4, 2, 2);
  TrainConfig tcfg = cfg;
  tcfg.epochs = 2;
  tcfg.batch_size = 8;
  auto trained = train_fold(molecules, labels, vocab, grid, folds, 0, micro_arch(6), tcfg, 13);
  std::vector<DeepNoseModel<float>> models;
  models.push_back(std::move(trained.model));

  // single-component mixtures reproduce molecule features exactly
  for (std::uint32_t cid : {600u, 613u, 627u}) {
    const auto single = mixture_features({cid}, molecules, models, grid, cfg);
    const auto direct = ensemble_features(models, molecules.at(cid), grid, cfg);
    if (single != direct) return {false, "single-component mixture diverged from molecule features"};
  }

  // 500 synthetic pairs across three sources
  Rng prng(20240611);
  std::vector<MixturePairRecord> records;
  const char* sources[3] = {"panelA", "panelB", "panelC"};
  for (int i = 0; i < 500; ++i) {
    MixturePairRecord rec;
    rec.dataset = sources[prng.below(3)];
    rec.pair_id = "pair" + std::to_string(i);
    const std::size_t na = 1 + prng.below(8), nb = 1 + prng.below(8);
    for (std::size_t j = 0; j < na; ++j) rec.components_a.push_back(600 + static_cast<std::uint32_t>(prng.below(40)));
    for (std::size_t j = 0; j < nb; ++j) rec.components_b.push_back(600 + static_cast<std::uint32_t>(prng.below(40)));
    rec.perceptual_distance = prng.uniform(0, 1);
    records.push_back(std::move(rec));
  }

  const auto rep = evaluate_mixture_datasets(records, molecules, models, grid, cfg);
  const bool scored_all = rep.scored.size() == 500 && rep.unscorable.empty();
  const bool finite_r = rep.r.has_value() && std::isfinite(*rep.r);
  std::size_t per_source = 0;
  for (const auto& [ds, r] : rep.r_by_dataset) per_source += r.has_value() && std::isfinite(*r);
  const bool pass = scored_all && finite_r && per_source == 3;
  return {pass, "500 pairs scored, r = " + (finite_r ? fmt(*rep.r, 4) : std::string("undefined")) + ", " +
                    std::to_string(per_source) + "/3 per-source correlations defined"};
}

// --------------------------------------------------------------- criterion 11

Outcome criterion11() {
  std::ostringstream note;

  const auto grid = make_grid(64, 10, 0, 2000);
  if (grid.size() != 640) return {false, "grid size " + std::to_string(grid.size())};
  double worst_ortho = 0, worst_det = 0;
  for (const auto& r : grid.rotations) {
    worst_ortho = std::max(worst_ortho, orthonormality_defect(r));
    worst_det = std::max(worst_det, std::abs(det(r) - 1.0));
  }
  const bool grid_ok = worst_ortho < 1e-9 && worst_det < 1e-9;
  note << "640 rotations (ortho " << fmt(worst_ortho, 2) << ", det " << fmt(worst_det, 2) << ")";

  const auto tetra = thomson_points(4, 0, 2000);
  const double want_angle = std::acos(-1.0 / 3.0);
  double worst_tetra = 0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) {
      const double c = std::clamp(dot(tetra.points[i], tetra.points[j]), -1.0, 1.0);
      worst_tetra = std::max(worst_tetra, std::abs(std::acos(c) - want_angle));
    }
  const bool tetra_ok = worst_tetra < 1e-3;
  note << "; tetrahedron off by " << fmt(worst_tetra, 2) << " rad";

  Rng rng(20240611);
  std::vector<std::array<double, 3>> x(30), y(30);
  for (auto& p : x) p = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
  const Mat3 planted = axis_angle(normalized({0.3, -1.2, 0.9}), 1.1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Vec3 v = planted * Vec3{x[i][0], x[i][1], x[i][2]};
    y[i] = {v[0] + 0.5, v[1] - 0.25, v[2] + 1.0};
  }
  const Mat3 r = procrustes_rotate(x, y);
  double worst_proc = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) worst_proc = std::max(worst_proc, std::abs(r(i, j) - planted(i, j)));
  const bool proc_ok = worst_proc < 1e-9;
  note << "; procrustes off by " << fmt(worst_proc, 2);

  std::vector<double> d(30 * 30, 0.0);
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t j = 0; j < 30; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += (x[i][k] - x[j][k]) * (x[i][k] - x[j][k]);
      d[i * 30 + j] = std::sqrt(s);
    }
  const auto emb = classical_mds(d, 30);
  double worst_mds = 0;
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t j = 0; j < 30; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += (emb.coords[i][k] - emb.coords[j][k]) * (emb.coords[i][k] - emb.coords[j][k]);
      worst_mds = std::max(worst_mds, std::abs(std::sqrt(s) - d[i * 30 + j]));
    }
  const bool mds_ok = worst_mds < 1e-6;
  note << "; mds round trip " << fmt(worst_mds, 2);

  return {grid_ok && tetra_ok && proc_ok && mds_ok, note.str()};
}

// --------------------------------------------------------------- criterion 12

Outcome criterion12() {
  const auto vocab = testsup::full_vocab();
  const auto table = testsup::union_scale_table(vocab, 11);
  std::fprintf(stderr, "  union table: %zu rows, %zu labels\n", table.rows.size(), table.n_labels);

  const auto t0 = std::chrono::steady_clock::now();
  const auto fa = iterative_stratification(table, 5, 2, 101);
  std::fprintf(stderr, "  stratified in %.1f s\n", seconds_since(t0));

  const auto folds = fa.folds();
  std::size_t total = 0, smallest = table.rows.size(), largest = 0;
  std::set<std::uint32_t> seen;
  for (const auto& f : folds) {
    total += f.size();
    smallest = std::min(smallest, f.size());
    largest = std::max(largest, f.size());
    for (std::uint32_t cid : f)
      if (!seen.insert(cid).second) return {false, "cid " + std::to_string(cid) + " appears in two folds"};
  }
  const double n = static_cast<double>(table.rows.size());
  const bool partition = total == table.rows.size() && seen.size() == table.rows.size();
  const bool sized = smallest >= 0.18 * n && largest <= 0.22 * n;

  const auto fb = iterative_stratification(table, 5, 2, 101);
  const bool deterministic = fa.assignment == fb.assignment;

  std::ostringstream sizes;
  for (std::size_t i = 0; i < folds.size(); ++i) sizes << (i ? "/" : "") << folds[i].size();
  return {partition && sized && deterministic,
          "fold sizes " + sizes.str() + " of " + std::to_string(table.rows.size()) +
              (deterministic ? ", deterministic" : ", NON-DETERMINISTIC")};
}

// --------------------------------------------------------------- criterion 13

Outcome criterion13() {
  DeepNoseModel<float> model(micro_arch(5), 900);
  {
    // move the batch-norm stats off their init values first
    Rng rng(901), drop(902);
    Tensor<float> x = randn<float>(rng, {4, 6, 4, 4, 4}, 0.7);
    model.forward(make_leaf(std::move(x)), 2, true, drop);
  }
  const std::string bytes = checkpoint_to_bytes(model);
  auto copy = checkpoint_from_bytes(bytes);
  if (checkpoint_to_bytes(copy) != bytes) return {false, "save/load/save changed bytes"};

  std::size_t handled = 0, survived = 0;
  auto probe = [&](std::string blob) {
    try {
      checkpoint_from_bytes(blob);
      ++survived;  // parsed in full; acceptable only if the bytes were valid
      return true;
    } catch (const Error&) {
      ++handled;
      return true;
    } catch (...) {
      return false;  // anything else is a crash hazard
    }
  };

  std::string magic = bytes;
  magic[0] = 'Z';
  std::string version = bytes;
  version[6] = 3;
  if (!probe(magic) || !probe(version)) return {false, "corrupt header escaped the error contract"};
  for (std::size_t cut : {std::size_t{5}, std::size_t{10}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1})
    if (!probe(bytes.substr(0, cut))) return {false, "truncation escaped the error contract"};
  if (!probe(bytes + "tail")) return {false, "trailing bytes escaped the error contract"};

  Rng rng(903);
  for (int i = 0; i < 200; ++i) {
    std::string blob = bytes;
    if (rng.below(2)) {
      blob.resize(rng.below(blob.size()));
    } else {
      const std::size_t pos = rng.below(blob.size());
      blob[pos] = static_cast<char>(blob[pos] ^ (1u << rng.below(8)));
    }
    if (!probe(blob)) return {false, "random corruption escaped the error contract (iteration " +
                                         std::to_string(i) + ")"};
  }
  return {true, "round trip byte-identical; " + std::to_string(handled) + " corruptions raised named errors, " +
                    std::to_string(survived) + " benign"};
}

}  // namespace

int main(int argc, char** argv) {
  using Fn = Outcome (*)();
  const Fn criteria[13] = {criterion1, criterion2,  criterion3,  criterion4,  criterion5,  criterion6, criterion7,
                           criterion8, criterion9, criterion10, criterion11, criterion12, criterion13};

  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > 13) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
      return 2;
    }
    wanted.insert(k);
  }

  int failures = 0;
  for (int k = 1; k <= 13; ++k) {
    if (!wanted.empty() && !wanted.count(k)) continue;
    std::fprintf(stderr, "criterion %d running...\n", k);
    Outcome out;
    try {
      out = criteria[k - 1]();
    } catch (const Error& e) {
      out = {false, std::string("error: ") + e.what()};
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s — %s\n", k, out.pass ? "PASS" : "FAIL", out.note.c_str());
    std::fflush(stdout);
    failures += !out.pass;
  }
  return failures ? 1 : 0;
}
