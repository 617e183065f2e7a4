// deepnose: pipeline driver.  Every subcommand maps onto one library entry
// point; results go to files, progress goes to stderr.  Exit codes: 0 ok,
// 1 invalid config/input, 2 runtime failure.

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "deepnose/attribution.hpp"
#include "deepnose/common.hpp"
#include "deepnose/data_splits.hpp"
#include "deepnose/labels.hpp"
#include "deepnose/mixtures.hpp"
#include "deepnose/model.hpp"
#include "deepnose/odor_space.hpp"
#include "deepnose/pubchem.hpp"
#include "deepnose/rotation_grid.hpp"
#include "deepnose/sdf.hpp"
#include "deepnose/train_eval.hpp"
#include "deepnose/voxelizer.hpp"

namespace fs = std::filesystem;
using namespace deepnose;

namespace {

struct RunPaths {
  std::string cache_dir = "cache";
  std::string out_dir = "out";
  std::string grid_file = "out/grid.dngrid";
  std::string folds_file = "out/folds.json";
  std::string models_dir = "out";
  std::string vocab_file;
  std::array<std::string, kDatasetCount> label_files;  // DatasetId order
};

struct Provenance {
  std::string subcommand;
  std::uint64_t config_hash = 0;
  std::optional<std::uint64_t> grid_hash;
  std::optional<std::uint64_t> checkpoint_hash;
};

std::string iso8601_now() {
  char buf[32];
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string provenance_header(const Provenance& p) {
  std::string h = "# deepnose " + p.subcommand + "\n";
  h += "# config_hash=" + hex64(p.config_hash) + "\n";
  if (p.grid_hash) h += "# grid_hash=" + hex64(*p.grid_hash) + "\n";
  if (p.checkpoint_hash) h += "# checkpoint_hash=" + hex64(*p.checkpoint_hash) + "\n";
  h += "# written_at=" + iso8601_now() + "\n";
  return h;
}

void write_output(const std::string& path, const Provenance& p, const std::string& body) {
  fs::create_directories(fs::path(path).parent_path().empty() ? "." : fs::path(path).parent_path().string());
  write_text_file(path, provenance_header(p) + body);
  std::fprintf(stderr, "wrote %s\n", path.c_str());
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) raise(ErrorKind::InvalidConfig, what + " not found: " + path);
}

DescriptorVocabulary load_vocab(const RunPaths& paths) {
  require_file(paths.vocab_file.empty() ? "(unset --vocab)" : paths.vocab_file, "vocabulary file");
  return DescriptorVocabulary::from_csv(read_text_file(paths.vocab_file));
}

LabelTable load_labels(const RunPaths& paths, const DescriptorVocabulary& vocab) {
  std::vector<LabelTable> tables;
  for (std::size_t d = 0; d < kDatasetCount; ++d) {
    if (paths.label_files[d].empty()) continue;
    require_file(paths.label_files[d], "label file");
    auto parsed = parse_labels_csv(read_text_file(paths.label_files[d]), static_cast<DatasetId>(d), vocab);
    for (const auto& u : parsed.unknown_descriptors)
      std::fprintf(stderr, "warning: %s: unknown descriptor '%s'\n", paths.label_files[d].c_str(), u.c_str());
    std::fprintf(stderr, "%s: %zu rows\n", paths.label_files[d].c_str(), parsed.table.rows.size());
    tables.push_back(std::move(parsed.table));
  }
  if (tables.empty()) raise(ErrorKind::InvalidConfig, "no label files given (--labels-<dataset>)");
  return merge_label_tables(tables);
}

// Structures come from the fetch cache; molecules without a cached SDF are
// skipped here and reported by the caller.
std::map<std::uint32_t, Molecule> load_structures(const std::vector<std::uint32_t>& cids, const RunPaths& paths) {
  FetchOptions fopts;
  fopts.cache_dir = paths.cache_dir;
  std::map<std::uint32_t, Molecule> molecules;
  std::size_t bad = 0;
  for (std::uint32_t cid : cids) {
    const std::string path = cache_path_for(cid, fopts);
    if (!fs::exists(path)) continue;
    try {
      Molecule m = parse_sdf(read_text_file(path));
      if (m.cid == 0) m.cid = cid;
      molecules.emplace(cid, std::move(m));
    } catch (const Error& e) {
      ++bad;
      std::fprintf(stderr, "warning: %s: %s\n", path.c_str(), e.what());
    }
  }
  std::fprintf(stderr, "structures: %zu of %zu loaded from %s (%zu unreadable)\n", molecules.size(), cids.size(),
               paths.cache_dir.c_str(), bad);
  return molecules;
}

std::vector<std::uint32_t> table_cids(const LabelTable& table) {
  std::vector<std::uint32_t> cids;
  cids.reserve(table.rows.size());
  for (const auto& [cid, row] : table.rows) cids.push_back(cid);
  return cids;
}

RotationGrid load_grid_checked(const RunPaths& paths, Provenance& prov) {
  require_file(paths.grid_file, "grid file");
  prov.grid_hash = hash_file(paths.grid_file);
  return load_grid(paths.grid_file);
}

std::vector<std::string> find_checkpoints(const std::string& dir, const std::string& prefix) {
  std::vector<std::string> found;
  if (!fs::is_directory(dir)) return found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind(prefix, 0) == 0 && name.size() > 7 && name.substr(name.size() - 7) == ".dnckpt")
      found.push_back(entry.path().string());
  }
  std::sort(found.begin(), found.end());
  return found;
}

std::vector<DeepNoseModel<float>> load_ensemble(const std::vector<std::string>& files, Provenance& prov) {
  if (files.empty()) raise(ErrorKind::InvalidConfig, "no checkpoints found (--model / --models-dir)");
  std::vector<DeepNoseModel<float>> models;
  std::string digest;
  for (const auto& f : files) {
    require_file(f, "checkpoint");
    models.push_back(checkpoint_from_bytes(read_text_file(f)));
    digest += fs::path(f).filename().string() + "=" + hex64(hash_file(f)) + "\n";
    std::fprintf(stderr, "loaded %s\n", f.c_str());
  }
  prov.checkpoint_hash = fnv1a64(digest.data(), digest.size());
  return models;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::HttpFailure:
    case ErrorKind::IoFailure:
    case ErrorKind::ConvergenceFailure:
      return 2;
    default:
      return 1;  // bad inputs or config
  }
}

std::vector<std::uint32_t> read_cid_file(const std::string& path) {
  require_file(path, "cid file");
  std::vector<std::uint32_t> cids;
  for (const auto& line : split(read_text_file(path), '\n')) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      cids.push_back(static_cast<std::uint32_t>(std::stoul(t)));
    } catch (const std::exception&) {
      raise(ErrorKind::MalformedRow, path + ": bad cid '" + t + "'");
    }
  }
  return cids;
}

// embedding.csv reader for --align; returns (cids, coords)
std::pair<std::vector<std::uint32_t>, std::vector<std::array<double, 3>>> read_embedding_csv(
    const std::string& path) {
  require_file(path, "embedding file");
  std::vector<std::uint32_t> cids;
  std::vector<std::array<double, 3>> pts;
  bool header_seen = false;
  for (const auto& line : split(read_text_file(path), '\n')) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (!header_seen && t.rfind("cid,", 0) == 0) {
      header_seen = true;
      continue;
    }
    const auto fields = split(t, ',');
    if (fields.size() != 5) raise(ErrorKind::MalformedRow, path + ": expected 5 fields: " + t);
    try {
      cids.push_back(static_cast<std::uint32_t>(std::stoul(fields[0])));
      pts.push_back({std::stod(fields[1]), std::stod(fields[2]), std::stod(fields[3])});
    } catch (const std::exception&) {
      raise(ErrorKind::MalformedRow, path + ": bad row: " + t);
    }
  }
  return {std::move(cids), std::move(pts)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeepNose pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value run configuration ([subcommand] sections supported)");
  app.allow_config_extras(CLI::config_extras_mode::error);

  RunPaths paths;
  if (const char* env = std::getenv("DEEPNOSE_CACHE_DIR")) paths.cache_dir = env;
  unsigned threads = 0;
  TrainConfig tcfg;
  DeepNoseConfig arch;

  app.add_option("--threads", threads, "worker threads (0 = logical cores)")->capture_default_str();
  app.add_option("--cache-dir", paths.cache_dir, "SDF cache directory")->capture_default_str();
  app.add_option("--out-dir", paths.out_dir, "output directory")->capture_default_str();
  app.add_option("--grid-file", paths.grid_file, "rotation grid file")->capture_default_str();
  app.add_option("--folds-file", paths.folds_file, "fold assignment file")->capture_default_str();
  app.add_option("--models-dir", paths.models_dir, "checkpoint directory")->capture_default_str();
  app.add_option("--vocab", paths.vocab_file, "descriptor vocabulary CSV");
  app.add_option("--labels-leffingwell", paths.label_files[0], "normalized label CSV");
  app.add_option("--labels-goodscents", paths.label_files[1], "normalized label CSV");
  app.add_option("--labels-arctander", paths.label_files[2], "normalized label CSV");
  app.add_option("--labels-flavornet", paths.label_files[3], "normalized label CSV");
  app.add_option("--box", tcfg.box, "voxel box width, angstroms")->capture_default_str();
  app.add_option("--step", tcfg.step, "voxel pitch, angstroms")->capture_default_str();

  // ------------------------------------------------------------------ fetch
  auto* c_fetch = app.add_subcommand("fetch", "download/cache SDF structures");
  std::vector<std::uint32_t> fetch_cids;
  std::string fetch_cid_file, fetch_endpoint;
  bool fetch_network = false;
  int fetch_timeout = 30;
  c_fetch->add_option("--cids", fetch_cids, "cids to fetch");
  c_fetch->add_option("--cid-file", fetch_cid_file, "file with one cid per line");
  c_fetch->add_flag("--network", fetch_network, "allow network access on cache misses");
  c_fetch->add_option("--endpoint", fetch_endpoint, "URL template with {cid}");
  c_fetch->add_option("--timeout", fetch_timeout, "per-request timeout, seconds")->capture_default_str();

  // ------------------------------------------------------------------- grid
  auto* c_grid = app.add_subcommand("grid", "build and save a rotation grid");
  std::size_t g_dirs = 64, g_axial = 10, g_iters = 2000;
  std::uint64_t g_seed = 0;
  c_grid->add_option("--n-dirs", g_dirs, "Thomson directions")->capture_default_str();
  c_grid->add_option("--n-axial", g_axial, "axial steps per direction")->capture_default_str();
  c_grid->add_option("--seed", g_seed, "Thomson initialization seed")->capture_default_str();
  c_grid->add_option("--iters", g_iters, "descent iterations")->capture_default_str();

  // ------------------------------------------------------------ voxel-stats
  auto* c_vox = app.add_subcommand("voxel-stats", "rasterize molecules and report occupancy");
  std::vector<std::uint32_t> vox_cids;
  std::string vox_sdf;
  c_vox->add_option("--cids", vox_cids, "cids, resolved via the cache");
  c_vox->add_option("--sdf", vox_sdf, "SDF file to rasterize instead");

  // ------------------------------------------------------------------ split
  auto* c_split = app.add_subcommand("split", "stratified cross-validation folds");
  std::size_t s_k = 5;
  int s_order = 2;
  std::uint64_t s_seed = 101;
  c_split->add_option("--k", s_k, "fold count")->capture_default_str();
  c_split->add_option("--order", s_order, "stratification order (1 or 2)")->capture_default_str();
  c_split->add_option("--seed", s_seed, "tie-break seed")->capture_default_str();

  // ------------------------------------------------------------------ train
  auto* c_train = app.add_subcommand("train", "train one network per fold and seed");
  std::vector<std::size_t> train_folds;
  c_train->add_option("--fold", train_folds, "test fold(s) to hold out; default: all");
  c_train->add_option("--lr", tcfg.lr, "Adam learning rate")->capture_default_str();
  c_train->add_option("--epochs", tcfg.epochs, "training epochs")->capture_default_str();
  c_train->add_option("--batch-size", tcfg.batch_size, "molecules per step")->capture_default_str();
  c_train->add_option("--seeds", tcfg.seeds, "ensemble seeds")->capture_default_str();
  c_train->add_flag("--check64", tcfg.check64, "run a 64-bit gradient check first");
  c_train->add_option("--hidden", arch.hidden, "MLP hidden width")->capture_default_str();
  c_train->add_option("--dropout", arch.dropout, "dropout rate before the MLP")->capture_default_str();
  c_train->add_option("--conv-channels", arch.conv_channels, "conv output channels, pairs")->capture_default_str();

  // ------------------------------------------------------------------- eval
  auto* c_eval = app.add_subcommand("eval", "held-out metrics from saved checkpoints");
  std::vector<std::size_t> eval_folds;
  bool eval_thresholds = false;
  bool eval_avg_prob = false;
  c_eval->add_option("--fold", eval_folds, "fold(s) to evaluate; default: all");
  c_eval->add_flag("--thresholds", eval_thresholds, "also calibrate EER thresholds on the train split");
  c_eval->add_flag("--average-probabilities", eval_avg_prob, "ensemble averages probabilities, not logits");

  // -------------------------------------------------------------- attribute
  auto* c_attr = app.add_subcommand("attribute", "per-atom occlusion attribution");
  std::uint32_t attr_cid = 0;
  double attr_scale = 1.0;
  std::vector<std::string> attr_models;
  c_attr->add_option("--cid", attr_cid, "molecule to explain")->required();
  c_attr->add_option("--scale", attr_scale, "logistic scale on logit deltas")->capture_default_str();
  c_attr->add_option("--model", attr_models, "checkpoint path(s); default: all in --models-dir");

  // --------------------------------------------------------------- mixtures
  auto* c_mix = app.add_subcommand("mixtures", "zero-shot mixture discrimination");
  std::string mix_pairs;
  std::vector<std::string> mix_models;
  c_mix->add_option("--pairs", mix_pairs, "mixture pair CSV")->required();
  c_mix->add_option("--model", mix_models, "checkpoint path(s); default: all in --models-dir");

  // ------------------------------------------------------------------ embed
  auto* c_embed = app.add_subcommand("embed", "Isomap embedding of an odor space");
  std::string embed_graph = "semantic", embed_dataset = "leffingwell", embed_align, embed_name;
  std::size_t embed_knn = 10, embed_kprune = 10;
  std::vector<std::string> embed_models;
  c_embed->add_option("--graph", embed_graph, "semantic | features")
      ->check(CLI::IsMember({"semantic", "features"}))
      ->capture_default_str();
  c_embed->add_option("--dataset", embed_dataset, "label block for the semantic graph")->capture_default_str();
  c_embed->add_option("--knn", embed_knn, "neighbors for the feature graph")->capture_default_str();
  c_embed->add_option("--k-prune", embed_kprune, "edges kept per node before geodesics")->capture_default_str();
  c_embed->add_option("--model", embed_models, "checkpoint path(s) for the feature graph");
  c_embed->add_option("--align", embed_align, "embedding CSV to Procrustes-align against");
  c_embed->add_option("--name", embed_name, "source tag in embedding.csv; default: graph/dataset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    set_thread_count(threads);
    fs::create_directories(paths.out_dir);

    Provenance prov;
    prov.subcommand = app.get_subcommands().front()->get_name();
    const std::string cfg_dump = app.config_to_str(true, false);
    prov.config_hash = fnv1a64(cfg_dump.data(), cfg_dump.size());

    FetchOptions fopts;
    fopts.cache_dir = paths.cache_dir;

    const auto out_path = [&](const std::string& name) { return (fs::path(paths.out_dir) / name).string(); };

    if (*c_fetch) {
      fopts.network_enabled = fetch_network;
      fopts.timeout_seconds = fetch_timeout;
      if (!fetch_endpoint.empty()) fopts.endpoint = fetch_endpoint;
      std::vector<std::uint32_t> cids = fetch_cids;
      if (!fetch_cid_file.empty())
        for (std::uint32_t c : read_cid_file(fetch_cid_file)) cids.push_back(c);
      if (cids.empty()) raise(ErrorKind::InvalidConfig, "nothing to fetch (--cids / --cid-file)");

      const auto report = fetch_pubchem_batch(cids, fopts);
      std::string body = "cid,status\n";
      std::set<std::uint32_t> failed;
      for (const auto& f : report.failures) failed.insert(f.cid);
      for (const auto& f : report.failures) body += std::to_string(f.cid) + "," + csv_escape(f.reason) + "\n";
      for (std::uint32_t c : cids)
        if (!failed.count(c)) body += std::to_string(c) + ",ok\n";
      write_output(out_path("fetch_report.csv"), prov, body);
      std::fprintf(stderr, "fetch: %zu cached, %zu downloaded, %zu failed\n", report.cache_hits, report.downloaded,
                   report.failures.size());
      if (!report.failures.empty()) return 2;
      return 0;
    }

    if (*c_grid) {
      std::fprintf(stderr, "building %zux%zu grid (seed %llu, %zu iterations)\n", g_dirs, g_axial,
                   static_cast<unsigned long long>(g_seed), g_iters);
      const RotationGrid grid = make_grid(g_dirs, g_axial, g_seed, g_iters);
      fs::create_directories(fs::path(paths.grid_file).parent_path().empty()
                                 ? "."
                                 : fs::path(paths.grid_file).parent_path().string());
      write_text_file(paths.grid_file, provenance_header(prov) + grid_to_string(grid));
      std::fprintf(stderr, "wrote %s (%zu rotations)\n", paths.grid_file.c_str(), grid.size());
      return 0;
    }

    if (*c_vox) {
      const RotationGrid grid = load_grid_checked(paths, prov);
      std::vector<Molecule> mols;
      if (!vox_sdf.empty()) {
        require_file(vox_sdf, "SDF file");
        mols = parse_sdf_file(read_text_file(vox_sdf));
      }
      for (std::uint32_t cid : vox_cids) mols.push_back(parse_sdf(fetch_pubchem_sdf(cid, fopts)));
      if (mols.empty()) raise(ErrorKind::InvalidConfig, "nothing to rasterize (--cids / --sdf)");

      std::string body = "cid,orientation,occupied,dropped,other_atoms\n";
      for (const auto& mol : mols) {
        const VoxelTensor vox = voxelize(center_molecule(mol), grid, tcfg.box, tcfg.step);
        for (std::size_t o = 0; o < vox.n_orient; ++o) {
          std::size_t occupied = 0;
          const float* slab = vox.slab(o);
          for (std::size_t i = 0; i < vox.slab_size(); ++i) occupied += slab[i] != 0.0f;
          body += std::to_string(mol.cid) + "," + std::to_string(o) + "," + std::to_string(occupied) + "," +
                  std::to_string(vox.dropped_total(o)) + "," + std::to_string(vox.other_atoms) + "\n";
        }
      }
      write_output(out_path("voxel_stats.csv"), prov, body);
      return 0;
    }

    if (*c_split) {
      const auto vocab = load_vocab(paths);
      const auto table = load_labels(paths, vocab);
      std::fprintf(stderr, "stratifying %zu molecules into %zu folds (order %d, seed %llu)\n", table.rows.size(),
                   s_k, s_order, static_cast<unsigned long long>(s_seed));
      const auto fa = iterative_stratification(table, s_k, s_order, s_seed);
      fs::create_directories(fs::path(paths.folds_file).parent_path().empty()
                                 ? "."
                                 : fs::path(paths.folds_file).parent_path().string());
      write_text_file(paths.folds_file, provenance_header(prov) + folds_to_json(fa));
      const auto folds = fa.folds();
      for (std::size_t f = 0; f < folds.size(); ++f)
        std::fprintf(stderr, "fold %zu: %zu molecules\n", f, folds[f].size());
      std::fprintf(stderr, "wrote %s\n", paths.folds_file.c_str());
      return 0;
    }

    if (*c_train) {
      const auto vocab = load_vocab(paths);
      const auto table = load_labels(paths, vocab);
      require_file(paths.folds_file, "folds file");
      const auto fa = folds_from_json(read_text_file(paths.folds_file));
      const RotationGrid grid = load_grid_checked(paths, prov);
      const auto molecules = load_structures(table_cids(table), paths);

      arch.outputs = vocab.total();
      arch.side = static_cast<std::size_t>(tcfg.box / tcfg.step + 0.5);
      arch.validate();
      tcfg.validate();

      std::vector<std::size_t> folds = train_folds;
      if (folds.empty())
        for (std::size_t f = 0; f < fa.k; ++f) folds.push_back(f);

      for (std::size_t fold : folds) {
        for (std::uint64_t seed : tcfg.seeds) {
          std::fprintf(stderr, "training fold %zu seed %llu\n", fold, static_cast<unsigned long long>(seed));
          auto result = train_fold(molecules, table, vocab, grid, fa, fold, arch, tcfg, seed,
                                   [&](std::size_t epoch, double loss) {
                                     std::fprintf(stderr, "fold %zu seed %llu epoch %zu/%zu loss %.6f\n", fold,
                                                  static_cast<unsigned long long>(seed), epoch + 1, tcfg.epochs,
                                                  loss);
                                   });
          if (!result.missing_cids.empty())
            std::fprintf(stderr, "fold %zu: %zu molecules lacked structures, excluded\n", fold,
                         result.missing_cids.size());
          const std::string tag = "f" + std::to_string(fold) + "_s" + std::to_string(seed);
          write_text_file(out_path("model_" + tag + ".dnckpt"), checkpoint_to_bytes(result.model));
          std::fprintf(stderr, "wrote %s\n", out_path("model_" + tag + ".dnckpt").c_str());
          write_output(out_path("loss_" + tag + ".csv"), prov, loss_csv(result.epoch_losses));
        }
      }
      return 0;
    }

    if (*c_eval) {
      const auto vocab = load_vocab(paths);
      const auto table = load_labels(paths, vocab);
      require_file(paths.folds_file, "folds file");
      const auto fa = folds_from_json(read_text_file(paths.folds_file));
      const RotationGrid grid = load_grid_checked(paths, prov);
      const auto molecules = load_structures(table_cids(table), paths);
      tcfg.average_probabilities = eval_avg_prob;

      std::vector<std::size_t> folds = eval_folds;
      if (folds.empty())
        for (std::size_t f = 0; f < fa.k; ++f) folds.push_back(f);

      std::vector<std::pair<std::size_t, EvalReport>> fold_reports;
      for (std::size_t fold : folds) {
        auto models = load_ensemble(find_checkpoints(paths.models_dir, "model_f" + std::to_string(fold) + "_s"),
                                    prov);
        const auto [train_cids, test_cids] = train_test_view(fa, fold);
        auto view = [&](const std::vector<std::uint32_t>& cids) {
          std::pair<std::vector<const Molecule*>, std::vector<const LabelRow*>> v;
          for (std::uint32_t cid : cids) {
            auto it = molecules.find(cid);
            if (it == molecules.end()) continue;
            v.first.push_back(&it->second);
            v.second.push_back(&table.rows.at(cid));
          }
          return v;
        };
        const auto [test_mols, test_rows] = view(test_cids);
        if (test_mols.empty()) raise(ErrorKind::DataMissing, "fold " + std::to_string(fold) + ": no test structures");
        std::fprintf(stderr, "fold %zu: scoring %zu held-out molecules\n", fold, test_mols.size());
        const auto scores = ensemble_predict(models, test_mols, grid, tcfg);
        fold_reports.emplace_back(fold, dataset_report(scores, test_rows, vocab));

        if (eval_thresholds) {
          const auto [train_mols, train_rows] = view(train_cids);
          std::fprintf(stderr, "fold %zu: calibrating thresholds on %zu training molecules\n", fold,
                       train_mols.size());
          const auto train_scores = ensemble_predict(models, train_mols, grid, tcfg);
          const auto thresholds = calibrate_thresholds(train_scores, train_rows, vocab);
          write_output(out_path("thresholds_f" + std::to_string(fold) + ".csv"), prov,
                       thresholds_csv(thresholds, vocab));
        }
      }
      write_output(out_path("metrics.csv"), prov, metrics_csv(fold_reports, vocab));
      write_output(out_path("summary.csv"), prov, summary_csv(fold_reports, vocab));
      for (const auto& [fold, rep] : fold_reports)
        for (std::size_t d = 0; d < kDatasetCount; ++d)
          if (rep.defined[d])
            std::fprintf(stderr, "fold %zu %s: mean AUROC %.4f over %zu descriptors\n", fold,
                         std::string(dataset_name(static_cast<DatasetId>(d))).c_str(), rep.dataset_mean[d],
                         rep.defined[d]);
      return 0;
    }

    if (*c_attr) {
      const auto vocab = load_vocab(paths);
      const RotationGrid grid = load_grid_checked(paths, prov);
      auto models = load_ensemble(attr_models.empty() ? find_checkpoints(paths.models_dir, "model_") : attr_models,
                                  prov);
      const Molecule mol = parse_sdf(fetch_pubchem_sdf(attr_cid, fopts));
      std::fprintf(stderr, "occluding %zu atoms of cid %u over %zu outputs\n", mol.atoms.size(), attr_cid,
                   models.front().config().outputs);
      const auto map = occlude_atoms(mol, models, grid, tcfg, attr_scale);
      write_output(out_path("attribution_" + std::to_string(attr_cid) + ".csv"), prov,
                   attribution_csv(map, mol, vocab));
      return 0;
    }

    if (*c_mix) {
      const RotationGrid grid = load_grid_checked(paths, prov);
      auto models = load_ensemble(mix_models.empty() ? find_checkpoints(paths.models_dir, "model_") : mix_models,
                                  prov);
      require_file(mix_pairs, "mixture pair file");
      const auto records = parse_mixture_csv(read_text_file(mix_pairs));
      std::set<std::uint32_t> wanted;
      for (const auto& r : records) {
        wanted.insert(r.components_a.begin(), r.components_a.end());
        wanted.insert(r.components_b.begin(), r.components_b.end());
      }
      const auto molecules =
          load_structures(std::vector<std::uint32_t>(wanted.begin(), wanted.end()), paths);
      std::fprintf(stderr, "scoring %zu pairs over %zu distinct components\n", records.size(), wanted.size());
      const auto report = evaluate_mixture_datasets(records, molecules, models, grid, tcfg);

      write_output(out_path("mixture_report.csv"), prov, mixture_report_csv(report));
      std::string body = "dataset,pearson_r\n";
      body += "all," + (report.r ? format_double(*report.r) : "undefined") + "\n";
      for (const auto& [ds, r] : report.r_by_dataset)
        body += csv_escape(ds) + "," + (r ? format_double(*r) : "undefined") + "\n";
      write_output(out_path("mixture_summary.csv"), prov, body);

      for (const auto& [pair_id, reason] : report.unscorable)
        std::fprintf(stderr, "unscorable %s: %s\n", pair_id.c_str(), reason.c_str());
      if (!report.r)
        std::fprintf(stderr, "overall r undefined: %s\n", report.r_error.c_str());
      else
        std::fprintf(stderr, "overall r = %.4f over %zu pairs\n", *report.r, report.scored.size());
      for (const auto& [ds, err] : report.dataset_errors)
        std::fprintf(stderr, "%s: r undefined: %s\n", ds.c_str(), err.c_str());
      return 0;
    }

    if (*c_embed) {
      const auto vocab = load_vocab(paths);
      WeightedGraph graph;
      std::vector<std::uint32_t> node_cids;
      std::string source = embed_name;

      if (embed_graph == "semantic") {
        const auto table = load_labels(paths, vocab);
        const auto ds = dataset_from_name(embed_dataset);
        if (!ds) raise(ErrorKind::InvalidConfig, "unknown dataset '" + embed_dataset + "'");
        graph = semantic_graph(table, *ds, vocab, &node_cids);
        if (source.empty()) source = "semantic/" + embed_dataset;
      } else {
        const auto table = load_labels(paths, vocab);
        const RotationGrid grid = load_grid_checked(paths, prov);
        auto models = load_ensemble(
            embed_models.empty() ? find_checkpoints(paths.models_dir, "model_") : embed_models, prov);
        const auto molecules = load_structures(table_cids(table), paths);
        if (molecules.empty()) raise(ErrorKind::DataMissing, "no structures available for the feature graph");
        std::vector<std::vector<double>> feats;
        for (const auto& [cid, mol] : molecules) {
          node_cids.push_back(cid);
          feats.push_back(ensemble_features(models, mol, grid, tcfg));
          if (node_cids.size() % 50 == 0)
            std::fprintf(stderr, "features %zu/%zu\n", node_cids.size(), molecules.size());
        }
        graph = knn_graph(feats, embed_knn);
        if (source.empty()) source = "features";
      }
      std::fprintf(stderr, "graph: %zu nodes, %zu edges\n", graph.n, graph.edge_count());

      const auto geo = geodesic_distances(graph, embed_kprune);
      if (!geo.excluded.empty())
        std::fprintf(stderr, "largest component keeps %zu nodes, %zu excluded\n", geo.nodes.size(),
                     geo.excluded.size());
      const auto emb = classical_mds(geo.dist, geo.nodes.size());
      for (const auto& w : emb.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      std::fprintf(stderr, "stress %.6f, eigenvalues %.4g %.4g %.4g\n", emb.stress, emb.eigenvalues[0],
                   emb.eigenvalues[1], emb.eigenvalues[2]);

      std::vector<std::uint32_t> kept;
      for (std::uint32_t idx : geo.nodes) kept.push_back(node_cids[idx]);
      write_output(out_path("embedding.csv"), prov, embedding_csv(kept, emb, source));

      if (!embed_align.empty()) {
        const auto [ref_cids, ref_pts] = read_embedding_csv(embed_align);
        std::map<std::uint32_t, std::size_t> ref_index;
        for (std::size_t i = 0; i < ref_cids.size(); ++i) ref_index[ref_cids[i]] = i;
        std::vector<std::array<double, 3>> ours, theirs;
        for (std::size_t i = 0; i < kept.size(); ++i) {
          auto it = ref_index.find(kept[i]);
          if (it == ref_index.end()) continue;
          ours.push_back(emb.coords[i]);
          theirs.push_back(ref_pts[it->second]);
        }
        std::fprintf(stderr, "aligning on %zu shared molecules\n", ours.size());
        const Mat3 r = procrustes_rotate(ours, theirs);
        const double residual = procrustes_residual(ours, theirs, r);
        write_output(out_path("alignment.txt"), prov, alignment_text(r, residual));
      }
      return 0;
    }

    raise(ErrorKind::InvalidConfig, "no subcommand given");
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
