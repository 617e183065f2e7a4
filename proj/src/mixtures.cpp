#include "deepnose/mixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

namespace deepnose {

namespace {

std::vector<std::uint32_t> parse_cid_list(const std::string& field, std::size_t line_no) {
  std::vector<std::uint32_t> out;
  for (const std::string& tok : split(field, ';')) {
    const std::string t = trim(tok);
    if (t.empty()) continue;
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(t, &pos);
    } catch (const std::exception&) {
      raise(ErrorKind::MalformedRow, "mixture csv line " + std::to_string(line_no) + ": bad cid '" + t + "'");
    }
    if (pos != t.size() || v == 0)
      raise(ErrorKind::MalformedRow, "mixture csv line " + std::to_string(line_no) + ": bad cid '" + t + "'");
    out.push_back(static_cast<std::uint32_t>(v));
  }
  if (out.empty())
    raise(ErrorKind::MalformedRow, "mixture csv line " + std::to_string(line_no) + ": empty component list");
  return out;
}

}  // namespace

std::vector<MixturePairRecord> parse_mixture_csv(const std::string& text) {
  std::vector<MixturePairRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line_no == 1 && line.rfind("dataset,", 0) == 0) continue;  // header
    const auto fields = split(line, ',');
    if (fields.size() != 5)
      raise(ErrorKind::MalformedRow,
            "mixture csv line " + std::to_string(line_no) + ": expected 5 fields, got " +
                std::to_string(fields.size()));
    MixturePairRecord rec;
    rec.dataset = trim(fields[0]);
    rec.pair_id = trim(fields[1]);
    if (rec.dataset.empty() || rec.pair_id.empty())
      raise(ErrorKind::MalformedRow, "mixture csv line " + std::to_string(line_no) + ": empty dataset or pair id");
    rec.components_a = parse_cid_list(fields[2], line_no);
    rec.components_b = parse_cid_list(fields[3], line_no);
    const std::string dist = trim(fields[4]);
    char* end = nullptr;
    rec.perceptual_distance = std::strtod(dist.c_str(), &end);
    if (end != dist.c_str() + dist.size() || dist.empty() || !std::isfinite(rec.perceptual_distance))
      raise(ErrorKind::MalformedRow,
            "mixture csv line " + std::to_string(line_no) + ": bad distance '" + dist + "'");
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<double> mixture_features(const std::vector<std::uint32_t>& cids,
                                     const std::map<std::uint32_t, Molecule>& molecules,
                                     std::vector<DeepNoseModel<float>>& models, const RotationGrid& grid,
                                     const TrainConfig& cfg) {
  if (cids.empty()) raise(ErrorKind::InvalidConfig, "mixture: empty component list");
  std::vector<double> acc;
  for (std::uint32_t cid : cids) {
    auto it = molecules.find(cid);
    if (it == molecules.end())
      raise(ErrorKind::DataMissing, "mixture component cid " + std::to_string(cid) + " has no structure");
    const auto f = ensemble_features(models, it->second, grid, cfg);
    if (acc.empty()) acc.assign(f.size(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) acc[i] += f[i];
  }
  for (double& v : acc) v /= static_cast<double>(cids.size());
  return acc;
}

double mixture_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) raise(ErrorKind::ShapeMismatch, "mixture distance: vector sizes differ");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) raise(ErrorKind::ShapeMismatch, "pearson: input sizes differ");
  if (x.size() < 3) raise(ErrorKind::InvalidConfig, "pearson: need at least 3 points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0 || syy == 0) raise(ErrorKind::DegenerateVariance, "pearson: zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

MixtureReport evaluate_mixture_datasets(const std::vector<MixturePairRecord>& records,
                                        const std::map<std::uint32_t, Molecule>& molecules,
                                        std::vector<DeepNoseModel<float>>& models, const RotationGrid& grid,
                                        const TrainConfig& cfg) {
  MixtureReport rep;

  // Every distinct component appears in many pairs; embed each once.
  std::set<std::uint32_t> wanted;
  for (const auto& rec : records) {
    wanted.insert(rec.components_a.begin(), rec.components_a.end());
    wanted.insert(rec.components_b.begin(), rec.components_b.end());
  }
  std::map<std::uint32_t, std::vector<double>> feat;
  for (std::uint32_t cid : wanted) {
    auto it = molecules.find(cid);
    if (it == molecules.end()) continue;  // pairs using it become unscorable
    feat[cid] = ensemble_features(models, it->second, grid, cfg);
  }

  auto mixture_of = [&](const std::vector<std::uint32_t>& cids) -> std::optional<std::vector<double>> {
    std::vector<double> acc;
    for (std::uint32_t cid : cids) {
      auto it = feat.find(cid);
      if (it == feat.end()) return std::nullopt;
      if (acc.empty()) acc.assign(it->second.size(), 0.0);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += it->second[i];
    }
    for (double& v : acc) v /= static_cast<double>(cids.size());
    return acc;
  };

  for (const auto& rec : records) {
    const auto fa = mixture_of(rec.components_a);
    const auto fb = mixture_of(rec.components_b);
    if (!fa || !fb) {
      rep.unscorable.emplace_back(rec.pair_id, "missing component structure");
      continue;
    }
    rep.scored.push_back({rec.dataset, rec.pair_id, mixture_distance(*fa, *fb), rec.perceptual_distance});
  }

  auto correlate = [](const std::vector<const MixtureReport::ScoredPair*>& pairs, std::optional<double>& r,
                      std::string& err) {
    std::vector<double> pred, obs;
    for (const auto* p : pairs) {
      pred.push_back(p->predicted);
      obs.push_back(p->observed);
    }
    try {
      r = pearson(pred, obs);
    } catch (const Error& e) {
      r = std::nullopt;
      err = std::string(error_kind_name(e.kind())) + ": " + e.what();
    }
  };

  std::vector<const MixtureReport::ScoredPair*> all;
  std::map<std::string, std::vector<const MixtureReport::ScoredPair*>> by_ds;
  for (const auto& p : rep.scored) {
    all.push_back(&p);
    by_ds[p.dataset].push_back(&p);
  }
  correlate(all, rep.r, rep.r_error);
  for (const auto& [ds, pairs] : by_ds) {
    std::optional<double> r;
    std::string err;
    correlate(pairs, r, err);
    rep.r_by_dataset[ds] = r;
    if (!err.empty()) rep.dataset_errors[ds] = err;
  }
  return rep;
}

std::string mixture_report_csv(const MixtureReport& report) {
  std::ostringstream out;
  out << "dataset,pair_id,predicted,observed\n";
  for (const auto& p : report.scored)
    out << csv_escape(p.dataset) << ',' << csv_escape(p.pair_id) << ',' << format_double(p.predicted) << ','
        << format_double(p.observed) << '\n';
  return out.str();
}

}  // namespace deepnose
