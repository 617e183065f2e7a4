#include "deepnose/labels.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "deepnose/common.hpp"

namespace deepnose {

std::string_view dataset_name(DatasetId id) {
  switch (id) {
    case DatasetId::Leffingwell: return "leffingwell";
    case DatasetId::GoodScents: return "goodscents";
    case DatasetId::Arctander: return "arctander";
    case DatasetId::Flavornet: return "flavornet";
  }
  return "?";
}

std::optional<DatasetId> dataset_from_name(std::string_view name) {
  std::string s = to_lower(trim(name));
  for (std::size_t i = 0; i < kDatasetCount; ++i) {
    if (s == dataset_name(static_cast<DatasetId>(i))) return static_cast<DatasetId>(i);
  }
  return std::nullopt;
}

DescriptorVocabulary::DescriptorVocabulary(std::array<std::vector<std::string>, kDatasetCount> per_dataset) {
  std::size_t offset = 0;
  for (std::size_t d = 0; d < kDatasetCount; ++d) {
    offsets_[d] = offset;
    sizes_[d] = per_dataset[d].size();
    for (const std::string& raw : per_dataset[d]) {
      std::string name = normalize_descriptor(raw);
      if (name.empty())
        raise(ErrorKind::InvalidConfig, "empty descriptor in " + std::string(dataset_name(static_cast<DatasetId>(d))));
      auto [it, inserted] = lookup_[d].emplace(name, names_.size());
      if (!inserted)
        raise(ErrorKind::InvalidConfig,
              "duplicate descriptor '" + name + "' in " + std::string(dataset_name(static_cast<DatasetId>(d))));
      names_.push_back(std::move(name));
    }
    offset += sizes_[d];
  }
}

std::optional<std::size_t> DescriptorVocabulary::index_of(DatasetId id, std::string_view descriptor) const {
  const auto& table = lookup_[static_cast<std::size_t>(id)];
  auto it = table.find(normalize_descriptor(descriptor));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

DatasetId DescriptorVocabulary::dataset_of(std::size_t global_index) const {
  for (std::size_t d = kDatasetCount; d-- > 0;) {
    if (global_index >= offsets_[d]) return static_cast<DatasetId>(d);
  }
  return DatasetId::Leffingwell;
}

std::string DescriptorVocabulary::to_csv() const {
  std::ostringstream out;
  out << "dataset,descriptor\n";
  for (std::size_t i = 0; i < names_.size(); ++i)
    out << dataset_name(dataset_of(i)) << ',' << names_[i] << '\n';
  return out.str();
}

DescriptorVocabulary DescriptorVocabulary::from_csv(const std::string& text) {
  std::array<std::vector<std::string>, kDatasetCount> blocks;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 || trim(line).empty()) continue;  // header
    std::size_t comma = line.find(',');
    if (comma == std::string::npos)
      raise(ErrorKind::MalformedRow, "vocabulary line " + std::to_string(line_no) + " lacks a comma");
    auto id = dataset_from_name(line.substr(0, comma));
    if (!id)
      raise(ErrorKind::MalformedRow,
            "vocabulary line " + std::to_string(line_no) + ": unknown dataset '" + line.substr(0, comma) + "'");
    blocks[static_cast<std::size_t>(*id)].push_back(line.substr(comma + 1));
  }
  return DescriptorVocabulary(std::move(blocks));
}

namespace {

// one data row: `cid,"a;b;c"` (quotes optional when the list has no comma)
struct CsvRow {
  std::uint32_t cid = 0;
  std::string descriptors;
};

CsvRow parse_row(const std::string& line, std::size_t line_no) {
  std::size_t comma = line.find(',');
  if (comma == std::string::npos)
    raise(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": missing comma");
  std::string cid_str = trim(line.substr(0, comma));
  char* end = nullptr;
  unsigned long cid = std::strtoul(cid_str.c_str(), &end, 10);
  if (cid_str.empty() || end != cid_str.c_str() + cid_str.size())
    raise(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": non-integer cid '" + cid_str + "'");

  std::string rest = trim(line.substr(comma + 1));
  CsvRow row;
  row.cid = static_cast<std::uint32_t>(cid);
  if (!rest.empty() && rest.front() == '"') {
    if (rest.size() < 2 || rest.back() != '"')
      raise(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": unbalanced quotes");
    row.descriptors = rest.substr(1, rest.size() - 2);
    if (row.descriptors.find('"') != std::string::npos)
      raise(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": stray quote inside field");
  } else {
    if (rest.find('"') != std::string::npos)
      raise(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": unbalanced quotes");
    row.descriptors = rest;
  }
  return row;
}

}  // namespace

ParsedLabels parse_labels_csv(const std::string& text, DatasetId dataset, const DescriptorVocabulary& vocab) {
  ParsedLabels out;
  out.table.n_labels = vocab.total();

  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, bool> unknown_seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 || trim(line).empty()) continue;  // header `cid,descriptors`
    CsvRow row = parse_row(line, line_no);

    LabelRow& entry = out.table.rows[row.cid];
    if (entry.labels.empty()) entry.labels.assign(vocab.total(), 0);
    entry.dataset_mask[static_cast<std::size_t>(dataset)] = true;
    for (const std::string& raw : split(row.descriptors, ';')) {
      std::string name = normalize_descriptor(raw);
      if (name.empty()) continue;
      if (auto idx = vocab.index_of(dataset, name)) {
        entry.labels[*idx] = 1;
      } else if (!unknown_seen[name]) {
        unknown_seen[name] = true;
        out.unknown_descriptors.push_back(name);
      }
    }
  }
  return out;
}

LabelTable merge_label_tables(const std::vector<LabelTable>& tables) {
  LabelTable merged;
  for (const LabelTable& t : tables) {
    if (merged.n_labels == 0) merged.n_labels = t.n_labels;
    if (t.n_labels != merged.n_labels)
      raise(ErrorKind::ShapeMismatch, "label tables disagree on vocabulary size");
    for (const auto& [cid, row] : t.rows) {
      LabelRow& dst = merged.rows[cid];
      if (dst.labels.empty()) dst.labels.assign(merged.n_labels, 0);
      for (std::size_t i = 0; i < merged.n_labels; ++i) dst.labels[i] |= row.labels[i];
      for (std::size_t d = 0; d < kDatasetCount; ++d) dst.dataset_mask[d] = dst.dataset_mask[d] || row.dataset_mask[d];
    }
  }
  return merged;
}

std::vector<std::uint8_t> expand_mask(const LabelRow& row, const DescriptorVocabulary& vocab) {
  std::vector<std::uint8_t> mask(vocab.total(), 0);
  for (std::size_t d = 0; d < kDatasetCount; ++d) {
    if (!row.dataset_mask[d]) continue;
    DatasetId id = static_cast<DatasetId>(d);
    std::fill(mask.begin() + static_cast<std::ptrdiff_t>(vocab.offset(id)),
              mask.begin() + static_cast<std::ptrdiff_t>(vocab.offset(id) + vocab.block_size(id)), 1);
  }
  return mask;
}

}  // namespace deepnose
