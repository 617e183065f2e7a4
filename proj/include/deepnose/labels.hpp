#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace deepnose {

enum class DatasetId : std::uint8_t { Leffingwell = 0, GoodScents, Arctander, Flavornet };

inline constexpr std::size_t kDatasetCount = 4;

std::string_view dataset_name(DatasetId id);
std::optional<DatasetId> dataset_from_name(std::string_view name);

// Global descriptor ordering is the concatenation of the four per-dataset
// blocks in DatasetId order. Descriptors are normalized (lowercase, single
// internal spaces) and must be unique within their block.
class DescriptorVocabulary {
public:
  DescriptorVocabulary() = default;
  explicit DescriptorVocabulary(std::array<std::vector<std::string>, kDatasetCount> per_dataset);

  std::size_t total() const { return names_.size(); }
  std::size_t offset(DatasetId id) const { return offsets_[static_cast<std::size_t>(id)]; }
  std::size_t block_size(DatasetId id) const { return sizes_[static_cast<std::size_t>(id)]; }

  // global index of a (normalized) descriptor within a dataset block
  std::optional<std::size_t> index_of(DatasetId id, std::string_view descriptor) const;

  const std::string& name(std::size_t global_index) const { return names_[global_index]; }
  DatasetId dataset_of(std::size_t global_index) const;

  // CSV with header "dataset,descriptor", one row per descriptor in block order
  std::string to_csv() const;
  static DescriptorVocabulary from_csv(const std::string& text);

private:
  std::vector<std::string> names_;                       // concatenated blocks
  std::array<std::size_t, kDatasetCount> offsets_{};     // block starts
  std::array<std::size_t, kDatasetCount> sizes_{};       // block lengths
  std::array<std::map<std::string, std::size_t>, kDatasetCount> lookup_;  // name -> global index
};

struct LabelRow {
  std::vector<std::uint8_t> labels;                 // one byte per descriptor, 0/1
  std::array<bool, kDatasetCount> dataset_mask{};   // presence per dataset
};

struct LabelTable {
  std::size_t n_labels = 0;
  std::map<std::uint32_t, LabelRow> rows;  // keyed by cid

  std::size_t size() const { return rows.size(); }
};

struct ParsedLabels {
  LabelTable table;
  std::vector<std::string> unknown_descriptors;  // seen in the file, absent from the vocabulary
};

// Parses the normalized label CSV (header "cid,descriptors", rows
// `cid,"a;b;c"`). Sets bits inside the dataset's vocabulary block and the
// dataset's mask bit. Unknown descriptors are returned as warnings.
ParsedLabels parse_labels_csv(const std::string& text, DatasetId dataset,
                              const DescriptorVocabulary& vocab);

// Rows with equal cid merge by OR of masks and union of label bits.
LabelTable merge_label_tables(const std::vector<LabelTable>& tables);

// Per-descriptor 0/1 mask row expanded from the dataset mask over vocabulary
// blocks; this is what the training loss consumes.
std::vector<std::uint8_t> expand_mask(const LabelRow& row, const DescriptorVocabulary& vocab);

}  // namespace deepnose
