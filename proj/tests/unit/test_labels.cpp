#include "deepnose/common.hpp"
#include "deepnose/labels.hpp"
#include "doctest.h"
#include "support/synthetic.hpp"

using namespace deepnose;

namespace {

DescriptorVocabulary tiny_vocab() {
  std::array<std::vector<std::string>, kDatasetCount> blocks;
  blocks[0] = {"medicinal", "woody", "sweet"};
  blocks[1] = {"green"};
  blocks[2] = {"musk", "amber"};
  blocks[3] = {"fruity"};
  return DescriptorVocabulary(blocks);
}

}  // namespace

TEST_CASE("vocabulary layout matches the dataset block order") {
  const auto vocab = testsup::full_vocab();
  CHECK(vocab.total() == 654);
  CHECK(vocab.offset(DatasetId::Leffingwell) == 0);
  CHECK(vocab.offset(DatasetId::GoodScents) == 113);
  CHECK(vocab.offset(DatasetId::Arctander) == 490);
  CHECK(vocab.offset(DatasetId::Flavornet) == 580);
  CHECK(vocab.block_size(DatasetId::Flavornet) == 74);
  CHECK(vocab.dataset_of(0) == DatasetId::Leffingwell);
  CHECK(vocab.dataset_of(112) == DatasetId::Leffingwell);
  CHECK(vocab.dataset_of(113) == DatasetId::GoodScents);
  CHECK(vocab.dataset_of(653) == DatasetId::Flavornet);
}

TEST_CASE("vocabulary normalizes and rejects duplicates") {
  const auto vocab = tiny_vocab();
  REQUIRE(vocab.index_of(DatasetId::Leffingwell, "WOODY").has_value());
  CHECK(*vocab.index_of(DatasetId::Leffingwell, "WOODY") == 1);
  CHECK(*vocab.index_of(DatasetId::Arctander, "  musk ") == 4);
  CHECK(!vocab.index_of(DatasetId::Leffingwell, "musk").has_value());  // wrong block

  std::array<std::vector<std::string>, kDatasetCount> dup;
  dup[0] = {"woody", "Woody"};
  CHECK_THROWS_AS(DescriptorVocabulary{dup}, Error);
}

TEST_CASE("vocabulary csv round-trips") {
  const auto vocab = tiny_vocab();
  const std::string csv = vocab.to_csv();
  CHECK(csv.rfind("dataset,descriptor\n", 0) == 0);
  const auto back = DescriptorVocabulary::from_csv(csv);
  CHECK(back.total() == vocab.total());
  CHECK(back.to_csv() == csv);
}

TEST_CASE("label csv parsing sets block bits and masks") {
  const auto vocab = tiny_vocab();
  const std::string csv =
      "cid,descriptors\n"
      "126,\"Medicinal;WOODY\"\n"
      "300,\"\"\n"
      "301,\"sweet;unobtainium\"\n";
  const auto parsed = parse_labels_csv(csv, DatasetId::Leffingwell, vocab);
  REQUIRE(parsed.table.rows.size() == 3);

  const LabelRow& r126 = parsed.table.rows.at(126);
  CHECK(r126.labels[0] == 1);
  CHECK(r126.labels[1] == 1);
  CHECK(r126.labels[2] == 0);
  CHECK(r126.dataset_mask[0]);
  CHECK(!r126.dataset_mask[1]);

  // present but undescribed
  const LabelRow& r300 = parsed.table.rows.at(300);
  CHECK(r300.dataset_mask[0]);
  for (auto b : r300.labels) CHECK(b == 0);

  REQUIRE(parsed.unknown_descriptors.size() == 1);
  CHECK(parsed.unknown_descriptors[0] == "unobtainium");
}

TEST_CASE("label csv rejects malformed rows") {
  const auto vocab = tiny_vocab();
  CHECK_THROWS_AS(parse_labels_csv("cid,descriptors\nnotanumber,\"woody\"\n", DatasetId::Leffingwell, vocab),
                  Error);
  CHECK_THROWS_AS(parse_labels_csv("cid,descriptors\n7\n", DatasetId::Leffingwell, vocab), Error);
  CHECK_THROWS_AS(parse_labels_csv("cid,descriptors\n7,\"unbalanced\n", DatasetId::Leffingwell, vocab), Error);
}

TEST_CASE("merging or-combines masks and labels") {
  const auto vocab = tiny_vocab();
  const auto a = parse_labels_csv("cid,descriptors\n126,\"woody\"\n", DatasetId::Leffingwell, vocab);
  const auto b = parse_labels_csv("cid,descriptors\n126,\"green\"\n500,\"green\"\n", DatasetId::GoodScents, vocab);
  const LabelTable merged = merge_label_tables({a.table, b.table});
  REQUIRE(merged.rows.size() == 2);
  const LabelRow& row = merged.rows.at(126);
  CHECK(row.labels[1] == 1);
  CHECK(row.labels[3] == 1);
  CHECK(row.dataset_mask[0]);
  CHECK(row.dataset_mask[1]);
  CHECK(!row.dataset_mask[2]);
}

TEST_CASE("expand_mask covers exactly the present blocks") {
  const auto vocab = tiny_vocab();
  LabelRow row;
  row.labels.assign(vocab.total(), 0);
  row.dataset_mask = {true, false, false, true};
  const auto mask = expand_mask(row, vocab);
  REQUIRE(mask.size() == vocab.total());
  for (std::size_t i = 0; i < 3; ++i) CHECK(mask[i] == 1);
  CHECK(mask[3] == 0);
  CHECK(mask[4] == 0);
  CHECK(mask[5] == 0);
  CHECK(mask[6] == 1);
}

TEST_CASE("dataset names round-trip") {
  for (std::size_t d = 0; d < kDatasetCount; ++d) {
    const auto id = static_cast<DatasetId>(d);
    const auto back = dataset_from_name(dataset_name(id));
    REQUIRE(back.has_value());
    CHECK(*back == id);
  }
  CHECK(!dataset_from_name("nosuch").has_value());
}
