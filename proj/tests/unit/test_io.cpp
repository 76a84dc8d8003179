#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "almrr/checkpoint.hpp"
#include "almrr/config.hpp"
#include "almrr/corpus.hpp"
#include "almrr/dataset.hpp"
#include "support/oracles.hpp"

using namespace almrr;
namespace fs = std::filesystem;

namespace {

Image random_image(Rng& rng, std::size_t c, std::size_t h, std::size_t w) {
  Image img(c, h, w);
  for (auto& v : img.data) v = uniform01(rng);
  return quantize8(img);
}

void touch_png(const fs::path& p, std::size_t size = 8, double fill = 0.5) {
  fs::create_directories(p.parent_path());
  write_png(p, Image(3, size, size, fill));
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ParamStore<double> sample_store() {
  ParamStore<double> s;
  s.add("a.weight", {2, 3}, {1, 2, 3, 4, 5, 6});
  s.add("a.bias", {2}, {-0.5, 0.25});
  s.add("backbone.w", {1}, {7.0}, true);
  return s;
}

}  // namespace

TEST(Png, RoundTripIsExactForQuantizedImages) {
  const auto dir = oracle::temp_dir("png");
  Rng rng(1);
  for (std::size_t c : {1u, 3u}) {
    const auto img = random_image(rng, c, 9, 13);
    write_png(dir / "x.png", img);
    const auto back = read_image(dir / "x.png", c == 3);
    EXPECT_EQ(back.channels, c);
    EXPECT_EQ(back.data, img.data);
  }
  const auto gray = random_image(rng, 1, 4, 4);
  write_png(dir / "g.png", gray);
  const auto rgb = read_image(dir / "g.png");
  ASSERT_EQ(rgb.channels, 3u);
  EXPECT_TRUE(std::equal(gray.data.begin(), gray.data.end(), rgb.data.begin() + 32));
  EXPECT_THROW(read_image(dir / "missing.png"), Error);
}

TEST(Png, MaskIsBinarizedAtHalfRange) {
  const auto dir = oracle::temp_dir("mask");
  Image m(1, 1, 4);
  m.data = {0.0, 40 / 255.0, 220 / 255.0, 1.0};
  write_png(dir / "m.png", m);
  EXPECT_EQ(read_mask(dir / "m.png").data, (std::vector<std::uint8_t>{0, 0, 1, 1}));
  Mask mk(2, 2);
  mk.data = {1, 0, 0, 1};
  write_mask_png(dir / "k.png", mk);
  EXPECT_EQ(read_mask(dir / "k.png").data, mk.data);
  write_png(dir / "black.png", Image(1, 2, 2, 0.0));
  EXPECT_EQ(read_mask(dir / "black.png").area(), 0u);
  write_png(dir / "white.png", Image(1, 2, 2, 1.0));
  EXPECT_EQ(read_mask(dir / "white.png").area(), 4u);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  const auto dir = oracle::temp_dir("ckpt");
  const auto store = sample_store();
  const std::string cfg = RunConfig::desk_profile().to_json();
  save_checkpoint(store, cfg, dir / "a.almr");
  const auto ck = read_checkpoint(dir / "a.almr");
  write_checkpoint(dir / "b.almr", ck);
  EXPECT_EQ(read_bytes(dir / "a.almr"), read_bytes(dir / "b.almr"));
  EXPECT_EQ(checkpoint_config_json(ck), cfg);
  EXPECT_EQ(checkpoint_step(ck), 0u);
  ASSERT_NE(ck.find("a.bias"), nullptr);
  EXPECT_EQ(ck.find("a.bias")->values(), (std::vector<double>{-0.5, 0.25}));
  EXPECT_EQ(ck.find("a.weight")->shape, (Shape{2, 3}));
  EXPECT_EQ(ck.find("nope"), nullptr);
}

TEST(Checkpoint, RestoreConvertsPrecisionAndKeepsBackboneFrozen) {
  const auto ck = make_checkpoint(sample_store(), "{}");
  ParamStore<float> f;
  restore_params(ck, f);
  EXPECT_EQ(f.get("a.weight").vec(), (std::vector<float>{1, 2, 3, 4, 5, 6}));
  EXPECT_TRUE(f.entry("backbone.w").frozen);
  EXPECT_FALSE(f.entry("a.bias").frozen);
  ParamStore<double> wrong;
  wrong.add("a.bias", {3}, {0, 0, 0});
  EXPECT_THROW(restore_params(ck, wrong), ShapeError);
}

TEST(Checkpoint, TruncationReportsOffset) {
  const auto bytes = make_checkpoint(sample_store(), "{}").serialize();
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<unsigned char> t(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    try {
      Checkpoint::parse(t);
      FAIL() << "no error at cut " << cut;
    } catch (const FormatError& e) {
      EXPECT_LE(e.offset(), cut);
      EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
    }
  }
}

TEST(Checkpoint, CorruptHeaderFields) {
  auto bytes = make_checkpoint(sample_store(), "{}").serialize();
  auto bad = bytes;
  bad[0] = 'X';
  try {
    Checkpoint::parse(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(Checkpoint::parse(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(Checkpoint::parse(bad), FormatError);
  EXPECT_THROW(read_checkpoint(oracle::temp_dir("ckpt_missing") / "x.almr"), Error);
}

TEST(Config, JsonRoundTripAndKeyValueFile) {
  auto c = RunConfig::desk_profile();
  c.set("mfrm.depth", "3");
  c.set("synth.resolutions", "2,4");
  c.set("frm_enabled", "false");
  c.set("precision", "f64");
  const auto back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_map(), c.to_map());
  EXPECT_EQ(back.mfrm.depth, 3);
  EXPECT_EQ(back.synth.resolutions, (std::vector<int>{2, 4}));
  EXPECT_FALSE(back.frm_enabled);
  EXPECT_EQ(back.precision, Precision::f64);

  const auto dir = oracle::temp_dir("config");
  std::ofstream(dir / "run.cfg") << "# desk overrides\n\nepochs = 7\nlr=0.5\nmfrm.embed_dim = 16\n";
  const auto f = load_config_file(dir / "run.cfg", RunConfig::desk_profile());
  EXPECT_EQ(f.epochs, 7);
  EXPECT_EQ(f.lr, 0.5);
  EXPECT_EQ(f.mfrm.embed_dim, 16);
  EXPECT_EQ(f.image_size, 128);
}

TEST(Config, RejectsBadKeysAndValues) {
  auto c = RunConfig::desk_profile();
  EXPECT_THROW(c.set("no_such_key", "1"), ArgumentError);
  EXPECT_THROW(c.set("epochs", "many"), ArgumentError);
  EXPECT_THROW(RunConfig::profile("huge"), ArgumentError);
  c.grid_size = 48;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NO_THROW(RunConfig::desk_profile().validate());
  EXPECT_NO_THROW(RunConfig::full_profile().validate());
}

TEST(Dataset, IngestMvtecLayout) {
  const auto root = oracle::temp_dir("mvtec");
  touch_png(root / "wood/train/good/000.png");
  touch_png(root / "wood/train/good/001.png");
  touch_png(root / "wood/test/good/000.png");
  touch_png(root / "wood/test/crack/000.png");
  touch_png(root / "wood/test/crack/001.png");
  touch_png(root / "wood/ground_truth/crack/000_mask.png");
  const auto h = ingest(root);
  EXPECT_EQ(h.categories, (std::vector<std::string>{"wood"}));
  EXPECT_EQ(h.items("wood", Split::train).size(), 2u);
  const auto test = h.items("wood", Split::test);
  ASSERT_EQ(test.size(), 3u);
  std::size_t anomalous = 0, with_mask = 0;
  for (const auto& it : test) {
    anomalous += it.label;
    with_mask += it.mask.has_value();
  }
  EXPECT_EQ(anomalous, 2u);
  EXPECT_EQ(with_mask, 1u);
  ASSERT_EQ(h.validation_report.size(), 1u);
  EXPECT_NE(h.validation_report[0].find("crack/001"), std::string::npos);

  const auto loaded = load_items(test, 16, true);
  for (const auto& l : loaded) {
    EXPECT_EQ(l.image.height, 16u);
    if (l.item.label == 0) EXPECT_EQ(l.mask.area(), 0u);
    if (l.item.label == 1 && !l.item.mask) EXPECT_TRUE(l.mask.data.empty());
  }
}

TEST(Dataset, DefectImagesInTrainSplitAreRejected) {
  const auto root = oracle::temp_dir("mvtec_bad");
  touch_png(root / "wood/train/good/000.png");
  touch_png(root / "wood/train/crack/000.png");
  touch_png(root / "wood/test/good/000.png");
  EXPECT_THROW(ingest(root), DataContractError);
  EXPECT_THROW(ingest(root / "absent"), DataContractError);
}

TEST(Dataset, FlatLayoutLabelsByMaskPresence) {
  const auto root = oracle::temp_dir("flat");
  touch_png(root / "tile/train/a.png");
  touch_png(root / "tile/test/b.png");
  touch_png(root / "tile/test/c.png");
  touch_png(root / "tile/test/d.png");
  touch_png(root / "tile/masks/c_mask.png");
  touch_png(root / "tile/masks/d.png");
  const auto h = ingest(root, Layout::flat);
  std::set<std::string> anomalous;
  for (const auto& it : h.items("tile", Split::test))
    if (it.label) anomalous.insert(it.id);
  EXPECT_EQ(anomalous, (std::set<std::string>{"c", "d"}));
  EXPECT_EQ(parse_layout("flat"), Layout::flat);
  EXPECT_THROW(parse_layout("coco"), ArgumentError);
}

TEST(Dataset, UndecodableImagesAreSkippedWithWarning) {
  const auto root = oracle::temp_dir("broken");
  touch_png(root / "x/train/good/000.png");
  fs::create_directories(root / "x/test/good");
  std::ofstream(root / "x/train/good/001.png") << "not a png";
  touch_png(root / "x/test/good/000.png");
  const auto h = ingest(root);
  std::vector<std::string> warnings;
  EXPECT_EQ(load_items(h.items("x", Split::train), 8, false, &warnings).size(), 1u);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Corpus, DeterministicAndMasksMatchChangedPixels) {
  CorpusOptions opt;
  opt.image_size = 64;
  for (const auto& cat : opt.categories) {
    const auto a = corpus_normal_image(cat, opt, 3, 0, 5);
    EXPECT_EQ(a.data, corpus_normal_image(cat, opt, 3, 0, 5).data);
    EXPECT_NE(a.data, corpus_normal_image(cat, opt, 3, 1, 5).data);
    EXPECT_EQ(a.data, quantize8(a).data);
    const auto an = corpus_anomaly(cat, opt, 3, 2);
    EXPECT_GE(an.mask.area_fraction(), 0.001);
    EXPECT_LE(an.mask.area_fraction(), 0.30);
    for (std::size_t i = 0; i < an.mask.data.size(); ++i) {
      bool differs = false;
      for (std::size_t c = 0; c < 3; ++c) differs |= an.image.data[c * 4096 + i] != an.base.data[c * 4096 + i];
      ASSERT_EQ(differs, an.mask.data[i] != 0) << cat << " pixel " << i;
    }
  }
}

TEST(Corpus, WritesByteIdenticalTreeThatIngestsUnchanged) {
  CorpusOptions opt;
  opt.image_size = 32;
  opt.train_per_category = 3;
  opt.test_good = 2;
  opt.test_anomalous = 2;
  const auto a = oracle::temp_dir("corpus_a"), b = oracle::temp_dir("corpus_b");
  const auto sa = make_synth_corpus(a, 11, opt);
  make_synth_corpus(b, 11, opt);
  EXPECT_EQ(sa.files_written, 3u * (3 + 2 + 2 + 2));
  for (double f : sa.mask_fractions) {
    EXPECT_GE(f, 0.001);
    EXPECT_LE(f, 0.30);
  }
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(read_bytes(e.path()), read_bytes(b / fs::relative(e.path(), a))) << e.path();
    ++compared;
  }
  EXPECT_EQ(compared, sa.files_written);

  const auto h = ingest(a);
  EXPECT_EQ(h.categories.size(), 3u);
  EXPECT_TRUE(h.validation_report.empty());
  const auto test = load_items(h.items("checker", Split::test), 32, true);
  ASSERT_EQ(test.size(), 4u);
  for (int i = 0; i < 2; ++i) {
    const auto an = corpus_anomaly("checker", opt, 11, i);
    const auto it = std::find_if(test.begin(), test.end(),
                                 [&](const LoadedItem& l) { return l.item.label && l.item.id.ends_with(std::to_string(i)); });
    ASSERT_NE(it, test.end());
    EXPECT_EQ(it->image.data, an.image.data);
    EXPECT_EQ(it->mask.data, an.mask.data);
  }
}
