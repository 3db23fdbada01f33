#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "support.hpp"

using namespace vtamiq;
using vtamiq::testing::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

Rgb8Image pattern(std::size_t h, std::size_t w) {
  Rgb8Image img{h, w, std::vector<std::uint8_t>(h * w * 3)};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 37 % 256);
  return img;
}

// Bottom-up 24-bit BMP with padded rows.
void write_bmp(const std::filesystem::path& p, const Rgb8Image& img) {
  const std::size_t stride = (img.width * 3 + 3) & ~std::size_t{3};
  std::vector<unsigned char> b(54 + stride * img.height, 0);
  auto put32 = [&](std::size_t at, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) b[at + k] = static_cast<unsigned char>(v >> (8 * k));
  };
  b[0] = 'B';
  b[1] = 'M';
  put32(2, static_cast<std::uint32_t>(b.size()));
  put32(10, 54);
  put32(14, 40);
  put32(18, static_cast<std::uint32_t>(img.width));
  put32(22, static_cast<std::uint32_t>(img.height));
  b[26] = 1;
  b[28] = 24;
  for (std::size_t r = 0; r < img.height; ++r)
    for (std::size_t c = 0; c < img.width; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch) b[54 + (img.height - 1 - r) * stride + c * 3 + 2 - ch] = img.at(r, c, ch);
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

DatasetManifest manifest_with_refs(std::size_t refs, std::size_t per_ref) {
  DatasetManifest m;
  m.name = "m";
  for (std::size_t r = 0; r < refs; ++r)
    for (std::size_t k = 0; k < per_ref; ++k)
      m.records.push_back({"r" + std::to_string(r), "d" + std::to_string(r * per_ref + k), double(k), "ref" + std::to_string(r)});
  return m;
}

}  // namespace

TEST(Manifest, LoadsAndResolvesRelativePaths) {
  TempDir dir("manifest");
  write_text(dir.path() / "set.csv",
             "ref_path,dist_path,score,ref_id\n"
             "a.png,a_1.png,3.5,A\n"
             "\n"
             "\"b,c.png\",/abs/b_1.png, 1e1 ,B\n");
  const auto m = load_manifest(dir.path() / "set.csv", ScoreDirection::kLowerIsBetter);
  EXPECT_EQ(m.name, "set");
  EXPECT_EQ(m.direction, ScoreDirection::kLowerIsBetter);
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.records[0].reference_path, dir.path() / "a.png");
  EXPECT_EQ(m.records[1].reference_path, dir.path() / "b,c.png");
  EXPECT_EQ(m.records[1].distorted_path, "/abs/b_1.png");
  EXPECT_EQ(m.records[1].score, 10.0);
  EXPECT_EQ(m.reference_ids(), (std::vector<std::string>{"A", "B"}));
}

TEST(Manifest, ErrorsCarryLineNumbers) {
  TempDir dir("manifest_err");
  const auto expect_error = [&](const std::string& body, const std::string& fragment) {
    write_text(dir.path() / "bad.csv", body);
    try {
      load_manifest(dir.path() / "bad.csv");
      ADD_FAILURE() << "no error for: " << body;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  expect_error("ref,dist,score,id\n", "line 1");
  expect_error("ref_path,dist_path,score,ref_id\na,b,1,A\na,b,x,A\n", "line 3");
  expect_error("ref_path,dist_path,score,ref_id\na,b,1\n", "line 2");
  expect_error("ref_path,dist_path,score,ref_id\na,b,nan,A\n", "line 2");
  expect_error("ref_path,dist_path,score,ref_id\na,b,1,\n", "line 2");
  expect_error("ref_path,dist_path,score,ref_id\n", "empty");
  EXPECT_THROW(load_manifest(dir.path() / "missing.csv"), IoError);
}

TEST(Split, PartitionsReferencesWithRoundedCounts) {
  const auto m = manifest_with_refs(29, 3);
  const auto s = split_by_reference(m, {0.6, 0.2, 0.2}, 5);
  EXPECT_EQ(s.train.size(), 17u);
  EXPECT_EQ(s.val.size(), 6u);
  EXPECT_EQ(s.test.size(), 6u);
  std::size_t total = 0;
  for (auto sub : {Subset::kTrain, Subset::kVal, Subset::kTest}) {
    const auto idx = records_in(m, s, sub);
    total += idx.size();
    for (std::size_t i : idx) EXPECT_EQ(subset_of(s, m.records[i].reference_id), sub);
  }
  EXPECT_EQ(total, m.records.size());
  EXPECT_EQ(subset_of(s, "unknown"), Subset::kNone);
}

TEST(Split, SeedDeterminesTheSplit) {
  const auto m = manifest_with_refs(20, 2);
  const auto a = split_by_reference(m, {0.6, 0.2, 0.2}, 9), b = split_by_reference(m, {0.6, 0.2, 0.2}, 9);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  bool any_different = false;
  for (std::uint64_t seed = 10; seed < 20; ++seed) any_different |= split_by_reference(m, {0.6, 0.2, 0.2}, seed).val != a.val;
  EXPECT_TRUE(any_different);
}

TEST(Split, InvalidRequestsRejected) {
  const auto m = manifest_with_refs(10, 1);
  EXPECT_THROW(split_by_reference(m, {0.5, 0.2, 0.2}, 0), ConfigError);
  EXPECT_THROW(split_by_reference(m, {1.2, -0.1, -0.1}, 0), ConfigError);
  EXPECT_THROW(split_by_reference(manifest_with_refs(2, 4), {0.6, 0.2, 0.2}, 0), ContractError);
}

TEST(Split, FileRoundTrip) {
  TempDir dir("split");
  const auto s = split_by_reference(manifest_with_refs(12, 1), {0.5, 0.25, 0.25}, 4);
  write_split(dir.path() / "split.txt", s);
  const auto r = read_split(dir.path() / "split.txt");
  EXPECT_EQ(r.train, s.train);
  EXPECT_EQ(r.val, s.val);
  EXPECT_EQ(r.test, s.test);
  EXPECT_EQ(r.seed, 4u);
  write_text(dir.path() / "bad.txt", "orphan\n[train]\nx\n");
  EXPECT_THROW(read_split(dir.path() / "bad.txt"), ParseError);
}

TEST(ImageIo, PngRoundTrip) {
  TempDir dir("png");
  const auto img = pattern(7, 5);
  write_png(dir.path() / "a.png", img);
  const auto back = read_image(dir.path() / "a.png");
  EXPECT_EQ(back.height, 7u);
  EXPECT_EQ(back.width, 5u);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(ImageIo, BmpMatchesPng) {
  TempDir dir("bmp");
  const auto img = pattern(6, 5);
  write_bmp(dir.path() / "a.bmp", img);
  EXPECT_EQ(read_image(dir.path() / "a.bmp").pixels, img.pixels);
}

TEST(ImageIo, GreyscaleAndBrokenFilesRejected) {
  TempDir dir("grey");
  write_png(dir.path() / "g.png", 4, 4, 1, std::vector<std::uint8_t>(16, 100));
  EXPECT_THROW(read_image(dir.path() / "g.png"), ChannelError);
  write_text(dir.path() / "junk.png", "not an image");
  EXPECT_THROW(read_image(dir.path() / "junk.png"), IoError);
  EXPECT_THROW(read_image(dir.path() / "none.png"), IoError);
}

TEST(Normalization, RoundTripsPixelValues) {
  const auto img = pattern(4, 6);
  const auto t = normalize_image<float>(img);
  EXPECT_EQ(t.shape(), (Shape{4, 6, 3}));
  EXPECT_NEAR(t[0], (0 / 255.0 - 0.485) / 0.229, 1e-6);
  const auto back = denormalize_image(t);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(back[i], img.pixels[i], 1e-3);
}

TEST(Targets, NormalisedToUnitIntervalWithDirection) {
  auto m = manifest_with_refs(1, 5);
  for (std::size_t i = 0; i < 5; ++i) m.records[i].score = 10.0 * i;
  EXPECT_EQ(normalized_targets(m), (std::vector<double>{0, 0.25, 0.5, 0.75, 1}));
  m.direction = ScoreDirection::kLowerIsBetter;
  EXPECT_EQ(normalized_targets(m), (std::vector<double>{1, 0.75, 0.5, 0.25, 0}));
  for (auto& r : m.records) r.score = 3;
  EXPECT_EQ(normalized_targets(m), std::vector<double>(5, 0.5));
}

TEST(Targets, HistogramEqualisationUsesAverageRanks) {
  const std::vector<double> s{5, 1, 5, 9};
  EXPECT_EQ(histogram_equalize_scores(s), (std::vector<double>{0.5, 0.125, 0.5, 0.875}));
  EXPECT_THROW(histogram_equalize_scores(std::vector<double>{}), ContractError);
}

TEST(Synthetic, DatasetIsReadableAndOrdered) {
  TempDir dir("synth");
  SyntheticSpec spec;
  spec.references = 3;
  spec.height = spec.width = 16;
  const auto m = write_synthetic_dataset(dir.path(), spec, "blur");
  EXPECT_EQ(m.records.size(), 15u);
  EXPECT_EQ(m.reference_ids().size(), 3u);
  const auto ref = load_image_normalized<float>(m.records[0].reference_path);
  EXPECT_EQ(ref.shape(), (Shape{16, 16, 3}));
  // Heavier blur moves further from the reference.
  const auto d1 = load_image_normalized<double>(m.records[0].distorted_path);
  const auto d5 = load_image_normalized<double>(m.records[4].distorted_path);
  const auto r = load_image_normalized<double>(m.records[0].reference_path);
  double e1 = 0, e5 = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    e1 += (d1[i] - r[i]) * (d1[i] - r[i]);
    e5 += (d5[i] - r[i]) * (d5[i] - r[i]);
  }
  EXPECT_LT(e1, e5);
  EXPECT_GT(m.records[0].score, m.records[4].score);
}
